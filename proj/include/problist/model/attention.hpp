#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "problist/numerics/ops.hpp"
#include "problist/numerics/tensor.hpp"

namespace problist::model {

struct Attended {
  std::vector<double> weights;  // alpha, one per position
  std::vector<double> context;  // v = sum_i alpha_i h_i
};

/// Scaled dot-product attention of one query over feature vectors.
///
/// `h` holds one position per row (3N x d_f). `mask[i] == true` excludes
/// position i; an empty mask excludes nothing. Scores are h_i . q / sqrt(d_f).
inline Attended attend(const numerics::Tensor2& h, std::span<const double> query,
                       std::span<const bool> mask = {}) {
  const std::size_t positions = h.rows(), df = h.cols();
  if (query.size() != df) throw std::invalid_argument("attend: query dimension mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(df));
  std::vector<double> scores(positions);
  for (std::size_t i = 0; i < positions; ++i) scores[i] = numerics::dot(h.row(i), query) * scale;
  Attended out;
  out.weights = numerics::softmax(scores, mask);
  out.context.assign(df, 0.0);
  for (std::size_t i = 0; i < positions; ++i)
    if (out.weights[i] != 0.0) numerics::axpy(out.weights[i], h.row(i), out.context);
  return out;
}

struct ProblemHeads {
  std::vector<double> scores;         // s_l = w_l . v_l + b_l
  std::vector<double> probabilities;  // sigmoid(s_l)
  numerics::Tensor2 attention;        // L x positions
  numerics::Tensor2 contexts;         // L x d_f (v_l)
};

/// One attention head per problem followed by its logistic classifier.
/// `queries` and `weights` are L x d_f; `bias` has L entries.
inline ProblemHeads problem_heads(const numerics::Tensor2& h, std::span<const bool> mask,
                                  const numerics::Tensor2& queries,
                                  const numerics::Tensor2& weights, std::span<const double> bias) {
  const std::size_t labels = queries.rows();
  if (weights.rows() != labels || bias.size() != labels)
    throw std::invalid_argument("problem_heads: parameter shapes disagree on L");
  ProblemHeads out;
  out.scores.resize(labels);
  out.probabilities.resize(labels);
  out.attention = numerics::Tensor2(labels, h.rows());
  out.contexts = numerics::Tensor2(labels, h.cols());
  for (std::size_t l = 0; l < labels; ++l) {
    auto a = attend(h, queries.row(l), mask);
    out.scores[l] = numerics::dot(weights.row(l), a.context) + bias[l];
    out.probabilities[l] = numerics::sigmoid(out.scores[l]);
    std::copy(a.weights.begin(), a.weights.end(), out.attention.row(l).begin());
    std::copy(a.context.begin(), a.context.end(), out.contexts.row(l).begin());
  }
  return out;
}

/// Outcome logit w_o . s + b_o; the outcome probability is its sigmoid.
inline double outcome_logit(std::span<const double> scores, std::span<const double> weights,
                            double bias) {
  if (scores.size() != weights.size())
    throw std::invalid_argument("outcome_head: score vector length differs from L");
  return numerics::dot(weights, scores) + bias;
}

inline double outcome_head(std::span<const double> scores, std::span<const double> weights,
                           double bias) {
  return numerics::sigmoid(outcome_logit(scores, weights, bias));
}

/// Attention position i in [0, 3N) covers the width-k n-gram starting at t.
struct SpanPosition {
  int width;          // 1, 2 or 3
  std::size_t start;  // token index
};

inline SpanPosition decode_position(std::size_t i, std::size_t narrative_length) {
  return {static_cast<int>(i / narrative_length) + 1, i % narrative_length};
}

inline std::size_t encode_position(SpanPosition p, std::size_t narrative_length) {
  return static_cast<std::size_t>(p.width - 1) * narrative_length + p.start;
}

}  // namespace problist::model
