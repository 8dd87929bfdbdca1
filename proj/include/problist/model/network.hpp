#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "problist/common.hpp"
#include "problist/corpus/narrative.hpp"
#include "problist/embed.hpp"
#include "problist/model/attention.hpp"
#include "problist/numerics/ops.hpp"
#include "problist/numerics/tensor.hpp"

namespace problist::model {

using numerics::ParamSet;
using numerics::Tensor2;

enum class Architecture { dynpl, cnn_max, conv_attn };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::dynpl: return "dynpl";
    case Architecture::cnn_max: return "cnn_max";
    case Architecture::conv_attn: return "conv_attn";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  for (auto a : {Architecture::dynpl, Architecture::cnn_max, Architecture::conv_attn})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

inline constexpr std::array<int, 3> kFilterWidths = {1, 2, 3};

struct ModelConfig {
  Architecture arch = Architecture::dynpl;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;
  std::size_t filters = 64;   // d_f, per filter width
  std::size_t num_labels = 0; // L (dynpl only)
  double embed_dropout = 0.2;
  double feature_dropout = 0.3;
  bool train_embeddings = true;
  numerics::Activation activation = numerics::Activation::tanh;
};

enum class Mode { train, eval };

/// Parameter groups owned by the outcome head of each architecture.
inline std::vector<std::string> outcome_groups() { return {"outcome.w", "outcome.b"}; }

inline std::string conv_weight_group(int width) { return "conv" + std::to_string(width) + ".w"; }
inline std::string conv_bias_group(int width) { return "conv" + std::to_string(width) + ".b"; }

/// Everything a forward pass produces for one narrative.
struct PredictionBundle {
  StayId stay_id = 0;
  std::size_t narrative_length = 0;  // N
  std::size_t true_length = 0;       // real tokens, n <= N
  std::vector<double> problem_probabilities;
  std::vector<double> problem_scores;
  /// heads x 3n over real positions only; row h, column (k-1)*n + t.
  Tensor2 attention;
  double outcome_logit = 0.0;
  double outcome_probability = 0.5;

  [[nodiscard]] std::size_t heads() const { return attention.rows(); }

  /// Attention weight of head `head` at position i in [0, 3N). Positions
  /// whose start token is padding are masked and read as exactly 0.
  [[nodiscard]] double attention_at(std::size_t head, std::size_t i) const {
    const auto p = decode_position(i, narrative_length);
    if (p.start >= true_length) return 0.0;
    return attention(head, static_cast<std::size_t>(p.width - 1) * true_length + p.start);
  }
  /// Full-length attention vector of one head (3N entries).
  [[nodiscard]] std::vector<double> attention_full(std::size_t head) const {
    std::vector<double> out(3 * narrative_length, 0.0);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t t = 0; t < true_length; ++t)
        out[k * narrative_length + t] = attention(head, k * true_length + t);
    return out;
  }
};

/// Training targets for one stay.
struct Target {
  std::span<const std::uint8_t> problems;  // length L (dynpl)
  bool outcome = false;
};

/// Which loss terms contribute to a gradient.
struct Objective {
  bool problems = true;
  bool outcome = true;
};

struct LossParts {
  double problem = 0.0;  // sum over labels of BCE
  double outcome = 0.0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. The
/// embedding group is copied from `embedding` when given, otherwise drawn
/// word2vec-style with the pad row zeroed.
inline ParamSet init_params(const ModelConfig& cfg, const embed::EmbeddingMatrix* embedding,
                            std::uint64_t seed) {
  if (cfg.vocab_size == 0 || cfg.embed_dim == 0 || cfg.filters == 0)
    throw ConfigError("model: vocab_size, embed_dim and filters must be positive");
  if (cfg.arch == Architecture::dynpl && cfg.num_labels == 0)
    throw ConfigError("model: dynpl needs at least one label");
  Rng rng(mix_seed(seed, 0x1417));
  auto uniform = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
    Tensor2 t(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  };
  ParamSet p;
  if (embedding) {
    if (embedding->rows() != cfg.vocab_size || embedding->dim() != cfg.embed_dim)
      throw ConfigError("model: embedding matrix shape does not match config");
    p.add("embedding", embedding->values());
  } else {
    Tensor2 e(cfg.vocab_size, cfg.embed_dim);
    for (std::size_t r = 1; r < cfg.vocab_size; ++r)
      for (double& v : e.row(r)) v = (rng.uniform() - 0.5) / static_cast<double>(cfg.embed_dim);
    p.add("embedding", std::move(e));
  }
  const std::size_t de = cfg.embed_dim, df = cfg.filters;
  for (int k : kFilterWidths) {
    const std::size_t fan = static_cast<std::size_t>(k) * de;
    p.add(conv_weight_group(k), uniform(df, fan, fan));
    p.add(conv_bias_group(k), Tensor2(1, df));
  }
  switch (cfg.arch) {
    case Architecture::dynpl:
      p.add("query", uniform(cfg.num_labels, df, df));
      p.add("head.w", uniform(cfg.num_labels, df, df));
      p.add("head.b", Tensor2(1, cfg.num_labels));
      p.add("outcome.w", uniform(1, cfg.num_labels, cfg.num_labels));
      break;
    case Architecture::cnn_max:
      p.add("outcome.w", uniform(1, 3 * df, 3 * df));
      break;
    case Architecture::conv_attn:
      p.add("query", uniform(1, df, df));
      p.add("outcome.w", uniform(1, df, df));
      break;
  }
  p.add("outcome.b", Tensor2(1, 1));
  return p;
}

/// The problem-list network and the two convolutional baselines, sharing the
/// embedding -> dropout -> {1,2,3}-gram convolutions -> dropout trunk.
///
/// Only the real tokens of a narrative are processed: trunk columns whose
/// start position is padding are exactly the ones masked out of attention and
/// pooling, so they never influence the output.
class Network {
 public:
  Network() = default;
  Network(ModelConfig cfg, ParamSet params) : cfg_(cfg), params_(std::move(params)) {
    validate();
  }
  static Network create(const ModelConfig& cfg, const embed::EmbeddingMatrix* embedding,
                        std::uint64_t seed) {
    return Network(cfg, init_params(cfg, embedding, seed));
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  [[nodiscard]] PredictionBundle forward(const corpus::Narrative& narrative, Mode mode = Mode::eval,
                                         std::uint64_t dropout_seed = 0) const {
    Cache c = run(narrative, mode, dropout_seed);
    return std::move(c.bundle);
  }

  /// Adds scale * d(loss)/d(params) into `grad` and returns both unscaled
  /// loss terms. Only the terms selected by `objective` contribute gradient:
  /// sum_l BCE(y_l) (dynpl only) and BCE(y_o), both computed on logits.
  LossParts accumulate_gradient(const corpus::Narrative& narrative, const Target& target,
                                Objective objective, Mode mode, std::uint64_t dropout_seed,
                                ParamSet& grad, double scale = 1.0) const {
    Cache c = run(narrative, mode, dropout_seed);
    const auto& b = c.bundle;
    const std::size_t n = b.true_length, df = cfg_.filters;
    LossParts loss;
    const bool dyn = cfg_.arch == Architecture::dynpl;
    const bool use_problems = dyn && objective.problems;
    if (dyn && target.problems.size() != cfg_.num_labels)
      throw std::invalid_argument("accumulate_gradient: label vector length differs from L");

    std::vector<double> g_scores(dyn ? cfg_.num_labels : 0, 0.0);
    if (dyn)
      for (std::size_t l = 0; l < cfg_.num_labels; ++l) {
        const double y = target.problems[l];
        loss.problem += numerics::bce_with_logits(b.problem_scores[l], y);
        if (use_problems) g_scores[l] = scale * (b.problem_probabilities[l] - y);
      }

    double g_logit = 0.0;
    const double y_o = target.outcome ? 1.0 : 0.0;
    loss.outcome = numerics::bce_with_logits(b.outcome_logit, y_o);
    if (objective.outcome) {
      g_logit = scale * (b.outcome_probability - y_o);
      grad["outcome.b"](0, 0) += g_logit;
    }
    if (!use_problems && !objective.outcome) return loss;

    Tensor2 g_h(3 * n, df);
    switch (cfg_.arch) {
      case Architecture::dynpl: {
        const auto wo = params_["outcome.w"].row(0);
        if (objective.outcome) {
          numerics::axpy(g_logit, b.problem_scores, grad["outcome.w"].row(0));
          numerics::axpy(g_logit, wo, g_scores);
        }
        const Tensor2& q = params_["query"];
        const Tensor2& hw = params_["head.w"];
        Tensor2& g_q = grad["query"];
        Tensor2& g_hw = grad["head.w"];
        auto g_hb = grad["head.b"].row(0);
        for (std::size_t l = 0; l < cfg_.num_labels; ++l) {
          if (g_scores[l] == 0.0) continue;
          g_hb[l] += g_scores[l];
          numerics::axpy(g_scores[l], c.contexts.row(l), g_hw.row(l));
          std::vector<double> g_v(hw.row(l).begin(), hw.row(l).end());
          for (double& v : g_v) v *= g_scores[l];
          backprop_attention(c.h, b.attention.row(l), q.row(l), g_v, g_h, g_q.row(l));
        }
        break;
      }
      case Architecture::conv_attn: {
        const auto wo = params_["outcome.w"].row(0);
        numerics::axpy(g_logit, c.contexts.row(0), grad["outcome.w"].row(0));
        std::vector<double> g_v(wo.begin(), wo.end());
        for (double& v : g_v) v *= g_logit;
        backprop_attention(c.h, b.attention.row(0), params_["query"].row(0), g_v, g_h,
                           grad["query"].row(0));
        break;
      }
      case Architecture::cnn_max: {
        const auto wo = params_["outcome.w"].row(0);
        numerics::axpy(g_logit, c.pooled, grad["outcome.w"].row(0));
        for (std::size_t j = 0; j < 3 * df; ++j)
          g_h(c.argmax[j], j % df) += g_logit * wo[j];
        break;
      }
    }
    backprop_trunk(narrative, c, g_h, grad);
    return loss;
  }

 private:
  struct Cache {
    Tensor2 x;                    // n x d_e embeddings after dropout
    std::vector<double> x_mask;   // empty in eval mode
    std::array<Tensor2, 3> conv;  // n x d_f activations per width
    Tensor2 h;                    // 3n x d_f after dropout
    std::vector<double> h_mask;
    Tensor2 contexts;             // heads x d_f
    std::vector<double> pooled;   // cnn_max features
    std::vector<std::size_t> argmax;
    PredictionBundle bundle;
  };

  void validate() const {
    if (!params_.contains("embedding") || params_["embedding"].cols() != cfg_.embed_dim ||
        params_["embedding"].rows() != cfg_.vocab_size)
      throw ConfigError("model: embedding group does not match config");
    if (cfg_.arch == Architecture::dynpl &&
        (params_["query"].rows() != cfg_.num_labels || params_["outcome.w"].cols() != cfg_.num_labels))
      throw ConfigError("model: label count does not match parameters");
  }

  Cache run(const corpus::Narrative& narrative, Mode mode, std::uint64_t seed) const {
    const std::size_t n = narrative.true_length();
    if (n == 0) throw DataError("forward: narrative has no unmasked positions");
    const std::size_t de = cfg_.embed_dim, df = cfg_.filters;
    Cache c;
    Rng rng(seed);
    const Tensor2& emb = params_["embedding"];
    c.x = Tensor2(n, de);
    for (std::size_t t = 0; t < n; ++t) {
      const auto id = static_cast<std::size_t>(narrative.tokens()[t]);
      if (id >= emb.rows()) throw std::out_of_range("forward: token id outside the vocabulary");
      std::copy(emb.row(id).begin(), emb.row(id).end(), c.x.row(t).begin());
    }
    if (mode == Mode::train) {
      c.x_mask = numerics::dropout_mask(n * de, cfg_.embed_dropout, rng);
      numerics::apply_mask(c.x.values(), c.x_mask);
    }
    c.h = Tensor2(3 * n, df);
    for (std::size_t k = 0; k < 3; ++k) {
      const int w = kFilterWidths[k];
      c.conv[k] = numerics::conv1d_same(c.x, params_[conv_weight_group(w)],
                                        params_[conv_bias_group(w)].row(0), w, cfg_.activation);
      std::copy(c.conv[k].values().begin(), c.conv[k].values().end(),
                c.h.values().begin() + static_cast<std::ptrdiff_t>(k * n * df));
    }
    if (mode == Mode::train) {
      c.h_mask = numerics::dropout_mask(3 * n * df, cfg_.feature_dropout, rng);
      numerics::apply_mask(c.h.values(), c.h_mask);
    }

    auto& b = c.bundle;
    b.stay_id = narrative.stay_id();
    b.narrative_length = narrative.size();
    b.true_length = n;
    switch (cfg_.arch) {
      case Architecture::dynpl: {
        auto heads = problem_heads(c.h, {}, params_["query"], params_["head.w"],
                                   params_["head.b"].row(0));
        b.problem_scores = std::move(heads.scores);
        b.problem_probabilities = std::move(heads.probabilities);
        b.attention = std::move(heads.attention);
        c.contexts = std::move(heads.contexts);
        b.outcome_logit = outcome_logit(b.problem_scores, params_["outcome.w"].row(0),
                                        params_["outcome.b"](0, 0));
        break;
      }
      case Architecture::conv_attn: {
        auto a = attend(c.h, params_["query"].row(0));
        b.attention = Tensor2(1, 3 * n, std::move(a.weights));
        c.contexts = Tensor2(1, df, a.context);
        b.outcome_logit = numerics::dot(params_["outcome.w"].row(0), a.context) +
                          params_["outcome.b"](0, 0);
        break;
      }
      case Architecture::cnn_max: {
        c.pooled.assign(3 * df, 0.0);
        c.argmax.assign(3 * df, 0);
        for (std::size_t k = 0; k < 3; ++k)
          for (std::size_t f = 0; f < df; ++f) {
            std::size_t best = k * n;
            for (std::size_t t = 1; t < n; ++t)
              if (c.h(k * n + t, f) > c.h(best, f)) best = k * n + t;
            c.argmax[k * df + f] = best;
            c.pooled[k * df + f] = c.h(best, f);
          }
        b.outcome_logit = numerics::dot(params_["outcome.w"].row(0), c.pooled) +
                          params_["outcome.b"](0, 0);
        break;
      }
    }
    b.outcome_probability = numerics::sigmoid(b.outcome_logit);
    return c;
  }

  /// v = sum_i a_i h_i with a = softmax(H q / sqrt(d)). Given dL/dv, adds
  /// dL/dH into g_h and dL/dq into g_q.
  void backprop_attention(const Tensor2& h, std::span<const double> alpha,
                          std::span<const double> q, std::span<const double> g_v, Tensor2& g_h,
                          std::span<double> g_q) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.filters));
    const std::size_t positions = h.rows();
    std::vector<double> g_alpha(positions);
    double expected = 0.0;
    for (std::size_t i = 0; i < positions; ++i) {
      g_alpha[i] = numerics::dot(h.row(i), g_v);
      expected += alpha[i] * g_alpha[i];
    }
    for (std::size_t i = 0; i < positions; ++i) {
      const double g_e = alpha[i] * (g_alpha[i] - expected) * scale;
      auto gh = g_h.row(i);
      numerics::axpy(alpha[i], g_v, gh);
      numerics::axpy(g_e, q, gh);
      numerics::axpy(g_e, h.row(i), g_q);
    }
  }

  void backprop_trunk(const corpus::Narrative& narrative, const Cache& c, Tensor2& g_h,
                      ParamSet& grad) const {
    const std::size_t n = c.x.rows(), df = cfg_.filters;
    numerics::apply_mask(g_h.values(), c.h_mask);
    std::optional<Tensor2> g_x;
    if (cfg_.train_embeddings) g_x.emplace(n, cfg_.embed_dim);
    for (std::size_t k = 0; k < 3; ++k) {
      const int w = kFilterWidths[k];
      Tensor2 g_conv(n, df,
                     std::vector<double>(g_h.values().begin() + static_cast<std::ptrdiff_t>(k * n * df),
                                         g_h.values().begin() + static_cast<std::ptrdiff_t>((k + 1) * n * df)));
      numerics::conv1d_same_backward(c.x, params_[conv_weight_group(w)], w, c.conv[k], g_conv,
                                     grad[conv_weight_group(w)], grad[conv_bias_group(w)].row(0),
                                     g_x ? &*g_x : nullptr, cfg_.activation);
    }
    if (!g_x) return;
    numerics::apply_mask(g_x->values(), c.x_mask);
    Tensor2& g_emb = grad["embedding"];
    for (std::size_t t = 0; t < n; ++t)
      numerics::axpy(1.0, g_x->row(t), g_emb.row(static_cast<std::size_t>(narrative.tokens()[t])));
  }

  ModelConfig cfg_;
  ParamSet params_;
};

}  // namespace problist::model
