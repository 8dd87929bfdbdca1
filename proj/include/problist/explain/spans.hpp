#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "problist/corpus/narrative.hpp"
#include "problist/model/attention.hpp"

namespace problist::explain {

inline constexpr std::size_t kSpanContext = 2;

/// One attended n-gram, decoded back to narrative tokens.
struct Span {
  std::size_t position = 0;  // attention index in [0, 3N)
  int width = 1;
  std::size_t start = 0;  // first token of the n-gram
  std::size_t end = 0;    // one past its last token (clipped to the real tokens)
  std::size_t context_begin = 0;
  std::size_t context_end = 0;
  double weight = 0.0;
  std::string text;    // the n-gram
  std::string before;  // up to kSpanContext tokens of left context
  std::string after;   // up to kSpanContext tokens of right context

  [[nodiscard]] std::string with_context() const {
    std::string s = before;
    s += (s.empty() ? "" : " ") + text;
    if (!after.empty()) s += " " + after;
    return s;
  }
  [[nodiscard]] nlohmann::json to_json() const {
    return {{"position", position}, {"width", width},   {"start", start},
            {"weight", weight},     {"text", text},     {"context", with_context()}};
  }
};

inline Span decode_span(std::size_t position, double weight, const corpus::Narrative& nar,
                        std::size_t context = kSpanContext) {
  const auto p = model::decode_position(position, nar.size());
  const std::size_t n = nar.true_length();
  Span s;
  s.position = position;
  s.width = p.width;
  s.start = p.start;
  s.end = std::min(n, p.start + static_cast<std::size_t>(p.width));
  s.context_begin = p.start >= context ? p.start - context : 0;
  s.context_end = std::min(n, s.end + context);
  s.weight = weight;
  const auto& tok = nar.surface();
  s.text = corpus::join_tokens(tok, s.start, s.end);
  s.before = corpus::join_tokens(tok, s.context_begin, s.start);
  s.after = corpus::join_tokens(tok, s.end, s.context_end);
  return s;
}

/// The `n` highest-weight unmasked positions of a full-length attention
/// vector (3N entries), ties broken by lower position. A token start chosen
/// through one filter width is not reported again through another.
inline std::vector<Span> top_spans(std::span<const double> alpha, const corpus::Narrative& nar,
                                   std::size_t n = 2, std::size_t context = kSpanContext) {
  const std::size_t N = nar.size();
  if (alpha.size() != 3 * N) throw std::invalid_argument("top_spans: attention length is not 3N");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (model::decode_position(i, N).start < nar.true_length()) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
  std::vector<Span> out;
  std::set<std::size_t> starts;
  for (std::size_t i : idx) {
    if (out.size() >= n) break;
    const auto start = model::decode_position(i, N).start;
    if (!starts.insert(start).second) continue;
    out.push_back(decode_span(i, alpha[i], nar, context));
  }
  return out;
}

/// Spans for the single attention head of the conv-attention baseline.
inline std::vector<Span> baseline_spans(std::span<const double> alpha, const corpus::Narrative& nar,
                                        std::size_t n = 14) {
  return top_spans(alpha, nar, n);
}

}  // namespace problist::explain
