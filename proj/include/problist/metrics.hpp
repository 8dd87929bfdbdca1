#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace problist::metrics {

/// Parallel scores and binary labels for one evaluation.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  void add(double score, bool label) {
    scores.push_back(score);
    labels.push_back(label ? 1 : 0);
  }
  [[nodiscard]] std::size_t size() const { return scores.size(); }
  [[nodiscard]] std::size_t positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  }
};

namespace detail {
inline void check(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size())
    throw std::invalid_argument("ScoredSet: scores and labels differ in length");
}
inline std::vector<std::size_t> order_desc(const ScoredSet& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  return idx;
}
}  // namespace detail

/// Area under the ROC curve via the Mann-Whitney statistic with tied scores
/// counted one half. Empty when either class is absent.
inline std::optional<double> au_roc(const ScoredSet& s) {
  detail::check(s);
  const std::size_t n = s.size();
  const std::size_t pos = s.positives();
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] < s.scores[b];
  });
  // Midranks over tie groups, 1-based.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (s.labels[idx[k]]) pos_rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Average precision: sum over tie groups (descending score) of the recall
/// gained in the group times the precision after the group. Empty when there
/// are no positives.
inline std::optional<double> au_pr(const ScoredSet& s) {
  detail::check(s);
  const std::size_t pos = s.positives();
  if (pos == 0) return std::nullopt;
  const auto idx = detail::order_desc(s);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i, group_tp = 0;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
      group_tp += s.labels[idx[j]];
      ++j;
    }
    tp += group_tp;
    seen += j - i;
    if (group_tp)
      ap += (static_cast<double>(group_tp) / static_cast<double>(pos)) *
            (static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  return ap;
}

struct MicroMacro {
  std::optional<double> micro_roc;
  std::optional<double> macro_roc;
  std::optional<double> micro_pr;
  std::optional<double> macro_pr;
  std::size_t roc_skipped = 0;  // labels without both classes
  std::size_t pr_skipped = 0;   // labels without positives
};

/// Micro: pool every (instance, label) pair. Macro: unweighted mean over the
/// labels whose metric is defined.
inline MicroMacro micro_macro(std::span<const ScoredSet> per_label) {
  MicroMacro out;
  ScoredSet pooled;
  double roc_sum = 0.0, pr_sum = 0.0;
  std::size_t roc_n = 0, pr_n = 0;
  for (const auto& s : per_label) {
    detail::check(s);
    pooled.scores.insert(pooled.scores.end(), s.scores.begin(), s.scores.end());
    pooled.labels.insert(pooled.labels.end(), s.labels.begin(), s.labels.end());
    if (auto r = au_roc(s)) {
      roc_sum += *r;
      ++roc_n;
    } else {
      ++out.roc_skipped;
    }
    if (auto p = au_pr(s)) {
      pr_sum += *p;
      ++pr_n;
    } else {
      ++out.pr_skipped;
    }
  }
  if (roc_n == 0 && pr_n == 0)
    throw std::invalid_argument("micro_macro: no label has a defined metric");
  out.micro_roc = au_roc(pooled);
  out.micro_pr = au_pr(pooled);
  if (roc_n) out.macro_roc = roc_sum / static_cast<double>(roc_n);
  if (pr_n) out.macro_pr = pr_sum / static_cast<double>(pr_n);
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample (n - 1) standard deviation; a single value has std 0.
inline MeanStd aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  MeanStd r;
  r.n = values.size();
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

}  // namespace problist::metrics
