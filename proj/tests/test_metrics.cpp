#include <gtest/gtest.h>

#include <vector>

#include "problist/common.hpp"
#include "problist/metrics.hpp"

using namespace problist;
using namespace problist::metrics;

namespace {

ScoredSet make(std::vector<double> s, std::vector<std::uint8_t> y) { return {std::move(s), std::move(y)}; }

// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
double roc_pairs(const ScoredSet& s) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s.labels[i] && !s.labels[j]) {
        den += 1;
        num += s.scores[i] > s.scores[j] ? 1.0 : s.scores[i] == s.scores[j] ? 0.5 : 0.0;
      }
  return num / den;
}

// Average precision without tie handling, used only on tie-free inputs:
// mean over positives of precision at that positive's rank.
double ap_ranks(const ScoredSet& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  double sum = 0, tp = 0;
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (s.labels[idx[r]]) {
      tp += 1;
      sum += tp / static_cast<double>(r + 1);
    }
  return sum / tp;
}

ScoredSet random_set(Rng& rng, std::size_t n, bool ties) {
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool y = rng.uniform() < 0.35;
    double v = rng.uniform() + (y ? 0.3 : 0.0);
    if (ties) v = std::round(v * 4) / 4;
    s.add(v, y);
  }
  if (s.positives() == 0) s.labels[0] = 1;
  if (s.positives() == s.size()) s.labels[0] = 0;
  return s;
}

}  // namespace

TEST(AuRoc, WorkedExample) {
  EXPECT_DOUBLE_EQ(*au_roc(make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75);
}

TEST(AuRoc, TiesCountHalf) {
  EXPECT_DOUBLE_EQ(*au_roc(make({0.5, 0.5}, {0, 1})), 0.5);
  EXPECT_DOUBLE_EQ(*au_roc(make({0.5, 0.5, 0.9}, {0, 1, 1})), 0.75);
}

TEST(AuRoc, PerfectAndReversed) {
  EXPECT_DOUBLE_EQ(*au_roc(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(*au_roc(make({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0})), 0.0);
}

TEST(AuRoc, UndefinedForOneClass) {
  EXPECT_FALSE(au_roc(make({0.1, 0.2}, {1, 1})));
  EXPECT_FALSE(au_roc(make({0.1, 0.2}, {0, 0})));
  EXPECT_FALSE(au_roc(ScoredSet{}));
}

TEST(AuRoc, MatchesPairwiseOracle) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_set(rng, 5 + rng.below(60), t % 2 == 0);
    EXPECT_NEAR(*au_roc(s), roc_pairs(s), 1e-12);
  }
}

TEST(AuRoc, InvariantUnderMonotoneTransform) {
  Rng rng(6);
  auto s = random_set(rng, 80, false);
  const double base = *au_roc(s);
  for (auto& v : s.scores) v = std::exp(3 * v) - 7;
  EXPECT_NEAR(*au_roc(s), base, 1e-12);
  for (auto& y : s.labels) y = 1 - y;
  EXPECT_NEAR(*au_roc(s), 1 - base, 1e-12);
}

TEST(AuPr, HandExample) {
  // Ranking: + - + -  => AP = (1/1 + 2/3) / 2
  EXPECT_NEAR(*au_pr(make({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0})), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(AuPr, MatchesRankOracleWithoutTies) {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_set(rng, 5 + rng.below(60), false);
    EXPECT_NEAR(*au_pr(s), ap_ranks(s), 1e-12);
  }
}

TEST(AuPr, TieGroupUsesPrecisionAfterGroup) {
  // All tied: one group, recall 1 at precision = base rate.
  EXPECT_NEAR(*au_pr(make({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0})), 0.25, 1e-15);
  EXPECT_FALSE(au_pr(make({0.5, 0.2}, {0, 0})));
  EXPECT_DOUBLE_EQ(*au_pr(make({0.5, 0.2}, {1, 1})), 1.0);
}

TEST(AuPr, OrderOfInputIrrelevant) {
  Rng rng(8);
  auto s = random_set(rng, 40, true);
  const double a = *au_pr(s), r = *au_roc(s);
  ScoredSet rev;
  for (std::size_t i = s.size(); i-- > 0;) rev.add(s.scores[i], s.labels[i]);
  EXPECT_DOUBLE_EQ(*au_pr(rev), a);
  EXPECT_DOUBLE_EQ(*au_roc(rev), r);
}

TEST(MicroMacro, PoolsAndAveragesAndSkips) {
  const std::vector<ScoredSet> per = {make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}),  // 0.75
                                      make({0.2, 0.9}, {0, 1}),                    // 1.0
                                      make({0.3, 0.6}, {0, 0})};                   // undefined
  const auto m = micro_macro(per);
  EXPECT_NEAR(*m.macro_roc, 0.875, 1e-15);
  EXPECT_EQ(m.roc_skipped, 1u);
  EXPECT_EQ(m.pr_skipped, 1u);
  ScoredSet pooled;
  for (const auto& s : per)
    for (std::size_t i = 0; i < s.size(); ++i) pooled.add(s.scores[i], s.labels[i]);
  EXPECT_NEAR(*m.micro_roc, roc_pairs(pooled), 1e-15);
  EXPECT_NEAR(*m.micro_pr, *au_pr(pooled), 1e-15);
  EXPECT_NEAR(*m.macro_pr, (*au_pr(per[0]) + *au_pr(per[1])) / 2, 1e-15);
}

TEST(MicroMacro, AllUndefinedThrows) {
  const std::vector<ScoredSet> per = {make({0.3, 0.6}, {0, 0})};
  EXPECT_THROW(micro_macro(per), std::invalid_argument);
}

TEST(Metrics, LengthMismatchThrows) {
  EXPECT_THROW(au_roc(make({0.1, 0.2}, {1})), std::invalid_argument);
  EXPECT_THROW(au_pr(make({0.1}, {1, 0})), std::invalid_argument);
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<double> v = {0.8, 0.82, 0.84, 0.86, 0.88};
  const auto a = aggregate(v);
  EXPECT_NEAR(a.mean, 0.84, 1e-12);
  EXPECT_NEAR(a.std, std::sqrt(0.004 / 4), 1e-12);
  EXPECT_EQ(a.n, 5u);
  const std::vector<double> one = {0.5};
  EXPECT_EQ(aggregate(one).std, 0.0);
  EXPECT_THROW(aggregate(std::span<const double>{}), std::invalid_argument);
}
