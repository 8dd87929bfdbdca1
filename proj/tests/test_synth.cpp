#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/narrative.hpp"
#include "problist/model/logreg.hpp"
#include "problist/synth.hpp"

using namespace problist;

namespace {

bool contains_ngram(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || hay.size() < needle.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::string tables_bytes(const corpus::RawTables& t) {
  const auto dir = std::filesystem::temp_directory_path() / "problist_synth_bytes";
  std::filesystem::remove_all(dir);
  corpus::write_tables(dir, t);
  std::string all;
  for (auto f : {"notes.csv", "stays.csv", "codes.csv"}) all += corpus::read_file((dir / f).string());
  std::filesystem::remove_all(dir);
  return all;
}

}  // namespace

TEST(Synth, SameSeedIsByteIdentical) {
  auto spec = fixtures::small_spec(5);
  const auto a = synth::generate(spec);
  const auto b = synth::generate(spec);
  EXPECT_EQ(tables_bytes(a.tables), tables_bytes(b.tables));
  EXPECT_EQ(synth::truth_to_jsonl(a.truth), synth::truth_to_jsonl(b.truth));
  spec.seed = 6;
  EXPECT_NE(tables_bytes(synth::generate(spec).tables), tables_bytes(a.tables));
}

TEST(Synth, TriggersAreUniqueAndReserved) {
  const auto c = synth::generate(synth::GenSpec{});
  std::set<std::string> words;
  for (const auto& p : c.truth.problems) {
    EXPECT_GE(p.trigger.size(), 1u);
    EXPECT_LE(p.trigger.size(), 3u);
    for (const auto& w : p.trigger) EXPECT_TRUE(words.insert(w).second) << w;
  }
  for (const auto& w : c.truth.severity_pattern) EXPECT_TRUE(words.insert(w).second);
  EXPECT_EQ(c.truth.problems.size(), 50u);
}

TEST(Synth, PositiveProblemTriggerAppearsBeforeCutoff) {
  const auto c = synth::generate(fixtures::small_spec(4));
  corpus::CohortReport rep;
  const auto cohort = corpus::build_cohort(c.tables, &rep);
  const auto notes = corpus::normalize_notes(c.tables);
  ASSERT_EQ(cohort.size(), c.truth.stays.size());
  std::size_t checked = 0;
  for (const auto& r : cohort) {
    const auto* st = c.truth.stay(r.stay_id);
    ASSERT_NE(st, nullptr);
    for (auto l : st->problems) {
      bool found = false;
      for (auto ref : r.note_refs) found = found || contains_ngram(notes[ref].tokens, c.truth.problems[l].trigger);
      EXPECT_TRUE(found) << "stay " << r.stay_id << " problem " << l;
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Synth, EmpiricalOutcomeRateMatchesClosedForm) {
  synth::GenSpec spec;
  spec.n_patients = 5000;
  spec.seed = 21;
  const auto c = synth::generate(spec);
  double pos = 0;
  for (const auto& s : c.truth.stays) pos += s.outcome;
  const double n = static_cast<double>(c.truth.stays.size());
  const double p = c.truth.expected_rate;
  EXPECT_NEAR(p, spec.target_rate, 1e-9);
  EXPECT_LE(std::abs(pos / n - p), 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Synth, ClosedFormMatchesBruteForceEnumeration) {
  auto spec = fixtures::small_spec();
  spec.severity_rate = 0.2;
  spec.severity_weight = 1.5;
  const auto c = synth::generate(spec);
  // Independent oracle: enumerate the truth's risk problems directly.
  std::vector<const synth::ProblemTruth*> risk;
  for (const auto& p : c.truth.problems)
    if (p.weight != 0) risk.push_back(&p);
  double total = 0;
  for (int mask = 0; mask < (1 << (risk.size() + 1)); ++mask) {
    double pr = 1, s = c.truth.bias;
    for (std::size_t j = 0; j < risk.size(); ++j) {
      const bool on = (mask >> j) & 1;
      pr *= on ? risk[j]->prevalence : 1 - risk[j]->prevalence;
      if (on) s += spec.steepness * risk[j]->weight;
    }
    const bool sev = (mask >> risk.size()) & 1;
    pr *= sev ? 0.2 : 0.8;
    if (sev) s += spec.steepness * 1.5;
    total += pr / (1 + std::exp(-s));
  }
  EXPECT_NEAR(synth::expected_outcome_rate(c.truth, c.truth.bias), total, 1e-12);
}

TEST(Synth, OutcomesRealizedThroughTimestamps) {
  for (auto o : corpus::kAllOutcomes) {
    auto spec = fixtures::small_spec(9);
    spec.outcome = o;
    spec.minor_patients = 3;
    const auto c = synth::generate(spec);
    corpus::CohortReport rep;
    const auto cohort = corpus::build_cohort(c.tables, &rep);
    ASSERT_EQ(cohort.size(), spec.n_patients) << corpus::to_string(o);
    EXPECT_EQ(rep.excluded["minor"], 3u);
    std::size_t pos = 0;
    for (const auto& r : cohort) {
      const auto* st = c.truth.stay(r.stay_id);
      ASSERT_NE(st, nullptr);
      EXPECT_EQ(r.outcomes.get(o), st->outcome) << corpus::to_string(o) << " stay " << r.stay_id;
      pos += st->outcome;
    }
    EXPECT_GT(pos, 0u);
  }
}

TEST(Synth, PostCutoffNotesNeverReachNarratives) {
  const auto c = synth::generate(fixtures::small_spec(2));
  const auto cohort = corpus::build_cohort(c.tables);
  for (const auto& r : cohort)
    for (auto ref : r.note_refs) EXPECT_LE(c.tables.notes[ref].chart_time, r.cutoff);
  std::size_t after = 0;
  for (const auto& n : c.tables.notes)
    for (const auto& r : cohort)
      if (n.admission_id == r.admission_id && n.chart_time > r.cutoff) ++after;
  EXPECT_GT(after, 0u);
}

TEST(Synth, LabelNoiseRecordedAndApplied) {
  auto spec = fixtures::small_spec(7);
  spec.label_noise = 0.1;
  const auto c = synth::generate(spec);
  std::size_t flipped = 0, positives = 0;
  std::map<AdmissionId, std::set<std::string>> codes;
  for (const auto& row : c.tables.codes) codes[row.admission_id].insert(labels::rollup_icd9(row.code));
  const auto cohort = corpus::build_cohort(c.tables);
  for (const auto& r : cohort) {
    const auto* st = c.truth.stay(r.stay_id);
    positives += st->problems.size();
    flipped += st->flipped.size();
    for (auto l : st->flipped) EXPECT_EQ(codes[r.admission_id].count(c.truth.problems[l].rolled_code), 0u);
  }
  const double rate = static_cast<double>(flipped) / static_cast<double>(positives);
  EXPECT_NEAR(rate, 0.1, 3 * std::sqrt(0.09 / static_cast<double>(positives)));
}

TEST(Synth, TruthSidecarRoundTrip) {
  auto spec = fixtures::small_spec(3);
  spec.label_noise = 0.2;
  const auto c = synth::generate(spec);
  const auto text = synth::truth_to_jsonl(c.truth);
  const auto back = synth::truth_from_jsonl(text);
  EXPECT_EQ(synth::truth_to_jsonl(back), text);
  EXPECT_EQ(back.stays.size(), c.truth.stays.size());
  EXPECT_DOUBLE_EQ(back.bias, c.truth.bias);
}

TEST(Synth, SpecJsonRejectsUnknownKeys) {
  synth::GenSpec s;
  s.seed = 77;
  s.outcome = corpus::Outcome::mortality30;
  const auto back = synth::gen_spec_from_json(synth::to_json(s));
  EXPECT_EQ(synth::to_json(back), synth::to_json(s));
  EXPECT_THROW(synth::gen_spec_from_json({{"bogus", 1}}), ConfigError);
}

TEST(Synth, InconsistentSpecIsAnError) {
  synth::GenSpec s;
  s.num_problems = 100;
  s.vocab_size = 500;
  EXPECT_THROW(synth::generate(s), ConfigError);
  s = {};
  s.notes_min = 2;
  EXPECT_THROW(synth::generate(s), ConfigError);
}

TEST(Synth, TablesPassIngestionInvariants) {
  const auto c = synth::generate(fixtures::small_spec(8));
  const auto dir = std::filesystem::temp_directory_path() / "problist_synth_ingest";
  std::filesystem::remove_all(dir);
  synth::write_corpus(dir, c);
  const auto t = corpus::load_tables(dir);
  EXPECT_TRUE(t.rejected.empty());
  EXPECT_EQ(t.stays.size(), c.tables.stays.size());
  for (const auto& s : t.stays)
    if (s.icu_in && s.icu_out) EXPECT_LT(*s.icu_in, *s.icu_out);
  const auto cohort = corpus::build_cohort(t);
  for (const auto& r : cohort) EXPECT_GE(r.note_refs.size(), 3u);
  const auto phe = labels::PhecodeMap::from_csv(corpus::read_csv((dir / "phecodes.csv").string()));
  EXPECT_FALSE(phe.empty());
  std::filesystem::remove_all(dir);
}

TEST(Synth, SteepRuleMakesOracleNearPerfect) {
  auto spec = fixtures::small_spec(12);
  spec.n_patients = 1500;
  spec.steepness = 20;
  const auto c = synth::generate(spec);
  auto features = [&](const synth::StayTruth& s) {
    std::vector<double> x(spec.num_problems, 0.0);
    for (auto l : s.problems) x[l] = 1.0;
    return x;
  };
  std::vector<std::vector<double>> x, xt;
  std::vector<std::uint8_t> y;
  metrics::ScoredSet test;
  const std::size_t cut = 1000;
  for (std::size_t i = 0; i < cut; ++i) {
    x.push_back(features(c.truth.stays[i]));
    y.push_back(c.truth.stays[i].outcome);
  }
  const auto m = model::fit_logreg(x, y);
  for (std::size_t i = cut; i < c.truth.stays.size(); ++i)
    test.add(m.predict(features(c.truth.stays[i])), c.truth.stays[i].outcome);
  EXPECT_GE(*metrics::au_roc(test), 0.99);
}

TEST(Synth, ProblemLabelLookup) {
  const auto d = fixtures::small_fold();
  const auto c = synth::generate(fixtures::small_spec());
  std::size_t found = 0;
  for (const auto& p : c.truth.problems)
    if (auto l = synth::problem_label(p, d.space)) {
      ++found;
      const auto& code = d.space.code(*l);
      EXPECT_EQ(code.code, p.rolled_code);
    }
  EXPECT_EQ(found, d.space.size());
}
