#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "problist/model/checkpoint.hpp"
#include "problist/model/logreg.hpp"
#include "problist/train/losses.hpp"
#include "problist/train/splits.hpp"
#include "problist/train/trainer.hpp"

using namespace problist;

// ---------------------------------------------------------------------------
// Losses

TEST(Losses, HalfEverywhereGivesLLog2) {
  std::vector<double> p(7, 0.5);
  std::vector<std::uint8_t> y = {1, 0, 1, 1, 0, 0, 1};
  EXPECT_NEAR(train::loss_problem(p, y), 7 * std::log(2.0), 1e-12);
  EXPECT_NEAR(train::loss_outcome(0.5, true), std::log(2.0), 1e-12);
}

TEST(Losses, PerfectPredictionsNearZero) {
  std::vector<double> p = {1.0, 0.0, 1.0};
  std::vector<std::uint8_t> y = {1, 0, 1};
  EXPECT_LT(train::loss_problem(p, y), 1e-6);
  EXPECT_LT(train::loss_outcome(0.0, false), 1e-6);
}

TEST(Losses, BatchMatchesSummationOracle) {
  Rng rng(11);
  std::vector<std::vector<double>> p(6, std::vector<double>(5));
  std::vector<std::vector<std::uint8_t>> y(6, std::vector<std::uint8_t>(5));
  double oracle = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t l = 0; l < 5; ++l) {
      p[i][l] = rng.uniform(0.01, 0.99);
      y[i][l] = rng.bernoulli(0.4);
      oracle += y[i][l] ? -std::log(p[i][l]) : -std::log(1 - p[i][l]);
    }
  EXPECT_NEAR(train::loss_problem_batch(p, y), oracle / 6, 1e-12);
  const double q = rng.uniform(0.01, 0.99);
  EXPECT_NEAR(train::loss_outcome(q, false), -std::log(1 - q), 1e-12);
}

TEST(Losses, GateCaseSplit) {
  EXPECT_DOUBLE_EQ(train::gated_loss(2.0, 0.5, 0.95, 0.90), 2.5);
  EXPECT_DOUBLE_EQ(train::gated_loss(2.0, 0.5, 0.85, 0.90), 2.0);
  EXPECT_DOUBLE_EQ(train::gated_loss(2.0, 0.5, 0.90, 0.90), 2.5);
  EXPECT_TRUE(train::gate_open(0.90, 0.90));
}

// ---------------------------------------------------------------------------
// Splits

TEST(Splits, PartitionsPatientsWithinAFold) {
  std::vector<PatientId> patient_of;
  for (int p = 0; p < 97; ++p)
    for (int s = 0; s <= p % 3; ++s) patient_of.push_back(p);
  for (int f = 0; f < 5; ++f) {
    const auto s = train::make_split(patient_of, 5, f, 42);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), patient_of.size());
    std::map<PatientId, int> where;
    auto mark = [&](const std::vector<std::size_t>& idx, int tag) {
      for (auto i : idx) {
        auto [it, fresh] = where.emplace(patient_of[i], tag);
        EXPECT_TRUE(fresh || it->second == tag) << "patient " << patient_of[i] << " in two splits";
      }
    };
    mark(s.train, 0);
    mark(s.val, 1);
    mark(s.test, 2);
  }
}

TEST(Splits, TestFoldsCoverEveryPatientOnce) {
  std::vector<PatientId> patient_of;
  for (int p = 0; p < 53; ++p) patient_of.push_back(1000 + p);
  std::map<PatientId, int> seen;
  for (int f = 0; f < 5; ++f)
    for (auto i : train::make_split(patient_of, 5, f, 7).test) ++seen[patient_of[i]];
  EXPECT_EQ(seen.size(), 53u);
  for (auto& [p, n] : seen) EXPECT_EQ(n, 1);
}

TEST(Splits, EightToOneTrainValidation) {
  std::vector<PatientId> patient_of;
  for (int p = 0; p < 1000; ++p) patient_of.push_back(p);
  const auto s = train::make_split(patient_of, 5, 2, 1);
  EXPECT_EQ(s.test.size(), 200u);
  EXPECT_EQ(s.val.size(), 800u / 9);
  EXPECT_EQ(s.train.size(), 800u - 800u / 9);
}

TEST(Splits, DeterministicAndSeedDependent) {
  std::vector<PatientId> patient_of;
  for (int p = 0; p < 40; ++p) patient_of.push_back(p);
  EXPECT_EQ(train::make_split(patient_of, 5, 0, 9).test, train::make_split(patient_of, 5, 0, 9).test);
  EXPECT_NE(train::make_split(patient_of, 5, 0, 9).test, train::make_split(patient_of, 5, 0, 10).test);
}

TEST(Splits, Errors) {
  std::vector<PatientId> three = {1, 2, 3, 3};
  EXPECT_THROW(train::make_split(three, 5, 0, 1), DataError);
  EXPECT_THROW(train::make_split(three, 1, 0, 1), ConfigError);
  EXPECT_THROW(train::make_split(three, 2, 2, 1), ConfigError);
}

TEST(Aggregate, HandComputedMeanAndStd) {
  const std::vector<double> two = {0.8, 0.9};
  auto a = metrics::aggregate(two);
  EXPECT_NEAR(a.mean, 0.85, 1e-15);
  EXPECT_NEAR(a.std, std::sqrt(0.005), 1e-15);
  const std::vector<double> five = {0.71, 0.74, 0.69, 0.77, 0.72};
  a = metrics::aggregate(five);
  double m = 0;
  for (double v : five) m += v;
  m /= 5;
  double ss = 0;
  for (double v : five) ss += (v - m) * (v - m);
  EXPECT_DOUBLE_EQ(a.mean, m);
  EXPECT_DOUBLE_EQ(a.std, std::sqrt(ss / 4));
  const std::vector<double> same = {0.6, 0.6, 0.6};
  EXPECT_EQ(metrics::aggregate(same).std, 0.0);
}

// ---------------------------------------------------------------------------
// Logistic-regression oracle

namespace {
std::vector<std::vector<double>> random_binary(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (auto& row : x)
    for (auto& v : row) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  return x;
}
}  // namespace

TEST(LogReg, DeterministicRuleIsSeparable) {
  Rng rng(5);
  auto x = random_binary(400, 6, rng);
  std::vector<std::uint8_t> y;
  for (auto& r : x) y.push_back(r[3] > 0.5);
  const auto m = model::fit_logreg(x, y);
  auto xt = random_binary(300, 6, rng);
  metrics::ScoredSet s;
  for (auto& r : xt) s.add(m.predict(r), r[3] > 0.5);
  EXPECT_EQ(*metrics::au_roc(s), 1.0);
}

TEST(LogReg, ZeroFeaturesPredictBaseRate) {
  std::vector<std::vector<double>> x(200, std::vector<double>(4, 0.0));
  std::vector<std::uint8_t> y(200, 0);
  for (int i = 0; i < 37; ++i) y[i * 5] = 1;
  const auto m = model::fit_logreg(x, y);
  EXPECT_NEAR(m.predict(x[0]), 37.0 / 200.0, 1e-3);
}

TEST(LogReg, NoisyLinearBeatsMajorityClass) {
  Rng rng(8);
  const std::vector<double> w = {2.0, -1.5, 0.0, 1.0, 0.5};
  auto draw = [&](std::size_t n, std::vector<std::vector<double>>& x, std::vector<std::uint8_t>& y) {
    x = random_binary(n, w.size(), rng);
    y.clear();
    for (auto& r : x) {
      double z = -1.0;
      for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * r[j];
      y.push_back(rng.bernoulli(1 / (1 + std::exp(-z))));
    }
  };
  std::vector<std::vector<double>> x, xt;
  std::vector<std::uint8_t> y, yt;
  draw(2000, x, y);
  draw(1000, xt, yt);
  const auto m = model::fit_logreg(x, y);
  metrics::ScoredSet s, majority;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    s.add(m.predict(xt[i]), yt[i]);
    majority.add(0.0, yt[i]);
  }
  EXPECT_GT(*metrics::au_pr(s), *metrics::au_pr(majority) + 0.1);
  EXPECT_GT(m.weights[0], 1.0);
  EXPECT_LT(m.weights[1], -0.7);
}

TEST(LogReg, SingleClassIsAnError) {
  std::vector<std::vector<double>> x(10, std::vector<double>(2, 1.0));
  std::vector<std::uint8_t> y(10, 1);
  EXPECT_THROW(model::fit_logreg(x, y), DataError);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
model::Checkpoint sample_checkpoint() {
  model::ModelConfig mc;
  mc.vocab_size = 12;
  mc.embed_dim = 3;
  mc.filters = 2;
  mc.num_labels = 2;
  model::Checkpoint ck;
  ck.kind = "dynpl";
  ck.config = mc;
  ck.params = model::init_params(mc, nullptr, 4);
  ck.label_space_hash = "aaaa";
  ck.vocab_hash = "bbbb";
  ck.extra = {{"note", "x"}};
  return ck;
}
}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto ck = sample_checkpoint();
  const auto bytes = model::serialize_checkpoint(ck);
  const auto back = model::deserialize_checkpoint(bytes);
  EXPECT_EQ(back.kind, ck.kind);
  EXPECT_TRUE(back.params == ck.params);
  EXPECT_EQ(back.label_space_hash, "aaaa");
  EXPECT_EQ(back.extra, ck.extra);
  EXPECT_EQ(model::to_json(back.config), model::to_json(ck.config));
  EXPECT_EQ(model::serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
  auto bytes = model::serialize_checkpoint(sample_checkpoint());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(model::deserialize_checkpoint(bad), DataError);
  EXPECT_THROW(model::deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(model::deserialize_checkpoint(bytes + "z"), DataError);
}

TEST(Checkpoint, RefusesHashMismatch) {
  const auto dir = std::filesystem::temp_directory_path() / "problist_ck_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  model::save_checkpoint(path, sample_checkpoint());
  EXPECT_NO_THROW(model::load_checkpoint(path, "aaaa", "bbbb"));
  EXPECT_THROW(model::load_checkpoint(path, "cccc", "bbbb"), DataError);
  EXPECT_THROW(model::load_checkpoint(path, "aaaa", "cccc"), DataError);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {
const pipeline::FoldData& fold() {
  static const pipeline::FoldData d = fixtures::small_fold();
  return d;
}

model::Network fresh_network(std::uint64_t seed = 2) {
  const auto& d = fold();
  auto cfg = fixtures::small_run_config();
  return model::Network::create(pipeline::model_config(cfg, d, model::Architecture::dynpl), &*d.embedding, seed);
}
}  // namespace

TEST(Trainer, FoldFixtureIsUsable) {
  const auto& d = fold();
  EXPECT_GE(d.space.size(), 3u);
  EXPECT_GT(d.train.size(), 100u);
  EXPECT_FALSE(d.val.empty());
  EXPECT_FALSE(d.test.empty());
}

TEST(Trainer, UnreachableGateLeavesOutcomeHeadUntouched) {
  auto net = fresh_network();
  const auto groups = model::outcome_groups();
  const auto before = net.params().fingerprint(groups);
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 2;
  cfg.threshold_p = 1.01;
  const auto res = train::train_model(net, fold().train, fold().val, cfg);
  EXPECT_EQ(res.params.fingerprint(groups), before);
  EXPECT_NE(res.params.fingerprint(), net.params().fingerprint());
  for (const auto& e : res.epochs) {
    EXPECT_FALSE(e.outcome_trained);
    EXPECT_FALSE(e.gate_open);
  }
}

TEST(Trainer, ZeroThresholdTrainsOutcomeFromEpochOne) {
  auto net = fresh_network();
  const auto groups = model::outcome_groups();
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 1;
  cfg.threshold_p = 0.0;
  const auto res = train::train_model(net, fold().train, fold().val, cfg);
  ASSERT_EQ(res.epochs.size(), 1u);
  EXPECT_TRUE(res.epochs[0].outcome_trained);
  EXPECT_NE(res.params.fingerprint(groups), net.params().fingerprint(groups));
}

TEST(Trainer, GateFollowsPreviousEpochValP) {
  auto net = fresh_network();
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 4;
  cfg.threshold_p = 0.6;
  const auto res = train::train_model(net, fold().train, fold().val, cfg);
  ASSERT_FALSE(res.epochs.empty());
  EXPECT_FALSE(res.epochs[0].outcome_trained);
  for (std::size_t e = 0; e < res.epochs.size(); ++e) {
    EXPECT_EQ(res.epochs[e].gate_open, res.epochs[e].val_p.value_or(0) >= 0.6);
    if (e > 0) EXPECT_EQ(res.epochs[e].outcome_trained, res.epochs[e - 1].gate_open);
  }
}

TEST(Trainer, ReproducibleRuns) {
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 2;
  cfg.threshold_p = 0.0;
  const auto a = train::train_model(fresh_network(), fold().train, fold().val, cfg);
  const auto b = train::train_model(fresh_network(), fold().train, fold().val, cfg);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) EXPECT_EQ(a.epochs[e].to_json(), b.epochs[e].to_json());
}

TEST(Trainer, MicroBatchAccumulationMatchesFullBatch) {
  train::TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 1;
  cfg.threshold_p = 0.0;
  const std::span<const train::Example> subset(fold().train.data(), 64);
  const auto full = train::train_model(fresh_network(), subset, fold().val, cfg);
  cfg.micro_batch = 8;
  const auto micro = train::train_model(fresh_network(), subset, fold().val, cfg);
  double worst = 0.0;
  for (std::size_t g = 0; g < full.params.entries().size(); ++g) {
    const auto a = full.params.entries()[g].value.values();
    const auto b = micro.params.entries()[g].value.values();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Trainer, BaselinesTrainOnOutcome) {
  const auto& d = fold();
  auto cfg = fixtures::small_run_config();
  for (auto arch : {model::Architecture::cnn_max, model::Architecture::conv_attn}) {
    auto net = model::Network::create(pipeline::model_config(cfg, d, arch), &*d.embedding, 2);
    train::TrainConfig tc;
    tc.batch_size = 16;
    tc.max_epochs = 1;
    const auto res = train::train_model(net, d.train, d.val, tc);
    EXPECT_TRUE(res.epochs[0].outcome_trained);
    EXPECT_FALSE(res.epochs[0].val_p.has_value());
    EXPECT_NE(res.params.fingerprint(model::outcome_groups()), net.params().fingerprint(model::outcome_groups()));
  }
}

TEST(Trainer, FrozenHeadKeepsExtractorBits) {
  auto net = fresh_network();
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 2;
  const auto res = train::train_frozen_head(net, fold().train, fold().val, cfg);
  std::vector<std::string> extractor_groups;
  for (const auto& e : net.params().entries())
    if (e.name != "outcome.w" && e.name != "outcome.b") extractor_groups.push_back(e.name);
  EXPECT_EQ(res.params.fingerprint(extractor_groups), net.params().fingerprint(extractor_groups));
  EXPECT_NE(res.params.fingerprint(model::outcome_groups()), net.params().fingerprint(model::outcome_groups()));
}

TEST(Trainer, EpochReportJsonShape) {
  train::EpochReport r;
  r.epoch = 3;
  r.val_p = 0.5;
  const auto j = r.to_json();
  EXPECT_EQ(j.at("epoch"), 3);
  EXPECT_TRUE(j.at("val_outcome_auroc").is_null());
  EXPECT_EQ(j.at("val_p"), 0.5);
}

TEST(Trainer, InvalidConfig) {
  train::TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.batch_size = 8;
  cfg.micro_batch = 16;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
