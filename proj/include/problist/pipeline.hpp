#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/narrative.hpp"
#include "problist/corpus/tables.hpp"
#include "problist/corpus/vocab.hpp"
#include "problist/embed.hpp"
#include "problist/labels.hpp"
#include "problist/metrics.hpp"
#include "problist/model/checkpoint.hpp"
#include "problist/model/logreg.hpp"
#include "problist/model/network.hpp"
#include "problist/train/splits.hpp"
#include "problist/train/trainer.hpp"

namespace problist::pipeline {

enum class ModelKind { dynpl, cnn_max, conv_attn, frozen_dynpl, lr_oracle };

inline std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::dynpl: return "dynpl";
    case ModelKind::cnn_max: return "cnn_max";
    case ModelKind::conv_attn: return "conv_attn";
    case ModelKind::frozen_dynpl: return "frozen_dynpl";
    case ModelKind::lr_oracle: return "lr_oracle";
  }
  return "?";
}

inline ModelKind parse_model(std::string_view s) {
  for (auto m : {ModelKind::dynpl, ModelKind::cnn_max, ModelKind::conv_attn, ModelKind::frozen_dynpl,
                 ModelKind::lr_oracle})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown model '" + std::string(s) +
                    "' (expected dynpl|cnn_max|conv_attn|frozen_dynpl|lr_oracle)");
}

/// Every knob of a run. Defaults are the published hyperparameters; the
/// CLI's configs/defaults.json mirrors them.
struct RunConfig {
  std::string problems = "R-ICD";
  std::string outcome = "readmit30";
  std::string model = "dynpl";
  int folds = 5;
  int fold = 0;
  std::uint64_t seed = 1;

  std::size_t min_docs = 5;
  std::size_t min_code_count = labels::kMinCodeCount;
  std::size_t narrative_length = corpus::kNarrativeLength;
  std::string deid_regex;  // empty: MIMIC [** **] brackets

  embed::CbowConfig cbow;
  bool pretrain_embeddings = true;  // false: random word2vec-style init
  bool train_embeddings = true;
  std::string embeddings_file;  // word2vec text; overrides CBOW training

  std::size_t filters = 64;
  double embed_dropout = 0.2;
  double feature_dropout = 0.3;
  train::TrainConfig train;
  model::LogRegConfig logreg;

  std::size_t top_k = 14;
  std::size_t spans = 2;
  std::size_t baseline_spans = 14;
  std::size_t fp_k = 50;
  double fp_threshold = 0.5;

  /// Throws ConfigError on any out-of-range value or unknown selector.
  void validate() const {
    labels::parse_problem_set(problems);
    corpus::parse_outcome(outcome);
    parse_model(model);
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (fold < 0 || fold >= folds) throw ConfigError("fold must lie in [0, folds)");
    if (min_docs < 1 || min_code_count < 1 || narrative_length < 1)
      throw ConfigError("min_docs, min_code_count and narrative_length must be positive");
    if (filters < 1 || cbow.dim < 1) throw ConfigError("filters and embedding dim must be positive");
    if (embed_dropout < 0 || embed_dropout >= 1 || feature_dropout < 0 || feature_dropout >= 1)
      throw ConfigError("dropout probabilities must lie in [0, 1)");
    if (top_k < 1 || spans < 1 || baseline_spans < 1 || fp_k < 1)
      throw ConfigError("top_k, spans, baseline_spans and fp_k must be positive");
    train.validate();
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {
      {"problems", c.problems},
      {"outcome", c.outcome},
      {"model", c.model},
      {"folds", c.folds},
      {"fold", c.fold},
      {"seed", c.seed},
      {"min_docs", c.min_docs},
      {"min_code_count", c.min_code_count},
      {"narrative_length", c.narrative_length},
      {"deid_regex", c.deid_regex},
      {"embedding",
       {{"dim", c.cbow.dim},
        {"window", c.cbow.window},
        {"negatives", c.cbow.negatives},
        {"epochs", c.cbow.epochs},
        {"rate", c.cbow.rate},
        {"subsample", c.cbow.subsample},
        {"pretrain", c.pretrain_embeddings},
        {"fine_tune", c.train_embeddings},
        {"file", c.embeddings_file}}},
      {"filters", c.filters},
      {"embed_dropout", c.embed_dropout},
      {"feature_dropout", c.feature_dropout},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"micro_batch", c.train.micro_batch},
        {"rate", c.train.rate},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"threshold_p", c.train.threshold_p}}},
      {"logreg",
       {{"l2", c.logreg.l2},
        {"rate", c.logreg.rate},
        {"max_iters", c.logreg.max_iters},
        {"tolerance", c.logreg.tolerance}}},
      {"explain",
       {{"top_k", c.top_k},
        {"spans", c.spans},
        {"baseline_spans", c.baseline_spans},
        {"fp_k", c.fp_k},
        {"fp_threshold", c.fp_threshold}}},
  };
}

namespace detail {

/// Copies the keys of `j` into fields, rejecting keys the schema lacks.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    for (auto& [k, v] : j_.items()) unseen_.insert(k);
  }
  template <class T>
  Reader& get(const char* key, T& field) {
    unseen_.erase(key);
    if (!j_.contains(key)) return *this;
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
    return *this;
  }
  Reader& sub(const char* key, const std::function<void(Reader&)>& fn) {
    unseen_.erase(key);
    if (!j_.contains(key)) return *this;
    Reader r(j_.at(key), where_ + "." + key);
    fn(r);
    r.finish();
    return *this;
  }
  void finish() const {
    if (!unseen_.empty()) throw ConfigError(where_ + ": unknown key '" + *unseen_.begin() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> unseen_;
};

}  // namespace detail

/// Overlays `j` onto `base`. Unknown keys are a ConfigError.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  detail::Reader r(j, "config");
  r.get("problems", c.problems)
      .get("outcome", c.outcome)
      .get("model", c.model)
      .get("folds", c.folds)
      .get("fold", c.fold)
      .get("seed", c.seed)
      .get("min_docs", c.min_docs)
      .get("min_code_count", c.min_code_count)
      .get("narrative_length", c.narrative_length)
      .get("deid_regex", c.deid_regex)
      .sub("embedding",
           [&](detail::Reader& e) {
             e.get("dim", c.cbow.dim)
                 .get("window", c.cbow.window)
                 .get("negatives", c.cbow.negatives)
                 .get("epochs", c.cbow.epochs)
                 .get("rate", c.cbow.rate)
                 .get("subsample", c.cbow.subsample)
                 .get("pretrain", c.pretrain_embeddings)
                 .get("fine_tune", c.train_embeddings)
                 .get("file", c.embeddings_file);
           })
      .get("filters", c.filters)
      .get("embed_dropout", c.embed_dropout)
      .get("feature_dropout", c.feature_dropout)
      .sub("train",
           [&](detail::Reader& t) {
             t.get("batch_size", c.train.batch_size)
                 .get("micro_batch", c.train.micro_batch)
                 .get("rate", c.train.rate)
                 .get("max_epochs", c.train.max_epochs)
                 .get("patience", c.train.patience)
                 .get("threshold_p", c.train.threshold_p);
           })
      .sub("logreg",
           [&](detail::Reader& l) {
             l.get("l2", c.logreg.l2)
                 .get("rate", c.logreg.rate)
                 .get("max_iters", c.logreg.max_iters)
                 .get("tolerance", c.logreg.tolerance);
           })
      .sub("explain", [&](detail::Reader& x) {
        x.get("top_k", c.top_k)
            .get("spans", c.spans)
            .get("baseline_spans", c.baseline_spans)
            .get("fp_k", c.fp_k)
            .get("fp_threshold", c.fp_threshold);
      });
  r.finish();
  return c;
}

// ---------------------------------------------------------------------------
// Fold preparation

/// Everything one cross-validation fold needs before training.
struct FoldData {
  int fold = 0;
  std::vector<corpus::CohortRecord> cohort;  // labels filled from `space`
  corpus::CohortReport report;
  std::vector<corpus::NormalizedNote> notes;
  train::FoldSplit split;  // indices into cohort
  std::set<PatientId> test_patients;
  corpus::Vocabulary vocab;
  std::optional<embed::EmbeddingMatrix> embedding;
  labels::LabelSpace space;
  std::vector<train::Example> train, val, test;
};

inline std::vector<PatientId> patients_of(const std::vector<corpus::CohortRecord>& cohort) {
  std::vector<PatientId> p;
  p.reserve(cohort.size());
  for (const auto& r : cohort) p.push_back(r.patient_id);
  return p;
}

/// Builds the cohort, splits it by patient, and derives the vocabulary,
/// embeddings and label space from the non-test (vocabulary, embeddings) or
/// training (labels) portion of the fold.
inline FoldData prepare_fold(const corpus::RawTables& tables, const labels::PhecodeMap& phecodes,
                             const RunConfig& cfg) {
  cfg.validate();
  FoldData d;
  d.fold = cfg.fold;
  d.cohort = corpus::build_cohort(tables, &d.report);
  if (d.cohort.empty()) throw DataError("cohort is empty after exclusions");
  const corpus::TextNormalizer normalizer =
      cfg.deid_regex.empty() ? corpus::TextNormalizer{} : corpus::TextNormalizer{cfg.deid_regex};
  d.notes = corpus::normalize_notes(tables, normalizer);

  const auto patient_of = patients_of(d.cohort);
  d.split = train::make_split(patient_of, cfg.folds, cfg.fold, cfg.seed);
  for (auto i : d.split.test) d.test_patients.insert(d.cohort[i].patient_id);

  std::vector<std::vector<std::string>> vocab_docs;
  std::vector<corpus::NormalizedNote> embed_notes;
  for (const auto& n : d.notes) {
    if (d.test_patients.count(n.patient_id)) continue;
    vocab_docs.push_back(n.tokens);
    embed_notes.push_back(n);
  }
  d.vocab = corpus::build_vocab(vocab_docs, cfg.min_docs);
  if (!cfg.embeddings_file.empty()) {
    d.embedding = embed::from_word2vec_text(corpus::read_file(cfg.embeddings_file), d.vocab, cfg.seed);
  } else if (cfg.pretrain_embeddings) {
    auto cbow = cfg.cbow;
    cbow.seed = mix_seed(cfg.seed, 0xe3b, static_cast<std::uint64_t>(cfg.fold));
    d.embedding = embed::train_cbow(embed_notes, d.vocab, cbow, d.test_patients);
  }

  const auto& selection = labels::parse_problem_set(cfg.problems);
  std::vector<corpus::CohortRecord> train_records;
  for (auto i : d.split.train) train_records.push_back(d.cohort[i]);
  d.space = labels::build_label_space(train_records, selection, phecodes, cfg.min_code_count);
  for (auto& r : d.cohort) r.labels = labels::label_indices(r, d.space, selection, phecodes);

  const auto outcome = corpus::parse_outcome(cfg.outcome);
  auto examples = [&](const std::vector<std::size_t>& idx) {
    std::vector<train::Example> out;
    out.reserve(idx.size());
    for (auto i : idx) {
      const auto& r = d.cohort[i];
      train::Example ex;
      ex.patient_id = r.patient_id;
      ex.stay_id = r.stay_id;
      ex.narrative = corpus::assemble_narrative(r, d.notes, d.vocab, cfg.narrative_length);
      ex.problems.assign(d.space.size(), 0);
      for (int l : r.labels) ex.problems[static_cast<std::size_t>(l)] = 1;
      ex.outcome = r.outcomes.get(outcome);
      out.push_back(std::move(ex));
    }
    return out;
  };
  d.train = examples(d.split.train);
  d.val = examples(d.split.val);
  d.test = examples(d.split.test);
  return d;
}

// ---------------------------------------------------------------------------
// Training and evaluation of one model on one fold

struct ModelRun {
  model::Checkpoint checkpoint;
  std::vector<train::EpochReport> epochs;
  std::vector<train::EpochReport> extractor_epochs;  // frozen_dynpl stage one
  train::Evaluation test;  // bundles kept for neural models
  nlohmann::json metrics;
};

inline model::ModelConfig model_config(const RunConfig& cfg, const FoldData& d, model::Architecture arch) {
  model::ModelConfig mc;
  mc.arch = arch;
  mc.vocab_size = d.vocab.size();
  mc.embed_dim = d.embedding ? d.embedding->dim() : static_cast<std::size_t>(cfg.cbow.dim);
  mc.filters = cfg.filters;
  mc.num_labels = arch == model::Architecture::dynpl ? d.space.size() : 0;
  mc.embed_dropout = cfg.embed_dropout;
  mc.feature_dropout = cfg.feature_dropout;
  mc.train_embeddings = cfg.train_embeddings;
  return mc;
}

/// Dense ground-truth label vectors as logistic-regression features.
inline std::vector<std::vector<double>> label_features(std::span<const train::Example> set) {
  std::vector<std::vector<double>> x;
  x.reserve(set.size());
  for (const auto& ex : set) x.emplace_back(ex.problems.begin(), ex.problems.end());
  return x;
}

inline nlohmann::json metrics_json(const RunConfig& cfg, const FoldData& d, const train::Evaluation& ev,
                                   int best_epoch) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json j = {{"fold", d.fold},
                      {"model", cfg.model},
                      {"outcome", cfg.outcome},
                      {"problems", cfg.problems},
                      {"labels", d.space.size()},
                      {"n_train", d.train.size()},
                      {"n_val", d.val.size()},
                      {"n_test", d.test.size()},
                      {"best_epoch", best_epoch},
                      {"outcome_auroc", opt(ev.outcome_auroc)},
                      {"outcome_aupr", opt(ev.outcome_aupr)}};
  if (ev.extraction) {
    j["extraction_micro_auroc"] = opt(ev.extraction->micro_roc);
    j["extraction_macro_auroc"] = opt(ev.extraction->macro_roc);
    j["extraction_micro_aupr"] = opt(ev.extraction->micro_pr);
    j["extraction_macro_aupr"] = opt(ev.extraction->macro_pr);
  } else {
    for (auto k : {"extraction_micro_auroc", "extraction_macro_auroc", "extraction_micro_aupr",
                   "extraction_macro_aupr"})
      j[k] = nullptr;
  }
  return j;
}

/// Trains the configured model on the fold and evaluates it on the test split.
inline ModelRun run_model(const FoldData& d, const RunConfig& cfg,
                          const train::EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto kind = parse_model(cfg.model);
  ModelRun run;
  auto& ck = run.checkpoint;
  ck.kind = cfg.model;
  ck.label_space_hash = d.space.hash();
  ck.vocab_hash = d.vocab.hash();
  ck.extra = {{"outcome", cfg.outcome}, {"problems", cfg.problems}, {"fold", d.fold},
              {"label_space", d.space.to_json()}, {"run_config", to_json(cfg)}};
  auto tcfg = cfg.train;
  tcfg.seed = mix_seed(cfg.seed, 0x7a, static_cast<std::uint64_t>(d.fold));
  const auto init_seed = mix_seed(cfg.seed, 0x1a, static_cast<std::uint64_t>(d.fold));
  const embed::EmbeddingMatrix* emb = d.embedding ? &*d.embedding : nullptr;

  if (kind == ModelKind::lr_oracle) {
    std::vector<std::uint8_t> y;
    for (const auto& ex : d.train) y.push_back(ex.outcome);
    const auto lr = model::fit_logreg(label_features(d.train), y, cfg.logreg);
    ck.config = model_config(cfg, d, model::Architecture::dynpl);
    ck.params.add("outcome.w", numerics::Tensor2(1, lr.weights.size(), lr.weights));
    ck.params.add("outcome.b", numerics::Tensor2(1, 1, lr.bias));
    metrics::ScoredSet s;
    const auto x = label_features(d.test);
    for (std::size_t i = 0; i < d.test.size(); ++i) {
      const double p = lr.predict(x[i]);
      s.add(p, d.test[i].outcome);
      run.test.outcome_probabilities.push_back(p);
    }
    run.test.outcome_auroc = metrics::au_roc(s);
    run.test.outcome_aupr = metrics::au_pr(s);
    run.metrics = metrics_json(cfg, d, run.test, 0);
    run.metrics["iterations"] = lr.iterations;
    return run;
  }

  model::Architecture arch = model::Architecture::dynpl;
  if (kind == ModelKind::cnn_max) arch = model::Architecture::cnn_max;
  if (kind == ModelKind::conv_attn) arch = model::Architecture::conv_attn;
  ck.config = model_config(cfg, d, arch);
  auto net = model::Network::create(ck.config, emb, init_seed);

  train::TrainResult res;
  if (kind == ModelKind::frozen_dynpl) {
    auto stage1 = tcfg;
    stage1.stage = train::Stage::extraction_only;
    auto ext = train::train_model(net, d.train, d.val, stage1, on_epoch);
    run.extractor_epochs = ext.epochs;
    model::Network extractor(ck.config, std::move(ext.params));
    res = train::train_frozen_head(extractor, d.train, d.val, tcfg, on_epoch);
    ck.extra["extractor_best_epoch"] = ext.best_epoch;
  } else {
    res = train::train_model(net, d.train, d.val, tcfg, on_epoch);
  }
  run.epochs = res.epochs;
  ck.params = std::move(res.params);
  ck.extra["best_epoch"] = res.best_epoch;
  ck.extra["stop_reason"] = res.stop_reason;
  ck.extra["diverged"] = res.diverged;

  const model::Network trained(ck.config, ck.params);
  run.test = train::evaluate(trained, d.test, true);
  run.metrics = metrics_json(cfg, d, run.test, res.best_epoch);
  return run;
}

// ---------------------------------------------------------------------------
// Fold aggregation

inline const std::vector<std::string>& aggregate_metric_names() {
  static const std::vector<std::string> names = {"outcome_auroc", "outcome_aupr", "extraction_micro_auroc",
                                                 "extraction_macro_auroc"};
  return names;
}

/// Mean and sample std across folds of each headline metric. Metrics a
/// model does not produce (extraction for the baselines) come out null.
inline nlohmann::json aggregate_folds(std::span<const nlohmann::json> per_fold) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& name : aggregate_metric_names()) {
    std::vector<double> v;
    for (const auto& m : per_fold)
      if (m.contains(name) && m.at(name).is_number()) v.push_back(m.at(name).get<double>());
    if (v.empty()) {
      out[name] = nullptr;
      continue;
    }
    const auto a = metrics::aggregate(v);
    out[name] = {{"mean", a.mean}, {"std", a.std}, {"n", a.n}};
  }
  return out;
}

}  // namespace problist::pipeline
