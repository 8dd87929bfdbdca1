#pragma once

// Command-line front end. Everything lives here so tests can call
// dispatch() in process; tools/problist.cpp only forwards argv.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/csv.hpp"
#include "problist/corpus/tables.hpp"
#include "problist/embed.hpp"
#include "problist/explain/problem_list.hpp"
#include "problist/explain/report.hpp"
#include "problist/explain/spans.hpp"
#include "problist/labels.hpp"
#include "problist/model/checkpoint.hpp"
#include "problist/pipeline.hpp"
#include "problist/synth.hpp"

namespace problist::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;
inline constexpr const char* kDataEnv = "PROBLIST_DATA";
inline constexpr const char* kManifestName = "manifest.json";

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"synth", "ingest", "vocab", "embed",  "labels", "train",
                                                 "eval",  "explain", "oracle", "fps", "report"};
  return names;
}

inline std::string hash_bytes(std::string_view bytes) { return Fnv1a{}.update(bytes).hex(); }

/// Files read and written by one invocation, keyed for the manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path out) : out_(std::move(out)) {}

  [[nodiscard]] const fs::path& out() const { return out_; }

  std::string read(const fs::path& p) {
    std::string bytes = corpus::read_file(p.string());
    inputs_[fs::absolute(p).lexically_normal().string()] = hash_bytes(bytes);
    return bytes;
  }
  void note_input(const fs::path& p) { (void)read(p); }

  void write(const std::string& rel, std::string_view bytes) {
    const auto path = out_ / rel;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    corpus::write_file(path.string(), std::string(bytes));
    outputs_[rel] = hash_bytes(bytes);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(1) + "\n"); }

  json seeds = json::object();
  json config;  // resolved run configuration, when the command has one

  [[nodiscard]] const std::map<std::string, std::string>& inputs() const { return inputs_; }
  [[nodiscard]] const std::map<std::string, std::string>& outputs() const { return outputs_; }

 private:
  fs::path out_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

/// Parsed flags of one invocation. Override flags are applied only when
/// given; `given` lists their names.
struct Options {
  std::string command;
  std::string data, out = "out", config, columns, phecodes, checkpoint, runs, truth, spec, embeddings;
  std::vector<std::string> sets;
  std::string problems, outcome, model;
  int folds = 0, fold = 0, max_epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0, micro_batch = 0, narrative_length = 0, filters = 0, embed_dim = 0, min_docs = 0,
              min_code_count = 0, top_k = 0;
  double rate = 0, threshold_p = 0;
  bool cv = false;
  std::vector<StayId> stays;
  std::size_t limit = 5;
  std::size_t patients = 0;
  double label_noise = 0;
  std::set<std::string> given;

  [[nodiscard]] bool has(const std::string& flag) const { return given.count(flag) > 0; }
};

namespace detail {

inline void log(std::ostream& err, std::string_view level, std::string_view event, json fields = json::object()) {
  fields["level"] = level;
  fields["event"] = event;
  err << fields.dump() << "\n";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Sets a dotted path in a config object; the value is parsed as JSON when
/// it can be, otherwise taken as a string.
inline void apply_set(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::stringstream ss(key);
  std::vector<std::string> parts;
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw ConfigError("--set: unknown config section '" + parts[i] + "'");
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

inline json cohort_report_json(const corpus::CohortReport& r) {
  return {{"stays_seen", r.stays_seen},   {"stays_kept", r.stays_kept}, {"patients_kept", r.patients_kept},
          {"excluded", r.excluded},       {"positives", r.positives},   {"diagnostics", r.diagnostics}};
}

inline std::string epochs_jsonl(const std::vector<train::EpochReport>& epochs) {
  std::string s;
  for (const auto& e : epochs) s += e.to_json().dump() + "\n";
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration and data

/// Built-in defaults, then --config, then --set, then explicit flags.
inline pipeline::RunConfig resolve_config(const Options& o, Artifacts& a) {
  pipeline::RunConfig cfg;
  if (!o.config.empty()) {
    const auto parsed = json::parse(a.read(o.config), nullptr, false);
    if (parsed.is_discarded()) throw ConfigError("config file " + o.config + " is not valid JSON");
    cfg = pipeline::run_config_from_json(parsed, cfg);
  }
  if (!o.sets.empty()) {
    auto j = pipeline::to_json(cfg);
    for (const auto& s : o.sets) detail::apply_set(j, s);
    cfg = pipeline::run_config_from_json(j, pipeline::RunConfig{});
  }
  if (o.has("problems")) cfg.problems = o.problems;
  if (o.has("outcome")) cfg.outcome = o.outcome;
  if (o.has("model")) cfg.model = o.model;
  if (o.has("folds")) cfg.folds = o.folds;
  if (o.has("fold")) cfg.fold = o.fold;
  if (o.has("seed")) cfg.seed = o.seed;
  if (o.has("max-epochs")) cfg.train.max_epochs = o.max_epochs;
  if (o.has("patience")) cfg.train.patience = o.patience;
  if (o.has("batch-size")) cfg.train.batch_size = o.batch_size;
  if (o.has("micro-batch")) cfg.train.micro_batch = o.micro_batch;
  if (o.has("rate")) cfg.train.rate = o.rate;
  if (o.has("threshold-p")) cfg.train.threshold_p = o.threshold_p;
  if (o.has("narrative-length")) cfg.narrative_length = o.narrative_length;
  if (o.has("filters")) cfg.filters = o.filters;
  if (o.has("embed-dim")) cfg.cbow.dim = static_cast<int>(o.embed_dim);
  if (o.has("min-docs")) cfg.min_docs = o.min_docs;
  if (o.has("min-code-count")) cfg.min_code_count = o.min_code_count;
  if (o.has("top-k")) cfg.top_k = o.top_k;
  if (o.has("embeddings")) cfg.embeddings_file = fs::absolute(o.embeddings).string();
  if (!cfg.embeddings_file.empty()) a.note_input(cfg.embeddings_file);
  // Comma lists are only meaningful for train --cv; each entry is checked.
  for (const auto& p : detail::split_list(cfg.problems)) labels::parse_problem_set(p);
  for (const auto& m : detail::split_list(cfg.model)) pipeline::parse_model(m);
  auto single = cfg;
  single.problems = detail::split_list(cfg.problems).at(0);
  single.model = detail::split_list(cfg.model).at(0);
  single.validate();
  a.config = pipeline::to_json(cfg);
  return cfg;
}

struct Data {
  corpus::RawTables tables;
  labels::PhecodeMap phecodes;
  fs::path dir;
};

inline Data load_data(const Options& o, Artifacts& a) {
  if (o.data.empty()) throw ConfigError(std::string("no data directory: pass --data or set ") + kDataEnv);
  Data d;
  d.dir = o.data;
  if (!fs::is_directory(d.dir)) throw DataError("data directory " + o.data + " does not exist");
  corpus::ColumnMapping mapping;
  const fs::path cols = o.columns.empty() ? d.dir / "columns.json" : fs::path(o.columns);
  if (fs::exists(cols)) {
    mapping = corpus::ColumnMapping::from_json(json::parse(a.read(cols)));
  } else if (!o.columns.empty()) {
    throw DataError("column mapping " + o.columns + " does not exist");
  }
  a.note_input(d.dir / mapping.notes.file);
  a.note_input(d.dir / mapping.stays.file);
  for (const auto& j : mapping.stays.joins) a.note_input(d.dir / j.file);
  for (const auto& c : mapping.codes) a.note_input(d.dir / c.file);
  d.tables = corpus::load_tables(d.dir, mapping);
  const fs::path phe = o.phecodes.empty() ? d.dir / "phecodes.csv" : fs::path(o.phecodes);
  if (fs::exists(phe)) {
    d.phecodes = labels::PhecodeMap::from_csv(corpus::parse_csv(a.read(phe)));
  } else if (!o.phecodes.empty()) {
    throw DataError("phecode map " + o.phecodes + " does not exist");
  }
  return d;
}

inline json fold_seeds(const pipeline::RunConfig& cfg, int fold) {
  const auto f = static_cast<std::uint64_t>(fold);
  return {{"split", cfg.seed},
          {"cbow", mix_seed(cfg.seed, 0xe3b, f)},
          {"train", mix_seed(cfg.seed, 0x7a, f)},
          {"init", mix_seed(cfg.seed, 0x1a, f)}};
}

/// Replaces the problem labels of every example with the generator's true
/// problems, for oracle runs against noise-free labels.
inline void apply_truth(pipeline::FoldData& d, const synth::GroundTruth& truth) {
  std::vector<std::optional<std::size_t>> label_of;
  for (const auto& p : truth.problems) label_of.push_back(synth::problem_label(p, d.space));
  for (auto* set : {&d.train, &d.val, &d.test})
    for (auto& ex : *set) {
      const auto* st = truth.stay(ex.stay_id);
      if (!st) throw DataError("truth sidecar has no record of stay " + std::to_string(ex.stay_id));
      std::fill(ex.problems.begin(), ex.problems.end(), 0);
      for (auto l : st->problems)
        if (label_of[l]) ex.problems[*label_of[l]] = 1;
    }
}

/// Fraction of exported false positives whose label was dropped by the
/// generator's label noise.
inline double flipped_fraction(std::span<const explain::FalsePositive> fps, const synth::GroundTruth& truth,
                               const labels::LabelSpace& space) {
  if (fps.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& fp : fps) {
    const auto* st = truth.stay(fp.stay_id);
    if (!st) continue;
    for (auto l : st->flipped)
      if (synth::problem_label(truth.problems[l], space) == fp.label) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(fps.size());
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation

/// Rebuilds the fold a checkpoint was trained on and checks that the
/// vocabulary and label space match it.
inline pipeline::FoldData fold_for_checkpoint(const model::Checkpoint& ck, const Data& data,
                                              pipeline::RunConfig& cfg) {
  if (!ck.extra.contains("run_config")) throw DataError("checkpoint carries no run configuration");
  cfg = pipeline::run_config_from_json(ck.extra.at("run_config"));
  auto prep = cfg;
  prep.pretrain_embeddings = false;  // the checkpoint holds its own embedding table
  prep.embeddings_file.clear();
  auto d = pipeline::prepare_fold(data.tables, data.phecodes, prep);
  if (d.vocab.hash() != ck.vocab_hash)
    throw DataError("data yields vocabulary " + d.vocab.hash() + " but the checkpoint expects " + ck.vocab_hash);
  if (d.space.hash() != ck.label_space_hash)
    throw DataError("data yields label space " + d.space.hash() + " but the checkpoint expects " +
                    ck.label_space_hash);
  return d;
}

inline train::Evaluation evaluate_checkpoint(const model::Checkpoint& ck, const pipeline::FoldData& d,
                                             bool keep_bundles) {
  if (ck.kind != "lr_oracle") return train::evaluate(model::Network(ck.config, ck.params), d.test, keep_bundles);
  model::LogisticModel lr;
  const auto& w = ck.params["outcome.w"];
  lr.weights.assign(w.row(0).begin(), w.row(0).end());
  lr.bias = ck.params["outcome.b"](0, 0);
  train::Evaluation ev;
  metrics::ScoredSet s;
  const auto x = pipeline::label_features(d.test);
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const double p = lr.predict(x[i]);
    ev.outcome_probabilities.push_back(p);
    s.add(p, d.test[i].outcome);
  }
  ev.outcome_auroc = metrics::au_roc(s);
  ev.outcome_aupr = metrics::au_pr(s);
  return ev;
}

inline model::Checkpoint load_checkpoint_input(const Options& o, Artifacts& a) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw DataError("checkpoint " + o.checkpoint + " does not exist");
  return model::deserialize_checkpoint(a.read(o.checkpoint));
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_synth(const Options& o, Artifacts& a, std::ostream& out) {
  synth::GenSpec spec;
  if (!o.spec.empty()) spec = synth::gen_spec_from_json(json::parse(a.read(o.spec)));
  if (o.has("seed")) spec.seed = o.seed;
  if (o.has("patients")) spec.n_patients = o.patients;
  if (o.has("label-noise")) spec.label_noise = o.label_noise;
  if (o.has("outcome")) spec.outcome = corpus::parse_outcome(o.outcome);
  spec.validate();
  const auto c = synth::generate(spec);
  const auto tmp = fs::temp_directory_path() / ("problist_synth_" + std::to_string(spec.seed));
  fs::remove_all(tmp);
  synth::write_corpus(tmp, c);
  for (const auto& e : fs::directory_iterator(tmp)) a.write(e.path().filename().string(), corpus::read_file(e.path().string()));
  fs::remove_all(tmp);
  a.write_json("spec.json", synth::to_json(spec));
  a.seeds = {{"synth", spec.seed}};
  out << json{{"stays", c.truth.stays.size()}, {"problems", c.truth.problems.size()},
              {"expected_rate", c.truth.expected_rate}}.dump() << "\n";
  return kExitOk;
}

inline int cmd_ingest(const Options& o, Artifacts& a, std::ostream& out) {
  const auto data = load_data(o, a);
  corpus::CohortReport rep;
  const auto cohort = corpus::build_cohort(data.tables, &rep);
  a.write("cohort.jsonl", corpus::cohort_to_jsonl(cohort));
  auto rj = detail::cohort_report_json(rep);
  rj["notes_rejected"] = data.tables.rejected.size();
  a.write_json("cohort_report.json", rj);
  out << rj.dump() << "\n";
  return kExitOk;
}

inline pipeline::RunConfig single_config(const Options& o, Artifacts& a) {
  auto cfg = resolve_config(o, a);
  cfg.problems = detail::split_list(cfg.problems).at(0);
  cfg.model = detail::split_list(cfg.model).at(0);
  return cfg;
}

inline int cmd_vocab(const Options& o, Artifacts& a, std::ostream& out) {
  auto cfg = single_config(o, a);
  cfg.pretrain_embeddings = false;
  cfg.embeddings_file.clear();
  const auto data = load_data(o, a);
  const auto d = pipeline::prepare_fold(data.tables, data.phecodes, cfg);
  a.write("vocab.tsv", d.vocab.to_tsv());
  a.seeds = {{"fold", fold_seeds(cfg, cfg.fold)}};
  out << json{{"fold", cfg.fold}, {"tokens", d.vocab.size()}, {"hash", d.vocab.hash()}}.dump() << "\n";
  return kExitOk;
}

inline int cmd_embed(const Options& o, Artifacts& a, std::ostream& out) {
  auto cfg = single_config(o, a);
  cfg.pretrain_embeddings = true;
  cfg.embeddings_file.clear();
  const auto data = load_data(o, a);
  const auto d = pipeline::prepare_fold(data.tables, data.phecodes, cfg);
  a.write("embeddings.txt", embed::to_word2vec_text(*d.embedding, d.vocab));
  a.write("vocab.tsv", d.vocab.to_tsv());
  a.seeds = {{"fold", fold_seeds(cfg, cfg.fold)}};
  out << json{{"fold", cfg.fold}, {"rows", d.embedding->rows()}, {"dim", d.embedding->dim()}}.dump() << "\n";
  return kExitOk;
}

inline int cmd_labels(const Options& o, Artifacts& a, std::ostream& out) {
  auto cfg = single_config(o, a);
  cfg.pretrain_embeddings = false;
  cfg.embeddings_file.clear();
  const auto data = load_data(o, a);
  const auto d = pipeline::prepare_fold(data.tables, data.phecodes, cfg);
  a.write_json("label_space.json", d.space.to_json());
  a.seeds = {{"fold", fold_seeds(cfg, cfg.fold)}};
  out << json{{"fold", cfg.fold}, {"problems", cfg.problems}, {"labels", d.space.size()}, {"hash", d.space.hash()}}
             .dump()
      << "\n";
  return kExitOk;
}

inline void write_run(Artifacts& a, const std::string& prefix, const pipeline::FoldData& d,
                      const pipeline::ModelRun& r) {
  a.write(prefix + "checkpoint.bin", model::serialize_checkpoint(r.checkpoint));
  a.write_json(prefix + "metrics.json", r.metrics);
  a.write(prefix + "epochs.jsonl", detail::epochs_jsonl(r.epochs));
  if (!r.extractor_epochs.empty()) a.write(prefix + "extractor_epochs.jsonl", detail::epochs_jsonl(r.extractor_epochs));
  a.write_json(prefix + "label_space.json", d.space.to_json());
}

inline int cmd_train(const Options& o, Artifacts& a, std::ostream& out, std::ostream& err, bool oracle) {
  auto cfg = resolve_config(o, a);
  if (oracle) cfg.model = "lr_oracle";
  const auto data = load_data(o, a);
  std::optional<synth::GroundTruth> truth;
  if (!o.truth.empty()) truth = synth::truth_from_jsonl(a.read(o.truth));
  auto progress = [&](const std::string& tag) {
    return [&err, tag](const train::EpochReport& e) {
      auto j = e.to_json();
      j["run"] = tag;
      detail::log(err, "info", "epoch", j);
    };
  };
  auto prepare = [&](const pipeline::RunConfig& c) {
    auto d = pipeline::prepare_fold(data.tables, data.phecodes, c);
    if (truth) apply_truth(d, *truth);
    return d;
  };

  if (!o.cv) {
    cfg.problems = detail::split_list(cfg.problems).at(0);
    cfg.model = detail::split_list(cfg.model).at(0);
    a.config = pipeline::to_json(cfg);
    const auto d = prepare(cfg);
    const auto r = pipeline::run_model(d, cfg, progress(cfg.model));
    write_run(a, "", d, r);
    a.seeds = {{"fold", fold_seeds(cfg, cfg.fold)}};
    out << r.metrics.dump() << "\n";
    return kExitOk;
  }

  const auto models = detail::split_list(cfg.model);
  const auto problem_sets = detail::split_list(cfg.problems);
  std::map<std::pair<std::string, std::string>, std::vector<json>> per_fold;
  for (int k = 0; k < cfg.folds; ++k) a.seeds["fold-" + std::to_string(k)] = fold_seeds(cfg, k);
  for (const auto& p : problem_sets)
    for (int k = 0; k < cfg.folds; ++k) {
      auto c = cfg;
      c.problems = p;
      c.model = models.front();
      c.fold = k;
      const auto d = prepare(c);
      for (const auto& m : models) {
        c.model = m;
        const auto tag = m + "_" + p;
        const auto r = pipeline::run_model(d, c, progress(tag + "/fold-" + std::to_string(k)));
        write_run(a, tag + "/fold-" + std::to_string(k) + "/", d, r);
        per_fold[{p, m}].push_back(r.metrics);
        detail::log(err, "info", "fold_done", {{"run", tag}, {"fold", k}, {"metrics", r.metrics}});
      }
    }
  json runs = json::array();
  for (const auto& p : problem_sets)
    for (const auto& m : models) {
      const auto& folds = per_fold[{p, m}];
      runs.push_back({{"model", m},
                      {"problems", p},
                      {"outcome", cfg.outcome},
                      {"folds", folds.size()},
                      {"metrics", pipeline::aggregate_folds(folds)},
                      {"per_fold", folds}});
    }
  const json agg = {{"runs", runs}};
  a.write_json("aggregate.json", agg);
  out << agg.dump() << "\n";
  return kExitOk;
}

inline int cmd_eval(const Options& o, Artifacts& a, std::ostream& out) {
  const auto ck = load_checkpoint_input(o, a);
  const auto data = load_data(o, a);
  pipeline::RunConfig cfg;
  const auto d = fold_for_checkpoint(ck, data, cfg);
  a.config = pipeline::to_json(cfg);
  const auto ev = evaluate_checkpoint(ck, d, false);
  const auto m = pipeline::metrics_json(cfg, d, ev, ck.extra.value("best_epoch", 0));
  a.write_json("metrics.json", m);
  std::string probs = "stay_id,outcome,probability\n";
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ev.outcome_probabilities[i]);
    probs += std::to_string(d.test[i].stay_id) + "," + (d.test[i].outcome ? "1" : "0") + "," + buf + "\n";
  }
  a.write("predictions.csv", probs);
  out << m.dump() << "\n";
  return kExitOk;
}

namespace detail {
inline std::vector<std::size_t> selected_test_examples(const Options& o, const pipeline::FoldData& d) {
  std::vector<std::size_t> idx;
  if (o.stays.empty()) {
    for (std::size_t i = 0; i < std::min(o.limit, d.test.size()); ++i) idx.push_back(i);
    return idx;
  }
  for (auto s : o.stays) {
    auto it = std::find_if(d.test.begin(), d.test.end(), [&](const train::Example& e) { return e.stay_id == s; });
    if (it == d.test.end()) throw DataError("stay " + std::to_string(s) + " is not in this fold's test split");
    idx.push_back(static_cast<std::size_t>(it - d.test.begin()));
  }
  return idx;
}
}  // namespace detail

inline int cmd_explain(const Options& o, Artifacts& a, std::ostream& out) {
  const auto ck = load_checkpoint_input(o, a);
  if (ck.kind == "cnn_max" || ck.kind == "lr_oracle")
    throw ConfigError("model " + ck.kind + " has no attention to explain");
  const auto data = load_data(o, a);
  pipeline::RunConfig cfg;
  const auto d = fold_for_checkpoint(ck, data, cfg);
  a.config = pipeline::to_json(cfg);
  const model::Network net(ck.config, ck.params);
  const auto picked = detail::selected_test_examples(o, d);
  std::string lists;
  for (auto i : picked) {
    const auto& ex = d.test[i];
    const auto b = net.forward(ex.narrative, model::Mode::eval);
    const auto stem = "reports/" + std::to_string(ex.stay_id);
    if (ck.kind == "conv_attn") {
      const auto spans = explain::baseline_spans(b.attention_full(0), ex.narrative, cfg.baseline_spans);
      a.write(stem + ".md", explain::render_baseline_spans(spans, ex.stay_id));
      continue;
    }
    const auto& w = ck.params["outcome.w"];
    const std::vector<double> weights(w.row(0).begin(), w.row(0).end());
    const auto entries = explain::build_problem_list(b, ex.narrative, d.space, weights, cfg.top_k, cfg.spans);
    const explain::ReportContext ctx{ex.stay_id, cfg.outcome, cfg.model, b.outcome_probability};
    a.write(stem + ".md", explain::render_report(entries, ctx, explain::Format::markdown));
    a.write(stem + ".html", explain::render_report(entries, ctx, explain::Format::html));
    json row = {{"stay_id", ex.stay_id}, {"outcome_probability", b.outcome_probability}, {"problems", json::array()}};
    for (const auto& e : entries) row["problems"].push_back(e.to_json());
    lists += row.dump() + "\n";
  }
  if (ck.kind != "conv_attn") a.write("problem_lists.jsonl", lists);
  out << json{{"reports", picked.size()}, {"dir", (a.out() / "reports").string()}}.dump() << "\n";
  return kExitOk;
}

inline int cmd_fps(const Options& o, Artifacts& a, std::ostream& out) {
  const auto ck = load_checkpoint_input(o, a);
  if (ck.kind != "dynpl" && ck.kind != "frozen_dynpl")
    throw ConfigError("false-positive export needs problem heads; model " + ck.kind + " has none");
  const auto data = load_data(o, a);
  pipeline::RunConfig cfg;
  const auto d = fold_for_checkpoint(ck, data, cfg);
  a.config = pipeline::to_json(cfg);
  const auto ev = evaluate_checkpoint(ck, d, true);
  const auto fps = explain::export_false_positives(ev.bundles, d.test, d.space, cfg.fp_k, cfg.fp_threshold, cfg.spans);
  a.write("false_positives.jsonl", explain::false_positives_to_jsonl(fps));
  json summary = {{"exported", fps.size()}};
  const fs::path truth_path = o.truth.empty() ? data.dir / "truth.jsonl" : fs::path(o.truth);
  if (fs::exists(truth_path)) {
    const auto truth = synth::truth_from_jsonl(a.read(truth_path));
    summary["flipped_fraction"] = flipped_fraction(fps, truth, d.space);
  }
  a.write_json("false_positives_summary.json", summary);
  out << summary.dump() << "\n";
  return kExitOk;
}

inline int cmd_report(const Options& o, Artifacts& a, std::ostream& out) {
  if (o.runs.empty()) throw ConfigError("--runs is required");
  const fs::path root = o.runs;
  if (!fs::is_directory(root)) throw DataError("runs directory " + o.runs + " does not exist");
  std::map<std::string, std::vector<fs::path>> groups;  // config directory -> fold checkpoints
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "checkpoint.bin")
      groups[fs::relative(e.path().parent_path().parent_path(), root).generic_string()].push_back(e.path());
  if (groups.empty()) throw DataError("no fold checkpoints under " + o.runs);

  std::string md = "# Cross-validation report\n\n";
  const auto agg_path = root / "aggregate.json";
  if (fs::exists(agg_path)) {
    const auto agg = json::parse(a.read(agg_path));
    md += "| Model | Problems | Outcome AU-ROC | Outcome AU-PR | Extraction micro AU-ROC | Extraction macro AU-ROC |\n";
    md += "|---|---|---:|---:|---:|---:|\n";
    for (const auto& r : agg.at("runs")) {
      md += "| " + r.at("model").get<std::string>() + " | " + r.at("problems").get<std::string>();
      for (const auto& name : pipeline::aggregate_metric_names()) {
        const auto& m = r.at("metrics").at(name);
        md += " | " + (m.is_null() ? std::string("n/a")
                                   : explain::detail::fixed(m.at("mean").get<double>(), 3) + " +/- " +
                                         explain::detail::fixed(m.at("std").get<double>(), 3));
      }
      md += " |\n";
    }
    md += "\n";
  }
  json factors_json = json::object();
  for (auto& [group, paths] : groups) {
    std::sort(paths.begin(), paths.end());
    std::vector<model::Checkpoint> cks;
    for (const auto& p : paths) cks.push_back(model::deserialize_checkpoint(a.read(p)));
    const auto& kind = cks.front().kind;
    if (kind != "dynpl" && kind != "frozen_dynpl" && kind != "lr_oracle") continue;
    if (cks.size() < 2) throw ConfigError("risk factors need at least two fold checkpoints in " + group);
    const auto space = labels::LabelSpace::from_json(cks.front().extra.at("label_space"));
    const auto outcome = cks.front().extra.value("outcome", std::string("outcome"));
    std::vector<explain::RiskFactor> factors;
    try {
      factors = explain::global_risk_factors(cks, space);
    } catch (const DataError& e) {
      warn("risk_factors_skipped", group + ": " + e.what());
      md += "### " + group + "\n\nRisk factors unavailable: the folds selected different label spaces.\n\n";
      continue;
    }
    md += "### " + group + "\n\n" + explain::render_risk_factors(factors, outcome, 5) + "\n";
    json arr = json::array();
    for (const auto& f : factors)
      arr.push_back({{"label", f.label}, {"code", f.code}, {"name", f.name}, {"mean", f.mean}, {"std", f.std},
                     {"per_fold", f.per_fold}});
    factors_json[group] = arr;
  }
  a.write("report.md", md);
  a.write_json("risk_factors.json", factors_json);
  out << json{{"groups", groups.size()}, {"report", (a.out() / "report.md").string()}}.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument handling

namespace detail {

inline const std::set<std::string>& path_flags() {
  static const std::set<std::string> f = {"--data", "--out",  "--config", "--columns", "--phecodes", "--checkpoint",
                                          "--runs", "--truth", "--spec",  "--embeddings"};
  return f;
}

/// argv with path values made absolute and the data directory written out,
/// so a manifest replays independently of cwd and environment.
inline std::vector<std::string> canonical_args(const std::vector<std::string>& args, const Options& o) {
  std::vector<std::string> out;
  bool has_data = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string flag = args[i], value;
    const auto eq = flag.find('=');
    const bool joined = flag.rfind("--", 0) == 0 && eq != std::string::npos;
    if (joined) {
      value = flag.substr(eq + 1);
      flag = flag.substr(0, eq);
    }
    if (!path_flags().count(flag)) {
      out.push_back(args[i]);
      continue;
    }
    if (!joined) {
      if (i + 1 >= args.size()) break;
      value = args[++i];
    }
    if (flag == "--data") has_data = true;
    out.push_back(flag);
    out.push_back(fs::absolute(value).lexically_normal().string());
  }
  if (!has_data && !o.data.empty()) {
    out.push_back("--data");
    out.push_back(fs::absolute(o.data).lexically_normal().string());
  }
  if (std::find(out.begin(), out.end(), "--out") == out.end()) {
    out.push_back("--out");
    out.push_back(fs::absolute(o.out).lexically_normal().string());
  }
  return out;
}

inline void add_common(CLI::App& sub, Options& o) {
  sub.add_option("--data", o.data, std::string("Data directory (default: $") + kDataEnv + ")");
  sub.add_option("--out", o.out, "Output directory")->capture_default_str();
}

inline void add_data_opts(CLI::App& sub, Options& o) {
  sub.add_option("--columns", o.columns, "Column mapping JSON (default: <data>/columns.json if present)");
  sub.add_option("--phecodes", o.phecodes, "ICD9-to-phecode CSV (default: <data>/phecodes.csv if present)");
}

inline void add_run_opts(CLI::App& sub, Options& o) {
  sub.add_option("--config", o.config, "JSON run configuration overlaid on the defaults");
  sub.add_option("--set", o.sets, "Override one config key, e.g. train.max_epochs=20")->allow_extra_args(false);
  sub.add_option("--problems", o.problems, "Problem set (comma list with --cv)");
  sub.add_option("--outcome", o.outcome, "bounceback|readmit30|mortality_inhosp|mortality30");
  sub.add_option("--model", o.model, "dynpl|cnn_max|conv_attn|frozen_dynpl|lr_oracle (comma list with --cv)");
  sub.add_option("--folds", o.folds, "Cross-validation folds");
  sub.add_option("--fold", o.fold, "Fold index");
  sub.add_option("--seed", o.seed, "Run seed");
  sub.add_option("--max-epochs", o.max_epochs);
  sub.add_option("--patience", o.patience);
  sub.add_option("--batch-size", o.batch_size);
  sub.add_option("--micro-batch", o.micro_batch);
  sub.add_option("--rate", o.rate, "Adam learning rate");
  sub.add_option("--threshold-p", o.threshold_p, "Gate threshold on validation extraction micro AU-ROC");
  sub.add_option("--narrative-length", o.narrative_length);
  sub.add_option("--filters", o.filters);
  sub.add_option("--embed-dim", o.embed_dim);
  sub.add_option("--min-docs", o.min_docs);
  sub.add_option("--min-code-count", o.min_code_count);
  sub.add_option("--top-k", o.top_k);
  sub.add_option("--embeddings", o.embeddings, "word2vec text file replacing CBOW pretraining");
}

inline void record_given(CLI::App& sub, Options& o) {
  for (const auto* opt : sub.get_options())
    if (opt->count() > 0) {
      auto name = opt->get_name();  // "--max-epochs"
      while (!name.empty() && name.front() == '-') name.erase(0, 1);
      o.given.insert(name);
    }
}

}  // namespace detail

/// Runs one command. Exit codes: 0 success, 1 data error, 2 usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr);

namespace detail {

inline int replay(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::string manifest_path, out_dir;
  CLI::App app{"Replay a recorded run", "problist"};
  app.add_option("--replay", manifest_path)->required();
  app.add_option("--out", out_dir, "Write outputs here instead of the recorded directory");
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  json m;
  try {
    m = json::parse(corpus::read_file(manifest_path));
  } catch (const std::exception& e) {
    log(err, "error", "replay", {{"message", std::string("cannot read manifest: ") + e.what()}});
    return kExitData;
  }
  for (auto& [path, hash] : m.at("inputs").items()) {
    std::string now;
    try {
      now = hash_bytes(corpus::read_file(path));
    } catch (const std::exception&) {
      now = "missing";
    }
    if (now != hash.get<std::string>()) {
      log(err, "error", "replay", {{"message", "input changed since the recorded run"}, {"path", path}});
      return kExitData;
    }
  }
  auto argv = m.at("argv").get<std::vector<std::string>>();
  if (!out_dir.empty()) {
    auto it = std::find(argv.begin(), argv.end(), "--out");
    const auto abs = fs::absolute(out_dir).lexically_normal().string();
    if (it != argv.end() && it + 1 != argv.end()) *(it + 1) = abs;
    else argv.insert(argv.end(), {"--out", abs});
  }
  std::ostringstream sub_out;
  const int rc = dispatch(argv, sub_out, err);
  if (rc != kExitOk) return rc;
  const auto it = std::find(argv.begin(), argv.end(), "--out");
  const json fresh = json::parse(corpus::read_file((fs::path(*(it + 1)) / kManifestName).string()));
  json mismatched = json::array();
  for (auto& [rel, hash] : m.at("outputs").items())
    if (!fresh.at("outputs").contains(rel) || fresh.at("outputs").at(rel) != hash) mismatched.push_back(rel);
  for (auto& [rel, hash] : fresh.at("outputs").items())
    if (!m.at("outputs").contains(rel)) mismatched.push_back(rel);
  const bool same = mismatched.empty();
  out << json{{"reproduced", same}, {"outputs", m.at("outputs").size()}, {"mismatched", mismatched}}.dump() << "\n";
  return same ? kExitOk : kExitData;
}

}  // namespace detail

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  ScopedWarningSink sink([&err](std::string_view code, std::string_view message) {
    detail::log(err, "warning", code, {{"message", message}});
  });
  if (!args.empty() && (args[0] == "--replay" || args[0].rfind("--replay=", 0) == 0))
    return detail::replay(args, out, err);

  Options o;
  CLI::App app{"Dynamic problem lists from clinical notes", "problist"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"synth", "Generate a synthetic corpus with planted problems"},
      {"ingest", "Build the cohort and report exclusions"},
      {"vocab", "Build the fold vocabulary"},
      {"embed", "Pretrain CBOW embeddings on the fold's non-test notes"},
      {"labels", "Select the label space on the training split"},
      {"train", "Train and evaluate a model (all folds with --cv)"},
      {"eval", "Evaluate a checkpoint on its test split"},
      {"explain", "Render problem lists for test stays"},
      {"oracle", "Fit the logistic-regression oracle on problem labels"},
      {"fps", "Export the most confident false-positive problems"},
      {"report", "Summarize cross-validation runs and global risk factors"}};
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    detail::add_common(*sub, o);
    subs[name] = sub;
  }
  for (const auto* name : {"ingest", "vocab", "embed", "labels", "train", "eval", "explain", "oracle", "fps"})
    detail::add_data_opts(*subs[name], o);
  for (const auto* name : {"vocab", "embed", "labels", "train", "oracle"}) detail::add_run_opts(*subs[name], o);
  subs["train"]->add_flag("--cv", o.cv, "Run every fold and aggregate");
  subs["oracle"]->add_flag("--cv", o.cv, "Run every fold and aggregate");
  subs["oracle"]->add_option("--truth", o.truth, "Generator truth sidecar; use its noise-free labels");
  for (const auto* name : {"eval", "explain", "fps"})
    subs[name]->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  subs["explain"]->add_option("--stay", o.stays, "Test stay to explain (repeatable)");
  subs["explain"]->add_option("--limit", o.limit, "Stays to explain when --stay is absent")->capture_default_str();
  subs["fps"]->add_option("--truth", o.truth, "Generator truth sidecar (default: <data>/truth.jsonl)");
  subs["report"]->add_option("--runs", o.runs, "Output directory of train --cv")->required();
  auto* s = subs["synth"];
  s->add_option("--spec", o.spec, "Generator spec JSON");
  s->add_option("--seed", o.seed);
  s->add_option("--patients", o.patients, "Number of patients (one stay each)");
  s->add_option("--label-noise", o.label_noise, "Fraction of positive problem codes dropped");
  s->add_option("--outcome", o.outcome, "Outcome the rule is realized as");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, err, err);
    return kExitUsage;
  }
  for (auto& [name, sub] : subs)
    if (sub->parsed()) {
      o.command = name;
      detail::record_given(*sub, o);
    }
  if (o.data.empty())
    if (const char* env = std::getenv(kDataEnv)) o.data = env;

  const auto t0 = std::chrono::steady_clock::now();
  try {
    Artifacts a(o.out);
    int rc = kExitOk;
    const auto& c = o.command;
    if (c == "synth") rc = cmd_synth(o, a, out);
    else if (c == "ingest") rc = cmd_ingest(o, a, out);
    else if (c == "vocab") rc = cmd_vocab(o, a, out);
    else if (c == "embed") rc = cmd_embed(o, a, out);
    else if (c == "labels") rc = cmd_labels(o, a, out);
    else if (c == "train") rc = cmd_train(o, a, out, err, false);
    else if (c == "oracle") rc = cmd_train(o, a, out, err, true);
    else if (c == "eval") rc = cmd_eval(o, a, out);
    else if (c == "explain") rc = cmd_explain(o, a, out);
    else if (c == "fps") rc = cmd_fps(o, a, out);
    else if (c == "report") rc = cmd_report(o, a, out);
    const json manifest = {{"tool", "problist"},
                           {"manifest_version", 1},
                           {"command", c},
                           {"argv", detail::canonical_args(args, o)},
                           {"config", a.config},
                           {"seeds", a.seeds},
                           {"inputs", a.inputs()},
                           {"outputs", a.outputs()}};
    fs::create_directories(a.out());
    corpus::write_file((a.out() / kManifestName).string(), manifest.dump(1) + "\n");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::log(err, "info", "done", {{"command", c}, {"seconds", secs}, {"outputs", a.outputs().size()}});
    return rc;
  } catch (const ConfigError& e) {
    detail::log(err, "error", "usage", {{"message", e.what()}});
    return kExitUsage;
  } catch (const std::exception& e) {
    detail::log(err, "error", "data", {{"message", e.what()}});
    return kExitData;
  }
}

inline int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}

}  // namespace problist::cli
