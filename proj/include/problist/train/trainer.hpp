#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/narrative.hpp"
#include "problist/metrics.hpp"
#include "problist/model/network.hpp"
#include "problist/numerics/adam.hpp"
#include "problist/train/losses.hpp"

namespace problist::train {

using model::Mode;
using model::Network;
using numerics::ParamSet;

/// One stay ready for the network.
struct Example {
  PatientId patient_id = 0;
  StayId stay_id = 0;
  corpus::Narrative narrative;
  std::vector<std::uint8_t> problems;  // y over the label space
  bool outcome = false;
};

/// What a training run optimizes. `joint` is the gated multi-task objective;
/// `extraction_only` trains on L_p alone and selects by val_p (the first
/// stage of the frozen ablation).
enum class Stage { joint, extraction_only };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t micro_batch = 0;  // 0: accumulate the whole batch at once
  double rate = 0.001;
  int max_epochs = 100;
  int patience = 10;
  double threshold_p = 0.90;
  std::uint64_t seed = 1;
  Stage stage = Stage::joint;

  void validate() const {
    if (batch_size == 0 || max_epochs <= 0 || patience <= 0 || rate <= 0)
      throw ConfigError("train config: batch_size, max_epochs, patience and rate must be positive");
    if (micro_batch > batch_size) throw ConfigError("train config: micro_batch exceeds batch_size");
    if (!(threshold_p >= 0.0) || threshold_p > 1.01)
      throw ConfigError("train config: threshold_p must lie in [0, 1.01]");
  }
};

struct EpochReport {
  int epoch = 0;
  double loss_p = 0.0;  // mean over training instances
  double loss_o = 0.0;
  std::optional<double> val_p;          // validation extraction micro AU-ROC
  std::optional<double> val_outcome;    // validation outcome AU-ROC
  bool gate_open = false;               // val_p >= threshold after this epoch
  bool outcome_trained = false;         // the gate was open while this epoch ran

  [[nodiscard]] nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    return {{"epoch", epoch},           {"loss_p", loss_p},
            {"loss_o", loss_o},         {"val_p", opt(val_p)},
            {"val_outcome_auroc", opt(val_outcome)}, {"gate_open", gate_open},
            {"outcome_trained", outcome_trained}};
  }
};

struct TrainResult {
  ParamSet params;  // selected checkpoint
  std::vector<EpochReport> epochs;
  int best_epoch = 0;  // 0: initialization
  bool diverged = false;
  std::string stop_reason;
};

struct Evaluation {
  std::optional<metrics::MicroMacro> extraction;  // dynpl only
  std::optional<double> outcome_auroc;
  std::optional<double> outcome_aupr;
  std::vector<model::PredictionBundle> bundles;  // filled on request
  std::vector<double> outcome_probabilities;
};

/// Eval-mode predictions and metrics over a set of examples.
inline Evaluation evaluate(const Network& net, std::span<const Example> examples, bool keep_bundles = false) {
  Evaluation ev;
  const bool dyn = net.config().arch == model::Architecture::dynpl;
  const std::size_t labels = dyn ? net.config().num_labels : 0;
  std::vector<metrics::ScoredSet> per_label(labels);
  metrics::ScoredSet outcome;
  for (const auto& ex : examples) {
    auto b = net.forward(ex.narrative, Mode::eval);
    for (std::size_t l = 0; l < labels; ++l) per_label[l].add(b.problem_probabilities[l], ex.problems[l] != 0);
    outcome.add(b.outcome_probability, ex.outcome);
    ev.outcome_probabilities.push_back(b.outcome_probability);
    if (keep_bundles) ev.bundles.push_back(std::move(b));
  }
  if (dyn && !examples.empty()) {
    try {
      ev.extraction = metrics::micro_macro(per_label);
    } catch (const std::invalid_argument&) {
      ev.extraction.reset();
    }
  }
  ev.outcome_auroc = metrics::au_roc(outcome);
  ev.outcome_aupr = metrics::au_pr(outcome);
  return ev;
}

using EpochCallback = std::function<void(const EpochReport&)>;

/// Gated multi-task training with Adam, effective batch `batch_size` by
/// gradient accumulation, and early stopping.
///
/// The gate for epoch e uses val_p from epoch e-1 (0 before the first
/// validation). While it is closed the outcome groups receive no gradient and
/// no optimizer step. Model selection is by validation outcome AU-ROC among
/// epochs whose gate is open after validation; patience counts epochs since
/// the best such epoch. If the gate never opens the last epoch is returned.
/// The convolutional baselines have no problem heads and train on L_o from
/// the start.
inline TrainResult train_model(Network net, std::span<const Example> train_set,
                               std::span<const Example> val_set, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training split");
  const bool dyn = net.config().arch == model::Architecture::dynpl;
  const bool extraction_only = cfg.stage == Stage::extraction_only;
  if (extraction_only && !dyn) throw ConfigError("train: extraction-only stage needs the dynpl model");
  const auto outcome_names = model::outcome_groups();
  auto is_outcome_group = [&](const std::string& g) {
    return std::find(outcome_names.begin(), outcome_names.end(), g) != outcome_names.end();
  };

  numerics::AdamState adam(net.params(), numerics::AdamConfig{cfg.rate});
  ParamSet grad = net.params().zeros_like();
  ParamSet micro = grad;
  const std::size_t micro_size = cfg.micro_batch == 0 ? cfg.batch_size : cfg.micro_batch;

  TrainResult res;
  res.params = net.params();
  ParamSet last_good = net.params();
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  bool have_candidate = false;
  double prev_val_p = 0.0;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochReport rep;
    rep.epoch = epoch;
    const bool outcome_on = !extraction_only && (!dyn || gate_open(prev_val_p, cfg.threshold_p));
    rep.outcome_trained = outcome_on;
    const model::Objective objective{dyn, outcome_on};
    auto update_group = [&](const std::string& g) {
      if (!outcome_on && is_outcome_group(g)) return false;
      if (!net.config().train_embeddings && g == "embedding") return false;
      return true;
    };

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0x5f));
    shuffle_rng.shuffle(order);

    double sum_p = 0.0, sum_o = 0.0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const double scale = 1.0 / static_cast<double>(count);
      grad.set_zero();
      for (std::size_t m = 0; m < count; m += micro_size) {
        const std::size_t end = std::min(count, m + micro_size);
        ParamSet& target = micro_size == cfg.batch_size ? grad : micro;
        if (&target == &micro) micro.set_zero();
        for (std::size_t j = m; j < end; ++j) {
          const std::size_t idx = order[start + j];
          const auto& ex = train_set[idx];
          auto parts = net.accumulate_gradient(
              ex.narrative, model::Target{ex.problems, ex.outcome}, objective, Mode::train,
              mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), idx), target, scale);
          sum_p += parts.problem;
          sum_o += parts.outcome;
        }
        if (&target == &micro) grad.add_scaled(micro, 1.0);
      }
      if (!std::isfinite(sum_p) || !std::isfinite(sum_o)) {
        finite = false;
        break;
      }
      try {
        numerics::adam_step(net.params(), grad, adam, update_group);
      } catch (const std::runtime_error& e) {
        warn("divergence", e.what());
        finite = false;
      }
    }
    const double n = static_cast<double>(order.size());
    rep.loss_p = dyn ? sum_p / n : 0.0;
    rep.loss_o = sum_o / n;
    if (!finite || !net.params().all_finite()) {
      res.diverged = true;
      res.stop_reason = "non-finite loss in epoch " + std::to_string(epoch);
      if (!have_candidate) res.params = last_good;
      res.epochs.push_back(rep);
      if (on_epoch) on_epoch(rep);
      return res;
    }
    last_good = net.params();

    const auto ev = evaluate(net, val_set);
    if (ev.extraction && ev.extraction->micro_roc) rep.val_p = *ev.extraction->micro_roc;
    rep.val_outcome = ev.outcome_auroc;
    rep.gate_open = dyn ? gate_open(rep.val_p.value_or(0.0), cfg.threshold_p) : true;
    prev_val_p = rep.val_p.value_or(0.0);

    const std::optional<double> score = extraction_only ? rep.val_p : rep.val_outcome;
    const bool eligible = extraction_only || rep.gate_open;
    if (eligible && score && *score > best) {
      best = *score;
      have_candidate = true;
      res.params = net.params();
      res.best_epoch = epoch;
      since_best = 0;
    } else if (have_candidate) {
      ++since_best;
    }
    res.epochs.push_back(rep);
    if (on_epoch) on_epoch(rep);
    if (have_candidate && since_best >= cfg.patience) {
      res.stop_reason = "patience exhausted at epoch " + std::to_string(epoch);
      return res;
    }
  }
  if (!have_candidate) {
    res.params = net.params();
    res.best_epoch = cfg.max_epochs;
    res.stop_reason = "gate never opened; returning the last epoch";
    warn("gate_never_opened", "no epoch reached the extraction threshold; using the last epoch");
  } else {
    res.stop_reason = "max_epochs reached";
  }
  return res;
}

/// Second stage of the frozen ablation: only outcome.w and outcome.b are
/// trained, on the extractor's eval-mode scores, which stay fixed because
/// every extractor parameter is frozen. Returns the full parameter set with
/// the selected outcome head.
inline TrainResult train_frozen_head(const Network& extractor, std::span<const Example> train_set,
                                     std::span<const Example> val_set, const TrainConfig& cfg,
                                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (extractor.config().arch != model::Architecture::dynpl)
    throw ConfigError("train_frozen: the extractor must be a dynpl model");
  if (train_set.empty()) throw DataError("train: empty training split");
  auto scores_of = [&](std::span<const Example> set) {
    std::vector<std::vector<double>> s;
    s.reserve(set.size());
    for (const auto& ex : set) s.push_back(extractor.forward(ex.narrative, Mode::eval).problem_scores);
    return s;
  };
  const auto train_s = scores_of(train_set);
  const auto val_s = scores_of(val_set);

  ParamSet head;
  head.add("outcome.w", extractor.params()["outcome.w"]);
  head.add("outcome.b", extractor.params()["outcome.b"]);
  numerics::AdamState adam(head, numerics::AdamConfig{cfg.rate});
  ParamSet grad = head.zeros_like();
  auto predict = [&](const std::vector<double>& s) {
    return numerics::sigmoid(model::outcome_logit(s, head["outcome.w"].row(0), head["outcome.b"](0, 0)));
  };

  TrainResult res;
  ParamSet best_head = head;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochReport rep;
    rep.epoch = epoch;
    rep.outcome_trained = true;
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xf2));
    shuffle_rng.shuffle(order);
    double sum_o = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      grad.set_zero();
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t idx = order[start + j];
        const auto& s = train_s[idx];
        const double z = model::outcome_logit(s, head["outcome.w"].row(0), head["outcome.b"](0, 0));
        const double y = train_set[idx].outcome ? 1.0 : 0.0;
        sum_o += numerics::bce_with_logits(z, y);
        const double g = (numerics::sigmoid(z) - y) / static_cast<double>(count);
        numerics::axpy(g, s, grad["outcome.w"].row(0));
        grad["outcome.b"](0, 0) += g;
      }
      numerics::adam_step(head, grad, adam);
    }
    rep.loss_o = sum_o / static_cast<double>(order.size());
    metrics::ScoredSet val;
    for (std::size_t i = 0; i < val_set.size(); ++i) val.add(predict(val_s[i]), val_set[i].outcome);
    rep.val_outcome = metrics::au_roc(val);
    rep.gate_open = true;
    if (rep.val_outcome && *rep.val_outcome > best) {
      best = *rep.val_outcome;
      best_head = head;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.epochs.push_back(rep);
    if (on_epoch) on_epoch(rep);
    if (since_best >= cfg.patience) break;
  }
  res.params = extractor.params();
  res.params["outcome.w"] = best_head["outcome.w"];
  res.params["outcome.b"] = best_head["outcome.b"];
  res.stop_reason = "frozen head trained";
  return res;
}

}  // namespace problist::train
