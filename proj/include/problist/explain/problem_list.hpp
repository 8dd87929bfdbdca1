#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/explain/spans.hpp"
#include "problist/labels.hpp"
#include "problist/model/checkpoint.hpp"
#include "problist/model/network.hpp"
#include "problist/train/trainer.hpp"

namespace problist::explain {

inline constexpr std::size_t kProblemListSize = 14;

/// w / max|w|. An all-zero vector comes back unchanged, with a warning.
inline std::vector<double> scale_weights(std::span<const double> w) {
  double m = 0.0;
  for (double v : w) m = std::max(m, std::abs(v));
  std::vector<double> out(w.begin(), w.end());
  if (m == 0.0) {
    warn("zero_weights", "scale_weights: every outcome weight is zero");
    return out;
  }
  for (double& v : out) v /= m;
  return out;
}

struct ProblemListEntry {
  std::size_t label = 0;
  std::string code;
  std::string name;
  double probability = 0.0;
  double scaled_weight = 0.0;
  std::vector<Span> spans;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& sp : spans) s.push_back(sp.to_json());
    return {{"label", label}, {"code", code}, {"name", name}, {"probability", probability},
            {"scaled_weight", scaled_weight}, {"spans", std::move(s)}};
  }
};

/// Label indices ordered by descending probability, ties by lower index.
inline std::vector<std::size_t> rank_problems(std::span<const double> probabilities) {
  std::vector<std::size_t> idx(probabilities.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  return idx;
}

/// The k strongest extracted problems of one stay with their scaled outcome
/// weights and top attended spans. k larger than L is clamped with a warning.
inline std::vector<ProblemListEntry> build_problem_list(const model::PredictionBundle& bundle,
                                                        const corpus::Narrative& narrative,
                                                        const labels::LabelSpace& space,
                                                        std::span<const double> outcome_weights,
                                                        std::size_t k = kProblemListSize,
                                                        std::size_t spans_per_problem = 2) {
  const std::size_t L = bundle.problem_probabilities.size();
  if (space.size() != L || outcome_weights.size() != L)
    throw std::invalid_argument("build_problem_list: label space, weights and bundle disagree on L");
  if (narrative.stay_id() != bundle.stay_id || narrative.size() != bundle.narrative_length)
    throw std::invalid_argument("build_problem_list: narrative does not belong to the bundle");
  if (k > L) {
    warn("problem_list_clamped", "requested " + std::to_string(k) + " problems but L = " + std::to_string(L));
    k = L;
  }
  const auto scaled = scale_weights(outcome_weights);
  const auto order = rank_problems(bundle.problem_probabilities);
  std::vector<ProblemListEntry> out;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t l = order[r];
    ProblemListEntry e;
    e.label = l;
    e.code = space.code(l).code;
    e.name = space.code(l).label();
    e.probability = bundle.problem_probabilities[l];
    e.scaled_weight = scaled[l];
    e.spans = top_spans(bundle.attention_full(l), narrative, spans_per_problem);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global risk factors

struct RiskFactor {
  std::size_t label = 0;
  std::string code;
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_fold;
};

/// Mean and sample std of each problem's raw outcome weight across fold
/// checkpoints, sorted by mean descending (ties by label index).
inline std::vector<RiskFactor> global_risk_factors(std::span<const model::Checkpoint> folds,
                                                   const labels::LabelSpace& space) {
  if (folds.size() < 2) throw ConfigError("global_risk_factors: need at least two fold checkpoints");
  const auto hash = space.hash();
  for (const auto& ck : folds)
    if (ck.label_space_hash != hash)
      throw DataError("global_risk_factors: fold checkpoints were trained on different label spaces");
  std::vector<RiskFactor> out;
  for (std::size_t l = 0; l < space.size(); ++l) {
    RiskFactor r;
    r.label = l;
    r.code = space.code(l).code;
    r.name = space.code(l).label();
    for (const auto& ck : folds) r.per_fold.push_back(ck.params["outcome.w"](0, l));
    const auto agg = metrics::aggregate(r.per_fold);
    r.mean = agg.mean;
    r.std = agg.std;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const RiskFactor& a, const RiskFactor& b) { return a.mean > b.mean; });
  return out;
}

// ---------------------------------------------------------------------------
// False-positive export

struct FalsePositive {
  StayId stay_id = 0;
  PatientId patient_id = 0;
  std::size_t label = 0;
  std::string code;
  std::string name;
  double score = 0.0;
  std::vector<Span> spans;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& sp : spans) s.push_back(sp.to_json());
    return {{"stay_id", stay_id}, {"patient_id", patient_id}, {"label", label}, {"code", code},
            {"name", name},       {"score", score},           {"spans", std::move(s)}};
  }
};

/// The k most confident false positives: (stay, problem) pairs labelled 0
/// whose predicted probability is at least `threshold`, by descending score
/// (ties by stay order, then label index). `bundles[i]` must belong to
/// `examples[i]`.
inline std::vector<FalsePositive> export_false_positives(std::span<const model::PredictionBundle> bundles,
                                                         std::span<const train::Example> examples,
                                                         const labels::LabelSpace& space,
                                                         std::size_t k = 50, double threshold = 0.5,
                                                         std::size_t spans_per_problem = 2) {
  if (bundles.size() != examples.size())
    throw std::invalid_argument("export_false_positives: one bundle per example required");
  struct Candidate {
    std::size_t ex, label;
    double score;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < examples.size(); ++i)
    for (std::size_t l = 0; l < examples[i].problems.size(); ++l)
      if (!examples[i].problems[l] && bundles[i].problem_probabilities[l] >= threshold)
        cands.push_back({i, l, bundles[i].problem_probabilities[l]});
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (cands.size() > k) cands.resize(k);
  std::vector<FalsePositive> out;
  for (const auto& c : cands) {
    const auto& ex = examples[c.ex];
    FalsePositive fp;
    fp.stay_id = ex.stay_id;
    fp.patient_id = ex.patient_id;
    fp.label = c.label;
    fp.code = space.code(c.label).code;
    fp.name = space.code(c.label).label();
    fp.score = c.score;
    fp.spans = top_spans(bundles[c.ex].attention_full(c.label), ex.narrative, spans_per_problem);
    out.push_back(std::move(fp));
  }
  return out;
}

inline std::string false_positives_to_jsonl(std::span<const FalsePositive> fps) {
  std::string out;
  for (const auto& f : fps) out += f.to_json().dump() + "\n";
  return out;
}

}  // namespace problist::explain
