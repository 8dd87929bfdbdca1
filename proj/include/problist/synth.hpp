#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/csv.hpp"
#include "problist/corpus/tables.hpp"
#include "problist/labels.hpp"
#include "problist/numerics/ops.hpp"

namespace problist::synth {

/// Parameters of a synthetic corpus. Every cohort stay belongs to its own
/// patient; outcome events are realized through extra stays or death times
/// that the cohort rules turn back into the intended label.
struct GenSpec {
  std::uint64_t seed = 1;
  std::size_t n_patients = 2000;
  std::size_t vocab_size = 500;  // pseudo-words: filler plus reserved trigger words
  std::size_t num_problems = 50;
  double procedure_fraction = 0.3;
  double prevalence_min = 0.05;
  double prevalence_max = 0.15;
  double emission = 0.6;  // per-note chance a positive problem's trigger is written
  double distractor = 0.05;  // chance a negative stay shows the first word of a multi-word trigger
  int notes_min = 3;
  int notes_max = 6;
  int note_tokens_min = 8;
  int note_tokens_max = 16;

  // Outcome rule: P(y_o) = sigmoid(steepness * (sum_l w_l z_l + severity_weight * sev) + bias),
  // with bias solved so that the expected rate equals target_rate.
  std::size_t risk_problems = 4;
  double risk_prevalence = 0.05;
  double risk_weight = 8.0;  // weights decrease linearly from this to 0.7x across risk problems
  double steepness = 1.0;
  double target_rate = 0.10;
  double severity_rate = 0.0;  // stays carrying a risk pattern unrelated to any problem
  double severity_weight = 0.0;
  corpus::Outcome outcome = corpus::Outcome::readmit30;

  double label_noise = 0.0;   // fraction of positive problem codes dropped from codes.csv
  std::size_t rare_codes = 5;  // diagnosis codes too rare to survive the 50-count filter
  std::size_t minor_patients = 0;  // extra stays of patients under 18 (excluded by the cohort)

  void validate() const {
    if (n_patients == 0 || num_problems == 0) throw ConfigError("synth: n_patients and num_problems must be positive");
    if (notes_min < 3 || notes_max < notes_min) throw ConfigError("synth: need 3 <= notes_min <= notes_max");
    if (note_tokens_min < 1 || note_tokens_max < note_tokens_min)
      throw ConfigError("synth: invalid note length range");
    if (!(prevalence_min > 0 && prevalence_max >= prevalence_min && prevalence_max < 1))
      throw ConfigError("synth: prevalences must lie in (0, 1)");
    if (risk_problems > num_problems || risk_problems > 16)
      throw ConfigError("synth: risk_problems must be at most min(num_problems, 16)");
    if (!(target_rate > 0 && target_rate < 1)) throw ConfigError("synth: target_rate must lie in (0, 1)");
    if (label_noise < 0 || label_noise >= 1) throw ConfigError("synth: label_noise must lie in [0, 1)");
    // Three reserved words per problem at most, two for the severity
    // pattern; at least half the vocabulary stays filler.
    if (3 * num_problems + 2 > vocab_size / 2)
      throw ConfigError("synth: " + std::to_string(num_problems) + " problems do not fit a vocabulary of " +
                        std::to_string(vocab_size) + " words");
  }
};

struct ProblemTruth {
  std::size_t index = 0;
  std::vector<std::string> trigger;
  corpus::CodeKind kind = corpus::CodeKind::diagnosis;
  std::string rolled_code;
  std::vector<std::string> full_codes;
  std::string phecode_root;  // diagnosis problems only; full phecodes are root.1, root.2
  std::string name;
  double prevalence = 0.0;
  double weight = 0.0;
};

struct StayTruth {
  PatientId patient_id = 0;
  StayId stay_id = 0;
  std::vector<std::size_t> problems;  // true indicators z
  std::vector<std::size_t> flipped;   // positives whose code was removed
  bool severity = false;
  double outcome_probability = 0.0;
  bool outcome = false;
};

struct GroundTruth {
  GenSpec spec;
  std::vector<ProblemTruth> problems;
  std::vector<std::string> severity_pattern;
  double bias = 0.0;
  double expected_rate = 0.0;
  std::vector<StayTruth> stays;

  [[nodiscard]] const StayTruth* stay(StayId id) const {
    for (const auto& s : stays)
      if (s.stay_id == id) return &s;
    return nullptr;
  }
};

struct SynthCorpus {
  corpus::RawTables tables;
  labels::PhecodeMap phecodes;
  GroundTruth truth;
};

namespace detail {

inline std::vector<std::string> pseudo_words(std::size_t n, Rng& rng) {
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  const std::size_t nc = 14, nv = 5, syl = nc * nv;
  std::vector<std::size_t> ids(syl * syl * syl);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  rng.shuffle(ids);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = ids[i];
    std::string w;
    for (int s = 0; s < 3; ++s) {
      const std::size_t k = v % syl;
      v /= syl;
      w += consonants[k / nv];
      w += vowels[k % nv];
    }
    out.push_back(std::move(w));
  }
  return out;
}

inline std::string problem_name(std::size_t i, Rng& rng) {
  static const std::vector<std::string> a = {"acute", "chronic", "recurrent", "severe", "mild", "secondary"};
  static const std::vector<std::string> b = {"renal", "hepatic", "cardiac", "pulmonary", "gastric", "neural",
                                             "vascular", "metabolic", "septic", "endocrine"};
  static const std::vector<std::string> c = {"failure", "insufficiency", "disorder", "syndrome", "infection",
                                             "injury", "obstruction"};
  return a[rng.below(a.size())] + " " + b[rng.below(b.size())] + " " + c[rng.below(c.size())] + " " +
         std::to_string(i + 1);
}

/// P(outcome) for a given risk-problem and severity assignment.
inline double rule_probability(const GroundTruth& t, const std::vector<std::size_t>& z, bool severity) {
  double s = t.spec.severity_weight * (severity ? 1.0 : 0.0);
  for (std::size_t l : z) s += t.problems[l].weight;
  return numerics::sigmoid(t.spec.steepness * s + t.bias);
}

}  // namespace detail

/// Closed-form expected outcome rate: the rule only involves the risk
/// problems and the severity flag, all independent, so the expectation is a
/// finite sum over their joint assignments.
inline double expected_outcome_rate(const GroundTruth& t, double bias) {
  std::vector<std::size_t> risk;
  for (const auto& p : t.problems)
    if (p.weight != 0.0) risk.push_back(p.index);
  const std::size_t k = risk.size();
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << (k + 1)); ++mask) {
    double pr = 1.0, s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const bool on = (mask >> j) & 1u;
      const auto& p = t.problems[risk[j]];
      pr *= on ? p.prevalence : 1.0 - p.prevalence;
      if (on) s += p.weight;
    }
    const bool sev = (mask >> k) & 1u;
    pr *= sev ? t.spec.severity_rate : 1.0 - t.spec.severity_rate;
    if (sev) s += t.spec.severity_weight;
    if (pr == 0.0) continue;
    total += pr * numerics::sigmoid(t.spec.steepness * s + bias);
  }
  return total;
}

inline SynthCorpus generate(const GenSpec& spec) {
  spec.validate();
  using corpus::CodeKind;
  Rng rng(mix_seed(spec.seed, 0x5e7));
  SynthCorpus out;
  GroundTruth& truth = out.truth;
  truth.spec = spec;

  // Words: triggers and the severity pattern are reserved; filler never uses them.
  auto words = detail::pseudo_words(spec.vocab_size, rng);
  std::size_t next_word = 0;
  auto take_word = [&] { return words[next_word++]; };

  std::vector<int> diag_pool, proc_pool, phe_pool;
  for (int c = 100; c < 1000; ++c) {
    diag_pool.push_back(c);
    proc_pool.push_back(c);
    phe_pool.push_back(c);
  }
  rng.shuffle(diag_pool);
  rng.shuffle(proc_pool);
  rng.shuffle(phe_pool);
  std::size_t next_diag = 0, next_proc = 0, next_phe = 0;

  std::vector<std::size_t> risk_idx(spec.num_problems);
  for (std::size_t i = 0; i < risk_idx.size(); ++i) risk_idx[i] = i;
  rng.shuffle(risk_idx);
  risk_idx.resize(spec.risk_problems);

  for (std::size_t l = 0; l < spec.num_problems; ++l) {
    ProblemTruth p;
    p.index = l;
    const auto width = static_cast<std::size_t>(rng.between(1, 3));
    for (std::size_t w = 0; w < width; ++w) p.trigger.push_back(take_word());
    p.kind = rng.bernoulli(spec.procedure_fraction) ? CodeKind::procedure : CodeKind::diagnosis;
    if (p.kind == CodeKind::diagnosis) {
      const int c = diag_pool[next_diag++];
      // A few V codes, as in real discharge coding.
      p.rolled_code = c % 10 == 7 ? "V" + std::to_string(c / 10 % 100) : std::to_string(c);
      p.phecode_root = std::to_string(phe_pool[next_phe++]);
    } else {
      p.rolled_code = std::to_string(proc_pool[next_proc++]);
    }
    const int variants = static_cast<int>(rng.between(1, 2));
    for (int v = 1; v <= variants; ++v) p.full_codes.push_back(p.rolled_code + std::to_string(v));
    p.name = detail::problem_name(l, rng);
    p.prevalence = rng.uniform(spec.prevalence_min, spec.prevalence_max);
    truth.problems.push_back(std::move(p));
  }
  for (std::size_t j = 0; j < risk_idx.size(); ++j) {
    auto& p = truth.problems[risk_idx[j]];
    const double frac = risk_idx.size() > 1 ? static_cast<double>(j) / static_cast<double>(risk_idx.size() - 1) : 0.0;
    p.weight = spec.risk_weight * (1.0 - 0.3 * frac);
    p.prevalence = spec.risk_prevalence;
  }
  truth.severity_pattern = {take_word(), take_word()};
  const std::vector<std::string> filler(words.begin() + static_cast<std::ptrdiff_t>(next_word), words.end());

  // Bias such that the expected outcome rate hits the target (monotone in bias).
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_outcome_rate(truth, mid) < spec.target_rate ? lo : hi) = mid;
  }
  truth.bias = 0.5 * (lo + hi);
  truth.expected_rate = expected_outcome_rate(truth, truth.bias);

  for (const auto& p : truth.problems) {
    if (p.kind != CodeKind::diagnosis) continue;
    for (std::size_t v = 0; v < p.full_codes.size(); ++v)
      out.phecodes.add(p.full_codes[v], p.phecode_root + "." + std::to_string(v + 1), p.name);
  }
  std::vector<std::string> rare;
  for (std::size_t r = 0; r < spec.rare_codes; ++r) rare.push_back(std::to_string(diag_pool[next_diag++]) + "0");

  const Timestamp base = *parse_timestamp("2150-01-01");
  const std::int64_t hour = 3600, day = kSecondsPerDay;
  auto& T = out.tables;
  std::int64_t next_adm = 200000, next_stay = 300000;

  auto note_text = [&](const std::vector<std::vector<std::string>>& inserts) {
    const auto n = static_cast<std::size_t>(rng.between(spec.note_tokens_min, spec.note_tokens_max));
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform();
      if (u < 0.04)
        toks.push_back(std::to_string(rng.between(1, 250)));
      else if (u < 0.06)
        toks.push_back("[**Hospital" + std::to_string(rng.between(1, 9)) + "**]");
      else if (u < 0.10 && !toks.empty())
        toks.back() += rng.bernoulli(0.5) ? "." : ",";
      else
        toks.push_back(filler[rng.below(filler.size())]);
    }
    for (const auto& ins : inserts) {
      const auto at = static_cast<std::size_t>(rng.below(toks.size() + 1));
      toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(at), ins.begin(), ins.end());
    }
    if (!toks.empty() && rng.bernoulli(0.5)) toks.front()[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(toks.front()[0])));
    std::string text;
    for (const auto& t : toks) text += (text.empty() ? "" : " ") + t;
    return text;
  };

  // Rare codes go to random stays, each well below the 50-count filter.
  std::vector<std::vector<std::string>> rare_for(spec.n_patients);
  for (const auto& code : rare) {
    const auto count = static_cast<std::size_t>(rng.between(5, 30));
    for (std::size_t c = 0; c < count; ++c) rare_for[rng.below(spec.n_patients)].push_back(code);
  }

  for (std::size_t pi = 0; pi < spec.n_patients; ++pi) {
    const PatientId pid = 10000 + static_cast<PatientId>(pi);
    StayTruth st;
    st.patient_id = pid;
    for (const auto& p : truth.problems)
      if (rng.bernoulli(p.prevalence)) st.problems.push_back(p.index);
    st.severity = rng.bernoulli(spec.severity_rate);
    st.outcome_probability = detail::rule_probability(truth, st.problems, st.severity);
    st.outcome = rng.bernoulli(st.outcome_probability);

    corpus::StayRow s;
    s.patient_id = pid;
    s.stay_id = next_stay++;
    s.admission_id = next_adm++;
    st.stay_id = s.stay_id;
    s.age_years = static_cast<double>(rng.between(1800, 9000)) / 100.0;
    const Timestamp admit = base + rng.between(0, 3000) * day + rng.between(0, 23) * hour;
    s.hosp_admit = admit;
    s.icu_in = admit + rng.between(2, 36) * hour;
    s.icu_out = *s.icu_in + rng.between(1, 6) * day + rng.between(0, 23) * hour;
    s.hosp_disch = *s.icu_out + rng.between(1, 5) * day;
    const Timestamp cutoff = *s.icu_out;

    // Notes: all charted between admission and ICU discharge.
    const auto n_notes = static_cast<std::size_t>(rng.between(spec.notes_min, spec.notes_max));
    std::vector<std::vector<std::vector<std::string>>> inserts(n_notes);
    for (std::size_t l : st.problems) {
      const auto& trig = truth.problems[l].trigger;
      bool any = false;
      for (auto& ins : inserts)
        if (rng.bernoulli(spec.emission)) {
          ins.push_back(trig);
          any = true;
        }
      if (!any) inserts[rng.below(n_notes)].push_back(trig);
    }
    for (const auto& p : truth.problems) {
      if (p.trigger.size() < 2 || std::count(st.problems.begin(), st.problems.end(), p.index)) continue;
      if (rng.bernoulli(spec.distractor)) inserts[rng.below(n_notes)].push_back({p.trigger.front()});
    }
    if (st.severity) {
      bool any = false;
      for (auto& ins : inserts)
        if (rng.bernoulli(spec.emission)) {
          ins.push_back(truth.severity_pattern);
          any = true;
        }
      if (!any) inserts[rng.below(n_notes)].push_back(truth.severity_pattern);
    }
    const std::int64_t span = cutoff.seconds - admit.seconds;
    std::vector<std::int64_t> times;
    for (std::size_t k = 0; k < n_notes; ++k) times.push_back(rng.between(60, span));
    std::sort(times.begin(), times.end());
    for (std::size_t k = 0; k < n_notes; ++k)
      T.notes.push_back({pid, s.admission_id, Timestamp{admit.seconds + times[k]}, note_text(inserts[k])});
    // A discharge note after the cutoff, which must never reach the narrative.
    if (rng.bernoulli(0.5))
      T.notes.push_back({pid, s.admission_id, cutoff + rng.between(1, 20) * hour, note_text({})});

    for (std::size_t l : st.problems) {
      const auto& p = truth.problems[l];
      if (rng.bernoulli(spec.label_noise)) {
        st.flipped.push_back(l);
        continue;
      }
      T.codes.push_back({s.admission_id, p.full_codes[rng.below(p.full_codes.size())], p.kind});
    }
    for (const auto& code : rare_for[pi]) T.codes.push_back({s.admission_id, code, CodeKind::diagnosis});

    // Outcome realization through timestamps.
    std::vector<corpus::StayRow> extra;
    auto later_admission = [&](std::int64_t days_after_disch) {
      corpus::StayRow r;
      r.patient_id = pid;
      r.stay_id = next_stay++;
      r.admission_id = next_adm++;
      r.age_years = s.age_years;
      r.hosp_admit = *s.hosp_disch + days_after_disch * day;
      r.icu_in = *r.hosp_admit + 12 * hour;
      r.icu_out = *r.icu_in + 2 * day;
      r.hosp_disch = *r.icu_out + 2 * day;
      return r;
    };
    switch (spec.outcome) {
      case corpus::Outcome::readmit30:
        if (st.outcome)
          extra.push_back(later_admission(rng.between(1, 20)));
        else if (rng.bernoulli(0.2))
          extra.push_back(later_admission(rng.between(40, 200)));
        break;
      case corpus::Outcome::bounceback:
        if (st.outcome) {
          // Second ICU stay in the same admission; its discharge time is
          // missing, so it is excluded from the cohort itself.
          corpus::StayRow r;
          r.patient_id = pid;
          r.stay_id = next_stay++;
          r.admission_id = s.admission_id;
          r.age_years = s.age_years;
          r.hosp_admit = s.hosp_admit;
          r.hosp_disch = s.hosp_disch;
          r.icu_in = cutoff + 12 * hour;
          extra.push_back(r);
        }
        break;
      case corpus::Outcome::mortality_inhosp:
        if (st.outcome) s.death_time = cutoff + (s.hosp_disch->seconds - cutoff.seconds) / 2;
        break;
      case corpus::Outcome::mortality30:
        if (st.outcome) s.death_time = *s.hosp_disch + rng.between(1, 20) * day;
        break;
    }
    if (s.death_time)
      for (auto& r : extra) r.death_time = s.death_time;
    T.stays.push_back(s);
    for (auto& r : extra) T.stays.push_back(r);
    truth.stays.push_back(std::move(st));
  }

  for (std::size_t m = 0; m < spec.minor_patients; ++m) {
    corpus::StayRow s;
    s.patient_id = 90000 + static_cast<PatientId>(m);
    s.stay_id = next_stay++;
    s.admission_id = next_adm++;
    s.age_years = static_cast<double>(rng.between(200, 1700)) / 100.0;
    s.hosp_admit = base + rng.between(0, 3000) * day;
    s.icu_in = *s.hosp_admit + 6 * hour;
    s.icu_out = *s.icu_in + 2 * day;
    s.hosp_disch = *s.icu_out + 2 * day;
    for (int k = 0; k < 3; ++k) T.notes.push_back({s.patient_id, s.admission_id, *s.icu_in + (k + 1) * hour, note_text({})});
    T.stays.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sidecar and files

inline nlohmann::json to_json(const GenSpec& s) {
  return {{"seed", s.seed},
          {"n_patients", s.n_patients},
          {"vocab_size", s.vocab_size},
          {"num_problems", s.num_problems},
          {"procedure_fraction", s.procedure_fraction},
          {"prevalence_min", s.prevalence_min},
          {"prevalence_max", s.prevalence_max},
          {"emission", s.emission},
          {"distractor", s.distractor},
          {"notes_min", s.notes_min},
          {"notes_max", s.notes_max},
          {"note_tokens_min", s.note_tokens_min},
          {"note_tokens_max", s.note_tokens_max},
          {"risk_problems", s.risk_problems},
          {"risk_prevalence", s.risk_prevalence},
          {"risk_weight", s.risk_weight},
          {"steepness", s.steepness},
          {"target_rate", s.target_rate},
          {"severity_rate", s.severity_rate},
          {"severity_weight", s.severity_weight},
          {"outcome", std::string(corpus::to_string(s.outcome))},
          {"label_noise", s.label_noise},
          {"rare_codes", s.rare_codes},
          {"minor_patients", s.minor_patients}};
}

/// Reads a spec, starting from defaults; unknown keys are rejected.
inline GenSpec gen_spec_from_json(const nlohmann::json& j) {
  GenSpec s;
  const auto known = to_json(s);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("synth spec: unknown key '" + k + "'");
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("seed", s.seed);
  get("n_patients", s.n_patients);
  get("vocab_size", s.vocab_size);
  get("num_problems", s.num_problems);
  get("procedure_fraction", s.procedure_fraction);
  get("prevalence_min", s.prevalence_min);
  get("prevalence_max", s.prevalence_max);
  get("emission", s.emission);
  get("distractor", s.distractor);
  get("notes_min", s.notes_min);
  get("notes_max", s.notes_max);
  get("note_tokens_min", s.note_tokens_min);
  get("note_tokens_max", s.note_tokens_max);
  get("risk_problems", s.risk_problems);
  get("risk_prevalence", s.risk_prevalence);
  get("risk_weight", s.risk_weight);
  get("steepness", s.steepness);
  get("target_rate", s.target_rate);
  get("severity_rate", s.severity_rate);
  get("severity_weight", s.severity_weight);
  get("label_noise", s.label_noise);
  get("rare_codes", s.rare_codes);
  get("minor_patients", s.minor_patients);
  if (j.contains("outcome")) s.outcome = corpus::parse_outcome(j.at("outcome").get<std::string>());
  return s;
}

/// truth.jsonl: one header object describing the rule and the problems, then
/// one object per generated cohort stay.
inline std::string truth_to_jsonl(const GroundTruth& t) {
  nlohmann::json header;
  header["type"] = "rule";
  header["spec"] = to_json(t.spec);
  header["bias"] = t.bias;
  header["expected_rate"] = t.expected_rate;
  header["severity_pattern"] = t.severity_pattern;
  auto& probs = header["problems"] = nlohmann::json::array();
  for (const auto& p : t.problems)
    probs.push_back({{"index", p.index},
                     {"trigger", p.trigger},
                     {"kind", std::string(corpus::to_string(p.kind))},
                     {"rolled_code", p.rolled_code},
                     {"full_codes", p.full_codes},
                     {"phecode", p.phecode_root},
                     {"name", p.name},
                     {"prevalence", p.prevalence},
                     {"weight", p.weight}});
  std::string out = header.dump() + "\n";
  for (const auto& s : t.stays) {
    nlohmann::json j = {{"type", "stay"},
                        {"patient_id", s.patient_id},
                        {"stay_id", s.stay_id},
                        {"problems", s.problems},
                        {"flipped", s.flipped},
                        {"severity", s.severity},
                        {"outcome_probability", s.outcome_probability},
                        {"outcome", s.outcome}};
    out += j.dump() + "\n";
  }
  return out;
}

inline GroundTruth truth_from_jsonl(std::string_view text) {
  GroundTruth t;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "rule") {
      header_seen = true;
      t.spec = gen_spec_from_json(j.at("spec"));
      t.bias = j.at("bias").get<double>();
      t.expected_rate = j.at("expected_rate").get<double>();
      t.severity_pattern = j.at("severity_pattern").get<std::vector<std::string>>();
      for (const auto& p : j.at("problems")) {
        ProblemTruth q;
        q.index = p.at("index").get<std::size_t>();
        q.trigger = p.at("trigger").get<std::vector<std::string>>();
        q.kind = p.at("kind") == "procedure" ? corpus::CodeKind::procedure : corpus::CodeKind::diagnosis;
        q.rolled_code = p.at("rolled_code").get<std::string>();
        q.full_codes = p.at("full_codes").get<std::vector<std::string>>();
        q.phecode_root = p.at("phecode").get<std::string>();
        q.name = p.at("name").get<std::string>();
        q.prevalence = p.at("prevalence").get<double>();
        q.weight = p.at("weight").get<double>();
        t.problems.push_back(std::move(q));
      }
    } else {
      StayTruth s;
      s.patient_id = j.at("patient_id").get<PatientId>();
      s.stay_id = j.at("stay_id").get<StayId>();
      s.problems = j.at("problems").get<std::vector<std::size_t>>();
      s.flipped = j.at("flipped").get<std::vector<std::size_t>>();
      s.severity = j.at("severity").get<bool>();
      s.outcome_probability = j.at("outcome_probability").get<double>();
      s.outcome = j.at("outcome").get<bool>();
      t.stays.push_back(std::move(s));
    }
  }
  if (!header_seen) throw DataError("truth.jsonl: missing rule header");
  return t;
}

/// notes.csv, stays.csv, codes.csv, phecodes.csv and truth.jsonl.
inline void write_corpus(const std::filesystem::path& dir, const SynthCorpus& c) {
  corpus::write_tables(dir, c.tables);
  corpus::write_file((dir / "phecodes.csv").string(), corpus::format_csv(c.phecodes.to_csv()));
  corpus::write_file((dir / "truth.jsonl").string(), truth_to_jsonl(c.truth));
}

/// Label-space index of a planted problem for the given selection, if the
/// problem is represented in it (rolled code or rolled phecode).
inline std::optional<std::size_t> problem_label(const ProblemTruth& p, const labels::LabelSpace& space) {
  using labels::ProblemKind;
  std::optional<int> i;
  if (p.kind == corpus::CodeKind::procedure) {
    i = space.index(ProblemKind::icd_proc, true, p.rolled_code);
  } else {
    i = space.index(ProblemKind::icd_diag, true, p.rolled_code);
    if (!i) i = space.index(ProblemKind::phecode, true, p.phecode_root);
  }
  if (!i) return std::nullopt;
  return static_cast<std::size_t>(*i);
}

}  // namespace problist::synth
