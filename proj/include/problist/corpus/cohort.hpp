#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/tables.hpp"

namespace problist::corpus {

enum class Outcome { bounceback, readmit30, mortality_inhosp, mortality30 };
inline constexpr std::array kAllOutcomes = {Outcome::bounceback, Outcome::readmit30,
                                            Outcome::mortality_inhosp, Outcome::mortality30};

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::bounceback: return "bounceback";
    case Outcome::readmit30: return "readmit30";
    case Outcome::mortality_inhosp: return "mortality_inhosp";
    case Outcome::mortality30: return "mortality30";
  }
  return "?";
}

inline Outcome parse_outcome(std::string_view s) {
  for (auto o : kAllOutcomes)
    if (to_string(o) == s) return o;
  throw ConfigError("unknown outcome '" + std::string(s) +
                    "' (expected bounceback|readmit30|mortality_inhosp|mortality30)");
}

struct Outcomes {
  bool bounceback = false;
  bool readmit30 = false;
  bool mortality_inhosp = false;
  bool mortality30 = false;

  [[nodiscard]] bool get(Outcome o) const {
    switch (o) {
      case Outcome::bounceback: return bounceback;
      case Outcome::readmit30: return readmit30;
      case Outcome::mortality_inhosp: return mortality_inhosp;
      case Outcome::mortality30: return mortality30;
    }
    return false;
  }
  friend bool operator==(const Outcomes&, const Outcomes&) = default;
};

/// One ICU stay that passed every cohort rule.
struct CohortRecord {
  PatientId patient_id = 0;
  StayId stay_id = 0;
  AdmissionId admission_id = 0;
  Timestamp cutoff;                  // ICU discharge
  std::vector<std::size_t> note_refs;  // rows of RawTables::notes, chart order
  Outcomes outcomes;
  std::vector<std::string> diagnosis_codes;  // dotless, per admission
  std::vector<std::string> procedure_codes;
  std::vector<int> labels;  // set indices into the active label space

  friend bool operator==(const CohortRecord&, const CohortRecord&) = default;
};

inline constexpr double kMinAdultAge = 18.0;
inline constexpr std::size_t kMinNotes = 3;
inline constexpr std::int64_t kReadmitWindow = 30 * kSecondsPerDay;

/// Exclusion counts keyed by reason. Reasons are checked in the order
/// malformed_row, minor, missing_icu_times, died_in_icu, too_few_notes and a
/// stay is counted under the first that applies.
struct CohortReport {
  std::size_t stays_seen = 0;
  std::size_t stays_kept = 0;
  std::size_t patients_kept = 0;
  std::map<std::string, std::size_t> excluded;
  std::map<std::string, std::size_t> positives;
  std::vector<std::string> diagnostics;
};

inline std::vector<CohortRecord> build_cohort(const RawTables& tables,
                                              CohortReport* report = nullptr) {
  CohortReport rep;
  rep.stays_seen = tables.stays.size() + tables.rejected_stays;
  if (tables.rejected_stays) rep.excluded["malformed_row"] = tables.rejected_stays;
  rep.diagnostics = tables.rejected;

  std::unordered_map<AdmissionId, std::vector<std::size_t>> notes_by_adm;
  for (std::size_t i = 0; i < tables.notes.size(); ++i)
    notes_by_adm[tables.notes[i].admission_id].push_back(i);
  for (auto& [adm, idx] : notes_by_adm)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return tables.notes[a].chart_time < tables.notes[b].chart_time;
    });

  std::unordered_map<PatientId, std::vector<const StayRow*>> stays_by_patient;
  for (const auto& s : tables.stays) stays_by_patient[s.patient_id].push_back(&s);

  std::unordered_map<AdmissionId, std::pair<std::vector<std::string>, std::vector<std::string>>>
      codes_by_adm;
  for (const auto& c : tables.codes) {
    auto& slot = codes_by_adm[c.admission_id];
    (c.kind == CodeKind::diagnosis ? slot.first : slot.second).push_back(c.code);
  }

  std::vector<CohortRecord> out;
  for (const auto& s : tables.stays) {
    auto exclude = [&](const char* why) { ++rep.excluded[why]; };
    if (s.age_years < kMinAdultAge) {
      exclude("minor");
      continue;
    }
    if (!s.icu_in || !s.icu_out) {
      exclude("missing_icu_times");
      continue;
    }
    const Timestamp cutoff = *s.icu_out;
    if (s.death_time && *s.death_time >= *s.icu_in && *s.death_time <= cutoff) {
      exclude("died_in_icu");
      continue;
    }
    CohortRecord rec;
    rec.patient_id = s.patient_id;
    rec.stay_id = s.stay_id;
    rec.admission_id = s.admission_id;
    rec.cutoff = cutoff;
    if (auto it = notes_by_adm.find(s.admission_id); it != notes_by_adm.end())
      for (std::size_t i : it->second)
        if (tables.notes[i].chart_time <= cutoff && tables.notes[i].patient_id == s.patient_id)
          rec.note_refs.push_back(i);
    if (rec.note_refs.size() < kMinNotes) {
      exclude("too_few_notes");
      continue;
    }

    for (const StayRow* other : stays_by_patient[s.patient_id]) {
      if (other == &s || !other->icu_in || !(*other->icu_in > cutoff)) continue;
      if (other->admission_id == s.admission_id &&
          (!s.hosp_disch || *other->icu_in <= *s.hosp_disch))
        rec.outcomes.bounceback = true;
      if (other->icu_in->seconds - cutoff.seconds <= kReadmitWindow) rec.outcomes.readmit30 = true;
    }
    if (s.death_time && *s.death_time > cutoff) {
      if (s.hosp_disch && *s.death_time <= *s.hosp_disch) rec.outcomes.mortality_inhosp = true;
      if (s.death_time->seconds - cutoff.seconds <= kReadmitWindow) rec.outcomes.mortality30 = true;
    }
    if (auto it = codes_by_adm.find(s.admission_id); it != codes_by_adm.end()) {
      rec.diagnosis_codes = it->second.first;
      rec.procedure_codes = it->second.second;
    }
    out.push_back(std::move(rec));
  }

  std::sort(out.begin(), out.end(), [](const CohortRecord& a, const CohortRecord& b) {
    return std::pair(a.patient_id, a.stay_id) < std::pair(b.patient_id, b.stay_id);
  });
  std::set<PatientId> patients;
  for (const auto& r : out) {
    patients.insert(r.patient_id);
    for (auto o : kAllOutcomes)
      if (r.outcomes.get(o)) ++rep.positives[std::string(to_string(o))];
  }
  rep.stays_kept = out.size();
  rep.patients_kept = patients.size();
  if (report) *report = std::move(rep);
  return out;
}

inline nlohmann::json to_json(const CohortRecord& r) {
  return {{"patient_id", r.patient_id},
          {"stay_id", r.stay_id},
          {"admission_id", r.admission_id},
          {"cutoff", format_timestamp(r.cutoff)},
          {"note_refs", r.note_refs},
          {"outcomes",
           {{"bounceback", r.outcomes.bounceback},
            {"readmit30", r.outcomes.readmit30},
            {"mortality_inhosp", r.outcomes.mortality_inhosp},
            {"mortality30", r.outcomes.mortality30}}},
          {"codes", {{"diagnosis", r.diagnosis_codes}, {"procedure", r.procedure_codes}}},
          {"labels", r.labels}};
}

inline CohortRecord cohort_record_from_json(const nlohmann::json& j) {
  CohortRecord r;
  r.patient_id = j.at("patient_id").get<PatientId>();
  r.stay_id = j.at("stay_id").get<StayId>();
  r.admission_id = j.at("admission_id").get<AdmissionId>();
  auto t = parse_timestamp(j.at("cutoff").get<std::string>());
  if (!t) throw DataError("cohort record: bad cutoff timestamp");
  r.cutoff = *t;
  r.note_refs = j.at("note_refs").get<std::vector<std::size_t>>();
  const auto& o = j.at("outcomes");
  r.outcomes = {o.at("bounceback").get<bool>(), o.at("readmit30").get<bool>(),
                o.at("mortality_inhosp").get<bool>(), o.at("mortality30").get<bool>()};
  r.diagnosis_codes = j.at("codes").at("diagnosis").get<std::vector<std::string>>();
  r.procedure_codes = j.at("codes").at("procedure").get<std::vector<std::string>>();
  r.labels = j.value("labels", std::vector<int>{});
  return r;
}

inline std::string cohort_to_jsonl(const std::vector<CohortRecord>& cohort) {
  std::string out;
  for (const auto& r : cohort) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<CohortRecord> cohort_from_jsonl(std::string_view text) {
  std::vector<CohortRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty()) out.push_back(cohort_record_from_json(nlohmann::json::parse(line)));
    start = end + 1;
  }
  return out;
}

}  // namespace problist::corpus
