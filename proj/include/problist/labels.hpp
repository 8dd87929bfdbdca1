#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/csv.hpp"

namespace problist::labels {

enum class ProblemKind { icd_diag, icd_proc, phecode };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::icd_diag: return "icd_diag";
    case ProblemKind::icd_proc: return "icd_proc";
    case ProblemKind::phecode: return "phecode";
  }
  return "?";
}

inline ProblemKind parse_kind(std::string_view s) {
  for (auto k : {ProblemKind::icd_diag, ProblemKind::icd_proc, ProblemKind::phecode})
    if (to_string(k) == s) return k;
  throw DataError("unknown problem kind '" + std::string(s) + "'");
}

struct ProblemCode {
  std::string code;
  ProblemKind kind = ProblemKind::icd_diag;
  bool rolled = false;
  std::optional<std::string> display_name;

  /// Display name if known, else "kind:code".
  [[nodiscard]] std::string label() const {
    return display_name ? *display_name : std::string(to_string(kind)) + ":" + code;
  }
  friend bool operator==(const ProblemCode&, const ProblemCode&) = default;
};

/// Rolled ICD9 code: the first three characters of the dotless code. Codes
/// shorter than three characters are returned unchanged with a warning.
inline std::string rollup_icd9(std::string_view code) {
  if (code.size() < 3) {
    warn("short_icd9_code", "ICD9 code '" + std::string(code) + "' has fewer than 3 characters");
    return std::string(code);
  }
  return std::string(code.substr(0, 3));
}

/// Rolled phecode: integer part (text before the decimal point).
inline std::string rollup_phecode(std::string_view phecode) {
  return std::string(phecode.substr(0, phecode.find('.')));
}

/// ICD9 -> phecode rows (one ICD9 code may map to several phecodes).
class PhecodeMap {
 public:
  void add(std::string icd9, std::string phecode, std::optional<std::string> name = {}) {
    auto& v = rows_[icd9];
    if (std::find(v.begin(), v.end(), phecode) == v.end()) v.push_back(phecode);
    if (name && !name->empty()) names_.emplace(std::move(phecode), std::move(*name));
  }

  /// Mapped phecodes in table order, or empty if unmapped.
  [[nodiscard]] std::span<const std::string> lookup(const std::string& icd9) const {
    auto it = rows_.find(icd9);
    if (it == rows_.end()) return {};
    return it->second;
  }

  [[nodiscard]] std::optional<std::string> name(const std::string& phecode) const {
    auto it = names_.find(phecode);
    if (it == names_.end()) return std::nullopt;
    return it->second;
  }

  /// Name of the first named phecode whose integer part is `root`.
  [[nodiscard]] std::optional<std::string> rolled_name(const std::string& root) const {
    for (const auto& [code, n] : names_)
      if (rollup_phecode(code) == root) return n;
    return std::nullopt;
  }

  [[nodiscard]] bool empty() const { return rows_.empty(); }

  /// CSV `icd9,phecode` with an optional `phenotype` name column. ICD9 codes
  /// are normalized to dotless upper case.
  static PhecodeMap from_csv(const corpus::CsvTable& t) {
    PhecodeMap m;
    const auto ci = t.column("icd9"), cp = t.column("phecode");
    std::optional<std::size_t> cn;
    if (t.has_column("phenotype")) cn = t.column("phenotype");
    for (const auto& r : t.rows) {
      std::string icd;
      for (char c : r[ci])
        if (c != '.' && c != ' ') icd += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (icd.empty() || r[cp].empty()) continue;
      m.add(icd, r[cp], cn ? std::optional<std::string>(r[*cn]) : std::nullopt);
    }
    return m;
  }

  [[nodiscard]] corpus::CsvTable to_csv() const {
    corpus::CsvTable t{{"icd9", "phecode", "phenotype"}, {}};
    for (const auto& [icd, phes] : rows_)
      for (const auto& p : phes) t.rows.push_back({icd, p, name(p).value_or("")});
    return t;
  }

 private:
  std::map<std::string, std::vector<std::string>> rows_;
  std::map<std::string, std::string> names_;
};

/// Mapped phecodes for one ICD9 diagnosis code, truncated at the decimal
/// point when `rolled`; duplicates created by rolling are removed.
inline std::vector<std::string> map_phecode(const std::string& icd9, const PhecodeMap& mapping,
                                            bool rolled = false) {
  std::vector<std::string> out;
  for (const auto& p : mapping.lookup(icd9)) {
    std::string code = rolled ? rollup_phecode(p) : p;
    if (std::find(out.begin(), out.end(), code) == out.end()) out.push_back(std::move(code));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem-set selection

struct Component {
  ProblemKind kind;
  bool rolled;
  friend bool operator==(const Component&, const Component&) = default;
};

/// A problem configuration such as R-Phe+R-ICD-proc: a list of per-kind
/// spaces that are concatenated.
struct ProblemSet {
  std::string name;
  std::vector<Component> components;
};

inline const std::vector<ProblemSet>& problem_sets() {
  using K = ProblemKind;
  static const std::vector<ProblemSet> sets = {
      {"F-ICD", {{K::icd_diag, false}, {K::icd_proc, false}}},
      {"F-Phe+R-ICD-proc", {{K::phecode, false}, {K::icd_proc, true}}},
      {"R-ICD", {{K::icd_diag, true}, {K::icd_proc, true}}},
      {"R-Phe+R-ICD-proc", {{K::phecode, true}, {K::icd_proc, true}}},
      {"R-ICD-diag", {{K::icd_diag, true}}},
      {"R-ICD-proc", {{K::icd_proc, true}}},
      {"R-Phe", {{K::phecode, true}}},
  };
  return sets;
}

inline const ProblemSet& parse_problem_set(std::string_view name) {
  for (const auto& s : problem_sets())
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : problem_sets()) known += (known.empty() ? "" : "|") + s.name;
  throw ConfigError("unknown problem set '" + std::string(name) + "' (expected " + known + ")");
}

/// Distinct codes a record contributes to one component.
inline std::vector<std::string> record_codes(const corpus::CohortRecord& rec, Component comp,
                                             const PhecodeMap& phecodes) {
  std::vector<std::string> out;
  auto add = [&](std::string c) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
  };
  switch (comp.kind) {
    case ProblemKind::icd_diag:
      for (const auto& c : rec.diagnosis_codes) add(comp.rolled ? rollup_icd9(c) : c);
      break;
    case ProblemKind::icd_proc:
      for (const auto& c : rec.procedure_codes) add(comp.rolled ? rollup_icd9(c) : c);
      break;
    case ProblemKind::phecode:
      for (const auto& c : rec.diagnosis_codes)
        for (auto& p : map_phecode(c, phecodes, comp.rolled)) add(std::move(p));
      break;
  }
  return out;
}

inline constexpr std::size_t kMinCodeCount = 50;

/// Ordered problem codes surviving the training-fold frequency filter.
class LabelSpace {
 public:
  static constexpr int kVersion = 1;

  LabelSpace() = default;
  LabelSpace(std::string problem_set, std::vector<ProblemCode> codes, std::vector<std::size_t> counts,
             std::size_t min_count)
      : problem_set_(std::move(problem_set)),
        codes_(std::move(codes)),
        counts_(std::move(counts)),
        min_count_(min_count) {
    for (std::size_t i = 0; i < codes_.size(); ++i)
      index_.emplace(key(codes_[i].kind, codes_[i].rolled, codes_[i].code), static_cast<int>(i));
  }

  [[nodiscard]] std::size_t size() const { return codes_.size(); }
  [[nodiscard]] const ProblemCode& code(std::size_t i) const { return codes_.at(i); }
  [[nodiscard]] const std::vector<ProblemCode>& codes() const { return codes_; }
  [[nodiscard]] std::size_t count(std::size_t i) const { return counts_.at(i); }
  [[nodiscard]] const std::string& problem_set() const { return problem_set_; }
  [[nodiscard]] std::size_t min_count() const { return min_count_; }

  [[nodiscard]] std::optional<int> index(ProblemKind kind, bool rolled, const std::string& code) const {
    auto it = index_.find(key(kind, rolled, code));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json codes = nlohmann::json::array();
    for (std::size_t i = 0; i < codes_.size(); ++i) {
      nlohmann::json c = {{"code", codes_[i].code},
                          {"kind", to_string(codes_[i].kind)},
                          {"rolled", codes_[i].rolled},
                          {"count", counts_[i]}};
      if (codes_[i].display_name) c["display_name"] = *codes_[i].display_name;
      codes.push_back(std::move(c));
    }
    return {{"version", kVersion},
            {"problem_set", problem_set_},
            {"min_count", min_count_},
            {"codes", std::move(codes)}};
  }

  static LabelSpace from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kVersion)
      throw DataError("label space: unsupported version " + j.at("version").dump());
    std::vector<ProblemCode> codes;
    std::vector<std::size_t> counts;
    for (const auto& c : j.at("codes")) {
      ProblemCode pc{c.at("code").get<std::string>(), parse_kind(c.at("kind").get<std::string>()),
                     c.at("rolled").get<bool>(), std::nullopt};
      if (c.contains("display_name")) pc.display_name = c.at("display_name").get<std::string>();
      codes.push_back(std::move(pc));
      counts.push_back(c.at("count").get<std::size_t>());
    }
    return LabelSpace(j.at("problem_set").get<std::string>(), std::move(codes), std::move(counts),
                      j.at("min_count").get<std::size_t>());
  }

  /// Identity of the space: problem set and ordered codes. Training counts
  /// are left out so that folds selecting the same codes share a hash.
  [[nodiscard]] std::string hash() const {
    Fnv1a h;
    h.update(problem_set_);
    for (const auto& c : codes_) {
      h.update("\n");
      h.update(to_string(c.kind));
      h.update(c.rolled ? "/r/" : "/f/");
      h.update(c.code);
    }
    return h.hex();
  }

 private:
  static std::string key(ProblemKind k, bool rolled, const std::string& code) {
    return std::string(to_string(k)) + (rolled ? "/r/" : "/f/") + code;
  }

  std::string problem_set_;
  std::vector<ProblemCode> codes_;
  std::vector<std::size_t> counts_;
  std::size_t min_count_ = kMinCodeCount;
  std::unordered_map<std::string, int> index_;
};

/// Counts, per component, the training stays carrying each code and keeps
/// codes seen at least `min_count` times. Order: kind (diagnosis, procedure,
/// phecode), then codes lexicographically.
inline LabelSpace build_label_space(std::span<const corpus::CohortRecord> train,
                                    const ProblemSet& selection, const PhecodeMap& phecodes,
                                    std::size_t min_count = kMinCodeCount) {
  std::vector<ProblemCode> codes;
  std::vector<std::size_t> counts;
  std::vector<Component> comps = selection.components;
  std::stable_sort(comps.begin(), comps.end(),
                   [](Component a, Component b) { return a.kind < b.kind; });
  for (const auto& comp : comps) {
    std::map<std::string, std::size_t> tally;
    for (const auto& rec : train)
      for (const auto& c : record_codes(rec, comp, phecodes)) ++tally[c];
    for (const auto& [code, n] : tally) {
      if (n < min_count) continue;
      std::optional<std::string> name;
      if (comp.kind == ProblemKind::phecode) {
        name = phecodes.name(code);
        if (!name && comp.rolled) name = phecodes.rolled_name(code);
      }
      codes.push_back({code, comp.kind, comp.rolled, name});
      counts.push_back(n);
    }
  }
  if (codes.empty())
    throw DataError("build_label_space: no code of problem set " + selection.name +
                    " occurs " + std::to_string(min_count) + " times in the training fold");
  return LabelSpace(selection.name, std::move(codes), std::move(counts), min_count);
}

/// Sorted indices of the label-space entries present in the record.
inline std::vector<int> label_indices(const corpus::CohortRecord& rec, const LabelSpace& space,
                                      const ProblemSet& selection, const PhecodeMap& phecodes) {
  std::set<int> idx;
  for (const auto& comp : selection.components)
    for (const auto& c : record_codes(rec, comp, phecodes))
      if (auto i = space.index(comp.kind, comp.rolled, c)) idx.insert(*i);
  return {idx.begin(), idx.end()};
}

/// Dense 0/1 vector of length L.
inline std::vector<std::uint8_t> label_vector(const corpus::CohortRecord& rec, const LabelSpace& space,
                                              const ProblemSet& selection, const PhecodeMap& phecodes) {
  std::vector<std::uint8_t> y(space.size(), 0);
  for (int i : label_indices(rec, space, selection, phecodes)) y[static_cast<std::size_t>(i)] = 1;
  return y;
}

}  // namespace problist::labels
