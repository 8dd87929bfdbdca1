#pragma once

#include <cctype>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/csv.hpp"

namespace problist::corpus {

enum class CodeKind { diagnosis, procedure };

inline std::string_view to_string(CodeKind k) {
  return k == CodeKind::diagnosis ? "diagnosis" : "procedure";
}

struct NoteRow {
  PatientId patient_id = 0;
  AdmissionId admission_id = 0;  // notes link to the hospital admission
  Timestamp chart_time;
  std::string text;
};

struct StayRow {
  PatientId patient_id = 0;
  StayId stay_id = 0;
  AdmissionId admission_id = 0;
  std::optional<Timestamp> hosp_admit;
  std::optional<Timestamp> hosp_disch;
  std::optional<Timestamp> icu_in;
  std::optional<Timestamp> icu_out;
  double age_years = 0.0;
  std::optional<Timestamp> death_time;
};

struct CodeRow {
  AdmissionId admission_id = 0;
  std::string code;
  CodeKind kind = CodeKind::diagnosis;
};

/// Source tables after parsing. Rows that failed to parse are dropped and
/// described in `rejected`.
struct RawTables {
  std::vector<NoteRow> notes;
  std::vector<StayRow> stays;
  std::vector<CodeRow> codes;
  std::vector<std::string> rejected;
  std::size_t rejected_stays = 0;
};

namespace detail {

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Optional timestamp column: empty means absent, anything unparsable is an error.
inline bool parse_optional_time(std::string_view s, std::optional<Timestamp>& out) {
  if (s.empty()) {
    out.reset();
    return true;
  }
  out = parse_timestamp(s);
  return out.has_value();
}

}  // namespace detail

/// Maps logical column names onto a source table's header, optionally
/// left-joining further files on a shared key column first.
struct TableMapping {
  std::string file;
  std::map<std::string, std::string> columns;  // logical -> source
  struct Join {
    std::string file;
    std::string key;
  };
  std::vector<Join> joins;
  std::optional<CodeKind> kind;  // code tables only

  [[nodiscard]] std::string source(const std::string& logical) const {
    auto it = columns.find(logical);
    return it == columns.end() ? logical : it->second;
  }
};

/// Where the three logical tables come from. The default reads
/// notes.csv / stays.csv / codes.csv with logical column names.
struct ColumnMapping {
  TableMapping notes{"notes.csv", {}, {}, {}};
  TableMapping stays{"stays.csv", {}, {}, {}};
  std::vector<TableMapping> codes{TableMapping{"codes.csv", {}, {}, {}}};

  static ColumnMapping from_json(const nlohmann::json& j) {
    auto table = [](const nlohmann::json& t) {
      TableMapping m;
      m.file = t.at("file").get<std::string>();
      if (t.contains("columns"))
        for (auto& [k, v] : t.at("columns").items()) m.columns[k] = v.get<std::string>();
      if (t.contains("joins"))
        for (const auto& jn : t.at("joins"))
          m.joins.push_back({jn.at("file").get<std::string>(), jn.at("key").get<std::string>()});
      if (t.contains("kind")) {
        const auto k = t.at("kind").get<std::string>();
        if (k == "diagnosis") m.kind = CodeKind::diagnosis;
        else if (k == "procedure") m.kind = CodeKind::procedure;
        else throw ConfigError("column mapping: unknown code kind '" + k + "'");
      }
      return m;
    };
    ColumnMapping cm;
    if (j.contains("notes")) cm.notes = table(j.at("notes"));
    if (j.contains("stays")) cm.stays = table(j.at("stays"));
    if (j.contains("codes")) {
      cm.codes.clear();
      for (const auto& t : j.at("codes")) cm.codes.push_back(table(t));
    }
    return cm;
  }
};

namespace detail {

inline CsvTable load_joined(const std::filesystem::path& dir, const TableMapping& m) {
  CsvTable base = read_csv((dir / m.file).string());
  for (const auto& jn : m.joins) {
    CsvTable other = read_csv((dir / jn.file).string());
    const std::size_t bk = base.column(jn.key), ok = other.column(jn.key);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < other.rows.size(); ++r) index.emplace(other.rows[r][ok], r);
    std::vector<std::size_t> add;
    for (std::size_t c = 0; c < other.header.size(); ++c)
      if (!base.has_column(other.header[c])) add.push_back(c);
    for (std::size_t c : add) base.header.push_back(other.header[c]);
    for (auto& row : base.rows) {
      auto it = index.find(row[bk]);
      for (std::size_t c : add) row.push_back(it == index.end() ? "" : other.rows[it->second][c]);
    }
  }
  return base;
}

inline std::string normalize_code(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    if (c == '.' || c == ' ' || c == '"') continue;
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace detail

/// Reads notes, stays and codes from `dir` according to `mapping`.
inline RawTables load_tables(const std::filesystem::path& dir,
                             const ColumnMapping& mapping = ColumnMapping{}) {
  using detail::parse_int;
  RawTables out;
  {
    const auto& m = mapping.notes;
    const CsvTable t = detail::load_joined(dir, m);
    const auto cp = t.column(m.source("patient_id"));
    const auto ca = t.column(m.source("stay_or_admission_id"));
    const auto ct = t.column(m.source("chart_time"));
    const auto cx = t.column(m.source("text"));
    std::optional<std::size_t> cfallback;
    if (m.columns.count("chart_time_fallback")) cfallback = t.column(m.columns.at("chart_time_fallback"));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      auto pid = parse_int<PatientId>(row[cp]);
      auto aid = parse_int<AdmissionId>(row[ca]);
      std::string_view ts = row[ct];
      if (ts.empty() && cfallback) ts = row[*cfallback];
      auto time = parse_timestamp(ts);
      if (!pid || !aid || !time) {
        out.rejected.push_back("notes row " + std::to_string(r + 1) +
                               ": unparsable patient/admission id or chart_time '" +
                               std::string(ts) + "'");
        continue;
      }
      out.notes.push_back({*pid, *aid, *time, row[cx]});
    }
  }
  {
    const auto& m = mapping.stays;
    const CsvTable t = detail::load_joined(dir, m);
    const auto cp = t.column(m.source("patient_id"));
    const auto cs = t.column(m.source("stay_id"));
    const auto ca = t.column(m.source("admission_id"));
    const auto cha = t.column(m.source("hosp_admit"));
    const auto chd = t.column(m.source("hosp_disch"));
    const auto cin = t.column(m.source("icu_in"));
    const auto cout = t.column(m.source("icu_out"));
    const auto cd = t.column(m.source("death_time"));
    std::optional<std::size_t> cage, cdob;
    if (m.columns.count("dob")) cdob = t.column(m.columns.at("dob"));
    else cage = t.column(m.source("age_years"));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      StayRow s;
      auto pid = parse_int<PatientId>(row[cp]);
      auto sid = parse_int<StayId>(row[cs]);
      auto aid = parse_int<AdmissionId>(row[ca]);
      bool ok = pid && sid && aid;
      ok = ok && detail::parse_optional_time(row[cha], s.hosp_admit);
      ok = ok && detail::parse_optional_time(row[chd], s.hosp_disch);
      ok = ok && detail::parse_optional_time(row[cin], s.icu_in);
      ok = ok && detail::parse_optional_time(row[cout], s.icu_out);
      ok = ok && detail::parse_optional_time(row[cd], s.death_time);
      if (ok && cage) {
        auto age = detail::parse_double(row[*cage]);
        ok = age.has_value();
        if (ok) s.age_years = *age;
      } else if (ok && cdob) {
        auto dob = parse_timestamp(row[*cdob]);
        const auto ref = s.icu_in ? s.icu_in : s.hosp_admit;
        ok = dob.has_value() && ref.has_value();
        if (ok)
          s.age_years = static_cast<double>(ref->seconds - dob->seconds) /
                        (365.25 * static_cast<double>(kSecondsPerDay));
      }
      if (ok && s.icu_in && s.icu_out && !(*s.icu_in < *s.icu_out)) ok = false;
      if (!ok) {
        out.rejected.push_back("stays row " + std::to_string(r + 1) +
                               ": malformed id, age or timestamp (or icu_in >= icu_out)");
        ++out.rejected_stays;
        continue;
      }
      s.patient_id = *pid;
      s.stay_id = *sid;
      s.admission_id = *aid;
      out.stays.push_back(s);
    }
  }
  for (const auto& m : mapping.codes) {
    const CsvTable t = detail::load_joined(dir, m);
    const auto ca = t.column(m.source("admission_id"));
    const auto cc = t.column(m.source("code"));
    std::optional<std::size_t> ck;
    if (!m.kind) ck = t.column(m.source("kind"));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      auto aid = parse_int<AdmissionId>(row[ca]);
      std::string code = detail::normalize_code(row[cc]);
      std::optional<CodeKind> kind = m.kind;
      if (ck) {
        if (row[*ck] == "diagnosis") kind = CodeKind::diagnosis;
        else if (row[*ck] == "procedure") kind = CodeKind::procedure;
      }
      if (!aid || code.empty() || !kind) {
        out.rejected.push_back(m.file + " row " + std::to_string(r + 1) +
                               ": malformed admission id, code or kind");
        continue;
      }
      out.codes.push_back({*aid, std::move(code), *kind});
    }
  }
  return out;
}

/// Writes the three tables in the logical schema (used by the generator).
inline void write_tables(const std::filesystem::path& dir, const RawTables& t) {
  std::filesystem::create_directories(dir);
  auto opt_time = [](const std::optional<Timestamp>& ts) {
    return ts ? format_timestamp(*ts) : std::string{};
  };
  {
    CsvTable c{{"patient_id", "stay_or_admission_id", "chart_time", "text"}, {}};
    for (const auto& n : t.notes)
      c.rows.push_back({std::to_string(n.patient_id), std::to_string(n.admission_id),
                        format_timestamp(n.chart_time), n.text});
    write_file((dir / "notes.csv").string(), format_csv(c));
  }
  {
    CsvTable c{{"patient_id", "stay_id", "admission_id", "hosp_admit", "hosp_disch", "icu_in",
                "icu_out", "age_years", "death_time"},
               {}};
    for (const auto& s : t.stays) {
      char age[32];
      std::snprintf(age, sizeof(age), "%.2f", s.age_years);
      c.rows.push_back({std::to_string(s.patient_id), std::to_string(s.stay_id),
                        std::to_string(s.admission_id), opt_time(s.hosp_admit),
                        opt_time(s.hosp_disch), opt_time(s.icu_in), opt_time(s.icu_out), age,
                        opt_time(s.death_time)});
    }
    write_file((dir / "stays.csv").string(), format_csv(c));
  }
  {
    CsvTable c{{"admission_id", "code", "kind"}, {}};
    for (const auto& k : t.codes)
      c.rows.push_back({std::to_string(k.admission_id), k.code, std::string(to_string(k.kind))});
    write_file((dir / "codes.csv").string(), format_csv(c));
  }
}

}  // namespace problist::corpus
