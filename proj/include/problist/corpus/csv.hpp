#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "problist/common.hpp"

namespace problist::corpus {

/// RFC 4180 CSV with a header row. Quoted fields may contain commas, quotes
/// ("" escapes) and newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError("CSV is missing column '" + std::string(name) + "'");
  }
  [[nodiscard]] bool has_column(std::string_view name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
};

inline CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_started = false, any = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) {
      if (table.header.empty() && !any) table.header = std::move(row);
      else table.rows.push_back(std::move(row));
      any = true;
    }
    row.clear();
  };
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      // tolerated before \n
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("CSV: unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (table.rows[r].size() != table.header.size())
      throw DataError("CSV: row " + std::to_string(r + 1) + " has " +
                      std::to_string(table.rows[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()));
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

inline void append_csv_field(std::string& out, std::string_view v) {
  const bool quote = v.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!quote) {
    out.append(v);
    return;
  }
  out += '"';
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

inline std::string format_csv(const CsvTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      append_csv_field(out, fields[i]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

}  // namespace problist::corpus
