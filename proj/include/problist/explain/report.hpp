#pragma once

#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "problist/corpus/csv.hpp"
#include "problist/explain/problem_list.hpp"
#include "problist/model/network.hpp"

namespace problist::explain {

enum class Format { markdown, html };

/// Heading fields shown above the problem table.
struct ReportContext {
  StayId stay_id = 0;
  std::string outcome;  // e.g. readmit30
  std::string model;
  double outcome_probability = 0.0;
};

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  // "-0.00" reads badly in a table.
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  return out;
}

inline std::string md_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|' || c == '*' || c == '_' || c == '`' || c == '\\' || c == '[' || c == ']' || c == '<' ||
        c == '>')
      out += '\\';
    out += c;
  }
  return out;
}

inline std::string span_md(const Span& s) {
  std::string out = "\"";
  if (!s.before.empty()) out += md_escape(s.before) + " ";
  out += "**" + md_escape(s.text) + "**";
  if (!s.after.empty()) out += " " + md_escape(s.after);
  return out + "\"";
}

inline std::string span_html(const Span& s) {
  std::string out = "<span class=\"span\">";
  if (!s.before.empty()) out += html_escape(s.before) + " ";
  out += "<b>" + html_escape(s.text) + "</b>";
  if (!s.after.empty()) out += " " + html_escape(s.after);
  return out + "</span>";
}

}  // namespace detail

inline constexpr std::string_view kEmptyListNotice = "No problems were extracted for this stay.";

/// Problem-list document in the layout of a dynamic problem list: one row per
/// problem with its extraction probability, scaled outcome weight and the
/// attended spans (bold) inside their context. Output is a pure function of
/// the inputs.
inline std::string render_report(std::span<const ProblemListEntry> entries, const ReportContext& ctx,
                                 Format format) {
  const std::string prob = detail::fixed(ctx.outcome_probability, 3);
  if (format == Format::markdown) {
    std::string md = "# Problem list for stay " + std::to_string(ctx.stay_id) + "\n\n";
    md += "- Outcome: " + detail::md_escape(ctx.outcome) + "\n";
    md += "- Model: " + detail::md_escape(ctx.model) + "\n";
    md += "- Predicted outcome probability: " + prob + "\n\n";
    if (entries.empty()) return md + std::string(kEmptyListNotice) + "\n";
    md += "| Problem | Extraction Probability | Problem Weight | Attended Text |\n";
    md += "|---|---:|---:|---|\n";
    for (const auto& e : entries) {
      std::string spans;
      for (const auto& s : e.spans) spans += (spans.empty() ? "" : "<br>") + detail::span_md(s);
      md += "| " + detail::md_escape(e.name) + " (" + detail::md_escape(e.code) + ") | " +
            detail::fixed(e.probability, 3) + " | " + detail::fixed(e.scaled_weight, 2) + " | " + spans +
            " |\n";
    }
    return md;
  }
  std::string h = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Problem list for stay " +
                  std::to_string(ctx.stay_id) + "</title>\n</head>\n<body>\n";
  h += "<h1>Problem list for stay " + std::to_string(ctx.stay_id) + "</h1>\n<ul>\n";
  h += "<li>Outcome: " + detail::html_escape(ctx.outcome) + "</li>\n";
  h += "<li>Model: " + detail::html_escape(ctx.model) + "</li>\n";
  h += "<li>Predicted outcome probability: " + prob + "</li>\n</ul>\n";
  if (entries.empty()) {
    h += "<p class=\"notice\">" + std::string(kEmptyListNotice) + "</p>\n";
  } else {
    h += "<table>\n<thead><tr><th>Problem</th><th>Extraction Probability</th><th>Problem Weight</th>"
         "<th>Attended Text</th></tr></thead>\n<tbody>\n";
    for (const auto& e : entries) {
      h += "<tr><td>" + detail::html_escape(e.name) + " (" + detail::html_escape(e.code) + ")</td><td>" +
           detail::fixed(e.probability, 3) + "</td><td>" + detail::fixed(e.scaled_weight, 2) + "</td><td>";
      for (std::size_t i = 0; i < e.spans.size(); ++i) h += (i ? "<br>" : "") + detail::span_html(e.spans[i]);
      h += "</td></tr>\n";
    }
    h += "</tbody>\n</table>\n";
  }
  return h + "</body>\n</html>\n";
}

/// Writes `<stay_id>.md` and `<stay_id>.html` into `dir`.
inline void save_report(const std::filesystem::path& dir, std::span<const ProblemListEntry> entries,
                        const ReportContext& ctx) {
  std::filesystem::create_directories(dir);
  const auto stem = std::to_string(ctx.stay_id);
  corpus::write_file((dir / (stem + ".md")).string(), render_report(entries, ctx, Format::markdown));
  corpus::write_file((dir / (stem + ".html")).string(), render_report(entries, ctx, Format::html));
}

/// Table of the `top` highest-mean global risk factors.
inline std::string render_risk_factors(std::span<const RiskFactor> factors, const std::string& outcome,
                                       std::size_t top = 5) {
  std::string md = "## Risk factors for " + detail::md_escape(outcome) + "\n\n";
  md += "| Problem | Weight (mean +/- std) |\n|---|---:|\n";
  for (std::size_t i = 0; i < std::min(top, factors.size()); ++i)
    md += "| " + detail::md_escape(factors[i].name) + " (" + detail::md_escape(factors[i].code) + ") | " +
          detail::fixed(factors[i].mean, 3) + " +/- " + detail::fixed(factors[i].std, 3) + " |\n";
  return md;
}

/// The attended spans of the conv-attention baseline, most attended first.
inline std::string render_baseline_spans(std::span<const Span> spans, StayId stay) {
  std::string md = "## Highly attended text for stay " + std::to_string(stay) + "\n\n";
  if (spans.empty()) return md + "No attended text.\n";
  for (const auto& s : spans) md += "- " + detail::span_md(s) + " (" + detail::fixed(s.weight, 4) + ")\n";
  return md;
}

}  // namespace problist::explain
