#pragma once

// The hand-written report fixture behind tests/golden/report_4242.*.

#include <numeric>
#include <string>
#include <vector>

#include "problist/corpus/narrative.hpp"
#include "problist/explain/problem_list.hpp"
#include "problist/explain/report.hpp"
#include "problist/explain/spans.hpp"

namespace problist::golden {

inline const std::vector<std::string> kWords = {"patient", "has", "severe", "chf", "with", "edema", "and", "afib"};
inline constexpr std::size_t kN = 12;

inline corpus::Narrative narrative(StayId stay = 4242) {
  std::vector<TokenId> ids(kWords.size());
  std::iota(ids.begin(), ids.end(), 4);
  return corpus::Narrative(stay, ids, kWords, kN);
}

inline std::size_t pos(int width, std::size_t start) { return model::encode_position({width, start}, kN); }

inline std::vector<explain::ProblemListEntry> golden_entries() {
  using explain::decode_span;
  const auto nar = narrative();
  explain::ProblemListEntry a{0, "428", "Heart failure", 0.91234, 1.0,
                              {decode_span(pos(2, 3), 0.6, nar), decode_span(pos(1, 7), 0.2, nar)}};
  explain::ProblemListEntry b{1, "V45", "A|B <x>", 0.5, -0.25, {decode_span(pos(1, 2), 0.3, nar)}};
  return {a, b};
}

inline const explain::ReportContext kCtx{4242, "readmit30", "dynpl", 0.4567};

inline std::string read_golden(const std::string& name) {
  return corpus::read_file(std::string(PROBLIST_TEST_DATA_DIR) + "/golden/" + name);
}

}  // namespace problist::golden
