#include <gtest/gtest.h>

#include "problist/labels.hpp"

using namespace problist;
using namespace problist::labels;

namespace {

std::vector<std::string> capture_warnings(const std::function<void()>& f) {
  std::vector<std::string> codes;
  ScopedWarningSink guard([&](std::string_view c, std::string_view) { codes.emplace_back(c); });
  f();
  return codes;
}

corpus::CohortRecord record(std::vector<std::string> diag, std::vector<std::string> proc = {}) {
  corpus::CohortRecord r;
  r.diagnosis_codes = std::move(diag);
  r.procedure_codes = std::move(proc);
  return r;
}

}  // namespace

TEST(Rollup, Examples) {
  EXPECT_EQ(rollup_icd9("4280"), "428");
  EXPECT_EQ(rollup_icd9("42831"), "428");
  EXPECT_EQ(rollup_icd9("V4581"), "V45");
  EXPECT_EQ(rollup_icd9("E8889"), "E88");
  EXPECT_EQ(rollup_icd9("3961"), "396");
  EXPECT_EQ(rollup_icd9("428"), "428");
}

TEST(Rollup, ShortCodeWarnsAndPassesThrough) {
  std::string out;
  const auto w = capture_warnings([&] { out = rollup_icd9("12"); });
  EXPECT_EQ(out, "12");
  EXPECT_EQ(w, std::vector<std::string>{"short_icd9_code"});
}

TEST(Rollup, IdempotentOnManyCodes) {
  Rng rng(17);
  const std::string first = "0123456789VE";
  for (int i = 0; i < 1000; ++i) {
    std::string c(1, first[rng.below(first.size())]);
    const auto len = 3 + rng.below(3);
    while (c.size() < len) c += static_cast<char>('0' + rng.below(10));
    const auto once = rollup_icd9(c);
    EXPECT_EQ(once.size(), 3u);
    EXPECT_EQ(rollup_icd9(once), once) << c;
    EXPECT_EQ(c.rfind(once, 0), 0u);
  }
}

TEST(Phecode, OneCodeMapsToTwo) {
  PhecodeMap m;
  m.add("4280", "428.1", "Heart failure NOS");
  m.add("4280", "428.2");
  m.add("4019", "401.1");
  EXPECT_EQ(map_phecode("4280", m), (std::vector<std::string>{"428.1", "428.2"}));
  EXPECT_EQ(map_phecode("4280", m, true), (std::vector<std::string>{"428"}));
  EXPECT_TRUE(map_phecode("9999", m).empty());
  EXPECT_EQ(rollup_phecode("428.1"), "428");
  EXPECT_EQ(rollup_phecode("428"), "428");
}

TEST(Phecode, CsvNormalizesDottedCodesAndRoundTrips) {
  const auto m = PhecodeMap::from_csv(corpus::parse_csv("icd9,phecode,phenotype\n428.0,428.1,Heart failure\nv45.81,1010,\n"));
  EXPECT_EQ(map_phecode("4280", m), std::vector<std::string>{"428.1"});
  EXPECT_EQ(map_phecode("V4581", m), std::vector<std::string>{"1010"});
  EXPECT_EQ(m.name("428.1"), "Heart failure");
  EXPECT_EQ(m.rolled_name("428"), "Heart failure");
  const auto back = PhecodeMap::from_csv(m.to_csv());
  EXPECT_EQ(corpus::format_csv(back.to_csv()), corpus::format_csv(m.to_csv()));
}

TEST(LabelSpace, FrequencyBoundaryFiftyVersusFortyNine) {
  std::vector<corpus::CohortRecord> train;
  for (int i = 0; i < 50; ++i) train.push_back(record({"4280"}));
  for (int i = 0; i < 49; ++i) train.push_back(record({"4019"}));
  const auto s = build_label_space(train, parse_problem_set("R-ICD-diag"), PhecodeMap{});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.code(0).code, "428");
  EXPECT_EQ(s.count(0), 50u);
  EXPECT_TRUE(s.index(ProblemKind::icd_diag, true, "428"));
  EXPECT_FALSE(s.index(ProblemKind::icd_diag, true, "401"));
}

TEST(LabelSpace, CountsStaysNotCodes) {
  // Two full codes rolling to the same stem count once per stay.
  std::vector<corpus::CohortRecord> train;
  for (int i = 0; i < 30; ++i) train.push_back(record({"4280", "42831"}));
  EXPECT_THROW(build_label_space(train, parse_problem_set("R-ICD-diag"), PhecodeMap{}, 31), DataError);
  const auto s = build_label_space(train, parse_problem_set("R-ICD-diag"), PhecodeMap{}, 30);
  EXPECT_EQ(s.count(0), 30u);
}

TEST(LabelSpace, OrderIsKindThenCode) {
  std::vector<corpus::CohortRecord> train(3, record({"5849", "4280"}, {"9604", "3961"}));
  const auto s = build_label_space(train, parse_problem_set("R-ICD"), PhecodeMap{}, 1);
  std::vector<std::string> codes;
  for (const auto& c : s.codes()) codes.push_back(std::string(to_string(c.kind)) + ":" + c.code);
  EXPECT_EQ(codes, (std::vector<std::string>{"icd_diag:428", "icd_diag:584", "icd_proc:396", "icd_proc:960"}));
}

TEST(LabelSpace, PhecodeSpaceUsesNames) {
  PhecodeMap m;
  m.add("4280", "428.1", "Congestive heart failure");
  m.add("4280", "428.2", "Heart failure NOS");
  std::vector<corpus::CohortRecord> train(2, record({"4280"}, {"3961"}));
  const auto full = build_label_space(train, parse_problem_set("F-Phe+R-ICD-proc"), m, 1);
  EXPECT_EQ(full.size(), 3u);
  EXPECT_EQ(full.code(0).label(), "icd_proc:396");
  EXPECT_EQ(full.code(2).label(), "Heart failure NOS");
  const auto rolled = build_label_space(train, parse_problem_set("R-Phe"), m, 1);
  ASSERT_EQ(rolled.size(), 1u);
  EXPECT_EQ(rolled.code(0).label(), "Congestive heart failure");
}

TEST(LabelSpace, LabelVectorAndIndices) {
  std::vector<corpus::CohortRecord> train(2, record({"4280", "5849"}, {"3961"}));
  const auto& sel = parse_problem_set("R-ICD");
  const auto s = build_label_space(train, sel, PhecodeMap{}, 1);
  const auto r = record({"58490", "0389"}, {"3961"});
  EXPECT_EQ(label_indices(r, s, sel, PhecodeMap{}), (std::vector<int>{1, 2}));
  EXPECT_EQ(label_vector(r, s, sel, PhecodeMap{}), (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(LabelSpace, JsonRoundTripAndHashIgnoresCounts) {
  std::vector<corpus::CohortRecord> a(3, record({"4280"})), b(5, record({"4280"}));
  const auto& sel = parse_problem_set("R-ICD-diag");
  const auto sa = build_label_space(a, sel, PhecodeMap{}, 1);
  const auto sb = build_label_space(b, sel, PhecodeMap{}, 1);
  EXPECT_EQ(sa.hash(), sb.hash());
  EXPECT_NE(sa.count(0), sb.count(0));
  const auto back = LabelSpace::from_json(sa.to_json());
  EXPECT_EQ(back.to_json(), sa.to_json());
  EXPECT_EQ(back.hash(), sa.hash());
  a.push_back(record({"5849"}));
  EXPECT_NE(build_label_space(a, sel, PhecodeMap{}, 1).hash(), sa.hash());
}

TEST(ProblemSets, ParseKnownAndUnknown) {
  EXPECT_EQ(parse_problem_set("R-Phe+R-ICD-proc").components.size(), 2u);
  EXPECT_EQ(problem_sets().size(), 7u);
  EXPECT_THROW(parse_problem_set("R-XYZ"), ConfigError);
}
