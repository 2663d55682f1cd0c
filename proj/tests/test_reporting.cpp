#include <gtest/gtest.h>

#include "support.hpp"

using namespace xb;

TEST(Percent, OneDecimalRounding) {
  EXPECT_EQ(percent(111, 130), "85.4%");
  EXPECT_EQ(percent(107, 210), "51.0%");
  EXPECT_EQ(percent(0, 2583), "0.0%");
  EXPECT_EQ(percent(213, 3086), "6.9%");
  EXPECT_EQ(percent(6, 96), "6.2%");
  EXPECT_EQ(percent(1, 0), "-");
  EXPECT_EQ(fraction_cell(111, 130), "111/130 (85.4%)");
}

TEST(Summary, TableCellsFromSyntheticRun) {
  const RunSummary s = xbtest::table_summary();
  EXPECT_EQ(fraction_cell(s.cell("model-1", "credit").passed, s.cell("model-1", "credit").positions),
            "111/130 (85.4%)");
  EXPECT_EQ(s.model_total("model-1").positions, 3086u);
  EXPECT_EQ(s.model_total("model-1").passed, 213u);
  EXPECT_EQ(s.total().docs, 210u);
  EXPECT_EQ(s.total().valid, 107u);

  const std::string md = summary_to_markdown(s);
  for (const char* needle : {"111/130 (85.4%)", "0/2583 (0.0%)", "213/3086 (6.9%)", "| Aggregate | 107/210 (51.0%) |",
                             "wide (7 docs, 369 keys)"}) {
    EXPECT_NE(md.find(needle), std::string::npos) << needle << "\n" << md;
  }
  EXPECT_NE(md.find("| Total failures | 103 |"), std::string::npos) << md;
}

TEST(Summary, FailureHistogramMatchesInvalidAttempts) {
  const RunSummary s = xbtest::table_summary();
  std::size_t failures = 0;
  for (const auto& [mode, n] : s.failure_total()) failures += n;
  EXPECT_EQ(failures, s.total().docs - s.total().valid);
}

TEST(Summary, TiesAreAllBold) {
  std::vector<ManifestRow> rows;
  std::vector<ScoredAttempt> attempts;
  for (const char* model : {"a", "b", "c"}) {
    ManifestRow r;
    r.document = "d.pdf";
    r.model = model;
    r.domain = "x";
    rows.push_back(r);
    DocumentReport rep;
    rep.valid = true;
    rep.counts.positions = 4;
    rep.counts.passed = std::string(model) == "c" ? 1 : 3;
    attempts.push_back({manifest_key(r), rep});
  }
  const std::string md = summary_to_markdown(aggregate_run(attempts, rows));
  EXPECT_NE(md.find("| a | **1/1** | **3/4 (75.0%)** |"), std::string::npos) << md;
  EXPECT_NE(md.find("| b | **1/1** | **3/4 (75.0%)** |"), std::string::npos) << md;
  EXPECT_NE(md.find("| c | **1/1** | 1/4 (25.0%) |"), std::string::npos) << md;
}

TEST(Summary, JsonRoundTrip) {
  const RunSummary s = xbtest::table_summary();
  EXPECT_EQ(summary_from_json(summary_to_json(s)), s);
  EXPECT_EQ(summary_from_json(json::parse(emit_report(s, "json"))), s);
}

TEST(Summary, CsvHasOneRowPerCellPlusTotals) {
  const RunSummary s = xbtest::table_summary();
  const auto rows = parse_csv(summary_to_csv(s));
  ASSERT_FALSE(rows.empty());
  std::size_t model_rows = 0;
  for (const auto& r : rows) {
    if (!r.empty() && r[0].rfind("model-", 0) == 0) ++model_rows;
  }
  EXPECT_GE(model_rows, s.models.size() * s.domains.size());
}

TEST(Summary, ManifestMismatch) {
  DocumentReport rep;
  try {
    aggregate_run({{"stray__m__prompt", rep}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ManifestMismatch);
  }
}

TEST(Summary, UnknownFormat) {
  try {
    emit_report(RunSummary{}, "xlsx");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFormat);
    EXPECT_EQ(exit_code_for(e.code()), 1);
  }
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::Markdown);
}

TEST(Summary, EmptyRunRendersWithoutRows) {
  const RunSummary s;
  EXPECT_NO_THROW(summary_to_markdown(s));
  EXPECT_NO_THROW(summary_to_csv(s));
  EXPECT_EQ(summary_from_json(summary_to_json(s)), s);
}

TEST(Summary, InvalidAttemptsContributePositionsButNoPasses) {
  Cell c;
  DocumentReport bad;
  bad.counts.positions = 10;
  bad.counts.passed = 4;
  c.add(bad);
  EXPECT_EQ(c.positions, 10u);
  EXPECT_EQ(c.passed, 0u);
  EXPECT_EQ(c.acc_on_valid(), std::nullopt);
}

TEST(Summary, StructuredRowsGetTheirOwnLabel) {
  ManifestRow r;
  r.model = "m";
  r.mode = ExtractionMode::Structured;
  EXPECT_EQ(model_label(r), "m (structured)");
}

TEST(ScoreOutcome, TransportFailureIsInvalidAndStructural) {
  auto schema = parse_schema(xbtest::slurp(xbtest::samples_dir() / "schemas" / "credit.json"));
  const json gold = json::parse(xbtest::slurp(xbtest::samples_dir() / "gold" / "credit" / "acme_2019.json"));
  ExtractionOutcome o;
  o.transport_error = TransportFailure{"rejected", "A maximum of 100 PDF pages may be provided."};
  const auto patterns = PatternTable::load(fs::path(XB_SHARE_DIR) / "provider_patterns.json");
  auto r = score_outcome(o, schema, gold, RunConfig{}, nullptr, patterns, MetricRegistry::default_registry());
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(r.failure_mode, FailureMode::PdfPageLimit);
  EXPECT_EQ(r.counts.positions, 13u);
  EXPECT_EQ(r.counts.structural, 13u);
}
