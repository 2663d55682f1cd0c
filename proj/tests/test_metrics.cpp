#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace xb;
using xbtest::levenshtein_recursive;

TEST(Levenshtein, MatchesRecursiveDefinitionOnShortStrings) {
  const auto strings = xbtest::all_strings("abc", 4);
  for (const auto& a : strings) {
    for (const auto& b : strings) {
      ASSERT_EQ(levenshtein(a, b), levenshtein_recursive(a, b)) << a << " / " << b;
    }
  }
}

TEST(Levenshtein, CountsCodePointsNotBytes) {
  EXPECT_EQ(levenshtein("caf\xC3\xA9", "cafe"), 1u);
  EXPECT_EQ(levenshtein("\xE6\x97\xA5\xE6\x9C\xAC", "\xE6\x97\xA5"), 1u);
  EXPECT_EQ(levenshtein("", "abc"), 3u);
}

TEST(Levenshtein, IsAMetricOnRandomStrings) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> len(0, 12), ch('a', 'e');
  auto draw = [&] {
    std::string s(static_cast<std::size_t>(len(rng)), 'a');
    for (auto& c : s) c = static_cast<char>(ch(rng));
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    const std::string a = draw(), b = draw(), c = draw();
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
    EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
    EXPECT_EQ(levenshtein(a, b) == 0, a == b);
  }
}

TEST(FuzzySimilarity, CorporateSuffixFallsBelowThreshold) {
  const double s = fuzzy_similarity("ABC Corp", "ABC Corporation");
  EXPECT_GE(s, 0.530);
  EXPECT_LE(s, 0.537);
  MetricSpec spec = MetricRegistry::default_registry().make_spec("string_fuzzy");
  EXPECT_FALSE(detail::string_fuzzy(spec, "ABC Corp", "ABC Corporation", nullptr).pass);
}

TEST(FuzzySimilarity, ThresholdIsInclusive) {
  EXPECT_DOUBLE_EQ(fuzzy_similarity("abcde", "abcdX"), 0.8);
  MetricSpec spec = MetricRegistry::default_registry().make_spec("string_fuzzy");
  EXPECT_TRUE(detail::string_fuzzy(spec, "abcde", "abcdX", nullptr).pass);
}

TEST(FuzzySimilarity, BothEmptyIsIdentical) { EXPECT_DOUBLE_EQ(fuzzy_similarity("", ""), 1.0); }

TEST(NumberTolerance, RelativeBand) {
  EXPECT_TRUE(numeric_tolerance_check(1000, 1000.5, 0.001));
  EXPECT_TRUE(numeric_tolerance_check(1000, 1001, 0.001));
  EXPECT_FALSE(numeric_tolerance_check(1000, 1002, 0.001));
  EXPECT_TRUE(numeric_tolerance_check(-1000, -1000.5, 0.001));
}

TEST(NumberTolerance, ZeroGoldUsesAbsoluteBand) {
  EXPECT_TRUE(numeric_tolerance_check(0, 0.0005, 0.001));
  EXPECT_FALSE(numeric_tolerance_check(0, 0.01, 0.001));
}

TEST(NumberTolerance, NonFiniteNeverPasses) {
  EXPECT_FALSE(numeric_tolerance_check(1.0, std::nan(""), 0.5));
  EXPECT_FALSE(numeric_tolerance_check(1.0, INFINITY, 0.5));
}

TEST(Metrics, ExactAndCaseInsensitive) {
  const auto& reg = MetricRegistry::default_registry();
  EXPECT_TRUE(detail::string_exact(reg.make_spec("string_exact"), "USD", "USD", nullptr).pass);
  EXPECT_FALSE(detail::string_exact(reg.make_spec("string_exact"), "USD", "usd", nullptr).pass);
  EXPECT_TRUE(detail::string_case_insensitive(reg.make_spec("string_case_insensitive"), "Stra\xC3\x9F" "e",
                                              "STRA\xC3\x9F" "E", nullptr)
                  .pass);
  EXPECT_TRUE(detail::string_case_insensitive(reg.make_spec("string_case_insensitive"), "\xCE\xA3\xCE\xB1",
                                              "\xCF\x83\xCE\xB1", nullptr)
                  .pass);
}

TEST(Metrics, TypeMismatchIsStructural) {
  const auto& reg = MetricRegistry::default_registry();
  auto s = detail::number_exact(reg.make_spec("number_exact"), 12, "12", nullptr);
  EXPECT_FALSE(s.pass);
  EXPECT_TRUE(s.structural);
  auto b = detail::boolean_exact(reg.make_spec("boolean_exact"), true, 1, nullptr);
  EXPECT_TRUE(b.structural);
}

TEST(Metrics, IntegerExactAcceptsIntegralFloats) {
  const auto& reg = MetricRegistry::default_registry();
  EXPECT_TRUE(detail::integer_exact(reg.make_spec("integer_exact"), 7, 7.0, nullptr).pass);
  EXPECT_FALSE(detail::integer_exact(reg.make_spec("integer_exact"), 7, 7.5, nullptr).pass);
}

TEST(Metrics, NumberToleranceDefaultIsOneTenthPercent) {
  const auto spec = MetricRegistry::default_registry().make_spec("number_tolerance");
  EXPECT_DOUBLE_EQ(spec.param("tolerance", 0.0), 0.001);
}

TEST(Metrics, SemanticNeedsAJudgeUnlessIdentical) {
  const auto spec = MetricRegistry::default_registry().make_spec("string_semantic");
  EXPECT_TRUE(detail::string_semantic(spec, "New York", "New York", nullptr).pass);
  try {
    detail::string_semantic(spec, "New York", "the laws of New York", nullptr);
    FAIL() << "expected JudgeUnavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JudgeUnavailable);
  }
}

TEST(Metrics, SemanticScoreComparedAgainstPassThreshold) {
  auto judge = std::make_unique<Judge>(std::make_shared<xbtest::ScriptedBackend>(
      std::vector<std::string>{R"({"score": 0.69, "rationale": "close"})"}));
  const auto spec = MetricRegistry::default_registry().make_spec("string_semantic");
  auto s = detail::string_semantic(spec, "a", "b", judge.get());
  EXPECT_DOUBLE_EQ(s.score, 0.69);
  EXPECT_FALSE(s.pass);

  auto judge2 = std::make_unique<Judge>(
      std::make_shared<xbtest::ScriptedBackend>(std::vector<std::string>{R"({"score": 0.7})"}));
  EXPECT_TRUE(detail::string_semantic(spec, "a", "b", judge2.get()).pass);
}

TEST(Registry, PresetsAreRegistered) {
  const auto& reg = MetricRegistry::default_registry();
  for (const char* id : {"string_exact", "string_case_insensitive", "string_fuzzy", "string_semantic", "number_exact",
                         "number_tolerance", "integer_exact", "boolean_exact", "array_llm"}) {
    EXPECT_NE(reg.find(id), nullptr) << id;
  }
}

TEST(Registry, DefaultsAndErrors) {
  const auto& reg = MetricRegistry::default_registry();
  EXPECT_DOUBLE_EQ(reg.make_spec("string_fuzzy").param("similarity_threshold", 0.0), 0.8);
  EXPECT_DOUBLE_EQ(reg.make_spec("string_semantic").param("pass_threshold", 0.0), 0.7);
  try {
    reg.at("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownMetric);
  }
  try {
    reg.make_spec("string_fuzzy", {{"similarity_threshold", 1.5}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
  try {
    reg.make_spec("string_fuzzy", {{"colour", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
}

TEST(Registry, RegistrationIsWriteOnce) {
  MetricRegistry reg = MetricRegistry::builtin();
  MetricInfo info = *reg.find("string_exact");
  EXPECT_THROW(reg.add(info), Error);
  info.id = "custom_exact";
  reg.add(info);
  EXPECT_NE(reg.find("custom_exact"), nullptr);
}

TEST(Unicode, DecodeEncodeRoundTrip) {
  const std::string s = "na\xC3\xAFve \xF0\x9F\x98\x80 \xE2\x82\xAC";
  EXPECT_EQ(unicode::encode_utf8(unicode::decode_utf8(s)), s);
}

TEST(Unicode, InvalidBytesStayDistinct) {
  EXPECT_NE(unicode::decode_utf8("\xFF"), unicode::decode_utf8("\xFE"));
  EXPECT_EQ(levenshtein("a\xFF", "a\xFE"), 1u);
}
