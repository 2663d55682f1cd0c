#include <gtest/gtest.h>

#include "support.hpp"

using namespace xb;

namespace {

ErrorCode parse_error_code(const std::string& text) {
  try {
    parse_schema(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "schema parsed: " << text;
  return ErrorCode::Io;
}

std::string parse_error_where(const std::string& text) {
  try {
    parse_schema(text);
  } catch (const Error& e) {
    return e.where();
  }
  return "<parsed>";
}

std::vector<std::string> displays(const NodePtr& ast) {
  std::vector<std::string> out;
  for (const auto& p : enumerate_field_positions(ast)) out.push_back(p.display());
  return out;
}

}  // namespace

TEST(ParseSchema, FieldPositionsInDocumentOrder) {
  auto ast = parse_schema(R"({
    "type": "object",
    "properties": {
      "zeta": {"type": "string"},
      "alpha": {"type": "object", "properties": {"b": {"type": "number"}, "a": {"type": "boolean"}}},
      "items": {"type": "array", "items": {"type": "object", "properties": {"x": {"type": "string"}}}},
      "choice": {"anyOf": [{"type": "string"}, {"type": "integer"}]}
    }
  })");
  EXPECT_EQ(displays(ast), (std::vector<std::string>{"/zeta", "/alpha/b", "/alpha/a", "/items[]", "/choice"}));
}

TEST(ParseSchema, DefaultMetricsByType) {
  auto ast = parse_schema(R"({"type":"object","properties":{
    "s":{"type":"string"},"n":{"type":"number"},"i":{"type":"integer"},"b":{"type":"boolean"},
    "a":{"type":"array","items":{"type":"string"}}}})");
  std::vector<std::string> metrics;
  for (const auto& p : enumerate_field_positions(ast)) metrics.push_back(p.node->metric.metric_id);
  EXPECT_EQ(metrics[0].rfind("string", 0), 0u);
  EXPECT_EQ(metrics[4], "array_llm");
}

TEST(ParseSchema, EvaluationConfigForms) {
  auto ast = parse_schema(R"({"type":"object","properties":{
    "a":{"type":"string","evaluation_config":"string_fuzzy"},
    "b":{"type":"number","evaluation_config":{"metric_id":"number_tolerance","params":{"tolerance":0.05}}},
    "c":{"type":"string","evaluation_config":"string_semantic","additional_instructions":"Ignore titles."}}})");
  const auto pos = enumerate_field_positions(ast);
  EXPECT_EQ(pos[0].node->metric.metric_id, "string_fuzzy");
  EXPECT_DOUBLE_EQ(pos[0].node->metric.param("similarity_threshold", 0.0), 0.8);
  EXPECT_DOUBLE_EQ(pos[1].node->metric.param("tolerance", 0.0), 0.05);
  ASSERT_TRUE(pos[2].node->metric.additional_instructions);
  EXPECT_EQ(*pos[2].node->metric.additional_instructions, "Ignore titles.");
}

TEST(ParseSchema, InternalReferencesAreInlined) {
  auto ast = parse_schema(R"({"type":"object","$defs":{"money":{"type":"number","evaluation_config":"number_exact"}},
    "properties":{"a":{"$ref":"#/$defs/money"},"b":{"$ref":"#/$defs/money","evaluation_config":"number_tolerance"}}})");
  const auto pos = enumerate_field_positions(ast);
  ASSERT_EQ(pos.size(), 2u);
  EXPECT_EQ(pos[0].node->metric.metric_id, "number_exact");
  EXPECT_EQ(pos[1].node->metric.metric_id, "number_tolerance");
}

TEST(ParseSchema, ReferenceCycleRejected) {
  EXPECT_EQ(parse_error_code(R"({"type":"object","$defs":{"n":{"type":"object","properties":{"next":{"$ref":"#/$defs/n"}}}},
    "properties":{"head":{"$ref":"#/$defs/n"}}})"),
            ErrorCode::CyclicReference);
}

TEST(ParseSchema, UnsupportedConstructsCarryAPointer) {
  EXPECT_EQ(parse_error_code(R"({"type":"object","properties":{"a":{"type":"string","pattern":"^x"}}})"),
            ErrorCode::UnsupportedConstruct);
  EXPECT_EQ(parse_error_where(R"({"type":"object","properties":{"a":{"type":"string","pattern":"^x"}}})"),
            "/properties/a/pattern");
  EXPECT_EQ(parse_error_code(R"({"type":"object","properties":{"a":{"$ref":"other.json#/x"}}})"),
            ErrorCode::UnsupportedConstruct);
  EXPECT_EQ(parse_error_code(R"({"type":"object","properties":{"a":{"oneOf":[{"type":"string"}]}}})"),
            ErrorCode::UnsupportedConstruct);
}

TEST(ParseSchema, MetricKindMismatchIsBadConfig) {
  EXPECT_EQ(parse_error_code(R"({"type":"object","properties":{"a":{"type":"boolean","evaluation_config":"string_fuzzy"}}})"),
            ErrorCode::BadConfig);
  EXPECT_EQ(parse_error_code(R"({"type":"object","properties":{"a":{"type":"string","evaluation_config":"no_such"}}})"),
            ErrorCode::BadConfig);
  EXPECT_EQ(parse_error_code(R"({"type":"object","evaluation_config":"string_exact","properties":{}})"),
            ErrorCode::BadConfig);
}

TEST(ParseSchema, MalformedText) { EXPECT_EQ(parse_error_code("{\"type\": "), ErrorCode::MalformedJson); }

TEST(ParseSchema, NullableTypeCollapses) {
  auto ast = parse_schema(R"({"type":"object","properties":{
    "a":{"type":["string","null"]},"b":{"anyOf":[{"type":"number"},{"type":"null"}]}}})");
  const auto pos = enumerate_field_positions(ast);
  EXPECT_EQ(pos[0].node->kind, NodeKind::Primitive);
  EXPECT_EQ(pos[1].node->kind, NodeKind::Primitive);
  EXPECT_EQ(pos[1].node->primitive, PrimitiveKind::Number);
}

TEST(ParseSchema, SerializeRoundTripKeepsPositionsAndMetrics) {
  for (const auto& c : xbtest::sample_cases()) {
    auto ast = parse_schema(xbtest::slurp(c.schema));
    auto again = parse_schema(serialize_schema(*ast));
    const auto a = enumerate_field_positions(ast), b = enumerate_field_positions(again);
    ASSERT_EQ(a.size(), b.size()) << c.schema;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].display(), b[i].display());
      EXPECT_EQ(a[i].node->metric.metric_id, b[i].node->metric.metric_id);
      EXPECT_EQ(a[i].node->metric.params, b[i].node->metric.params);
    }
  }
}

TEST(ParseSchema, SyntheticSchemaHasRequestedBreadth) {
  for (std::size_t n : {1u, 12u, 13u, 16u, 31u, 369u}) {
    EXPECT_EQ(enumerate_field_positions(parse_schema(xbtest::synthetic_schema(n))).size(), n);
  }
}

TEST(ValidateInstance, Violations) {
  auto ast = parse_schema(R"({"type":"object","required":["id"],"additionalProperties":false,"properties":{
    "id":{"type":"integer","minimum":1},
    "kind":{"type":"string","enum":["a","b"]},
    "tags":{"type":"array","items":{"type":"string"}}}})");
  EXPECT_TRUE(validate_instance(*ast, json{{"id", 3}, {"kind", "a"}, {"tags", {"x"}}}).conforming);
  EXPECT_TRUE(validate_instance(*ast, json{{"id", 3}, {"kind", nullptr}}).conforming);

  auto first_kind = [&](const json& doc) {
    auto r = validate_instance(*ast, doc);
    EXPECT_FALSE(r.conforming);
    return r.violations.empty() ? ViolationKind::TypeMismatch : r.violations.front().kind;
  };
  EXPECT_EQ(first_kind(json::object()), ViolationKind::MissingRequired);
  EXPECT_EQ(first_kind(json{{"id", 0}}), ViolationKind::BelowMinimum);
  EXPECT_EQ(first_kind(json{{"id", 1}, {"kind", "c"}}), ViolationKind::EnumViolation);
  EXPECT_EQ(first_kind(json{{"id", 1}, {"extra", 1}}), ViolationKind::UnexpectedProperty);
  EXPECT_EQ(first_kind(json{{"id", 1.5}}), ViolationKind::TypeMismatch);
  EXPECT_EQ(first_kind(json{{"id", 1}, {"tags", {1}}}), ViolationKind::TypeMismatch);

  auto r = validate_instance(*ast, json{{"id", 1}, {"tags", {"ok", 2}}});
  ASSERT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations.front().pointer, "/tags/1");
}

TEST(ValidateInstance, RandomInstancesConform) {
  std::mt19937 rng(11);
  for (const auto& c : xbtest::sample_cases()) {
    auto ast = parse_schema(xbtest::slurp(c.schema));
    for (int i = 0; i < 50; ++i) {
      json doc = xbtest::random_instance(*ast, rng, 0.2);
      EXPECT_TRUE(validate_instance(*ast, doc).conforming) << doc.dump();
    }
  }
}

TEST(ValueSemantics, FieldPathPointerEscapes) {
  EXPECT_EQ((FieldPath{{"a/b", "c~d"}}.pointer()), "/a~1b/c~0d");
  EXPECT_EQ(FieldPath{}.pointer(), "");
}

TEST(ValueSemantics, ReadValueTriState) {
  const json doc = {{"a", {{"b", 1}, {"n", nullptr}}}, {"z", nullptr}, {"s", "x"}};
  EXPECT_EQ(read_value(doc, FieldPath{{"a", "b"}}).state.tag(), ValueTag::Present);
  EXPECT_EQ(read_value(doc, FieldPath{{"a", "n"}}).state.tag(), ValueTag::ExplicitNull);
  EXPECT_EQ(read_value(doc, FieldPath{{"a", "q"}}).state.tag(), ValueTag::Missing);
  EXPECT_EQ(read_value(doc, FieldPath{{"z", "q"}}).state.tag(), ValueTag::Missing);
  auto clash = read_value(doc, FieldPath{{"s", "q"}});
  EXPECT_EQ(clash.state.tag(), ValueTag::Missing);
  ASSERT_TRUE(clash.type_clash);
  EXPECT_EQ(*clash.type_clash, "/s");
}

TEST(ValueSemantics, PolicyMatrixAllKindsDefaultPolicy) {
  for (const auto& f : xbtest::policy_matrix_failures(GoldMissingPolicy::Hallucination)) ADD_FAILURE() << f;
}

TEST(ValueSemantics, PolicyMatrixAllKindsSkipPolicy) {
  for (const auto& f : xbtest::policy_matrix_failures(GoldMissingPolicy::Skip)) ADD_FAILURE() << f;
}
