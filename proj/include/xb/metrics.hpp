#pragma once

// Field-scoring metrics and the registry that maps metric ids to them.
//
// Built-in metric ids and their default parameters:
//
//   string_exact             -
//   string_case_insensitive  -
//   string_fuzzy             similarity_threshold = 0.8
//   string_semantic          pass_threshold = 0.7          (judge-backed)
//   number_exact             -
//   number_tolerance         tolerance = 0.001             (relative)
//   integer_exact            -
//   boolean_exact            -
//   array_llm                pass_threshold = 0.7, match_floor = 0.3, batch_size = 25
//   any_of                   -                             (anyOf positions)
//
// array_llm and any_of are scored by the traversal, not through the
// plugin call; they are registered so that schemas can name them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/judge.hpp"
#include "xb/unicode.hpp"
#include "xb/value_semantics.hpp"

namespace xb {

struct MetricSpec {
  std::string metric_id;
  json params = json::object();
  std::optional<std::string> additional_instructions;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return (it != params.end() && it->is_number()) ? it->get<double>() : fallback;
  }

  bool operator==(const MetricSpec&) const = default;
};

struct FieldScore {
  double score = 0.0;
  bool pass = false;
  std::string detail;
  /// Type mismatch, non-finite number or judge protocol failure.
  bool structural = false;
};

enum class ErrorClass { None, Omission, Hallucination, Mismatch, Structural, Skipped };

inline std::string_view to_string(ErrorClass e) {
  switch (e) {
    case ErrorClass::None: return "none";
    case ErrorClass::Omission: return "omission";
    case ErrorClass::Hallucination: return "hallucination";
    case ErrorClass::Mismatch: return "mismatch";
    case ErrorClass::Structural: return "structural";
    case ErrorClass::Skipped: return "skipped";
  }
  return "?";
}

inline ErrorClass error_class_from_string(std::string_view s) {
  for (auto e : {ErrorClass::None, ErrorClass::Omission, ErrorClass::Hallucination,
                 ErrorClass::Mismatch, ErrorClass::Structural, ErrorClass::Skipped}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::MalformedJson, "unknown error class '" + std::string(s) + "'");
}

/// Verdict for one field position.
struct FieldResult {
  std::string path;
  std::string metric_id;
  double score = 0.0;
  bool pass = false;
  ErrorClass error = ErrorClass::None;
  PairPolicy policy = PairPolicy::Compare;
  /// Free text, judge rationale, or an embedded array alignment.
  json detail;

  json to_json() const {
    return {{"metric", metric_id},   {"score", score},
            {"pass", pass},          {"error", to_string(error)},
            {"policy", to_string(policy)}, {"detail", detail}};
  }
};

using MetricFn =
    std::function<FieldScore(const MetricSpec&, const json& gold, const json& pred, Judge* judge)>;

/// A registered metric. `accepts` lists the schema value kinds the metric
/// may be attached to ("string", "number", "integer", "boolean", "array",
/// "choice", or "*"). `defaults` also declares the accepted parameter
/// names and their types.
struct MetricInfo {
  std::string id;
  std::set<std::string> accepts;
  json defaults = json::object();
  MetricFn fn;
  bool judge_backed = false;
  /// Scored by the traversal (array alignment, anyOf) rather than `fn`.
  bool structural_node = false;
};

// ---------------------------------------------------------------------------
// Deterministic primitives

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0u : 1u)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Edit distance over Unicode code points.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(unicode::decode_utf8(a), unicode::decode_utf8(b));
}

/// 1 - distance / max(length), with both-empty defined as 1. Lengths are
/// in code points.
inline double fuzzy_similarity(std::string_view a, std::string_view b) {
  auto ua = unicode::decode_utf8(a);
  auto ub = unicode::decode_utf8(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(ua, ub)) / static_cast<double>(longest);
}

/// Relative tolerance check with an absolute fallback when gold is zero.
/// Non-finite inputs never pass.
inline bool numeric_tolerance_check(double gold, double pred, double tolerance) {
  if (!std::isfinite(gold) || !std::isfinite(pred)) return false;
  if (gold == 0.0) return std::fabs(pred) <= tolerance;
  return std::fabs(pred - gold) / std::fabs(gold) <= tolerance;
}

/// Exact-string equality short-circuits; otherwise the judge scores the pair.
inline FieldScore semantic_equivalence(const std::string& gold, const std::string& pred,
                                       const std::string& instructions, Judge* judge,
                                       double pass_threshold) {
  if (gold == pred) return {1.0, true, "identical", false};
  if (judge == nullptr) {
    throw Error(ErrorCode::JudgeUnavailable, "string_semantic requires a judge");
  }
  try {
    JudgeVerdict v = judge->call(JudgeRequest::equivalence(gold, pred, instructions));
    return {v.score, v.score >= pass_threshold, v.rationale, false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::JudgeProtocol) throw;
    return {0.0, false, e.what(), true};
  }
}

namespace detail {

inline FieldScore type_mismatch(std::string_view expected, const json& gold, const json& pred) {
  return {0.0, false,
          "type mismatch: expected " + std::string(expected) + ", gold " + gold.type_name() +
              ", predicted " + pred.type_name(),
          true};
}

inline FieldScore verdict(bool ok, std::string detail = {}) {
  return {ok ? 1.0 : 0.0, ok, std::move(detail), false};
}

inline bool integral_value(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  double d = v.get<double>();
  return std::isfinite(d) && std::trunc(d) == d;
}

inline FieldScore string_exact(const MetricSpec&, const json& g, const json& p, Judge*) {
  if (!g.is_string() || !p.is_string()) return type_mismatch("string", g, p);
  return verdict(g.get_ref<const std::string&>() == p.get_ref<const std::string&>());
}

inline FieldScore string_case_insensitive(const MetricSpec&, const json& g, const json& p, Judge*) {
  if (!g.is_string() || !p.is_string()) return type_mismatch("string", g, p);
  return verdict(unicode::casefold(g.get_ref<const std::string&>()) ==
                 unicode::casefold(p.get_ref<const std::string&>()));
}

inline FieldScore string_fuzzy(const MetricSpec& spec, const json& g, const json& p, Judge*) {
  if (!g.is_string() || !p.is_string()) return type_mismatch("string", g, p);
  double sim = fuzzy_similarity(g.get_ref<const std::string&>(), p.get_ref<const std::string&>());
  double threshold = spec.param("similarity_threshold", 0.8);
  return {sim, sim >= threshold, "similarity " + std::to_string(sim), false};
}

inline FieldScore string_semantic(const MetricSpec& spec, const json& g, const json& p, Judge* judge) {
  if (!g.is_string() || !p.is_string()) return type_mismatch("string", g, p);
  return semantic_equivalence(g.get<std::string>(), p.get<std::string>(),
                              spec.additional_instructions.value_or(""), judge,
                              spec.param("pass_threshold", 0.7));
}

inline FieldScore number_exact(const MetricSpec&, const json& g, const json& p, Judge*) {
  if (!g.is_number() || !p.is_number()) return type_mismatch("number", g, p);
  if (g.is_number_integer() && p.is_number_integer()) {
    if (g.is_number_unsigned() || p.is_number_unsigned()) {
      return verdict(g == p);
    }
    return verdict(g.get<std::int64_t>() == p.get<std::int64_t>());
  }
  double gd = g.get<double>(), pd = p.get<double>();
  if (!std::isfinite(gd) || !std::isfinite(pd)) return {0.0, false, "non-finite number", true};
  return verdict(gd == pd);
}

inline FieldScore number_tolerance(const MetricSpec& spec, const json& g, const json& p, Judge*) {
  if (!g.is_number() || !p.is_number()) return type_mismatch("number", g, p);
  double gd = g.get<double>(), pd = p.get<double>();
  if (!std::isfinite(gd) || !std::isfinite(pd)) return {0.0, false, "non-finite number", true};
  return verdict(numeric_tolerance_check(gd, pd, spec.param("tolerance", 0.001)));
}

inline FieldScore integer_exact(const MetricSpec& spec, const json& g, const json& p, Judge* j) {
  if (!integral_value(g) || !integral_value(p)) return type_mismatch("integer", g, p);
  return number_exact(spec, g, p, j);
}

inline FieldScore boolean_exact(const MetricSpec&, const json& g, const json& p, Judge*) {
  if (!g.is_boolean() || !p.is_boolean()) return type_mismatch("boolean", g, p);
  return verdict(g.get<bool>() == p.get<bool>());
}

inline FieldScore json_equal(const MetricSpec&, const json& g, const json& p, Judge*) {
  return verdict(g == p);
}

inline void check_param(const std::string& metric, const std::string& key, const json& value,
                        const json& default_value) {
  auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::BadConfig, "parameter '" + key + "' of " + metric + " " + why);
  };
  if (default_value.is_number_integer()) {
    if (!value.is_number_integer() || value.get<std::int64_t>() < 1) bad("must be a positive integer");
    return;
  }
  if (default_value.is_number()) {
    if (!value.is_number()) bad("must be a number");
    double v = value.get<double>();
    if (!std::isfinite(v) || v < 0.0) bad("must be finite and non-negative");
    if (key.find("threshold") != std::string::npos || key.find("floor") != std::string::npos) {
      if (v > 1.0) bad("must lie in [0,1]");
    }
    return;
  }
  if (value.type() != default_value.type()) bad("has the wrong type");
}

}  // namespace detail

/// metric_id -> implementation. Registration is write-once per id.
class MetricRegistry {
 public:
  void add(MetricInfo info) {
    if (info.id.empty()) throw Error(ErrorCode::BadConfig, "metric id must be non-empty");
    if (metrics_.count(info.id) != 0) {
      throw Error(ErrorCode::BadConfig, "metric '" + info.id + "' is already registered");
    }
    std::string id = info.id;
    metrics_.emplace(std::move(id), std::move(info));
  }

  const MetricInfo* find(std::string_view id) const {
    auto it = metrics_.find(std::string(id));
    return it == metrics_.end() ? nullptr : &it->second;
  }

  const MetricInfo& at(std::string_view id) const {
    if (const auto* m = find(id)) return *m;
    throw Error(ErrorCode::UnknownMetric, "metric '" + std::string(id) + "' is not registered");
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : metrics_) out.push_back(id);
    return out;
  }

  /// Resolves a metric id plus explicit params into a full MetricSpec:
  /// defaults first, explicit params on top. Unknown parameter names and
  /// out-of-range values are BadConfig.
  MetricSpec make_spec(const std::string& id, const json& explicit_params = json::object()) const {
    const MetricInfo* info = find(id);
    if (info == nullptr) throw Error(ErrorCode::BadConfig, "unknown metric '" + id + "'");
    if (!explicit_params.is_object()) {
      throw Error(ErrorCode::BadConfig, "params of " + id + " must be an object");
    }
    MetricSpec spec{id, info->defaults, std::nullopt};
    for (const auto& [key, value] : explicit_params.items()) {
      auto def = info->defaults.find(key);
      if (def == info->defaults.end()) {
        throw Error(ErrorCode::BadConfig, "metric " + id + " has no parameter '" + key + "'");
      }
      detail::check_param(id, key, value, *def);
      spec.params[key] = value;
    }
    return spec;
  }

  /// The built-in presets. Run-level thresholds become the defaults of
  /// the threshold-bearing metrics.
  static MetricRegistry builtin(double pass_threshold = 0.7, double similarity_threshold = 0.8,
                                double match_floor = 0.3, std::int64_t batch_size = 25) {
    MetricRegistry r;
    r.add({"string_exact", {"string"}, json::object(), detail::string_exact});
    r.add({"string_case_insensitive", {"string"}, json::object(), detail::string_case_insensitive});
    r.add({"string_fuzzy", {"string"}, {{"similarity_threshold", similarity_threshold}},
           detail::string_fuzzy});
    r.add({"string_semantic", {"string"}, {{"pass_threshold", pass_threshold}},
           detail::string_semantic, true});
    r.add({"number_exact", {"number", "integer"}, json::object(), detail::number_exact});
    r.add({"number_tolerance", {"number", "integer"}, {{"tolerance", 0.001}},
           detail::number_tolerance});
    r.add({"integer_exact", {"integer", "number"}, json::object(), detail::integer_exact});
    r.add({"boolean_exact", {"boolean"}, json::object(), detail::boolean_exact});
    r.add({"array_llm",
           {"array"},
           {{"pass_threshold", pass_threshold}, {"match_floor", match_floor}, {"batch_size", batch_size}},
           detail::json_equal,
           false,
           true});
    r.add({"any_of", {"choice"}, json::object(), detail::json_equal, false, true});
    return r;
  }

  static const MetricRegistry& default_registry() {
    static const MetricRegistry r = builtin();
    return r;
  }

 private:
  std::map<std::string, MetricInfo, std::less<>> metrics_;
};

/// Resolves the (gold, predicted) state pair first; only Compare reaches
/// the metric body.
inline FieldResult evaluate_field(const MetricSpec& spec, const FieldState& gold,
                                  const FieldState& predicted, Judge* judge,
                                  const MetricRegistry& registry = MetricRegistry::default_registry(),
                                  GoldMissingPolicy missing_policy = GoldMissingPolicy::Hallucination) {
  const MetricInfo& info = registry.at(spec.metric_id);
  FieldResult r;
  r.metric_id = spec.metric_id;
  r.policy = classify_pair(gold, predicted, missing_policy);
  switch (r.policy) {
    case PairPolicy::AutoPass:
      r.score = 1.0, r.pass = true, r.error = ErrorClass::None;
      r.detail = "both empty";
      return r;
    case PairPolicy::Omission:
      r.error = ErrorClass::Omission;
      r.detail = "gold has a value, prediction is " + std::string(to_string(predicted.tag()));
      return r;
    case PairPolicy::Hallucination:
      r.error = ErrorClass::Hallucination;
      r.detail = "prediction has a value, gold is " + std::string(to_string(gold.tag()));
      return r;
    case PairPolicy::Skip:
      r.error = ErrorClass::Skipped;
      r.detail = "gold not annotated";
      return r;
    case PairPolicy::Compare:
      break;
  }
  FieldScore s = info.fn(spec, gold.value(), predicted.value(), judge);
  r.score = std::clamp(s.score, 0.0, 1.0);
  r.pass = s.pass && !s.structural;
  r.error = r.pass ? ErrorClass::None : (s.structural ? ErrorClass::Structural : ErrorClass::Mismatch);
  r.detail = s.detail;
  return r;
}

}  // namespace xb
