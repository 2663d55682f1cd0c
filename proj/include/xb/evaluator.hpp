#pragma once

// Dual traversal of a schema AST with a gold and a predicted instance.
//
// Each field position is evaluated locally from its node's metric and the
// paired values; independent positions run on a worker pool and results
// are merged by position index, so reports do not depend on parallelism.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/alignment.hpp"
#include "xb/error.hpp"
#include "xb/failure.hpp"
#include "xb/judge.hpp"
#include "xb/metrics.hpp"
#include "xb/parallel.hpp"
#include "xb/schema.hpp"
#include "xb/value_semantics.hpp"

namespace xb {

/// How to reach a judge. `type` is "none", "mock" or "http".
struct JudgeSettings {
  std::string type = "none";
  JudgeConfig config;
  /// Environment variable holding the bearer token for "http".
  std::string api_key_env;
};

struct RunConfig {
  double pass_threshold = 0.7;
  double similarity_threshold = 0.8;
  GoldMissingPolicy gold_missing_policy = GoldMissingPolicy::Hallucination;
  MatcherKind matcher = MatcherKind::Deterministic;
  double match_floor = 0.3;
  std::size_t batch_size = 25;
  std::size_t parallelism = 1;
  /// Strip trailing commas before parsing. Reports become non-benchmark.
  bool repair = false;
  JudgeSettings judge;

  /// Metric registry whose defaults carry this run's thresholds. Schemas
  /// should be parsed with it.
  MetricRegistry registry() const {
    return MetricRegistry::builtin(pass_threshold, similarity_threshold, match_floor,
                                   static_cast<std::int64_t>(batch_size));
  }

  static RunConfig from_json(const json& j) {
    RunConfig c;
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "run config must be a JSON object");
    auto unit = [&](const char* key, double& out) {
      if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number() || it->get<double>() < 0.0 || it->get<double>() > 1.0) {
          throw Error(ErrorCode::BadConfig, std::string(key) + " must be a number in [0,1]");
        }
        out = it->get<double>();
      }
    };
    auto count = [&](const char* key, std::size_t& out) {
      if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number_unsigned() || it->get<std::size_t>() == 0) {
          throw Error(ErrorCode::BadConfig, std::string(key) + " must be a positive integer");
        }
        out = it->get<std::size_t>();
      }
    };
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known = {"pass_threshold", "similarity_threshold", "gold_missing_policy",
                                                  "matcher", "match_floor", "batch_size", "parallelism",
                                                  "repair", "judge"};
      if (!known.count(key)) throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
    }
    unit("pass_threshold", c.pass_threshold);
    unit("similarity_threshold", c.similarity_threshold);
    unit("match_floor", c.match_floor);
    count("batch_size", c.batch_size);
    count("parallelism", c.parallelism);
    if (auto it = j.find("gold_missing_policy"); it != j.end()) {
      if (*it == "hallucination") {
        c.gold_missing_policy = GoldMissingPolicy::Hallucination;
      } else if (*it == "skip") {
        c.gold_missing_policy = GoldMissingPolicy::Skip;
      } else {
        throw Error(ErrorCode::BadConfig, "gold_missing_policy must be 'hallucination' or 'skip'");
      }
    }
    if (auto it = j.find("matcher"); it != j.end()) {
      if (*it == "deterministic") {
        c.matcher = MatcherKind::Deterministic;
      } else if (*it == "judge") {
        c.matcher = MatcherKind::Judge;
      } else {
        throw Error(ErrorCode::BadConfig, "matcher must be 'deterministic' or 'judge'");
      }
    }
    if (auto it = j.find("repair"); it != j.end()) {
      if (!it->is_boolean()) throw Error(ErrorCode::BadConfig, "repair must be a boolean");
      c.repair = it->get<bool>();
    }
    if (auto it = j.find("judge"); it != j.end()) {
      const json& jj = *it;
      if (!jj.is_object()) throw Error(ErrorCode::BadConfig, "judge must be an object");
      c.judge.type = jj.value("type", std::string("none"));
      if (c.judge.type != "none" && c.judge.type != "mock" && c.judge.type != "http") {
        throw Error(ErrorCode::BadConfig, "judge.type must be none, mock or http");
      }
      c.judge.config.endpoint = jj.value("endpoint", std::string());
      c.judge.config.model = jj.value("model", std::string());
      c.judge.api_key_env = jj.value("api_key_env", std::string());
      c.judge.config.timeout = std::chrono::milliseconds(
          static_cast<long long>(jj.value("timeout_s", 60.0) * 1000.0));
      c.judge.config.max_in_flight = jj.value("max_in_flight", std::size_t{4});
      c.judge.config.max_retries = jj.value("max_retries", 2);
      if (c.judge.type == "http" && (c.judge.config.endpoint.empty() || c.judge.config.model.empty())) {
        throw Error(ErrorCode::BadConfig, "http judge needs endpoint and model");
      }
    }
    return c;
  }
};

struct Counts {
  std::size_t positions = 0;
  /// Includes auto-passed positions.
  std::size_t passed = 0;
  std::size_t auto_passed = 0;
  std::size_t omissions = 0;
  std::size_t hallucinations = 0;
  std::size_t mismatches = 0;
  std::size_t structural = 0;
  std::size_t skipped = 0;

  bool operator==(const Counts&) const = default;

  json to_json() const {
    return {{"positions", positions},   {"passed", passed},         {"auto_passed", auto_passed},
            {"omissions", omissions},   {"hallucinations", hallucinations},
            {"mismatches", mismatches}, {"structural", structural}, {"skipped", skipped}};
  }

  static Counts from_json(const json& j) {
    Counts c;
    c.positions = j.at("positions").get<std::size_t>();
    c.passed = j.at("passed").get<std::size_t>();
    c.auto_passed = j.value("auto_passed", std::size_t{0});
    c.omissions = j.value("omissions", std::size_t{0});
    c.hallucinations = j.value("hallucinations", std::size_t{0});
    c.mismatches = j.value("mismatches", std::size_t{0});
    c.structural = j.value("structural", std::size_t{0});
    c.skipped = j.value("skipped", std::size_t{0});
    return c;
  }
};

struct DocumentReport {
  /// Parseable and schema-conforming.
  bool valid = false;
  /// False when the prediction was repaired before scoring.
  bool benchmark = true;
  std::optional<FailureMode> failure_mode;
  /// "ok", "parse_error" or "nonconforming".
  std::string validity_kind = "ok";
  ValidityReport validity;
  std::string parse_error;
  std::vector<FieldResult> field_results;
  Counts counts;

  double pass_rate() const {
    return counts.positions == 0 ? 1.0 : static_cast<double>(counts.passed) / static_cast<double>(counts.positions);
  }

  /// Canonical form: sorted keys, stable number formatting.
  json to_json() const {
    json fields = json::object();
    for (const auto& r : field_results) fields[r.path] = r.to_json();
    json validity_json = {{"kind", validity_kind}};
    if (validity_kind == "parse_error") validity_json["message"] = parse_error;
    if (validity_kind == "nonconforming") validity_json["violations"] = validity.to_json()["violations"];
    return {{"valid", valid},
            {"benchmark", benchmark},
            {"failure_mode", failure_mode ? json(std::string(to_string(*failure_mode))) : json(nullptr)},
            {"validity", validity_json},
            {"counts", counts.to_json()},
            {"pass_rate", pass_rate()},
            {"fields", fields}};
  }

  std::string canonical() const { return to_json().dump(2); }

  static DocumentReport from_json(const json& j) {
    DocumentReport r;
    r.valid = j.at("valid").get<bool>();
    r.benchmark = j.value("benchmark", true);
    if (const auto& fm = j.at("failure_mode"); !fm.is_null()) r.failure_mode = failure_mode_from_string(fm.get<std::string>());
    r.validity_kind = j.at("validity").value("kind", std::string("ok"));
    r.parse_error = j.at("validity").value("message", std::string());
    r.counts = Counts::from_json(j.at("counts"));
    for (const auto& [path, f] : j.at("fields").items()) {
      FieldResult fr;
      fr.path = path;
      fr.metric_id = f.at("metric").get<std::string>();
      fr.score = f.at("score").get<double>();
      fr.pass = f.at("pass").get<bool>();
      fr.error = error_class_from_string(f.at("error").get<std::string>());
      fr.detail = f.value("detail", json());
      r.field_results.push_back(std::move(fr));
    }
    return r;
  }
};

/// The visitor: evaluates a node against paired states and returns one
/// FieldResult per field position beneath it.
class Evaluator {
 public:
  Evaluator(const RunConfig& config, Judge* judge,
            const MetricRegistry& registry = MetricRegistry::default_registry())
      : config_(config), judge_(judge), registry_(registry) {}

  std::vector<FieldResult> evaluate_node(const NodePtr& node, const FieldState& gold, const FieldState& pred,
                                         const std::string& path, bool pred_clash = false) const {
    std::vector<FieldResult> out;
    visit(node, gold, pred, path, pred_clash, out);
    return out;
  }

 private:
  void visit(const NodePtr& node, const FieldState& gold, const FieldState& pred, const std::string& path,
             bool pred_clash, std::vector<FieldResult>& out) const {
    if (node->kind == NodeKind::Object) {
      for (const auto& p : node->properties) {
        const std::string child_path = path + FieldPath{{p.name}}.pointer();
        auto g = child_state(gold, p.name);
        auto q = child_state(pred, p.name);
        visit(p.node, g.state, q.state, child_path, pred_clash || q.type_clash.has_value(), out);
      }
      return;
    }
    if (pred_clash) {
      FieldResult r;
      r.path = path;
      r.metric_id = node->metric.metric_id;
      r.error = ErrorClass::Structural;
      r.detail = "predicted value has the wrong shape above this field";
      out.push_back(std::move(r));
      return;
    }
    switch (node->kind) {
      case NodeKind::Array: out.push_back(evaluate_array(node, gold, pred, path)); break;
      case NodeKind::Choice: out.push_back(evaluate_choice(node, gold, pred, path)); break;
      default: {
        FieldResult r = evaluate_field(node->metric, gold, pred, judge_, registry_, config_.gold_missing_policy);
        r.path = path;
        out.push_back(std::move(r));
      }
    }
  }

  /// Result for non-Compare policies, shared by arrays and anyOf nodes.
  static std::optional<FieldResult> settle_policy(PairPolicy policy, const std::string& path,
                                                  const std::string& metric) {
    FieldResult r;
    r.path = path;
    r.metric_id = metric;
    r.policy = policy;
    switch (policy) {
      case PairPolicy::Compare: return std::nullopt;
      case PairPolicy::AutoPass: r.score = 1.0, r.pass = true, r.detail = "both empty"; break;
      case PairPolicy::Omission: r.error = ErrorClass::Omission; break;
      case PairPolicy::Hallucination: r.error = ErrorClass::Hallucination; break;
      case PairPolicy::Skip: r.error = ErrorClass::Skipped; break;
    }
    return r;
  }

  // An empty list conveys the same thing as null at an array position.
  static FieldState as_array_state(const FieldState& s) {
    if (s.is_present() && s.value().is_array() && s.value().empty()) return FieldState::explicit_null();
    return s;
  }

  FieldResult evaluate_array(const NodePtr& node, const FieldState& gold_in, const FieldState& pred_in,
                             const std::string& path) const {
    const FieldState gold = as_array_state(gold_in), pred = as_array_state(pred_in);
    const PairPolicy policy = classify_pair(gold, pred, config_.gold_missing_policy);
    if (auto settled = settle_policy(policy, path, node->metric.metric_id)) return *settled;

    FieldResult r;
    r.path = path;
    r.metric_id = node->metric.metric_id;
    r.policy = policy;
    if (!gold.value().is_array() || !pred.value().is_array()) {
      r.error = ErrorClass::Structural;
      r.detail = "expected arrays on both sides";
      return r;
    }
    AlignOptions options;
    options.matcher = config_.matcher;
    options.match_floor = node->metric.param("match_floor", config_.match_floor);
    options.batch_size = static_cast<std::size_t>(node->metric.param("batch_size", static_cast<double>(config_.batch_size)));
    options.pass_threshold = node->metric.param("pass_threshold", config_.pass_threshold);
    options.judge = judge_;
    const NodePtr items = node->items;
    ArrayAlignment a = align_arrays(items, gold.value(), pred.value(), options,
                                    [&](const json& g, const json& p) {
                                      return evaluate_node(items, FieldState::present(g), FieldState::present(p), "");
                                    });
    r.score = a.f1;
    r.pass = a.f1 >= options.pass_threshold;
    r.error = r.pass ? ErrorClass::None : ErrorClass::Mismatch;
    r.detail = a.to_json();
    return r;
  }

  FieldResult evaluate_choice(const NodePtr& node, const FieldState& gold, const FieldState& pred,
                              const std::string& path) const {
    const PairPolicy policy = classify_pair(gold, pred, config_.gold_missing_policy);
    if (auto settled = settle_policy(policy, path, node->metric.metric_id)) return *settled;
    FieldResult r;
    r.path = path;
    r.metric_id = node->metric.metric_id;
    r.policy = policy;
    for (std::size_t i = 0; i < node->branches.size(); ++i) {
      const NodePtr& branch = node->branches[i];
      if (!validate_instance(*branch, pred.value()).conforming) continue;
      auto sub = evaluate_node(branch, gold, pred, path);
      double sum = 0.0;
      bool all_pass = true, structural = false;
      json fields = json::object();
      for (const auto& s : sub) {
        sum += s.score;
        all_pass = all_pass && s.pass;
        structural = structural || s.error == ErrorClass::Structural;
        fields[s.path.empty() ? "/" : s.path] = s.to_json();
      }
      r.score = sub.empty() ? 1.0 : sum / static_cast<double>(sub.size());
      r.pass = all_pass;
      r.error = all_pass ? ErrorClass::None : (structural ? ErrorClass::Structural : ErrorClass::Mismatch);
      r.detail = {{"branch", i}, {"fields", fields}};
      return r;
    }
    r.error = ErrorClass::Structural;
    r.detail = "predicted value matches no anyOf branch";
    return r;
  }

  const RunConfig& config_;
  Judge* judge_;
  const MetricRegistry& registry_;
};

inline std::vector<FieldResult> evaluate_node(const NodePtr& node, const FieldState& gold, const FieldState& pred,
                                              const RunConfig& config, Judge* judge = nullptr) {
  return Evaluator(config, judge).evaluate_node(node, gold, pred, "");
}

inline void tally(Counts& c, const FieldResult& r) {
  if (r.pass) {
    ++c.passed;
    if (r.policy == PairPolicy::AutoPass) ++c.auto_passed;
    return;
  }
  switch (r.error) {
    case ErrorClass::Omission: ++c.omissions; break;
    case ErrorClass::Hallucination: ++c.hallucinations; break;
    case ErrorClass::Skipped: ++c.skipped; break;
    case ErrorClass::Structural: ++c.structural; break;
    case ErrorClass::Mismatch:
    case ErrorClass::None: ++c.mismatches; break;
  }
}

/// Scores an already-parsed prediction. Gold must conform to the schema.
inline DocumentReport evaluate_parsed(const NodePtr& schema, const json& gold, const json& predicted,
                                      const RunConfig& config, Judge* judge = nullptr,
                                      const MetricRegistry& registry = MetricRegistry::default_registry()) {
  if (auto gv = validate_instance(*schema, gold); !gv.conforming) {
    const auto& v = gv.violations.front();
    throw Error(ErrorCode::GoldInvalid, std::string(to_string(v.kind)) + ": " + v.message, v.pointer);
  }
  const auto positions = enumerate_field_positions(schema);
  DocumentReport report;
  report.counts.positions = positions.size();
  report.validity = validate_instance(*schema, predicted);
  if (!report.validity.conforming) {
    report.valid = false;
    report.validity_kind = "nonconforming";
    report.failure_mode = FailureMode::Other;
    report.counts.structural = positions.size();
    return report;
  }
  report.valid = true;
  Evaluator evaluator(config, judge, registry);
  std::vector<FieldResult> results(positions.size());
  parallel_for(positions.size(), config.parallelism, [&](std::size_t i) {
    const auto& pos = positions[i];
    ReadResult g = read_value(gold, pos.path);
    ReadResult p = read_value(predicted, pos.path);
    auto r = evaluator.evaluate_node(pos.node, g.state, p.state, pos.path.pointer(), p.type_clash.has_value());
    results[i] = std::move(r.front());
    results[i].path = pos.display();
  });
  for (const auto& r : results) tally(report.counts, r);
  report.field_results = std::move(results);
  return report;
}

/// Parses the raw prediction and scores it. Parse or conformance failures
/// yield valid=false with every position counted and zero passes.
inline DocumentReport evaluate_document(const NodePtr& schema, const json& gold, std::string_view predicted_raw,
                                        const RunConfig& config, Judge* judge = nullptr,
                                        const MetricRegistry& registry = MetricRegistry::default_registry()) {
  std::string text(predicted_raw);
  if (config.repair) text = repair_trailing_commas(text);
  if (auto mode = classify_syntax(text)) {
    if (auto gv = validate_instance(*schema, gold); !gv.conforming) {
      const auto& v = gv.violations.front();
      throw Error(ErrorCode::GoldInvalid, std::string(to_string(v.kind)) + ": " + v.message, v.pointer);
    }
    DocumentReport report;
    report.benchmark = !config.repair;
    report.valid = false;
    report.failure_mode = *mode;
    report.validity_kind = "parse_error";
    report.validity.conforming = false;
    try {
      [[maybe_unused]] auto parsed = json::parse(text);
    } catch (const json::parse_error& e) {
      report.parse_error = e.what();
    }
    if (*mode == FailureMode::EmptyResponse) report.parse_error = "empty response";
    report.counts.positions = enumerate_field_positions(schema).size();
    report.counts.structural = report.counts.positions;
    return report;
  }
  DocumentReport report = evaluate_parsed(schema, gold, json::parse(text), config, judge, registry);
  report.benchmark = !config.repair;
  return report;
}

}  // namespace xb
