// xb: command-line front end for schema validation, document evaluation,
// extraction runs, run scoring and complexity analysis.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xb/http_backend.hpp"
#include "xb/xb.hpp"

namespace fs = std::filesystem;
using xb::Error;
using xb::ErrorCode;
using xb::json;

namespace {

json read_json_file(const fs::path& path) {
  const std::string text = xb::read_text_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, "not valid JSON", path.string());
  return j;
}

xb::RunConfig load_config(const std::string& path) {
  return path.empty() ? xb::RunConfig{} : xb::RunConfig::from_json(read_json_file(path));
}

xb::PatternTable load_patterns(const std::string& path) {
  return xb::PatternTable::load(path.empty() ? fs::path(XB_SHARE_DIR) / "provider_patterns.json" : fs::path(path));
}

int cmd_validate(const std::string& schema_path) {
  const xb::NodePtr ast = xb::parse_schema(xb::read_text_file(schema_path));
  json positions = json::array();
  for (const auto& pos : xb::enumerate_field_positions(ast)) {
    positions.push_back({{"path", pos.display()},
                         {"kind", pos.node->value_kind()},
                         {"metric", pos.node->metric.metric_id},
                         {"params", pos.node->metric.params}});
  }
  json out = {{"schema", schema_path}, {"profile", xb::profile_schema(ast).to_json()}, {"positions", positions}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& schema_path, const std::string& gold_path, const std::string& pred_path,
                 const std::string& config_path) {
  const xb::RunConfig config = load_config(config_path);
  const xb::MetricRegistry registry = config.registry();
  const xb::NodePtr ast = xb::parse_schema(xb::read_text_file(schema_path), registry);
  const json gold = read_json_file(gold_path);
  // Same candidate rule as prompt-mode runs: a fenced block wins over the full text.
  const std::string predicted = xb::extract_candidate(xb::read_text_file(pred_path)).text;
  auto judge = xb::make_judge(config.judge);
  const xb::DocumentReport report = xb::evaluate_document(ast, gold, predicted, config, judge.get(), registry);
  std::cout << report.canonical() << "\n";
  return 0;
}

int cmd_run(const std::string& manifest_path, const std::string& out_dir, const std::string& mode,
            const std::string& provider_path) {
  const json manifest_json = read_json_file(manifest_path);
  auto rows = xb::parse_manifest(manifest_json, fs::path(manifest_path).parent_path());
  std::optional<xb::ExtractionMode> override_mode;
  if (!mode.empty()) override_mode = xb::extraction_mode_from_string(mode);
  // Outcome records and the stored manifest carry absolute paths so the run
  // directory can be scored from anywhere.
  for (auto& row : rows) {
    if (override_mode) row.mode = *override_mode;
    row.document = fs::absolute(row.document);
    row.schema = fs::absolute(row.schema);
    row.gold = fs::absolute(row.gold);
  }
  json provider_json;
  fs::path provider_base;
  if (!provider_path.empty()) {
    provider_json = read_json_file(provider_path);
    provider_base = fs::path(provider_path).parent_path();
  } else if (manifest_json.is_object() && manifest_json.contains("providers")) {
    provider_json = manifest_json["providers"];
    provider_base = fs::path(manifest_path).parent_path();
  } else {
    throw Error(ErrorCode::BadConfig, "no provider configuration (pass --provider or add \"providers\" to the manifest)");
  }
  const auto providers = xb::load_providers(provider_json, provider_base);
  const auto outcomes = xb::run_manifest(rows, providers, out_dir);

  // The stored manifest is what `xb score` aggregates against.
  json stored = json::array();
  for (const auto& row : rows) stored.push_back(row.to_json());
  xb::write_text_file(fs::path(out_dir) / "manifest.json", stored.dump(2) + "\n");

  const xb::PatternTable patterns = load_patterns("");
  for (const auto& o : outcomes) {
    auto mode_hit = xb::classify_failure(o, patterns);
    std::printf("%-40s %-24s %-10s %s\n", o.document.c_str(), o.model.c_str(), std::string(to_string(o.mode)).c_str(),
                mode_hit ? std::string(to_string(*mode_hit)).c_str() : "parsed");
  }
  return 0;
}

int cmd_score(const std::string& run_dir, const std::string& out_path, const std::string& config_path,
              const std::string& patterns_path) {
  const std::string ext = fs::path(out_path).extension().string();
  const xb::ReportFormat format = xb::report_format_from_string(ext.empty() ? "" : ext.substr(1));
  const xb::RunConfig config = load_config(config_path);
  const xb::MetricRegistry registry = config.registry();
  const xb::PatternTable patterns = load_patterns(patterns_path);
  const auto rows = xb::parse_manifest(read_json_file(fs::path(run_dir) / "manifest.json"));
  auto judge = xb::make_judge(config.judge);

  std::map<std::string, xb::NodePtr> schemas;
  std::map<std::string, json> golds;
  std::vector<xb::ScoredAttempt> attempts;
  const fs::path report_dir = fs::path(run_dir) / "reports";
  fs::create_directories(report_dir);
  for (const auto& outcome : xb::load_outcomes(run_dir)) {
    if (!outcome.manifest_row.is_object() || outcome.manifest_row.empty()) continue;
    const auto row = xb::parse_manifest(json::array({outcome.manifest_row})).front();
    const std::string schema_key = row.schema.string();
    if (!schemas.count(schema_key)) schemas[schema_key] = xb::parse_schema(xb::read_text_file(row.schema), registry);
    if (!golds.count(row.gold.string())) golds[row.gold.string()] = read_json_file(row.gold);
    xb::DocumentReport report =
        xb::score_outcome(outcome, schemas[schema_key], golds[row.gold.string()], config, judge.get(), patterns, registry);
    const std::string key = xb::manifest_key(row);
    xb::write_text_file(report_dir / (key + ".report.json"), report.canonical() + "\n");
    attempts.push_back({key, std::move(report)});
  }
  const xb::RunSummary summary = xb::aggregate_run(attempts, rows);
  xb::write_text_file(out_path, xb::emit_report(summary, format));
  const xb::Cell total = summary.total();
  std::printf("%zu attempts, valid %s, pass rate %s\n", total.docs, xb::fraction_cell(total.valid, total.docs).c_str(),
              xb::fraction_cell(total.passed, total.positions).c_str());
  return 0;
}

int cmd_analyze(const std::string& schema_path, const std::vector<std::string>& gold_paths,
                const std::string& tokens_path, const std::string& tokenizer_name, const std::string& domain,
                const std::string& format) {
  if (format != "json" && format != "csv") throw Error(ErrorCode::UnknownFormat, "format must be json or csv");
  const xb::NodePtr ast = xb::parse_schema(xb::read_text_file(schema_path));
  const xb::SchemaProfile schema = xb::profile_schema(ast);
  auto tokenizer = xb::tokenizer_registry().at(tokenizer_name);

  std::vector<xb::InstanceProfile> docs;
  json instances = json::array();
  for (const auto& g : gold_paths) {
    docs.push_back(xb::profile_instance(ast, read_json_file(g), tokenizer.get()));
    json p = docs.back().to_json();
    p["gold"] = g;
    instances.push_back(std::move(p));
  }
  const std::string label = domain.empty() ? fs::path(schema_path).stem().string() : domain;
  std::optional<xb::CompressionStats> stats;
  if (!tokens_path.empty()) stats = xb::compression_stats(xb::parse_token_csv(xb::read_text_file(tokens_path)));

  if (format == "csv") {
    std::cout << xb::complexity_csv({xb::complexity_row(label, schema, docs)});
    if (stats) std::cout << "\n" << xb::token_stats_csv(*stats);
    return 0;
  }
  json out = {{"domain", label},
              {"schema", schema.to_json()},
              {"tokenizer", {{"name", tokenizer->name()}, {"approximate", tokenizer->approximate()}}},
              {"instances", instances}};
  if (!docs.empty()) {
    const auto row = xb::complexity_row(label, schema, docs);
    out["averages"] = {{"fields", row.fields},
                       {"array_items", row.array_items},
                       {"tokens", row.tokens ? json(*row.tokens) : json(nullptr)}};
  }
  if (stats) out["compression"] = xb::token_stats_json(*stats);
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xb: schema-driven evaluation of structured extraction"};
  app.require_subcommand(1);

  std::string schema, gold, pred, config, manifest, out, mode, provider, run_dir, patterns, tokens;
  std::string tokenizer = "approx", domain, format = "json";
  std::vector<std::string> golds;

  auto* validate = app.add_subcommand("validate", "Parse a schema and list its field positions");
  validate->add_option("schema", schema, "Schema file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score one prediction against its gold annotation");
  evaluate->add_option("--schema", schema)->required();
  evaluate->add_option("--gold", gold)->required();
  evaluate->add_option("--pred", pred)->required();
  evaluate->add_option("--config", config);

  auto* run = app.add_subcommand("run", "Run the extraction harness over a manifest");
  run->add_option("--manifest", manifest)->required();
  run->add_option("--out", out, "Run directory")->required();
  run->add_option("--mode", mode)->check(CLI::IsMember({"prompt", "structured"}));
  run->add_option("--provider", provider, "Provider configuration file");

  auto* score = app.add_subcommand("score", "Evaluate a run directory and aggregate the results");
  score->add_option("--run", run_dir)->required();
  score->add_option("--out", out, "report.json, report.csv or report.md")->required();
  score->add_option("--config", config);
  score->add_option("--patterns", patterns, "Provider message pattern table");

  auto* analyze = app.add_subcommand("analyze", "Schema and gold complexity profiles, compression statistics");
  analyze->add_option("--schema", schema)->required();
  analyze->add_option("--gold", golds, "Gold annotation (repeatable)");
  analyze->add_option("--tokens", tokens, "CSV with document, input and output token counts");
  analyze->add_option("--tokenizer", tokenizer, "approx or gpt2 (needs XB_GPT2_DIR)");
  analyze->add_option("--domain", domain);
  analyze->add_option("--format", format, "json or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(schema);
    if (*evaluate) return cmd_evaluate(schema, gold, pred, config);
    if (*run) return cmd_run(manifest, out, mode, provider);
    if (*score) return cmd_score(run_dir, out, config, patterns);
    if (*analyze) return cmd_analyze(schema, golds, tokens, tokenizer, domain, format);
  } catch (const Error& e) {
    std::cerr << "xb: " << e.what() << "\n";
    return xb::exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "xb: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "xb: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
