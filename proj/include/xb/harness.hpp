#pragma once

// Extraction harness: builds prompts, calls providers in prompt or
// structured-output mode, and classifies failed attempts.
//
// Outputs are stored exactly as returned. In prompt mode the first fenced
// code block, when there is one, is taken as the candidate JSON; the full
// text is used otherwise. Nothing is repaired.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/failure.hpp"
#include "xb/parallel.hpp"
#include "xb/schema.hpp"

namespace xb {

namespace fs = std::filesystem;

enum class ExtractionMode { Prompt, Structured };

inline std::string_view to_string(ExtractionMode m) { return m == ExtractionMode::Prompt ? "prompt" : "structured"; }

inline ExtractionMode extraction_mode_from_string(std::string_view s) {
  if (s == "prompt") return ExtractionMode::Prompt;
  if (s == "structured") return ExtractionMode::Structured;
  throw Error(ErrorCode::BadConfig, "mode must be 'prompt' or 'structured', got '" + std::string(s) + "'");
}

/// Zero-shot extraction prompt. Byte-stable for identical inputs.
inline std::string build_prompt(std::string_view schema_text, std::string_view document_name) {
  if (schema_text.empty() || document_name.empty()) {
    throw Error(ErrorCode::EmptyInput, "schema text and document name must be non-empty");
  }
  std::string out;
  out += "Using the JSON template as a guideline, extract all\n";
  out += "the required information from ";
  out += document_name;
  out += " document.\n\nJSON Template:\n";
  out += schema_text;
  out += "\n\nPlease return ONLY valid JSON that conforms to this\n";
  out += "schema. Do not include any explanatory text before\n";
  out += "or after the JSON.";
  return out;
}

/// Instruction sent alongside the response-format constraint in
/// structured mode, where the schema is not part of the prompt.
inline std::string build_structured_prompt(std::string_view document_name) {
  if (document_name.empty()) throw Error(ErrorCode::EmptyInput, "document name must be non-empty");
  return "Extract all the required information from " + std::string(document_name) + " document.";
}

struct Candidate {
  std::string text;
  /// "fenced" or "full".
  std::string source;
};

inline Candidate extract_candidate(std::string_view raw) {
  auto open = raw.find("```");
  if (open == std::string_view::npos) return {std::string(raw), "full"};
  auto body = raw.find('\n', open);
  if (body == std::string_view::npos) return {std::string(raw), "full"};
  ++body;
  auto close = raw.find("```", body);
  return {std::string(raw.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body)),
          "fenced"};
}

struct TransportFailure {
  /// "transport" or "rejected".
  std::string kind;
  std::string message;
};

struct ExtractionOutcome {
  std::string provider;
  std::string model;
  std::string document;  // document name as used in the prompt
  ExtractionMode mode = ExtractionMode::Prompt;
  std::string raw_output;
  Candidate candidate;
  std::optional<TransportFailure> transport_error;
  double elapsed_ms = 0.0;
  json usage;  // provider-reported token usage, when any
  /// Manifest row the attempt came from (paths, domain).
  json manifest_row;

  json to_json() const {
    json j = {{"provider", provider},
              {"model", model},
              {"document", document},
              {"mode", to_string(mode)},
              {"raw_output", raw_output},
              {"candidate", candidate.text},
              {"candidate_source", candidate.source},
              {"elapsed_ms", elapsed_ms},
              {"usage", usage},
              {"manifest_row", manifest_row}};
    j["transport_error"] = transport_error
                               ? json{{"kind", transport_error->kind}, {"message", transport_error->message}}
                               : json(nullptr);
    return j;
  }

  static ExtractionOutcome from_json(const json& j) {
    ExtractionOutcome o;
    o.provider = j.value("provider", "");
    o.model = j.value("model", "");
    o.document = j.value("document", "");
    o.mode = extraction_mode_from_string(j.value("mode", "prompt"));
    o.raw_output = j.value("raw_output", "");
    if (j.contains("candidate")) {
      o.candidate = {j.value("candidate", ""), j.value("candidate_source", "full")};
    } else {
      o.candidate = o.mode == ExtractionMode::Prompt ? extract_candidate(o.raw_output) : Candidate{o.raw_output, "full"};
    }
    if (auto it = j.find("transport_error"); it != j.end() && !it->is_null()) {
      o.transport_error = TransportFailure{it->value("kind", "transport"), it->value("message", "")};
    }
    o.elapsed_ms = j.value("elapsed_ms", 0.0);
    o.usage = j.value("usage", json());
    o.manifest_row = j.value("manifest_row", json::object());
    return o;
  }
};

/// Provider error text -> failure mode, checked in a fixed order
/// (PdfPageLimit, ContextLength, SchemaRejected). Patterns are
/// case-insensitive ECMAScript regular expressions loaded from
/// configuration, since provider wording changes over time.
class PatternTable {
 public:
  static PatternTable from_json(const json& j) {
    PatternTable t;
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "pattern table must be an object");
    for (FailureMode mode : {FailureMode::PdfPageLimit, FailureMode::ContextLength, FailureMode::SchemaRejected}) {
      auto it = j.find(std::string(to_string(mode)));
      if (it == j.end()) continue;
      if (!it->is_array()) throw Error(ErrorCode::BadConfig, "patterns for " + it.key() + " must be an array");
      for (const auto& p : *it) {
        if (!p.is_string()) throw Error(ErrorCode::BadConfig, "patterns must be strings");
        try {
          t.rules_.push_back({mode, std::regex(p.get<std::string>(), std::regex::icase | std::regex::ECMAScript)});
        } catch (const std::regex_error& e) {
          throw Error(ErrorCode::BadConfig, "bad pattern '" + p.get<std::string>() + "': " + e.what());
        }
      }
    }
    for (const auto& [key, _] : j.items()) {
      if (key != "PdfPageLimit" && key != "ContextLength" && key != "SchemaRejected") {
        throw Error(ErrorCode::BadConfig, "pattern table has unknown mode '" + key + "'");
      }
    }
    return t;
  }

  static PatternTable load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open pattern table", path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, "pattern table is not JSON", path.string());
    return from_json(j);
  }

  std::optional<FailureMode> match(std::string_view message) const {
    const std::string m(message);
    for (const auto& [mode, re] : rules_) {
      if (std::regex_search(m, re)) return mode;
    }
    return std::nullopt;
  }

  bool empty() const { return rules_.empty(); }

 private:
  std::vector<std::pair<FailureMode, std::regex>> rules_;
};

/// Transport-derived modes take precedence over syntactic ones; nullopt
/// means the candidate parses as JSON.
inline std::optional<FailureMode> classify_failure(const ExtractionOutcome& outcome, const PatternTable& patterns) {
  if (outcome.transport_error) {
    return patterns.match(outcome.transport_error->message).value_or(FailureMode::Other);
  }
  if (outcome.raw_output.find_first_not_of(" \t\r\n") == std::string::npos) return FailureMode::EmptyResponse;
  return classify_syntax(outcome.candidate.text);
}

// ---------------------------------------------------------------------------
// Providers

struct ProviderRequest {
  ExtractionMode mode = ExtractionMode::Prompt;
  std::string model;
  std::string document_name;
  fs::path pdf;
  std::string prompt;
  /// Sent as the response-format constraint in structured mode.
  std::string schema_text;
};

struct ProviderReply {
  std::string text;
  json usage;
};

/// A model provider. Failures are Error(ProviderTransport) for network or
/// authentication problems and Error(ProviderRejected) when the provider
/// refuses the request; the message carries the provider's own text.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  virtual ProviderReply extract(const ProviderRequest& request) = 0;
  /// Concurrent requests allowed against this provider.
  virtual std::size_t max_in_flight() const { return 1; }
};

/// Replays fixture outputs keyed by document name.
///
/// Config: {"outputs": {doc: text}, "output_files": {doc: path},
///          "errors": {doc: message}, "max_structured_positions": n}
/// Structured requests whose schema has more field positions than
/// `max_structured_positions` are rejected the way real providers reject
/// oversized schemas.
class MockProvider : public Provider {
 public:
  explicit MockProvider(json config = json::object(), fs::path base_dir = {})
      : config_(std::move(config)), base_dir_(std::move(base_dir)) {}

  std::string id() const override { return "mock"; }
  std::size_t max_in_flight() const override { return config_.value("max_in_flight", std::size_t{4}); }

  ProviderReply extract(const ProviderRequest& request) override {
    const std::string& doc = request.document_name;
    if (auto e = config_.find("errors"); e != config_.end() && e->contains(doc)) {
      throw Error(ErrorCode::ProviderRejected, (*e)[doc].get<std::string>());
    }
    if (request.mode == ExtractionMode::Structured && config_.contains("max_structured_positions")) {
      const auto limit = config_["max_structured_positions"].get<std::size_t>();
      const auto n = enumerate_field_positions(parse_schema(std::string_view(request.schema_text))).size();
      if (n > limit) {
        throw Error(ErrorCode::ProviderRejected,
                    "invalid_request_error: response schema is too large (" + std::to_string(n) + " fields)");
      }
    }
    if (auto o = config_.find("outputs"); o != config_.end() && o->contains(doc)) {
      return {(*o)[doc].get<std::string>(), json::object()};
    }
    if (auto f = config_.find("output_files"); f != config_.end() && f->contains(doc)) {
      fs::path p = (*f)[doc].get<std::string>();
      if (p.is_relative()) p = base_dir_ / p;
      std::ifstream in(p, std::ios::binary);
      if (!in) throw Error(ErrorCode::ProviderTransport, "mock fixture not readable", p.string());
      std::stringstream ss;
      ss << in.rdbuf();
      return {ss.str(), json::object()};
    }
    return {"", json::object()};
  }

 private:
  json config_;
  fs::path base_dir_;
};

struct ExtractionOptions {
  std::string model;
  std::string document_name;
};

inline ExtractionOutcome run_extraction(Provider& provider, ExtractionMode mode, const fs::path& pdf,
                                        const std::string& schema_text, const ExtractionOptions& options) {
  ExtractionOutcome o;
  o.provider = provider.id();
  o.model = options.model;
  o.document = options.document_name.empty() ? pdf.stem().string() : options.document_name;
  o.mode = mode;

  ProviderRequest req;
  req.mode = mode;
  req.model = options.model;
  req.document_name = o.document;
  req.pdf = pdf;
  if (mode == ExtractionMode::Prompt) {
    req.prompt = build_prompt(schema_text, o.document);
  } else {
    req.prompt = build_structured_prompt(o.document);
    req.schema_text = schema_text;
  }
  const auto start = std::chrono::steady_clock::now();
  try {
    ProviderReply reply = provider.extract(req);
    o.raw_output = std::move(reply.text);
    o.usage = std::move(reply.usage);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderRejected) {
      o.transport_error = TransportFailure{"rejected", e.what()};
    } else if (e.code() == ErrorCode::ProviderTransport) {
      o.transport_error = TransportFailure{"transport", e.what()};
    } else {
      throw;
    }
  }
  o.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  o.candidate = mode == ExtractionMode::Prompt ? extract_candidate(o.raw_output) : Candidate{o.raw_output, "full"};
  return o;
}

// ---------------------------------------------------------------------------
// Run manifests and the outcome store

struct ManifestRow {
  fs::path document;
  fs::path schema;
  fs::path gold;
  std::string provider;
  std::string model;
  ExtractionMode mode = ExtractionMode::Prompt;
  std::string domain;
  std::string document_name;

  json to_json() const {
    return {{"document", document.string()}, {"schema", schema.string()}, {"gold", gold.string()},
            {"provider", provider},          {"model", model},            {"mode", to_string(mode)},
            {"domain", domain},              {"document_name", document_name}};
  }
};

/// Manifest: a JSON array of rows (or {"runs": [...]}) with document,
/// schema, gold, provider, model and mode; optional domain and
/// document_name. Relative paths resolve against the manifest directory.
inline std::vector<ManifestRow> parse_manifest(const json& j, const fs::path& base_dir = {}) {
  const json& rows = j.is_object() && j.contains("runs") ? j["runs"] : j;
  if (!rows.is_array()) throw Error(ErrorCode::BadConfig, "manifest must be an array of runs");
  std::vector<ManifestRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const json& r = rows[i];
    auto need = [&](const char* key) -> std::string {
      if (!r.contains(key) || !r[key].is_string() || r[key].get<std::string>().empty()) {
        throw Error(ErrorCode::BadConfig, std::string("manifest row needs '") + key + "'",
                    "/" + std::to_string(i));
      }
      return r[key].get<std::string>();
    };
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    ManifestRow row;
    row.document = resolve(need("document"));
    row.schema = resolve(need("schema"));
    row.gold = resolve(need("gold"));
    row.provider = need("provider");
    row.model = need("model");
    row.mode = extraction_mode_from_string(r.value("mode", "prompt"));
    row.domain = r.value("domain", row.schema.stem().string());
    row.document_name = r.value("document_name", row.document.stem().string());
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<ManifestRow> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest", path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, "manifest is not JSON", path.string());
  return parse_manifest(j, path.parent_path());
}

inline std::string file_token(std::string_view s) {
  std::string out;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
              c == '_';
    out.push_back(ok ? c : '_');
  }
  return out;
}

/// `<doc>__<model>__<mode>.json`
inline std::string outcome_filename(const ManifestRow& row) {
  return file_token(row.document.stem().string()) + "__" + file_token(row.model) + "__" +
         std::string(to_string(row.mode)) + ".json";
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read file", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write file", path.string());
  out << text;
}

/// Runs every manifest row and writes one outcome record per attempt into
/// `out_dir`. Rows for the same provider share that provider's in-flight
/// limit; providers run side by side. `mode_override` replaces the
/// manifest mode for all rows.
inline std::vector<ExtractionOutcome> run_manifest(const std::vector<ManifestRow>& rows,
                                                   const std::map<std::string, std::shared_ptr<Provider>>& providers,
                                                   const fs::path& out_dir,
                                                   std::optional<ExtractionMode> mode_override = std::nullopt) {
  fs::create_directories(out_dir);
  std::map<std::string, std::vector<std::size_t>> by_provider;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!providers.count(rows[i].provider)) {
      throw Error(ErrorCode::BadConfig, "no provider configured named '" + rows[i].provider + "'");
    }
    by_provider[rows[i].provider].push_back(i);
  }
  std::vector<ExtractionOutcome> outcomes(rows.size());
  std::vector<std::string> schemas(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) schemas[i] = read_text_file(rows[i].schema);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups(by_provider.begin(), by_provider.end());
  parallel_for(groups.size(), groups.size(), [&](std::size_t g) {
    const auto& [name, jobs] = groups[g];
    Provider& provider = *providers.at(name);
    parallel_for(jobs.size(), provider.max_in_flight(), [&](std::size_t k) {
      const std::size_t i = jobs[k];
      ManifestRow row = rows[i];
      if (mode_override) row.mode = *mode_override;
      ExtractionOutcome o =
          run_extraction(provider, row.mode, row.document, schemas[i], {row.model, row.document_name});
      o.provider = name;
      o.manifest_row = row.to_json();
      write_text_file(out_dir / outcome_filename(row), o.to_json().dump(2));
      outcomes[i] = std::move(o);
    });
  });
  return outcomes;
}

/// Reads every `*.json` outcome record in a run directory, sorted by name.
inline std::vector<ExtractionOutcome> load_outcomes(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw Error(ErrorCode::Io, "run directory not found", run_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ExtractionOutcome> out;
  for (const auto& f : files) {
    json j = json::parse(read_text_file(f), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("raw_output")) continue;
    out.push_back(ExtractionOutcome::from_json(j));
  }
  return out;
}

}  // namespace xb
