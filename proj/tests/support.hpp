#pragma once

// Shared fixtures for the unit tests and the acceptance binary: synthetic
// schemas with an exact field-position count, conforming random instances,
// and the independent oracles the optimized code is checked against.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <functional>
#include <mutex>
#include <optional>
#include <cctype>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xb/xb.hpp"

namespace xbtest {

using xb::json;
using xb::ojson;

inline std::filesystem::path samples_dir() { return std::filesystem::path(XB_SOURCE_DIR) / "samples"; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Bundled sample schemas paired with their gold annotations.
struct SampleCase {
  std::string domain;
  std::filesystem::path schema;
  std::filesystem::path gold;
};

inline std::vector<SampleCase> sample_cases() {
  std::vector<SampleCase> out;
  for (const auto& dir : std::filesystem::directory_iterator(samples_dir() / "gold")) {
    const std::string domain = dir.path().filename().string();
    for (const auto& f : std::filesystem::directory_iterator(dir.path())) {
      out.push_back({domain, samples_dir() / "schemas" / (domain + ".json"), f.path()});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.gold < b.gold; });
  return out;
}

// ---------------------------------------------------------------------------
// Oracles

/// Edit distance straight from the recursive definition. Exponential; only
/// for short strings.
inline std::size_t levenshtein_recursive(std::string_view a, std::string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  if (a[0] == b[0]) return levenshtein_recursive(a.substr(1), b.substr(1));
  return 1 + std::min({levenshtein_recursive(a.substr(1), b),
                       levenshtein_recursive(a, b.substr(1)),
                       levenshtein_recursive(a.substr(1), b.substr(1))});
}

/// All strings over `alphabet` of length 0..max_len.
inline std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::vector<std::string> frontier{""};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::string> next;
    for (const auto& s : frontier) {
      for (char c : alphabet) next.push_back(s + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

/// Best achievable total similarity over injective matchings in which a
/// pair only counts when it reaches `floor`. Tries every permutation of
/// the padded square matrix.
inline double best_total_by_permutation(const xb::SimilarityMatrix& sim, std::size_t m, double floor) {
  const std::size_t n = sim.size();
  const std::size_t k = std::max(n, m);
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (perm[i] < m && sim[i][perm[i]] >= floor) total += sim[i][perm[i]];
    }
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Synthetic schemas and instances

/// A schema with exactly `positions` field positions: sections of up to
/// ten fields cycling through every metric kind, with an array-of-objects
/// field in each section.
inline ojson synthetic_schema(std::size_t positions, std::size_t per_section = 10) {
  static const char* kinds[] = {"string_exact", "string_fuzzy",   "number_tolerance", "integer_exact", "boolean_exact",
                                "array",        "string_case_insensitive", "number_exact", "string_semantic", "any_of"};
  ojson root = {{"type", "object"}, {"properties", ojson::object()}};
  std::size_t made = 0;
  for (std::size_t s = 0; made < positions; ++s) {
    ojson section = {{"type", "object"}, {"properties", ojson::object()}};
    for (std::size_t f = 0; f < per_section && made < positions; ++f, ++made) {
      const std::string kind = kinds[made % 10];
      ojson field;
      if (kind == "array") {
        field = {{"type", "array"},
                 {"evaluation_config", "array_llm"},
                 {"items",
                  {{"type", "object"},
                   {"properties", {{"name", {{"type", "string"}}}, {"amount", {{"type", "number"}}}}}}}};
      } else if (kind == "any_of") {
        field = {{"anyOf", ojson::array({{{"type", "string"}}, {{"type", "number"}}})}};
      } else if (kind.rfind("string", 0) == 0) {
        field = {{"type", "string"}, {"evaluation_config", kind}};
      } else if (kind.rfind("number", 0) == 0) {
        field = {{"type", "number"}, {"evaluation_config", kind}};
      } else if (kind == "integer_exact") {
        field = {{"type", "integer"}, {"evaluation_config", kind}};
      } else {
        field = {{"type", "boolean"}, {"evaluation_config", kind}};
      }
      section["properties"]["f" + std::to_string(f)] = field;
    }
    root["properties"]["section_" + std::to_string(s)] = section;
  }
  return root;
}

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta", "Acme Corp", "Borealis",
                                                 "north", "south", "ledger", "term loan", "revolver", "USD"};
  return words;
}

/// Random instance conforming to `node`. `null_rate` is the chance that
/// any non-root value is null.
inline json random_instance(const xb::SchemaNode& node, std::mt19937& rng, double null_rate = 0.1,
                            std::size_t max_items = 4, bool root = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!root && u(rng) < null_rate) return nullptr;
  const auto& words = word_pool();
  switch (node.kind) {
    case xb::NodeKind::Object: {
      json o = json::object();
      for (const auto& p : node.properties) o[p.name] = random_instance(*p.node, rng, null_rate, max_items, false);
      return o;
    }
    case xb::NodeKind::Array: {
      json a = json::array();
      const std::size_t n = std::uniform_int_distribution<std::size_t>(0, max_items)(rng);
      for (std::size_t i = 0; i < n; ++i) a.push_back(random_instance(*node.items, rng, 0.0, max_items, false));
      return a;
    }
    case xb::NodeKind::Choice: {
      const std::size_t b = std::uniform_int_distribution<std::size_t>(0, node.branches.size() - 1)(rng);
      return random_instance(*node.branches[b], rng, 0.0, max_items, false);
    }
    case xb::NodeKind::Primitive:
      break;
  }
  if (node.constraints.enum_values) {
    const auto& e = *node.constraints.enum_values;
    return e[std::uniform_int_distribution<std::size_t>(0, e.size() - 1)(rng)];
  }
  switch (node.primitive) {
    case xb::PrimitiveKind::String: return words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
    case xb::PrimitiveKind::Number: return std::uniform_int_distribution<int>(0, 100000)(rng) / 8.0;
    case xb::PrimitiveKind::Integer: {
      const int lo = node.constraints.minimum ? static_cast<int>(*node.constraints.minimum) : -50;
      return std::uniform_int_distribution<int>(std::max(lo, -50), 2050)(rng);
    }
    case xb::PrimitiveKind::Boolean: return u(rng) < 0.5;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Policy matrix

struct MetricKindCase {
  std::string metric;
  ojson field_schema;
  json value;
};

/// One field of every metric kind, with a representative present value.
inline std::vector<MetricKindCase> metric_kind_cases() {
  return {
      {"string_exact", {{"type", "string"}, {"evaluation_config", "string_exact"}}, "USD"},
      {"string_case_insensitive", {{"type", "string"}, {"evaluation_config", "string_case_insensitive"}}, "Usd"},
      {"string_fuzzy", {{"type", "string"}, {"evaluation_config", "string_fuzzy"}}, "Acme Corp"},
      {"string_semantic", {{"type", "string"}, {"evaluation_config", "string_semantic"}}, "New York law"},
      {"number_exact", {{"type", "number"}, {"evaluation_config", "number_exact"}}, 12.5},
      {"number_tolerance", {{"type", "number"}, {"evaluation_config", "number_tolerance"}}, 1000},
      {"integer_exact", {{"type", "integer"}, {"evaluation_config", "integer_exact"}}, 7},
      {"boolean_exact", {{"type", "boolean"}, {"evaluation_config", "boolean_exact"}}, false},
      {"array_llm",
       {{"type", "array"}, {"evaluation_config", "array_llm"}, {"items", {{"type", "string"}}}},
       json::array({"a", "b"})},
      {"any_of", {{"anyOf", ojson::array({{{"type", "string"}}, {{"type", "number"}}})}}, 3},
  };
}

/// Checks all nine (gold, predicted) state combinations for every metric
/// kind against the policy matrix. Returns one line per disagreement.
inline std::vector<std::string> policy_matrix_failures(xb::GoldMissingPolicy missing_policy) {
  using xb::ErrorClass;
  using xb::ValueTag;
  std::vector<std::string> failures;
  auto judge = xb::make_mock_judge();
  xb::RunConfig config;
  config.gold_missing_policy = missing_policy;
  const ValueTag tags[] = {ValueTag::Present, ValueTag::ExplicitNull, ValueTag::Missing};
  for (const auto& c : metric_kind_cases()) {
    const ojson schema_json = {{"type", "object"}, {"properties", {{"f", c.field_schema}}}};
    const auto schema = xb::parse_schema(schema_json);
    auto doc = [&](ValueTag t) {
      json d = json::object();
      if (t == ValueTag::Present) d["f"] = c.value;
      if (t == ValueTag::ExplicitNull) d["f"] = nullptr;
      return d;
    };
    for (ValueTag g : tags) {
      for (ValueTag p : tags) {
        const auto report = xb::evaluate_parsed(schema, doc(g), doc(p), config, judge.get());
        const xb::FieldResult& r = report.field_results.at(0);
        xb::PairPolicy want_policy;
        bool want_pass;
        ErrorClass want_error;
        if (g == ValueTag::Present) {
          want_policy = p == ValueTag::Present ? xb::PairPolicy::Compare : xb::PairPolicy::Omission;
          want_pass = p == ValueTag::Present;
          want_error = want_pass ? ErrorClass::None : ErrorClass::Omission;
        } else if (p != ValueTag::Present) {
          want_policy = xb::PairPolicy::AutoPass;
          want_pass = true;
          want_error = ErrorClass::None;
        } else if (g == ValueTag::Missing && missing_policy == xb::GoldMissingPolicy::Skip) {
          want_policy = xb::PairPolicy::Skip;
          want_pass = false;
          want_error = ErrorClass::Skipped;
        } else {
          want_policy = xb::PairPolicy::Hallucination;
          want_pass = false;
          want_error = ErrorClass::Hallucination;
        }
        const double want_score = want_pass ? 1.0 : 0.0;
        if (r.policy != want_policy || r.pass != want_pass || r.error != want_error || r.score != want_score) {
          failures.push_back(c.metric + " gold=" + std::string(xb::to_string(g)) + " pred=" +
                             std::string(xb::to_string(p)) + ": got policy " + std::string(xb::to_string(r.policy)) +
                             " error " + std::string(xb::to_string(r.error)) + " score " + std::to_string(r.score));
        }
      }
    }
  }
  return failures;
}

// ---------------------------------------------------------------------------
// Scripted judge backend

/// Replies from a fixed list (the last reply repeats); counts calls.
class ScriptedBackend : public xb::JudgeBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const xb::JudgeRequest&, const std::string&) override {
    std::lock_guard lock(mu_);
    const std::size_t i = std::min(calls_, replies_.size() - 1);
    ++calls_;
    return replies_[i];
  }
  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Labelled failure corpus

struct LabelledOutput {
  std::string text;
  std::optional<xb::FailureMode> label;
};

/// Openers and closers outside string literals, by byte offset.
inline std::vector<std::size_t> structural_closers(const std::string& text) {
  std::vector<std::size_t> out;
  bool in_string = false, escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    if ((c == '}' || c == ']') && i > 0 && text[i - 1] != '{' && text[i - 1] != '[') out.push_back(i);
  }
  return out;
}

/// Model outputs whose failure mode is known by construction: untouched
/// documents, whitespace, a comma inserted before a non-empty closer,
/// strict prefixes of a document, and prose.
inline std::vector<LabelledOutput> failure_corpus(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<xb::NodePtr> schemas;
  for (const auto& name : {"credit", "research", "resumes", "sports"}) {
    schemas.push_back(xb::parse_schema(slurp(samples_dir() / "schemas" / (std::string(name) + ".json"))));
  }
  const std::vector<std::string> prose = {"I'm sorry, I can't read this document.",
                                          "Here is the data: name = Acme",
                                          "{'name': 'Acme'}",
                                          "{\"a\": 1} trailing words",
                                          "[1 2 3]",
                                          "{\"a\" 1}"};
  std::vector<LabelledOutput> out;
  std::uniform_int_distribution<int> kind(0, 4), indent(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& schema = *schemas[i % schemas.size()];
    json doc = random_instance(schema, rng, 0.15);
    const std::string text = indent(rng) ? doc.dump(2) : doc.dump();
    switch (kind(rng)) {
      case 0: out.push_back({text, std::nullopt}); break;
      case 1: out.push_back({std::string(i % 4, i % 2 ? '\n' : ' '), xb::FailureMode::EmptyResponse}); break;
      case 2: {
        const auto closers = structural_closers(text);
        if (closers.empty()) {
          out.push_back({text, std::nullopt});
          break;
        }
        std::string t = text;
        t.insert(closers[std::uniform_int_distribution<std::size_t>(0, closers.size() - 1)(rng)], ",");
        out.push_back({t, xb::FailureMode::TrailingComma});
        break;
      }
      case 3: {
        const std::size_t cut = std::uniform_int_distribution<std::size_t>(1, text.size() - 1)(rng);
        std::string t = text.substr(0, cut);
        // Trailing whitespace does not change the label but keep the text
        // visibly incomplete.
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
        if (t.empty()) t = "{";
        out.push_back({t, xb::FailureMode::TruncatedJson});
        break;
      }
      default: out.push_back({prose[i % prose.size()], xb::FailureMode::Other}); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic run summary

/// Six models over five domains (13/16/31/12/369 keys, 10/6/7/5/7 docs).
/// The first model's cells are 111/130 on credit, 0/2583 on the widest
/// domain and 213/3086 overall; 107 of the 210 attempts are valid.
inline xb::RunSummary table_summary() {
  struct Domain {
    std::string name;
    std::size_t keys, docs;
  };
  const std::vector<Domain> domains = {
      {"credit", 13, 10}, {"research", 16, 6}, {"resumes", 31, 7}, {"sports", 12, 5}, {"wide", 369, 7}};
  std::vector<xb::ManifestRow> rows;
  std::vector<xb::ScoredAttempt> attempts;
  auto attempt = [&](const std::string& model, const Domain& d, std::size_t doc, bool valid, std::size_t passed) {
    xb::ManifestRow row;
    row.document = d.name + "_" + std::to_string(doc) + ".pdf";
    row.schema = d.name + ".json";
    row.gold = d.name + "_" + std::to_string(doc) + ".json";
    row.provider = "p";
    row.model = model;
    row.domain = d.name;
    row.document_name = row.document.stem().string();
    xb::DocumentReport r;
    r.valid = valid;
    r.counts.positions = d.keys;
    r.counts.passed = passed;
    if (!valid) {
      r.failure_mode = doc % 2 ? xb::FailureMode::TruncatedJson : xb::FailureMode::SchemaRejected;
      r.counts.structural = d.keys;
    }
    attempts.push_back({xb::manifest_key(row), r});
    rows.push_back(row);
  };
  // First model: credit 9 x 11 + 12 = 111, research 40, resumes 50, sports 12.
  const std::map<std::string, std::vector<std::size_t>> first = {
      {"credit", {11, 11, 11, 11, 11, 11, 11, 11, 11, 12}},
      {"research", {7, 7, 7, 7, 6, 6}},
      {"resumes", {8, 7, 7, 7, 7, 7, 7}},
      {"sports", {3, 3, 2, 2, 2}}};
  for (const auto& d : domains) {
    for (std::size_t i = 0; i < d.docs; ++i) {
      if (d.name == "wide") attempt("model-1", d, i, false, 0);
      else attempt("model-1", d, i, true, first.at(d.name)[i]);
    }
  }
  // Models 2..6: the first 16 (15 for the last) attempts in manifest order
  // are valid with one passing field each.
  for (int m = 2; m <= 6; ++m) {
    std::size_t remaining = m == 6 ? 15 : 16;
    for (const auto& d : domains) {
      for (std::size_t i = 0; i < d.docs; ++i) {
        const bool valid = remaining > 0;
        if (valid) --remaining;
        attempt("model-" + std::to_string(m), d, i, valid, valid ? 1 : 0);
      }
    }
  }
  return xb::aggregate_run(attempts, rows);
}

}  // namespace xbtest
