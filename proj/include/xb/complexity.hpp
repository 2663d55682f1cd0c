#pragma once

// Complexity analytics: schema breadth/depth, gold instance decomposition,
// token statistics and input/output compression ratios.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/schema.hpp"
#include "xb/tokenizer.hpp"
#include "xb/value_semantics.hpp"

namespace xb {

struct SchemaProfile {
  std::size_t breadth = 0;
  std::size_t depth = 0;
  std::size_t array_field_count = 0;

  json to_json() const { return {{"keys", breadth}, {"depth", depth}, {"array_fields", array_field_count}}; }
};

/// Nesting levels along the deepest path. The root is level 1 and every
/// object, array and leaf below it adds a level; anyOf adds none.
inline std::size_t schema_depth(const SchemaNode& node) {
  switch (node.kind) {
    case NodeKind::Primitive: return 1;
    case NodeKind::Array: return 1 + schema_depth(*node.items);
    case NodeKind::Choice: {
      std::size_t d = 0;
      for (const auto& b : node.branches) d = std::max(d, schema_depth(*b));
      return d;
    }
    case NodeKind::Object: {
      std::size_t d = 0;
      for (const auto& p : node.properties) d = std::max(d, schema_depth(*p.node));
      return 1 + d;
    }
  }
  return 1;
}

inline SchemaProfile profile_schema(const NodePtr& root) {
  SchemaProfile p;
  auto positions = enumerate_field_positions(root);
  p.breadth = positions.size();
  p.depth = schema_depth(*root);
  for (const auto& pos : positions) p.array_field_count += pos.is_array() ? 1 : 0;
  return p;
}

struct InstanceProfile {
  std::size_t gold_value_count = 0;
  std::size_t non_array_field_count = 0;
  std::size_t array_item_count = 0;
  std::optional<std::size_t> output_token_count;

  json to_json() const {
    json j = {{"gold_values", gold_value_count}, {"fields", non_array_field_count}, {"array_items", array_item_count}};
    j["tokens"] = output_token_count ? json(*output_token_count) : json(nullptr);
    return j;
  }
};

namespace complexity_detail {

inline void count_values(const json& v, InstanceProfile& p) {
  if (v.is_null()) return;
  if (v.is_object()) {
    for (const auto& [_, child] : v.items()) count_values(child, p);
  } else if (v.is_array()) {
    p.array_item_count += v.size();
    for (const auto& child : v) count_values(child, p);
  } else {
    ++p.gold_value_count;
  }
}

}  // namespace complexity_detail

/// Gold JSON is tokenized as `dump(2)` when a tokenizer is given.
inline InstanceProfile profile_instance(const NodePtr& schema, const json& gold, const Tokenizer* tokenizer = nullptr) {
  auto validity = validate_instance(*schema, gold);
  if (!validity.conforming) {
    throw Error(ErrorCode::GoldInvalid, validity.violations.front().message, validity.violations.front().pointer);
  }
  InstanceProfile p;
  complexity_detail::count_values(gold, p);
  for (const auto& pos : enumerate_field_positions(schema)) {
    if (pos.is_array()) continue;
    if (read_value(gold, pos.path).state.is_present()) ++p.non_array_field_count;
  }
  if (tokenizer) p.output_token_count = count_tokens(gold.dump(2), *tokenizer);
  return p;
}

struct TokenRow {
  std::string domain;
  std::string document;
  std::optional<std::size_t> pages;
  double input_tokens = 0;
  double output_tokens = 0;
};

struct CompressionStats {
  struct Entry {
    TokenRow row;
    double ratio = 0;
  };
  std::vector<Entry> rows;
  /// Arithmetic mean of per-document ratios, keyed by domain in first-seen order.
  std::vector<std::pair<std::string, double>> domain_means;
};

inline CompressionStats compression_stats(const std::vector<TokenRow>& rows) {
  CompressionStats s;
  std::vector<std::pair<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& r : rows) {
    if (!(r.output_tokens > 0)) {
      throw Error(ErrorCode::ZeroOutput, "output token count must be positive", r.document);
    }
    const double ratio = r.input_tokens / r.output_tokens;
    s.rows.push_back({r, ratio});
    auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& e) { return e.first == r.domain; });
    if (it == acc.end()) {
      acc.push_back({r.domain, {ratio, 1}});
    } else {
      it->second.first += ratio;
      it->second.second += 1;
    }
  }
  for (const auto& [domain, sum] : acc) s.domain_means.emplace_back(domain, sum.first / sum.second);
  return s;
}

/// Large ratios print as integers, small ones with one decimal.
inline std::string format_ratio(double r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, r >= 100 ? "%.0f" : "%.1f", r);
  return buf;
}

/// Whole numbers without a decimal point, anything else as %g.
inline std::string format_count(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, v == std::floor(v) && std::fabs(v) < 1e15 ? "%.0f" : "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Columns (header names, case-insensitive): document, input, output, and
/// optionally domain and pages. "Input (Vision)" is accepted for input.
/// Thousands separators in numbers are ignored.
inline std::vector<TokenRow> parse_token_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::BadConfig, "token CSV is empty");
  auto norm = [](std::string s) {
    std::string out;
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (out.rfind("input", 0) == 0) out = "input";
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  };
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[norm(rows[0][i])] = i;
  for (const char* need : {"document", "input", "output"}) {
    if (!col.count(need)) throw Error(ErrorCode::BadConfig, std::string("token CSV needs a '") + need + "' column");
  }
  auto number = [](const std::string& s, std::size_t line) {
    std::string digits;
    for (char c : s) {
      if (c != ',' && c != ' ') digits.push_back(c);
    }
    try {
      std::size_t used = 0;
      double v = std::stod(digits, &used);
      if (used != digits.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadConfig, "not a number: '" + s + "'", "line " + std::to_string(line));
    }
  };
  std::vector<TokenRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto get = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      return it != col.end() && it->second < row.size() ? row[it->second] : std::string();
    };
    TokenRow t;
    t.domain = get("domain");
    t.document = get("document");
    if (auto p = get("pages"); !p.empty()) t.pages = static_cast<std::size_t>(number(p, r + 1));
    t.input_tokens = number(get("input"), r + 1);
    t.output_tokens = number(get("output"), r + 1);
    out.push_back(std::move(t));
  }
  return out;
}

/// Domain,Document,Pages,Input,Output,Ratio
inline std::string token_stats_csv(const CompressionStats& s) {
  std::ostringstream out;
  out << "Domain,Document,Pages,Input,Output,Ratio\n";
  for (const auto& e : s.rows) {
    out << csv_escape(e.row.domain) << ',' << csv_escape(e.row.document) << ','
        << (e.row.pages ? std::to_string(*e.row.pages) : "") << ',' << format_count(e.row.input_tokens) << ','
        << format_count(e.row.output_tokens) << ',' << format_ratio(e.ratio) << '\n';
  }
  return out.str();
}

inline json token_stats_json(const CompressionStats& s) {
  json rows = json::array();
  for (const auto& e : s.rows) {
    rows.push_back({{"domain", e.row.domain},
                    {"document", e.row.document},
                    {"pages", e.row.pages ? json(*e.row.pages) : json(nullptr)},
                    {"input", e.row.input_tokens},
                    {"output", e.row.output_tokens},
                    {"ratio", e.ratio}});
  }
  json means = json::object();
  for (const auto& [d, m] : s.domain_means) means[d] = m;
  return {{"documents", rows}, {"domain_mean_ratio", means}};
}

/// One row of the per-domain complexity table.
struct ComplexityRow {
  std::string domain;
  std::optional<double> pages;
  SchemaProfile schema;
  std::optional<double> tokens;
  std::size_t documents = 0;
  double fields = 0;
  double array_items = 0;
};

/// Averages instance profiles over a domain's documents.
inline ComplexityRow complexity_row(std::string domain, const SchemaProfile& schema,
                                    const std::vector<InstanceProfile>& docs) {
  ComplexityRow r;
  r.domain = std::move(domain);
  r.schema = schema;
  r.documents = docs.size();
  if (docs.empty()) return r;
  double tokens = 0;
  bool have_tokens = true;
  for (const auto& d : docs) {
    r.fields += static_cast<double>(d.non_array_field_count);
    r.array_items += static_cast<double>(d.array_item_count);
    if (d.output_token_count) {
      tokens += static_cast<double>(*d.output_token_count);
    } else {
      have_tokens = false;
    }
  }
  const double n = static_cast<double>(docs.size());
  r.fields /= n;
  r.array_items /= n;
  if (have_tokens) r.tokens = tokens / n;
  return r;
}

/// Domain,Pages,Keys,Depth,Tokens,Fields,Arr. Items
inline std::string complexity_csv(const std::vector<ComplexityRow>& rows) {
  std::ostringstream out;
  out << "Domain,Pages,Keys,Depth,Tokens,Fields,Arr. Items\n";
  char buf[64];
  auto fixed = [&](double v, const char* fmt) {
    std::snprintf(buf, sizeof buf, fmt, v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << csv_escape(r.domain) << ',' << (r.pages ? fixed(*r.pages, "%.0f") : "") << ',' << r.schema.breadth << ','
        << r.schema.depth << ',' << (r.tokens ? fixed(*r.tokens, "%.0f") : "") << ','
        << (r.documents ? fixed(r.fields, "%.1f") : "") << ',' << (r.documents ? fixed(r.array_items, "%.1f") : "")
        << '\n';
  }
  return out.str();
}

}  // namespace xb
