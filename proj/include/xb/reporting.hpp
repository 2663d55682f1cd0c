#pragma once

// Run-level aggregation of DocumentReports and report emission.
//
// A cell holds one model's results on one domain. Pass rate counts every
// field position of every attempted document, so invalid extractions add
// positions but no passes. Acc-on-valid restricts both sides to documents
// whose extraction was valid.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/complexity.hpp"
#include "xb/error.hpp"
#include "xb/evaluator.hpp"
#include "xb/failure.hpp"
#include "xb/harness.hpp"

namespace xb {

/// "%.1f" of 100 * num / den, with a trailing '%'. den == 0 renders "-".
inline std::string percent(std::size_t num, std::size_t den) {
  if (den == 0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * static_cast<double>(num) / static_cast<double>(den));
  return buf;
}

/// "111/130 (85.4%)"
inline std::string fraction_cell(std::size_t num, std::size_t den) {
  return std::to_string(num) + "/" + std::to_string(den) + " (" + percent(num, den) + ")";
}

struct Cell {
  std::size_t docs = 0;
  std::size_t valid = 0;
  std::size_t positions = 0;
  std::size_t passed = 0;
  std::size_t valid_positions = 0;
  std::size_t valid_passed = 0;

  bool operator==(const Cell&) const = default;

  Cell& operator+=(const Cell& o) {
    docs += o.docs;
    valid += o.valid;
    positions += o.positions;
    passed += o.passed;
    valid_positions += o.valid_positions;
    valid_passed += o.valid_passed;
    return *this;
  }

  void add(const DocumentReport& r) {
    ++docs;
    positions += r.counts.positions;
    // Invalid extractions contribute no passes, whatever their counts say.
    if (r.valid) {
      ++valid;
      passed += r.counts.passed;
      valid_positions += r.counts.positions;
      valid_passed += r.counts.passed;
    }
  }

  std::optional<double> pass_rate() const {
    if (positions == 0) return std::nullopt;
    return static_cast<double>(passed) / static_cast<double>(positions);
  }
  std::optional<double> valid_rate() const {
    if (docs == 0) return std::nullopt;
    return static_cast<double>(valid) / static_cast<double>(docs);
  }
  std::optional<double> acc_on_valid() const {
    if (valid_positions == 0) return std::nullopt;
    return static_cast<double>(valid_passed) / static_cast<double>(valid_positions);
  }

  json to_json() const {
    auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
    return {{"docs", docs},
            {"valid", valid},
            {"positions", positions},
            {"passed", passed},
            {"valid_positions", valid_positions},
            {"valid_passed", valid_passed},
            {"pass_rate", opt(pass_rate())},
            {"valid_rate", opt(valid_rate())},
            {"acc_on_valid", opt(acc_on_valid())},
            {"pass_cell", fraction_cell(passed, positions)},
            {"valid_cell", fraction_cell(valid, docs)}};
  }

  static Cell from_json(const json& j) {
    Cell c;
    c.docs = j.at("docs").get<std::size_t>();
    c.valid = j.at("valid").get<std::size_t>();
    c.positions = j.at("positions").get<std::size_t>();
    c.passed = j.at("passed").get<std::size_t>();
    c.valid_positions = j.at("valid_positions").get<std::size_t>();
    c.valid_passed = j.at("valid_passed").get<std::size_t>();
    return c;
  }
};

using FailureHistogram = std::map<FailureMode, std::size_t>;

struct RunSummary {
  /// Row and column order, first-seen in the manifest.
  std::vector<std::string> models;
  std::vector<std::string> domains;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  std::map<std::string, FailureHistogram> failures;  // per model
  /// Field positions per document for each domain, when known.
  std::map<std::string, std::size_t> domain_keys;
  /// False when any prediction was repaired before scoring.
  bool benchmark = true;

  bool operator==(const RunSummary&) const = default;

  Cell cell(const std::string& model, const std::string& domain) const {
    auto it = cells.find({model, domain});
    return it == cells.end() ? Cell{} : it->second;
  }
  Cell model_total(const std::string& model) const {
    Cell c;
    for (const auto& d : domains) c += cell(model, d);
    return c;
  }
  Cell domain_total(const std::string& domain) const {
    Cell c;
    for (const auto& m : models) c += cell(m, domain);
    return c;
  }
  Cell total() const {
    Cell c;
    for (const auto& m : models) c += model_total(m);
    return c;
  }
  FailureHistogram failure_total() const {
    FailureHistogram h;
    for (const auto& [_, mh] : failures) {
      for (const auto& [mode, n] : mh) h[mode] += n;
    }
    return h;
  }
};

/// One scored attempt, keyed by its outcome record name (without ".json").
struct ScoredAttempt {
  std::string key;
  DocumentReport report;
};

inline std::string manifest_key(const ManifestRow& row) {
  std::string f = outcome_filename(row);
  return f.substr(0, f.size() - 5);
}

/// Row label: the model id, suffixed for structured-mode attempts so both
/// modes of one model stay apart.
inline std::string model_label(const ManifestRow& row) {
  return row.mode == ExtractionMode::Prompt ? row.model : row.model + " (structured)";
}

inline RunSummary aggregate_run(const std::vector<ScoredAttempt>& attempts, const std::vector<ManifestRow>& manifest) {
  std::map<std::string, const ManifestRow*> by_key;
  RunSummary s;
  auto note = [](std::vector<std::string>& order, const std::string& v) {
    if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
  };
  for (const auto& row : manifest) {
    by_key[manifest_key(row)] = &row;
    note(s.models, model_label(row));
    note(s.domains, row.domain);
  }
  for (const auto& a : attempts) {
    auto it = by_key.find(a.key);
    if (it == by_key.end()) throw Error(ErrorCode::ManifestMismatch, "report has no manifest row", a.key);
    const ManifestRow& row = *it->second;
    const std::string model = model_label(row);
    s.cells[{model, row.domain}].add(a.report);
    if (!a.report.valid) ++s.failures[model][a.report.failure_mode.value_or(FailureMode::Other)];
    s.domain_keys.emplace(row.domain, a.report.counts.positions);
    if (!a.report.benchmark) s.benchmark = false;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Emission

enum class ReportFormat { Json, Csv, Markdown };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "md" || s == "markdown") return ReportFormat::Markdown;
  throw Error(ErrorCode::UnknownFormat, "unknown report format '" + std::string(s) + "'");
}

inline json summary_to_json(const RunSummary& s) {
  json cells = json::array();
  for (const auto& m : s.models) {
    for (const auto& d : s.domains) {
      auto it = s.cells.find({m, d});
      if (it == s.cells.end()) continue;
      json c = it->second.to_json();
      c["model"] = m;
      c["domain"] = d;
      cells.push_back(std::move(c));
    }
  }
  auto hist = [](const FailureHistogram& h) {
    json o = json::object();
    for (const auto& [mode, n] : h) o[std::string(to_string(mode))] = n;
    return o;
  };
  json failures = json::object();
  for (const auto& [m, h] : s.failures) failures[m] = hist(h);
  json models = json::object();
  for (const auto& m : s.models) models[m] = s.model_total(m).to_json();
  json domains = json::object();
  for (const auto& d : s.domains) {
    json c = s.domain_total(d).to_json();
    if (auto k = s.domain_keys.find(d); k != s.domain_keys.end()) c["keys"] = k->second;
    domains[d] = std::move(c);
  }
  const FailureHistogram ft = s.failure_total();
  std::size_t failure_count = 0;
  for (const auto& [_, n] : ft) failure_count += n;
  return {{"benchmark", s.benchmark},
          {"model_order", s.models},
          {"domain_order", s.domains},
          {"cells", cells},
          {"models", models},
          {"domains", domains},
          {"overall", s.total().to_json()},
          {"failures", failures},
          {"failure_total", hist(ft)},
          {"failure_count", failure_count}};
}

inline RunSummary summary_from_json(const json& j) {
  RunSummary s;
  s.benchmark = j.value("benchmark", true);
  s.models = j.at("model_order").get<std::vector<std::string>>();
  s.domains = j.at("domain_order").get<std::vector<std::string>>();
  for (const auto& c : j.at("cells")) {
    s.cells[{c.at("model").get<std::string>(), c.at("domain").get<std::string>()}] = Cell::from_json(c);
  }
  for (const auto& [m, h] : j.at("failures").items()) {
    for (const auto& [mode, n] : h.items()) s.failures[m][failure_mode_from_string(mode)] = n.get<std::size_t>();
  }
  for (const auto& [d, c] : j.at("domains").items()) {
    if (c.contains("keys")) s.domain_keys[d] = c["keys"].get<std::size_t>();
  }
  return s;
}

inline std::string summary_to_csv(const RunSummary& s) {
  std::ostringstream out;
  out << "model,domain,docs,valid,positions,passed,pass_rate,valid_positions,valid_passed,acc_on_valid\n";
  auto row = [&](const std::string& m, const std::string& d, const Cell& c) {
    out << csv_escape(m) << ',' << csv_escape(d) << ',' << c.docs << ',' << c.valid << ',' << c.positions << ','
        << c.passed << ',' << percent(c.passed, c.positions) << ',' << c.valid_positions << ',' << c.valid_passed
        << ',' << percent(c.valid_passed, c.valid_positions) << '\n';
  };
  for (const auto& m : s.models) {
    for (const auto& d : s.domains) {
      if (auto it = s.cells.find({m, d}); it != s.cells.end()) row(m, d, it->second);
    }
    if (!s.domains.empty()) row(m, "Overall", s.model_total(m));
  }
  if (!s.models.empty()) {
    for (const auto& d : s.domains) row("Aggregate", d, s.domain_total(d));
    row("Aggregate", "Overall", s.total());
  }
  return out.str();
}

namespace reporting_detail {

/// Marks every row whose value equals the column maximum. Rows without a
/// value never win.
inline std::vector<bool> best_of(const std::vector<std::optional<double>>& values) {
  std::optional<double> best;
  for (const auto& v : values) {
    if (v && (!best || *v > *best)) best = v;
  }
  std::vector<bool> out;
  for (const auto& v : values) out.push_back(v && best && *v == *best);
  return out;
}

inline std::string bold(const std::string& s, bool on) { return on ? "**" + s + "**" : s; }

}  // namespace reporting_detail

/// Models as rows, domains as columns, then Overall and Acc (Valid); an
/// Aggregate row closes the table. The best value in each column is bold,
/// ties included.
inline std::string summary_to_markdown(const RunSummary& s) {
  using reporting_detail::best_of;
  using reporting_detail::bold;
  std::ostringstream out;
  out << "| Model | Valid JSON |";
  for (const auto& d : s.domains) {
    out << ' ' << d;
    if (auto k = s.domain_keys.find(d); k != s.domain_keys.end()) {
      out << " (" << s.domain_total(d).docs / std::max<std::size_t>(s.models.size(), 1) << " docs, " << k->second
          << " keys)";
    }
    out << " |";
  }
  out << " Overall Pass Rate | Acc (Valid) |\n|---|---|";
  for (std::size_t i = 0; i < s.domains.size(); ++i) out << "---|";
  out << "---|---|\n";

  std::vector<std::optional<double>> valid_col, overall_col, acc_col;
  std::vector<std::vector<std::optional<double>>> domain_cols(s.domains.size());
  for (const auto& m : s.models) {
    const Cell t = s.model_total(m);
    valid_col.push_back(t.valid_rate());
    overall_col.push_back(t.pass_rate());
    acc_col.push_back(t.acc_on_valid());
    for (std::size_t d = 0; d < s.domains.size(); ++d) domain_cols[d].push_back(s.cell(m, s.domains[d]).pass_rate());
  }
  const auto valid_best = best_of(valid_col), overall_best = best_of(overall_col), acc_best = best_of(acc_col);
  std::vector<std::vector<bool>> domain_best;
  for (const auto& col : domain_cols) domain_best.push_back(best_of(col));

  for (std::size_t r = 0; r < s.models.size(); ++r) {
    const std::string& m = s.models[r];
    const Cell t = s.model_total(m);
    out << "| " << m << " | " << bold(std::to_string(t.valid) + "/" + std::to_string(t.docs), valid_best[r]) << " |";
    for (std::size_t d = 0; d < s.domains.size(); ++d) {
      const Cell c = s.cell(m, s.domains[d]);
      out << ' ' << (c.docs == 0 ? std::string("-") : bold(fraction_cell(c.passed, c.positions), domain_best[d][r]))
          << " |";
    }
    out << ' ' << bold(fraction_cell(t.passed, t.positions), overall_best[r]) << " | "
        << bold(percent(t.valid_passed, t.valid_positions), acc_best[r]) << " |\n";
  }
  if (!s.models.empty()) {
    const Cell t = s.total();
    out << "| Aggregate | " << fraction_cell(t.valid, t.docs) << " |";
    for (const auto& d : s.domains) {
      const Cell c = s.domain_total(d);
      out << ' ' << fraction_cell(c.passed, c.positions) << " |";
    }
    out << ' ' << fraction_cell(t.passed, t.positions) << " | " << percent(t.valid_passed, t.valid_positions)
        << " |\n";
  }

  const FailureHistogram ft = s.failure_total();
  if (!ft.empty()) {
    std::size_t total = 0;
    out << "\n| Failure mode | Count |\n|---|---|\n";
    for (FailureMode mode : kAllFailureModes) {
      auto it = ft.find(mode);
      if (it == ft.end()) continue;
      out << "| " << to_string(mode) << " | " << it->second << " |\n";
      total += it->second;
    }
    out << "| Total failures | " << total << " |\n";
  }
  if (!s.benchmark) out << "\nNon-benchmark run: predictions were repaired before scoring.\n";
  return out.str();
}

inline std::string emit_report(const RunSummary& s, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return summary_to_json(s).dump(2) + "\n";
    case ReportFormat::Csv: return summary_to_csv(s);
    case ReportFormat::Markdown: return summary_to_markdown(s);
  }
  throw Error(ErrorCode::UnknownFormat, "unknown report format");
}

inline std::string emit_report(const RunSummary& s, std::string_view format) {
  return emit_report(s, report_format_from_string(format));
}

// ---------------------------------------------------------------------------
// Scoring stored outcomes

/// A DocumentReport for an attempt. Transport failures score like parse
/// failures: invalid, every position structural, mode from the pattern table.
inline DocumentReport score_outcome(const ExtractionOutcome& outcome, const NodePtr& schema, const json& gold,
                                    const RunConfig& config, Judge* judge, const PatternTable& patterns,
                                    const MetricRegistry& registry) {
  if (outcome.transport_error) {
    if (auto gv = validate_instance(*schema, gold); !gv.conforming) {
      throw Error(ErrorCode::GoldInvalid, gv.violations.front().message, gv.violations.front().pointer);
    }
    DocumentReport r;
    r.valid = false;
    r.benchmark = !config.repair;
    r.failure_mode = classify_failure(outcome, patterns);
    r.validity_kind = "parse_error";
    r.validity.conforming = false;
    r.parse_error = outcome.transport_error->kind + ": " + outcome.transport_error->message;
    r.counts.positions = enumerate_field_positions(schema).size();
    r.counts.structural = r.counts.positions;
    return r;
  }
  return evaluate_document(schema, gold, outcome.candidate.text, config, judge, registry);
}

}  // namespace xb
