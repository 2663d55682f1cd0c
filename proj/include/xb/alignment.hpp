#pragma once

// Order-independent alignment of predicted array items to gold items.
//
// The deterministic matcher scores every (gold, predicted) pair with a
// per-field similarity in [0,1] and picks the injective matching with the
// largest total similarity; pairs below the floor are never matched.
// Up to 12 items per side the optimum comes from a subset DP; larger
// arrays use the Hungarian algorithm, which is also exact.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/judge.hpp"
#include "xb/metrics.hpp"
#include "xb/schema.hpp"
#include "xb/value_semantics.hpp"

namespace xb {

using SimilarityMatrix = std::vector<std::vector<double>>;

/// Deterministic similarity of one leaf pair: fuzzy for strings, tolerance
/// (0 unless the field declares one) for numbers, equality otherwise.
inline double leaf_similarity(const SchemaNode& node, const json& g, const json& p) {
  if (node.kind == NodeKind::Primitive) {
    switch (node.primitive) {
      case PrimitiveKind::String:
        if (!g.is_string() || !p.is_string()) return 0.0;
        return fuzzy_similarity(g.get_ref<const std::string&>(), p.get_ref<const std::string&>());
      case PrimitiveKind::Number:
      case PrimitiveKind::Integer:
        if (!g.is_number() || !p.is_number()) return 0.0;
        return numeric_tolerance_check(g.get<double>(), p.get<double>(), node.metric.param("tolerance", 0.0))
                   ? 1.0
                   : 0.0;
      case PrimitiveKind::Boolean:
        return g == p ? 1.0 : 0.0;
    }
  }
  return g == p ? 1.0 : 0.0;
}

/// Mean leaf similarity over the item's field positions that are present
/// on both sides; 0 when they share none.
inline double item_similarity(const NodePtr& item_schema, const json& gold_item, const json& pred_item) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& pos : enumerate_field_positions(item_schema)) {
    auto g = read_value(gold_item, pos.path).state;
    auto p = read_value(pred_item, pos.path).state;
    if (!g.is_present() || !p.is_present()) continue;
    sum += leaf_similarity(*pos.node, g.value(), p.value());
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline SimilarityMatrix similarity_matrix(const NodePtr& item_schema, const json& gold, const json& pred) {
  SimilarityMatrix m(gold.size(), std::vector<double>(pred.size(), 0.0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = 0; j < pred.size(); ++j) m[i][j] = item_similarity(item_schema, gold[i], pred[j]);
  }
  return m;
}

/// Sum of similarities of a mapping, accumulated in gold-index order.
inline double mapping_total(const SimilarityMatrix& sim, const IndexMapping& mapping) {
  IndexMapping sorted = mapping;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (auto [g, p] : sorted) total += sim[g][p];
  return total;
}

namespace align_detail {

inline IndexMapping subset_dp(const SimilarityMatrix& sim, std::size_t n, std::size_t m, double floor) {
  const std::size_t full = std::size_t{1} << m;
  // best[i][mask]: max total over gold items i.. with predicted set `mask` used.
  std::vector<std::vector<double>> best(n + 1, std::vector<double>(full, 0.0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t mask = 0; mask < full; ++mask) {
      double b = best[i + 1][mask];
      for (std::size_t j = 0; j < m; ++j) {
        if ((mask >> j) & 1U || sim[i][j] < floor) continue;
        b = std::max(b, sim[i][j] + best[i + 1][mask | (std::size_t{1} << j)]);
      }
      best[i][mask] = b;
    }
  }
  IndexMapping out;
  std::size_t mask = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i][mask] == best[i + 1][mask]) continue;
    for (std::size_t j = 0; j < m; ++j) {
      if ((mask >> j) & 1U || sim[i][j] < floor) continue;
      if (sim[i][j] + best[i + 1][mask | (std::size_t{1} << j)] == best[i][mask]) {
        out.emplace_back(i, j);
        mask |= std::size_t{1} << j;
        break;
      }
    }
  }
  return out;
}

// Kuhn-Munkres on a square cost matrix (minimization), O(k^3).
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t k = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0), minv(k + 1);
  std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
  std::vector<char> used(k + 1);
  for (std::size_t i = 1; i <= k; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (std::size_t j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta, v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(k);
  for (std::size_t j = 1; j <= k; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline IndexMapping hungarian_match(const SimilarityMatrix& sim, std::size_t n, std::size_t m, double floor) {
  const std::size_t k = std::max(n, m);
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i][j] = sim[i][j] >= floor ? -sim[i][j] : 0.0;
  }
  auto assign = hungarian(cost);
  IndexMapping out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = assign[i];
    if (j < m && sim[i][j] >= floor) out.emplace_back(i, j);
  }
  return out;
}

}  // namespace align_detail

/// Maximum-total-similarity injective matching over a similarity matrix.
inline IndexMapping optimal_assignment(const SimilarityMatrix& sim, std::size_t pred_count, double floor) {
  const std::size_t n = sim.size();
  const std::size_t m = pred_count;
  if (n == 0 || m == 0) return {};
  if (std::max(n, m) <= 12) {
    // The DP is exponential in the predicted side only.
    if (m <= n) return align_detail::subset_dp(sim, n, m, floor);
    SimilarityMatrix t(m, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) t[j][i] = sim[i][j];
    }
    IndexMapping out;
    for (auto [j, i] : align_detail::subset_dp(t, m, n, floor)) out.emplace_back(i, j);
    std::sort(out.begin(), out.end());
    return out;
  }
  return align_detail::hungarian_match(sim, n, m, floor);
}

inline IndexMapping deterministic_match(const NodePtr& item_schema, const json& gold_items,
                                        const json& pred_items, double floor = 0.3) {
  return optimal_assignment(similarity_matrix(item_schema, gold_items, pred_items), pred_items.size(), floor);
}

/// Per-field criteria for the judge: metric and instructions of every
/// field position inside the item schema.
inline json item_criteria(const NodePtr& item_schema) {
  json c = json::object();
  for (const auto& pos : enumerate_field_positions(item_schema)) {
    json entry = {{"metric_id", pos.node->metric.metric_id}, {"params", pos.node->metric.params}};
    if (pos.node->metric.additional_instructions) {
      entry["instructions"] = *pos.node->metric.additional_instructions;
    }
    c[pos.display()] = entry;
  }
  return c;
}

/// Judge-proposed matching. Gold items go out in batches; predicted items
/// matched in an earlier batch are withheld from later ones. Every
/// returned mapping must be injective and in range, otherwise the batch
/// is re-asked; after the retry budget the call fails with MatcherProtocol.
inline IndexMapping judge_match(const NodePtr& item_schema, const json& gold_items, const json& pred_items,
                                const json& criteria, Judge& judge, std::size_t batch_size = 25,
                                int retries = 2, const std::string& instructions = {}) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::string schema_text = serialize_schema(*item_schema).dump();
  std::set<std::size_t> taken;
  IndexMapping out;
  for (std::size_t start = 0; start < gold_items.size(); start += batch_size) {
    const std::size_t stop = std::min(gold_items.size(), start + batch_size);
    json gold_batch = json::array();
    for (std::size_t i = start; i < stop; ++i) gold_batch.push_back({{"index", i}, {"item", gold_items[i]}});
    json pred_avail = json::array();
    std::set<std::size_t> avail;
    for (std::size_t j = 0; j < pred_items.size(); ++j) {
      if (taken.count(j)) continue;
      pred_avail.push_back({{"index", j}, {"item", pred_items[j]}});
      avail.insert(j);
    }
    if (avail.empty()) break;
    JudgeRequest req{JudgeRequestKind::Alignment,
                     {{"item_schema", json::parse(schema_text)},
                      {"gold_items", gold_batch},
                      {"predicted_items", pred_avail},
                      {"criteria", criteria}},
                     instructions};
    std::string problem;
    bool accepted = false;
    for (int attempt = 0; attempt <= retries && !accepted; ++attempt) {
      JudgeVerdict v = judge.call(req, attempt == 0);
      std::set<std::size_t> seen_g, seen_p;
      problem.clear();
      for (auto [g, p] : v.mapping) {
        if (g < start || g >= stop) problem = "gold index " + std::to_string(g) + " outside batch";
        else if (!avail.count(p)) problem = "predicted index " + std::to_string(p) + " unavailable";
        else if (!seen_g.insert(g).second) problem = "gold index " + std::to_string(g) + " repeated";
        else if (!seen_p.insert(p).second) problem = "predicted index " + std::to_string(p) + " repeated";
        if (!problem.empty()) break;
      }
      if (problem.empty()) {
        accepted = true;
        for (auto pair : v.mapping) {
          out.push_back(pair);
          taken.insert(pair.second);
        }
      }
    }
    if (!accepted) throw Error(ErrorCode::MatcherProtocol, "judge mapping rejected: " + problem);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct MatchedPair {
  std::size_t gold = 0;
  std::size_t pred = 0;
  double item_score = 0.0;
  bool item_pass = false;
  std::vector<FieldResult> item_results;
};

struct ArrayAlignment {
  std::vector<MatchedPair> matched;
  std::vector<std::size_t> missed_gold;
  std::vector<std::size_t> spurious_pred;
  std::size_t true_positives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string matcher;
  std::string note;

  json to_json() const {
    json m = json::array();
    for (const auto& p : matched) {
      json items = json::object();
      for (const auto& r : p.item_results) items[r.path.empty() ? "/" : r.path] = r.to_json();
      m.push_back({{"gold", p.gold}, {"pred", p.pred}, {"item_score", p.item_score},
                   {"item_pass", p.item_pass}, {"fields", items}});
    }
    json j = {{"matched", m},          {"missed_gold", missed_gold}, {"spurious_pred", spurious_pred},
              {"true_positives", true_positives}, {"precision", precision}, {"recall", recall},
              {"f1", f1},              {"matcher", matcher}};
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

enum class MatcherKind { Deterministic, Judge };

struct AlignOptions {
  MatcherKind matcher = MatcherKind::Deterministic;
  double match_floor = 0.3;
  std::size_t batch_size = 25;
  /// Item-level pass threshold for TP and array-level F1 threshold.
  double pass_threshold = 0.7;
  int judge_retries = 2;
  Judge* judge = nullptr;
};

/// Scores one matched (gold, predicted) item pair.
using ItemEvaluator = std::function<std::vector<FieldResult>(const json& gold_item, const json& pred_item)>;

/// Aligns two item lists and computes array-level precision, recall and F1.
/// A matched pair is a true positive when the mean of its item field
/// scores reaches the pass threshold. Empty lists: both empty gives
/// P = R = F1 = 1; one side empty gives 0.
inline ArrayAlignment align_arrays(const NodePtr& item_schema, const json& gold_items, const json& pred_items,
                                   const AlignOptions& options, const ItemEvaluator& evaluate_items) {
  ArrayAlignment a;
  a.matcher = options.matcher == MatcherKind::Judge ? "judge" : "deterministic";

  // Predicted items that do not conform to the item schema never match.
  json usable = json::array();
  std::vector<std::size_t> usable_index;
  std::vector<std::size_t> rejected;
  for (std::size_t j = 0; j < pred_items.size(); ++j) {
    if (validate_instance(*item_schema, pred_items[j]).conforming) {
      usable.push_back(pred_items[j]);
      usable_index.push_back(j);
    } else {
      rejected.push_back(j);
    }
  }

  IndexMapping mapping;
  if (options.matcher == MatcherKind::Judge && !gold_items.empty() && !usable.empty()) {
    if (options.judge == nullptr) throw Error(ErrorCode::JudgeUnavailable, "judge matcher requires a judge");
    try {
      mapping = judge_match(item_schema, gold_items, usable, item_criteria(item_schema), *options.judge,
                            options.batch_size, options.judge_retries,
                            item_schema->additional_instructions.value_or(""));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MatcherProtocol) throw;
      a.note = std::string("judge matcher fell back to deterministic: ") + e.what();
      a.matcher = "deterministic";
      mapping = deterministic_match(item_schema, gold_items, usable, options.match_floor);
    }
  } else {
    mapping = deterministic_match(item_schema, gold_items, usable, options.match_floor);
  }

  std::vector<char> gold_used(gold_items.size(), 0), pred_used(pred_items.size(), 0);
  for (auto [g, u] : mapping) {
    MatchedPair pair;
    pair.gold = g;
    pair.pred = usable_index[u];
    pair.item_results = evaluate_items(gold_items[g], pred_items[pair.pred]);
    if (pair.item_results.empty()) {
      pair.item_score = 1.0;
    } else {
      double sum = 0.0;
      for (const auto& r : pair.item_results) sum += r.score;
      pair.item_score = sum / static_cast<double>(pair.item_results.size());
    }
    pair.item_pass = pair.item_score >= options.pass_threshold;
    if (pair.item_pass) ++a.true_positives;
    gold_used[g] = 1;
    pred_used[pair.pred] = 1;
    a.matched.push_back(std::move(pair));
  }
  for (std::size_t i = 0; i < gold_items.size(); ++i) {
    if (!gold_used[i]) a.missed_gold.push_back(i);
  }
  for (std::size_t j = 0; j < pred_items.size(); ++j) {
    if (!pred_used[j]) a.spurious_pred.push_back(j);
  }
  if (!rejected.empty()) {
    if (!a.note.empty()) a.note += "; ";
    a.note += std::to_string(rejected.size()) + " predicted item(s) violate the item schema";
  }

  const double tp = static_cast<double>(a.true_positives);
  if (gold_items.empty() && pred_items.empty()) {
    a.precision = a.recall = a.f1 = 1.0;
    return a;
  }
  a.precision = pred_items.empty() ? 0.0 : tp / static_cast<double>(pred_items.size());
  a.recall = gold_items.empty() ? 0.0 : tp / static_cast<double>(gold_items.size());
  a.f1 = (a.precision + a.recall) > 0.0 ? 2.0 * a.precision * a.recall / (a.precision + a.recall) : 0.0;
  return a;
}

}  // namespace xb
