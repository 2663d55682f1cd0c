#pragma once

// Judge gateway: the one place that talks to an LLM judge.
//
// Requests are serialized canonically (sorted keys, compact) so identical
// requests are byte-identical. Responses must be a single JSON object:
//
//   equivalence:  {"score": <number in [0,1]>, "rationale": <string>}
//   alignment:    {"mapping": [[gold_index, pred_index], ...], "rationale": <string>}
//
// Prose around the object is tolerated; the outermost braces are extracted
// before parsing. Anything else is a protocol error and is retried.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"

namespace xb {

using json = nlohmann::json;

enum class JudgeRequestKind { Equivalence, Alignment };

inline std::string_view to_string(JudgeRequestKind k) {
  return k == JudgeRequestKind::Equivalence ? "equivalence" : "alignment";
}

struct JudgeRequest {
  JudgeRequestKind kind = JudgeRequestKind::Equivalence;
  /// Equivalence: {"gold": ..., "predicted": ...}.
  /// Alignment: {"item_schema", "gold_items", "predicted_items", "criteria"}.
  json payload = json::object();
  std::string instructions;

  std::string canonical() const {
    json j = {{"kind", to_string(kind)}, {"payload", payload}, {"instructions", instructions}};
    return j.dump();
  }

  static JudgeRequest equivalence(const std::string& gold, const std::string& predicted,
                                  std::string instructions = {}) {
    return {JudgeRequestKind::Equivalence, json{{"gold", gold}, {"predicted", predicted}},
            std::move(instructions)};
  }
};

using IndexMapping = std::vector<std::pair<std::size_t, std::size_t>>;

struct JudgeVerdict {
  double score = 0.0;
  IndexMapping mapping;
  std::string rationale;

  json to_json(JudgeRequestKind kind) const {
    json j = {{"rationale", rationale}};
    if (kind == JudgeRequestKind::Equivalence) {
      j["score"] = score;
    } else {
      j["mapping"] = json::array();
      for (auto [g, p] : mapping) j["mapping"].push_back({g, p});
    }
    return j;
  }
};

struct JudgeConfig {
  std::string endpoint;
  std::string model;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  /// Retries after a malformed response.
  int max_retries = 2;
  /// Retries after a rate-limit response, with exponential backoff.
  int rate_limit_retries = 4;
  std::chrono::milliseconds backoff_base{500};
};

/// Transport to a judge model. Implementations return the raw response
/// text, or throw Error(JudgeTransport | JudgeRateLimited).
class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string complete(const JudgeRequest& request, const std::string& prompt) = 0;
};

inline std::string render_judge_prompt(const JudgeRequest& request) {
  std::string out;
  if (request.kind == JudgeRequestKind::Equivalence) {
    out =
        "You are grading a document extraction. Decide whether the predicted value "
        "conveys the same information as the gold value.\n";
  } else {
    out =
        "You are aligning items of an extracted list with the gold list. Pair each gold "
        "item with the predicted item describing the same entity, using the item schema "
        "and per-field criteria. Leave items unpaired when no counterpart exists. Each "
        "index may appear in at most one pair.\n";
  }
  if (!request.instructions.empty()) {
    out += "\nAdditional instructions:\n" + request.instructions + "\n";
  }
  out += "\nRequest:\n" + request.canonical() + "\n\n";
  if (request.kind == JudgeRequestKind::Equivalence) {
    out +=
        "Respond with a single JSON object and nothing else: "
        "{\"score\": <number between 0 and 1>, \"rationale\": <string>}";
  } else {
    out +=
        "Respond with a single JSON object and nothing else: "
        "{\"mapping\": [[<gold index>, <predicted index>], ...], \"rationale\": <string>}";
  }
  return out;
}

/// Parses a judge response per the grammar above. Throws Error(JudgeProtocol).
inline JudgeVerdict parse_judge_response(std::string_view text, JudgeRequestKind kind) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw Error(ErrorCode::JudgeProtocol, "no JSON object in judge response");
  }
  json j = json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::JudgeProtocol, "judge response is not a JSON object");
  }
  JudgeVerdict v;
  if (auto it = j.find("rationale"); it != j.end()) {
    if (!it->is_string()) throw Error(ErrorCode::JudgeProtocol, "rationale must be a string");
    v.rationale = it->get<std::string>();
  }
  if (kind == JudgeRequestKind::Equivalence) {
    auto it = j.find("score");
    if (it == j.end() || !it->is_number()) {
      throw Error(ErrorCode::JudgeProtocol, "missing numeric score");
    }
    v.score = it->get<double>();
    if (!(v.score >= 0.0 && v.score <= 1.0)) {
      throw Error(ErrorCode::JudgeProtocol, "score outside [0,1]");
    }
  } else {
    auto it = j.find("mapping");
    if (it == j.end() || !it->is_array()) {
      throw Error(ErrorCode::JudgeProtocol, "missing mapping array");
    }
    for (const auto& pair : *it) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
          !pair[1].is_number_unsigned()) {
        throw Error(ErrorCode::JudgeProtocol, "mapping entries must be [gold, pred] index pairs");
      }
      v.mapping.emplace_back(pair[0].get<std::size_t>(), pair[1].get<std::size_t>());
    }
  }
  return v;
}

/// Shareable judge handle: retries, backoff, in-flight limit, per-run
/// memoization and an audit log of every request/verdict pair.
class Judge {
 public:
  Judge(std::shared_ptr<JudgeBackend> backend, JudgeConfig config = {})
      : backend_(std::move(backend)),
        config_(std::move(config)),
        slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_in_flight, 1, 1024))) {}

  Judge(const Judge&) = delete;
  Judge& operator=(const Judge&) = delete;

  const JudgeConfig& config() const noexcept { return config_; }

  /// `use_cache=false` forces a fresh call (used when a caller rejects a
  /// grammatically valid verdict and retries).
  JudgeVerdict call(const JudgeRequest& request, bool use_cache = true) {
    const std::string key = request.canonical();
    if (use_cache) {
      std::lock_guard lock(mu_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    const std::string prompt = render_judge_prompt(request);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      std::string text = send(request, prompt);
      try {
        JudgeVerdict verdict = parse_judge_response(text, request.kind);
        record(key, request.kind, text, &verdict, attempt + 1);
        std::lock_guard lock(mu_);
        memo_.insert_or_assign(key, verdict);
        return verdict;
      } catch (const Error& e) {
        last_error = e.what();
        record(key, request.kind, text, nullptr, attempt + 1);
      }
    }
    throw Error(ErrorCode::JudgeProtocol,
                "malformed judge response after " + std::to_string(config_.max_retries + 1) +
                    " attempts: " + last_error);
  }

  /// Audit records sorted by request bytes, so the log is stable under
  /// concurrent evaluation.
  json records() const {
    std::lock_guard lock(mu_);
    auto sorted = log_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const json& a, const json& b) {
      return a["request"].get_ref<const std::string&>() < b["request"].get_ref<const std::string&>();
    });
    return sorted;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  std::string send(const JudgeRequest& request, const std::string& prompt) {
    for (int attempt = 0;; ++attempt) {
      try {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<1024>& s;
          ~Release() { s.release(); }
        } release{slots_};
        {
          std::lock_guard lock(mu_);
          ++calls_;
        }
        return backend_->complete(request, prompt);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::JudgeRateLimited || attempt >= config_.rate_limit_retries) throw;
        std::this_thread::sleep_for(config_.backoff_base * (1LL << attempt));
      }
    }
  }

  void record(const std::string& key, JudgeRequestKind kind, const std::string& response,
              const JudgeVerdict* verdict, int attempt) {
    json entry = {{"request", key},
                  {"response", response},
                  {"attempt", attempt},
                  {"verdict", verdict ? verdict->to_json(kind) : json(nullptr)}};
    std::lock_guard lock(mu_);
    log_.push_back(std::move(entry));
  }

  std::shared_ptr<JudgeBackend> backend_;
  JudgeConfig config_;
  std::counting_semaphore<1024> slots_;
  mutable std::mutex mu_;
  std::map<std::string, JudgeVerdict> memo_;
  std::vector<json> log_;
  std::size_t calls_ = 0;
};

}  // namespace xb
