#pragma once

// Deterministic stand-in for an LLM judge. Its verdicts are a pure
// function of the canonical request bytes:
//
//   equivalence: 1.0 when the case-folded strings are equal, or when one
//                is a token-prefix of the other (same or fewer tokens, each
//                a prefix of the token at the same position, tokens split on
//                whitespace and stripped of ASCII punctuation); else 0.0.
//   alignment:   the deterministic matcher over the request's item lists.

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "xb/alignment.hpp"
#include "xb/judge.hpp"
#include "xb/schema.hpp"
#include "xb/unicode.hpp"

namespace xb {

namespace mock_detail {

inline std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char c : unicode::casefold(s)) {
    auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

inline bool token_prefix(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || a.size() > b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i].compare(0, a[i].size(), a[i]) != 0) return false;
  }
  return true;
}

}  // namespace mock_detail

inline double mock_equivalence_score(const std::string& gold, const std::string& pred) {
  if (unicode::casefold(gold) == unicode::casefold(pred)) return 1.0;
  auto a = mock_detail::tokens(gold), b = mock_detail::tokens(pred);
  return (mock_detail::token_prefix(a, b) || mock_detail::token_prefix(b, a)) ? 1.0 : 0.0;
}

class MockJudgeBackend : public JudgeBackend {
 public:
  explicit MockJudgeBackend(double match_floor = 0.3) : match_floor_(match_floor) {}

  std::string complete(const JudgeRequest& request, const std::string&) override {
    const json req = json::parse(request.canonical());
    const json& payload = req["payload"];
    if (request.kind == JudgeRequestKind::Equivalence) {
      double score = mock_equivalence_score(payload.value("gold", ""), payload.value("predicted", ""));
      return json{{"score", score}, {"rationale", score == 1.0 ? "mock: equivalent" : "mock: different"}}
          .dump();
    }
    NodePtr item = parse_schema(ojson::parse(payload["item_schema"].dump()));
    json gold = json::array(), pred = json::array();
    for (const auto& g : payload["gold_items"]) gold.push_back(g["item"]);
    for (const auto& p : payload["predicted_items"]) pred.push_back(p["item"]);
    json mapping = json::array();
    for (auto [g, p] : deterministic_match(item, gold, pred, match_floor_)) {
      mapping.push_back({payload["gold_items"][g]["index"], payload["predicted_items"][p]["index"]});
    }
    return json{{"mapping", mapping}, {"rationale", "mock: deterministic alignment"}}.dump();
  }

 private:
  double match_floor_;
};

inline std::unique_ptr<Judge> make_mock_judge(JudgeConfig config = {}) {
  return std::make_unique<Judge>(std::make_shared<MockJudgeBackend>(), std::move(config));
}

}  // namespace xb
