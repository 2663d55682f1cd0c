#pragma once

// Token counting. Two tokenizers ship:
//   "approx" : ceil(UTF-8 bytes / 4). Approximate; no vocabulary needed.
//   "gpt2"   : byte-level BPE loaded from a directory holding the standard
//              encoder.json and vocab.bpe files.
// The GPT-2 pre-tokenizer is hand-rolled. Letters and digits outside ASCII
// are classified coarsely (any non-ASCII code point that is not whitespace
// counts as a letter), which matches the reference regex on ASCII and on
// most alphabetic scripts.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/unicode.hpp"

namespace xb {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string name() const = 0;
  virtual bool approximate() const { return false; }
  virtual std::size_t count(std::string_view text) const = 0;
};

class ApproxTokenizer : public Tokenizer {
 public:
  std::string name() const override { return "approx"; }
  bool approximate() const override { return true; }
  std::size_t count(std::string_view text) const override { return (text.size() + 3) / 4; }
};

namespace bpe_detail {

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' || c == 0x85 ||
         c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}
inline bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }
inline bool is_letter(char32_t c) {
  if (c < 0x80) return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
  if (is_space(c)) return false;
  // Latin-1 punctuation and symbols.
  if (c < 0xC0) return c == 0xAA || c == 0xB5 || c == 0xBA;
  if (c == 0xD7 || c == 0xF7) return false;
  // General punctuation, currency, arrows, math, box drawing, CJK punctuation.
  if ((c >= 0x2010 && c <= 0x2BFF) || (c >= 0x3000 && c <= 0x303F)) return false;
  return true;
}

enum class Cls { Letter, Digit, Space, Other };
inline Cls classify(char32_t c) {
  if (is_letter(c)) return Cls::Letter;
  if (is_digit(c)) return Cls::Digit;
  if (is_space(c)) return Cls::Space;
  return Cls::Other;
}

/// Splits text the way GPT-2's pre-tokenization regex does:
/// 's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?[^\sLN]+|\s+(?!\S)|\s+
inline std::vector<std::u32string> pretokenize(std::u32string_view s) {
  std::vector<std::u32string> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto run = [&](std::size_t from, Cls cls) {
    std::size_t j = from;
    while (j < n && classify(s[j]) == cls) ++j;
    return j;
  };
  while (i < n) {
    if (s[i] == U'\'') {
      static const std::u32string_view suffixes[] = {U"'s", U"'t", U"'re", U"'ve", U"'m", U"'ll", U"'d"};
      bool hit = false;
      for (auto suf : suffixes) {
        if (s.substr(i, suf.size()) == suf) {
          out.emplace_back(suf);
          i += suf.size();
          hit = true;
          break;
        }
      }
      if (hit) continue;
    }
    std::size_t start = i;
    std::size_t body = (s[i] == U' ' && i + 1 < n && classify(s[i + 1]) != Cls::Space) ? i + 1 : i;
    Cls cls = classify(s[body]);
    if (cls != Cls::Space) {
      std::size_t j = run(body, cls);
      out.emplace_back(s.substr(start, j - start));
      i = j;
      continue;
    }
    // Whitespace run: leave the last space for the next token when one follows.
    std::size_t j = run(i, Cls::Space);
    if (j < n && j - i > 1) --j;
    out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

/// GPT-2's reversible byte -> printable code point table.
inline const std::array<char32_t, 256>& byte_encoder() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    char32_t extra = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<char32_t>(b) : extra++;
    return t;
  }();
  return table;
}

}  // namespace bpe_detail

class Gpt2Tokenizer : public Tokenizer {
 public:
  /// `merges` are (left, right) pairs in rank order, written in the
  /// byte-encoder alphabet. `vocab` may be empty when only counts matter.
  Gpt2Tokenizer(std::vector<std::pair<std::string, std::string>> merges,
                std::unordered_map<std::string, int> vocab = {})
      : vocab_(std::move(vocab)) {
    for (std::size_t r = 0; r < merges.size(); ++r) {
      ranks_.emplace(merges[r].first + '\x01' + merges[r].second, static_cast<int>(r));
    }
  }

  static std::unique_ptr<Gpt2Tokenizer> load(const std::filesystem::path& dir) {
    std::ifstream merges_in(dir / "vocab.bpe");
    if (!merges_in) throw Error(ErrorCode::UnknownTokenizer, "gpt2 merges file not found", (dir / "vocab.bpe").string());
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    while (std::getline(merges_in, line)) {
      if (line.rfind("#version", 0) == 0 || line.empty()) continue;
      auto sp = line.find(' ');
      if (sp == std::string::npos) continue;
      merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    std::unordered_map<std::string, int> vocab;
    std::ifstream enc_in(dir / "encoder.json");
    if (enc_in) {
      auto j = nlohmann::json::parse(enc_in, nullptr, false);
      if (j.is_object()) {
        for (const auto& [k, v] : j.items()) vocab.emplace(k, v.get<int>());
      }
    }
    return std::make_unique<Gpt2Tokenizer>(std::move(merges), std::move(vocab));
  }

  std::string name() const override { return "gpt2"; }

  std::vector<std::string> tokenize(std::string_view text) const {
    std::vector<std::string> out;
    const auto& enc = bpe_detail::byte_encoder();
    for (const auto& word : bpe_detail::pretokenize(unicode::decode_utf8(text))) {
      std::string bytes = unicode::encode_utf8(word);
      std::vector<std::string> symbols;
      for (unsigned char b : bytes) symbols.push_back(unicode::encode_utf8(std::u32string(1, enc[b])));
      merge(symbols);
      for (auto& s : symbols) out.push_back(std::move(s));
    }
    return out;
  }

  std::size_t count(std::string_view text) const override { return tokenize(text).size(); }

  /// Token ids; symbols missing from the vocabulary map to -1.
  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : tokenize(text)) {
      auto it = vocab_.find(t);
      ids.push_back(it == vocab_.end() ? -1 : it->second);
    }
    return ids;
  }

 private:
  void merge(std::vector<std::string>& symbols) const {
    while (symbols.size() > 1) {
      int best = std::numeric_limits<int>::max();
      std::size_t at = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = ranks_.find(symbols[i] + '\x01' + symbols[i + 1]);
        if (it != ranks_.end() && it->second < best) {
          best = it->second;
          at = i;
        }
      }
      if (best == std::numeric_limits<int>::max()) break;
      // Merge every occurrence of the winning pair, left to right.
      const std::string left = symbols[at], right = symbols[at + 1];
      std::vector<std::string> next;
      for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(symbols[i++]);
        }
      }
      symbols = std::move(next);
    }
  }

  std::unordered_map<std::string, int> ranks_;
  std::unordered_map<std::string, int> vocab_;
};

/// Name -> tokenizer. "approx" is always registered; "gpt2" is registered
/// lazily from XB_GPT2_DIR when that variable names a directory.
class TokenizerRegistry {
 public:
  TokenizerRegistry() { add(std::make_shared<ApproxTokenizer>()); }

  void add(std::shared_ptr<const Tokenizer> t) {
    std::lock_guard lock(mu_);
    tokenizers_[t->name()] = std::move(t);
  }

  std::shared_ptr<const Tokenizer> at(const std::string& name) {
    std::lock_guard lock(mu_);
    if (auto it = tokenizers_.find(name); it != tokenizers_.end()) return it->second;
    if (name == "gpt2") {
      if (const char* dir = std::getenv("XB_GPT2_DIR"); dir && *dir) {
        std::shared_ptr<const Tokenizer> t = Gpt2Tokenizer::load(dir);
        tokenizers_[name] = t;
        return t;
      }
    }
    throw Error(ErrorCode::UnknownTokenizer, "no tokenizer named '" + name + "'");
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Tokenizer>> tokenizers_;
};

inline TokenizerRegistry& tokenizer_registry() {
  static TokenizerRegistry r;
  return r;
}

inline std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) {
  return text.empty() ? 0 : tokenizer.count(text);
}

inline std::size_t count_tokens(std::string_view text, const std::string& tokenizer_name) {
  return count_tokens(text, *tokenizer_registry().at(tokenizer_name));
}

}  // namespace xb
