#pragma once

// Failure taxonomy for extraction attempts and the syntactic half of the
// classifier (the transport half lives with the harness).

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"

namespace xb {

enum class FailureMode {
  EmptyResponse,
  TrailingComma,
  TruncatedJson,
  PdfPageLimit,
  ContextLength,
  SchemaRejected,
  Other,
};

inline constexpr FailureMode kAllFailureModes[] = {
    FailureMode::EmptyResponse, FailureMode::TrailingComma,  FailureMode::TruncatedJson,
    FailureMode::PdfPageLimit,  FailureMode::ContextLength,  FailureMode::SchemaRejected,
    FailureMode::Other};

inline std::string_view to_string(FailureMode m) {
  switch (m) {
    case FailureMode::EmptyResponse: return "EmptyResponse";
    case FailureMode::TrailingComma: return "TrailingComma";
    case FailureMode::TruncatedJson: return "TruncatedJson";
    case FailureMode::PdfPageLimit: return "PdfPageLimit";
    case FailureMode::ContextLength: return "ContextLength";
    case FailureMode::SchemaRejected: return "SchemaRejected";
    case FailureMode::Other: return "Other";
  }
  return "Other";
}

inline FailureMode failure_mode_from_string(std::string_view s) {
  for (auto m : kAllFailureModes) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::BadConfig, "unknown failure mode '" + std::string(s) + "'");
}

struct JsonScan {
  /// Byte offsets of commas whose next non-whitespace character closes a
  /// container.
  std::vector<std::size_t> trailing_commas;
  /// Containers still open at end of input.
  std::size_t open_depth = 0;
  bool in_string_at_end = false;
};

/// String-aware lexical scan; does not validate the grammar.
inline JsonScan scan_json(std::string_view text) {
  JsonScan s;
  std::vector<char> stack;
  bool in_string = false, escaped = false;
  std::optional<std::size_t> pending_comma;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if ((c == '}' || c == ']') && pending_comma) s.trailing_commas.push_back(*pending_comma);
    pending_comma.reset();
    switch (c) {
      case '"': in_string = true; break;
      case '{': case '[': stack.push_back(c); break;
      case '}': case ']':
        if (!stack.empty()) stack.pop_back();
        break;
      case ',': pending_comma = i; break;
      default: break;
    }
  }
  s.open_depth = stack.size();
  s.in_string_at_end = in_string;
  return s;
}

/// Removes every flagged trailing comma. Only for exploratory runs: the
/// benchmark scores outputs as produced.
inline std::string repair_trailing_commas(std::string_view text) {
  std::string out(text);
  auto commas = scan_json(text).trailing_commas;
  for (auto it = commas.rbegin(); it != commas.rend(); ++it) out.erase(*it, 1);
  return out;
}

/// Syntactic classification of a candidate JSON text; nullopt when it
/// parses.
///   - empty or whitespace only                         -> EmptyResponse
///   - parse error on a `}`/`]` right after a comma     -> TrailingComma
///   - parse error at end of input with open containers -> TruncatedJson
///   - anything else                                    -> Other
inline std::optional<FailureMode> classify_syntax(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return FailureMode::EmptyResponse;
  try {
    [[maybe_unused]] auto parsed = nlohmann::json::parse(text);
    return std::nullopt;
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t last = text.find_last_not_of(" \t\r\n");
    // e.byte is the 1-based offset of the character the parser choked on.
    const std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
    if (at <= last && (text[at] == '}' || text[at] == ']')) {
      auto prev = text.find_last_not_of(" \t\r\n", at == 0 ? 0 : at - 1);
      if (at > 0 && prev != std::string_view::npos && text[prev] == ',') return FailureMode::TrailingComma;
    }
    if (at >= last) {
      JsonScan s = scan_json(text);
      if (s.open_depth > 0 || s.in_string_at_end) return FailureMode::TruncatedJson;
    }
    return FailureMode::Other;
  }
}

}  // namespace xb
