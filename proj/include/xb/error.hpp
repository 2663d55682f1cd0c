#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xb {

enum class ErrorCode {
  MalformedJson,
  UnsupportedConstruct,
  CyclicReference,
  BadConfig,
  UnknownMetric,
  JudgeUnavailable,
  JudgeTransport,
  JudgeProtocol,
  JudgeRateLimited,
  MatcherProtocol,
  GoldInvalid,
  EmptyInput,
  ProviderTransport,
  ProviderRejected,
  UnknownTokenizer,
  ZeroOutput,
  UnknownFormat,
  ManifestMismatch,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::UnsupportedConstruct: return "UnsupportedConstruct";
    case ErrorCode::CyclicReference: return "CyclicReference";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::JudgeTransport: return "JudgeTransport";
    case ErrorCode::JudgeProtocol: return "JudgeProtocol";
    case ErrorCode::JudgeRateLimited: return "JudgeRateLimited";
    case ErrorCode::MatcherProtocol: return "MatcherProtocol";
    case ErrorCode::GoldInvalid: return "GoldInvalid";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ProviderTransport: return "ProviderTransport";
    case ErrorCode::ProviderRejected: return "ProviderRejected";
    case ErrorCode::UnknownTokenizer: return "UnknownTokenizer";
    case ErrorCode::ZeroOutput: return "ZeroOutput";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `where` carries a JSON pointer or
/// a file path when one is meaningful.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string where = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message +
                           (where.empty() ? "" : " (at " + where + ")")),
        code_(code),
        where_(std::move(where)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorCode code_;
  std::string where_;
};

/// Process exit status for the command-line tool: 2 for data errors,
/// 3 for external services, 1 for everything that is a usage problem.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::GoldInvalid:
    case ErrorCode::ManifestMismatch:
    case ErrorCode::MalformedJson:
    case ErrorCode::UnsupportedConstruct:
    case ErrorCode::CyclicReference:
    case ErrorCode::BadConfig:
    case ErrorCode::UnknownMetric:
    case ErrorCode::ZeroOutput:
    case ErrorCode::Io:
      return 2;
    case ErrorCode::JudgeUnavailable:
    case ErrorCode::JudgeTransport:
    case ErrorCode::JudgeProtocol:
    case ErrorCode::JudgeRateLimited:
    case ErrorCode::ProviderTransport:
    case ErrorCode::ProviderRejected:
    case ErrorCode::MatcherProtocol:
      return 3;
    case ErrorCode::EmptyInput:
    case ErrorCode::UnknownTokenizer:
    case ErrorCode::UnknownFormat:
      return 1;
  }
  return 1;
}

}  // namespace xb
