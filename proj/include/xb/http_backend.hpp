#pragma once

// OpenAI-compatible chat-completions clients for the judge and for
// extraction providers. HTTPS needs CPPHTTPLIB_OPENSSL_SUPPORT defined
// before this header is included.

#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/evaluator.hpp"
#include "xb/harness.hpp"
#include "xb/judge.hpp"
#include "xb/mock_judge.hpp"

namespace xb {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/chat/completions
};

inline Endpoint split_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::BadConfig, "endpoint must be an absolute URL", url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* v = std::getenv(name.c_str());
  return v ? v : "";
}

/// Message text from a chat-completions body, or nullopt when the body
/// does not have that shape.
inline std::optional<std::string> chat_content(const json& body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    return std::nullopt;
  }
  const json& msg = body["choices"][0].value("message", json::object());
  auto it = msg.find("content");
  if (it == msg.end()) return std::nullopt;
  if (it->is_null()) return std::string();
  if (it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

/// Provider error text from an error body, falling back to the raw body.
inline std::string provider_message(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("error")) {
    const json& e = j["error"];
    if (e.is_string()) return e.get<std::string>();
    if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"].get<std::string>();
  }
  return body;
}

class HttpChatClient {
 public:
  HttpChatClient(std::string endpoint, std::string api_key, std::chrono::milliseconds timeout)
      : endpoint_(split_endpoint(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {}

  /// Raw status and body; status 0 means no response arrived.
  std::pair<int, std::string> post(const json& body, std::string& transport_error) const {
    httplib::Client client(endpoint_.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      transport_error = httplib::to_string(res.error());
      return {0, ""};
    }
    return {res->status, res->body};
  }

 private:
  Endpoint endpoint_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

class HttpJudgeBackend : public JudgeBackend {
 public:
  HttpJudgeBackend(JudgeConfig config, std::string api_key)
      : config_(std::move(config)), client_(config_.endpoint, std::move(api_key), config_.timeout) {}

  std::string complete(const JudgeRequest&, const std::string& prompt) override {
    json body = {{"model", config_.model},
                 {"temperature", 0},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    std::string err;
    auto [status, text] = client_.post(body, err);
    if (status == 0) throw Error(ErrorCode::JudgeTransport, err, config_.endpoint);
    if (status == 429) throw Error(ErrorCode::JudgeRateLimited, provider_message(text), config_.endpoint);
    if (status < 200 || status >= 300) {
      throw Error(ErrorCode::JudgeTransport, "HTTP " + std::to_string(status) + ": " + provider_message(text),
                  config_.endpoint);
    }
    auto content = chat_content(json::parse(text, nullptr, false));
    if (!content) throw Error(ErrorCode::JudgeProtocol, "response is not a chat completion", config_.endpoint);
    return *content;
  }

 private:
  JudgeConfig config_;
  HttpChatClient client_;
};

/// nullptr for judge type "none".
inline std::unique_ptr<Judge> make_judge(const JudgeSettings& settings) {
  if (settings.type == "mock") return make_mock_judge(settings.config);
  if (settings.type == "http") {
    return std::make_unique<Judge>(
        std::make_shared<HttpJudgeBackend>(settings.config, env_or_empty(settings.api_key_env)), settings.config);
  }
  return nullptr;
}

/// Extraction provider speaking the chat-completions dialect. The PDF goes
/// in as a base64 file part; structured mode adds a json_schema response
/// format. Rate-limit responses are retried with exponential backoff.
///
/// Config: {"type": "openai", "endpoint": url, "api_key_env": name,
///          "max_in_flight": n, "timeout_s": s, "rate_limit_retries": n}
class HttpProvider : public Provider {
 public:
  HttpProvider(std::string id, const json& config)
      : id_(std::move(id)),
        endpoint_(config.value("endpoint", std::string())),
        client_(endpoint_, env_or_empty(config.value("api_key_env", std::string())),
                std::chrono::milliseconds(static_cast<long long>(config.value("timeout_s", 600.0) * 1000))),
        max_in_flight_(config.value("max_in_flight", std::size_t{2})),
        rate_limit_retries_(config.value("rate_limit_retries", 4)),
        backoff_(std::chrono::milliseconds(config.value("backoff_ms", 1000))) {
    if (endpoint_.empty()) throw Error(ErrorCode::BadConfig, "provider needs an endpoint", id_);
  }

  std::string id() const override { return id_; }
  std::size_t max_in_flight() const override { return max_in_flight_; }

  ProviderReply extract(const ProviderRequest& request) override {
    json content = json::array({{{"type", "text"}, {"text", request.prompt}}});
    if (!request.pdf.empty()) {
      const std::string bytes = read_text_file(request.pdf);
      content.push_back({{"type", "file"},
                         {"file",
                          {{"filename", request.pdf.filename().string()},
                           {"file_data", "data:application/pdf;base64," + httplib::detail::base64_encode(bytes)}}}});
    }
    json body = {{"model", request.model}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
    if (request.mode == ExtractionMode::Structured) {
      json schema = json::parse(request.schema_text, nullptr, false);
      if (schema.is_discarded()) throw Error(ErrorCode::MalformedJson, "schema is not JSON");
      body["response_format"] = {{"type", "json_schema"},
                                 {"json_schema", {{"name", "extraction"}, {"schema", schema}}}};
    }
    for (int attempt = 0;; ++attempt) {
      std::string err;
      auto [status, text] = client_.post(body, err);
      if (status == 0) throw Error(ErrorCode::ProviderTransport, err, endpoint_);
      if (status == 429 && attempt < rate_limit_retries_) {
        std::this_thread::sleep_for(backoff_ * (1 << attempt));
        continue;
      }
      if (status == 401 || status == 403 || status == 429 || status >= 500) {
        throw Error(ErrorCode::ProviderTransport, "HTTP " + std::to_string(status) + ": " + provider_message(text),
                    endpoint_);
      }
      if (status >= 400) throw Error(ErrorCode::ProviderRejected, provider_message(text), endpoint_);
      json j = json::parse(text, nullptr, false);
      auto reply = chat_content(j);
      if (!reply) throw Error(ErrorCode::ProviderTransport, "response is not a chat completion", endpoint_);
      return {*reply, j.value("usage", json::object())};
    }
  }

 private:
  std::string id_;
  std::string endpoint_;
  HttpChatClient client_;
  std::size_t max_in_flight_;
  int rate_limit_retries_;
  std::chrono::milliseconds backoff_;
};

/// Provider config file: {"providers": {name: {"type": "mock" | "openai", ...}}}.
inline std::map<std::string, std::shared_ptr<Provider>> load_providers(const json& j, const fs::path& base_dir) {
  const json& providers = j.contains("providers") ? j["providers"] : j;
  if (!providers.is_object()) throw Error(ErrorCode::BadConfig, "provider config must be an object");
  std::map<std::string, std::shared_ptr<Provider>> out;
  for (const auto& [name, cfg] : providers.items()) {
    const std::string type = cfg.value("type", std::string("mock"));
    if (type == "mock") {
      out[name] = std::make_shared<MockProvider>(cfg, base_dir);
    } else if (type == "openai") {
      out[name] = std::make_shared<HttpProvider>(name, cfg);
    } else {
      throw Error(ErrorCode::BadConfig, "unknown provider type '" + type + "'", name);
    }
  }
  return out;
}

}  // namespace xb
