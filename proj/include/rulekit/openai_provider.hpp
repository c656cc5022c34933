// Copyright 2026 The rulekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Provider backed by an OpenAI-compatible /chat/completions endpoint.
// Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT for https.

#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rulekit/error.hpp"
#include "rulekit/provider.hpp"

namespace rulekit {

struct EndpointConfig {
  /// e.g. "https://api.example.com/v1"; "/chat/completions" is appended.
  std::string base_url;
  std::string model_id;
  /// Name of the environment variable holding the API key; may be empty.
  std::string api_key_env;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline SplitUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ArgumentError("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
    out.path_prefix.pop_back();
  return out;
}

/// Request body for one completion.
inline json chat_request_body(const CompletionRequest& request,
                              const std::string& fallback_model) {
  json body{{"model", request.model_id.empty() ? fallback_model : request.model_id},
            {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"max_tokens", request.max_new_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

/// Reads choices[0].message. Reasoning comes from "reasoning_content" or
/// "reasoning" when present, otherwise from <think> delimiters.
inline ReasoningCompletion parse_chat_response(const std::string& body) {
  json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw ProviderError(ProviderErrorKind::kMissingText, "response missing text");
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty())
    throw ProviderError(ProviderErrorKind::kMissingText, "response missing text");
  const json& message = (*choices)[0].value("message", json::object());
  const auto content = message.find("content");
  if (content == message.end() || !content->is_string())
    throw ProviderError(ProviderErrorKind::kMissingText, "response missing text");
  std::optional<std::string> reasoning;
  for (const char* key : {"reasoning_content", "reasoning"}) {
    if (auto it = message.find(key); it != message.end() && it->is_string()) {
      reasoning = it->get<std::string>();
      break;
    }
  }
  return completion_from_text(content->get<std::string>(),
                              reasoning ? std::optional<std::string_view>(*reasoning)
                                        : std::nullopt);
}

class OpenAICompatibleProvider : public Provider {
 public:
  explicit OpenAICompatibleProvider(EndpointConfig config, Sleeper sleep = real_sleep)
      : config_(std::move(config)),
        url_(split_base_url(config_.base_url)),
        sleep_(std::move(sleep)) {
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
  }

  ReasoningCompletion complete(const CompletionRequest& request) override {
    request.validate();
    const std::string body = chat_request_body(request, config_.model_id).dump();
    return call_with_retries([&] { return post_once(body); }, config_.retry, sleep_);
  }

  const EndpointConfig& config() const noexcept { return config_; }

 private:
  ReasoningCompletion post_once(const std::string& body) const {
    // A client per call keeps the provider shareable across threads.
    httplib::Client client(url_.scheme_host_port);
    const auto t = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(t, 0);
    client.set_read_timeout(t, 0);
    client.set_write_timeout(t, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(url_.path_prefix + "/chat/completions", headers, body,
                           "application/json");
    if (!res)
      throw ProviderError(ProviderErrorKind::kTransport,
                          "transport failure: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw ProviderError(ProviderErrorKind::kHttpStatus,
                          "HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 200),
                          res->status);
    if (res->body.empty())
      throw ProviderError(ProviderErrorKind::kMissingText, "response missing text");
    return parse_chat_response(res->body);
  }

  EndpointConfig config_;
  SplitUrl url_;
  Sleeper sleep_;
  std::string api_key_;
};

}  // namespace rulekit
