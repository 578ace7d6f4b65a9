// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// JSON-over-HTTP client for chat-style inference services. The wire format
// is documented in docs/wire-protocol.md.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <semaphore>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "rastar/backend.hpp"

namespace rastar {

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string auth_token;  // sent as "Authorization: Bearer <token>" when non-empty
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
  int max_retries = 3;  // transport retries after the first attempt
  std::chrono::milliseconds initial_backoff{200};
  std::ptrdiff_t max_in_flight = 8;
  bool send_mode_field = true;     // "mode" and chat_template_kwargs.enable_thinking
  bool send_mode_message = false;  // system message carrying the suffix token
  std::string think_token = "/think";
  std::string nothink_token = "/no_think";
  std::string think_open = "<think>";
  std::string think_close = "</think>";
};

/// Request body for one invoke. The prompt travels byte-for-byte as the last
/// user message.
inline nlohmann::json make_request_body(const BackendRequest& request, const HttpBackendConfig& config) {
  nlohmann::json messages = nlohmann::json::array();
  if (config.send_mode_message && request.mode != Mode::Auto) {
    messages.push_back({{"role", "system"},
                        {"content", request.mode == Mode::Think ? config.think_token : config.nothink_token}});
  }
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  nlohmann::json body = {
      {"model", config.model},
      {"messages", messages},
      {"temperature", request.sampling.temperature},
      {"max_tokens", request.sampling.max_tokens},
      {"request_id", request.request_id},
  };
  if (config.send_mode_field) {
    body["mode"] = mode_name(request.mode);
    if (request.mode != Mode::Auto) {
      body["chat_template_kwargs"] = {{"enable_thinking", request.mode == Mode::Think}};
    }
  }
  return body;
}

/// Extracts text and token usage from a reply body. A separate
/// `reasoning_content` field is folded back into the text between the think
/// markers so parsing sees one format.
inline BackendReply parse_reply_body(const std::string& body, const HttpBackendConfig& config) {
  try {
    const auto doc = nlohmann::json::parse(body);
    const auto& message = doc.at("choices").at(0).at("message");
    BackendReply reply;
    const auto& content = message.at("content");
    reply.text = content.is_null() ? std::string() : content.get<std::string>();
    if (message.contains("reasoning_content") && message["reasoning_content"].is_string()) {
      reply.text = config.think_open + message["reasoning_content"].get<std::string>() +
                   config.think_close + reply.text;
    }
    if (doc.contains("usage") && doc["usage"].contains("completion_tokens")) {
      reply.token_count = doc["usage"]["completion_tokens"].get<long>();
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("malformed service reply: ") + e.what());
  }
}

class HttpBackend : public ModelBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config)
      : config_(std::move(config)), slots_(std::max<std::ptrdiff_t>(1, config_.max_in_flight)) {}

  BackendReply invoke(const BackendRequest& request) override {
    if (request.sampling.max_tokens < 1) throw Error(Errc::InvalidArgument, "max_tokens must be >= 1");
    const std::string body = make_request_body(request, config_).dump();
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.connect_timeout);
    client.set_read_timeout(config_.read_timeout);
    client.set_write_timeout(config_.read_timeout);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + config_.auth_token);

    std::string last_failure;
    bool last_was_timeout = false;
    auto backoff = config_.initial_backoff;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      auto result = client.Post(config_.path, headers, body, "application/json");
      if (!result) {
        last_was_timeout = result.error() == httplib::Error::Read ||
                           result.error() == httplib::Error::ConnectionTimeout;
        last_failure = httplib::to_string(result.error());
        continue;
      }
      if (result->status == 429 || result->status >= 500) {
        last_was_timeout = false;
        last_failure = "HTTP " + std::to_string(result->status);
        continue;
      }
      if (result->status != 200) {
        throw Error(Errc::ProtocolError, "service answered HTTP " + std::to_string(result->status) +
                                             " for request '" + request.request_id + "'");
      }
      return parse_reply_body(result->body, config_);
    }
    throw Error(last_was_timeout ? Errc::Timeout : Errc::BackendFailure,
                "request '" + request.request_id + "' failed after " +
                    std::to_string(config_.max_retries + 1) + " attempts: " + last_failure);
  }

  const HttpBackendConfig& config() const { return config_; }

 private:
  HttpBackendConfig config_;
  std::counting_semaphore<> slots_;
};

}  // namespace rastar
