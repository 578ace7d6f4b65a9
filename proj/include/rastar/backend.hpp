// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Model backends. Everything that produces text from a prompt goes through
// ModelBackend::invoke; ScriptedBackend replays canned responses for tests
// and desk-scale runs.

#include <cstddef>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rastar/error.hpp"
#include "rastar/ner.hpp"

namespace rastar {

enum class Mode { Think, Nothink, Auto };

inline std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Think: return "think";
    case Mode::Nothink: return "nothink";
    case Mode::Auto: return "auto";
  }
  return "auto";
}

inline Mode parse_mode(std::string_view name) {
  if (name == "think") return Mode::Think;
  if (name == "nothink") return Mode::Nothink;
  if (name == "auto") return Mode::Auto;
  throw Error(Errc::DataError, "unknown mode '" + std::string(name) + "'");
}

struct Sampling {
  double temperature = 0.0;
  int max_tokens = 2048;
};

struct BackendRequest {
  std::string prompt;
  Mode mode = Mode::Auto;
  Sampling sampling;
  std::string request_id;
};

struct BackendReply {
  std::string text;
  std::optional<long> token_count;
  bool fallback = false;  // scripted default used because no rule matched
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  /// Exactly one reply, or throws Error with BackendFailure, Timeout or
  /// ProtocolError.
  virtual BackendReply invoke(const BackendRequest& request) = 0;
};

/// Canned responses keyed by (prompt substring, mode, attempt). The attempt
/// index counts earlier invokes with the same prompt and mode, so a rule set
/// can fail a prompt twice and succeed on the third try.
class ScriptedBackend : public ModelBackend {
 public:
  struct Rule {
    std::string match;               // substring of the prompt; empty matches all
    std::optional<Mode> mode;        // nullopt matches any mode ("*")
    std::optional<int> attempt;      // nullopt matches any attempt
    std::string response;
    std::optional<long> tokens;
  };

  ScriptedBackend() = default;
  ScriptedBackend(std::vector<Rule> rules, std::optional<Rule> fallback)
      : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

  /// `{"rules": [{"match", "mode", "attempt", "response", "tokens"}], "default": {...}}`
  static ScriptedBackend from_json(const nlohmann::json& doc) {
    auto read_rule = [](const nlohmann::json& j) {
      Rule rule;
      rule.match = j.value("match", std::string());
      const std::string mode = j.value("mode", std::string("*"));
      if (mode != "*") rule.mode = parse_mode(mode);
      if (j.contains("attempt") && !j["attempt"].is_null()) rule.attempt = j["attempt"].get<int>();
      rule.response = j.at("response").get<std::string>();
      if (j.contains("tokens") && !j["tokens"].is_null()) rule.tokens = j["tokens"].get<long>();
      return rule;
    };
    try {
      std::vector<Rule> rules;
      for (const auto& j : doc.at("rules")) rules.push_back(read_rule(j));
      std::optional<Rule> fallback;
      if (doc.contains("default") && !doc["default"].is_null()) fallback = read_rule(doc["default"]);
      return ScriptedBackend(std::move(rules), std::move(fallback));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::DataError, std::string("scripted backend fixture: ") + e.what());
    }
  }

  static ScriptedBackend load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open scripted backend fixture '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::DataError, "scripted backend fixture '" + path + "': " + e.what());
    }
  }

  BackendReply invoke(const BackendRequest& request) override {
    std::lock_guard lock(mutex_);
    const int attempt = attempts_[{request.prompt, request.mode}]++;
    ++calls_;
    for (const Rule& rule : rules_) {
      if (rule.mode && *rule.mode != request.mode) continue;
      if (rule.attempt && *rule.attempt != attempt) continue;
      if (request.prompt.find(rule.match) == std::string::npos) continue;
      return {rule.response, rule.tokens, false};
    }
    if (!fallback_) {
      throw Error(Errc::BackendFailure, "no scripted response for request '" + request.request_id + "'");
    }
    ++fallbacks_;
    return {fallback_->response, fallback_->tokens, true};
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }
  std::size_t fallbacks() const {
    std::lock_guard lock(mutex_);
    return fallbacks_;
  }

 private:
  std::vector<Rule> rules_;
  std::optional<Rule> fallback_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, Mode>, int> attempts_;
  std::size_t calls_ = 0;
  std::size_t fallbacks_ = 0;
};

/// Tagger served by a backend. The prompt is the raw text; the reply must be
/// `{"tags": ["B", "I", "O", ...]}` with one tag per character.
class BackendTagger : public Tagger {
 public:
  explicit BackendTagger(ModelBackend& backend) : backend_(backend) {}

  std::vector<BioTag> tag(std::string_view text) const override {
    BackendRequest request;
    request.prompt = std::string(text);
    request.mode = Mode::Nothink;
    request.request_id = "tag";
    const BackendReply reply = backend_.invoke(request);
    std::vector<BioTag> tags;
    try {
      const auto doc = nlohmann::json::parse(reply.text);
      for (const auto& t : doc.at("tags")) {
        tags.push_back(parse_bio_tag(t.get<std::string>()));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ProtocolError, std::string("tagger reply: ") + e.what());
    } catch (const Error& e) {
      throw Error(Errc::ProtocolError, std::string("tagger reply: ") + e.what());
    }
    if (tags.size() != utf8::length(text)) {
      throw Error(Errc::ProtocolError, "tagger returned " + std::to_string(tags.size()) +
                                           " tags for " + std::to_string(utf8::length(text)) +
                                           " characters");
    }
    repair_tags(tags);
    return tags;
  }

 private:
  ModelBackend& backend_;
};

}  // namespace rastar
