// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Correction step: prompt assembly, response parsing with think/nothink
// detection, candidate splicing and run statistics.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rastar/backend.hpp"
#include "rastar/error.hpp"
#include "rastar/ner.hpp"
#include "rastar/repository.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

/// Delimiters shared by prompts and responses.
struct Markers {
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string answer_open = "<answer>";
  std::string answer_close = "</answer>";
  std::string keep_token = "KEEP";
  std::string span_open = "【";
  std::string span_close = "】";
};

/// Named prompt templates. File format: a line `[[name]]` opens a template,
/// whose body runs to the next header; '#' lines before the first header are
/// comments. Placeholders are `{name}`; unknown ones are left untouched.
class PromptTemplates {
 public:
  static PromptTemplates parse(std::istream& in) {
    PromptTemplates out;
    std::string line;
    std::string current;
    std::vector<std::string> body;
    auto flush = [&] {
      if (current.empty()) return;
      while (!body.empty() && utf8::strip(body.back()).empty()) body.pop_back();
      std::string text;
      for (std::size_t i = 0; i < body.size(); ++i) {
        if (i) text += '\n';
        text += body[i];
      }
      out.templates_[current] = text;
      body.clear();
    };
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.size() > 4 && line.starts_with("[[") && line.ends_with("]]")) {
        flush();
        current = line.substr(2, line.size() - 4);
        continue;
      }
      if (current.empty()) {
        if (!line.empty() && line.front() != '#') {
          throw Error(Errc::DataError, "template text before the first [[name]] header");
        }
        continue;
      }
      body.push_back(line);
    }
    flush();
    return out;
  }

  static PromptTemplates load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open prompt templates '" + path + "'");
    return parse(in);
  }

  void set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }

  const std::string& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw Error(Errc::UnknownTemplate, "no template named '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return templates_.count(name) != 0; }

  std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const {
    const std::string& text = get(name);
    std::string out;
    out.reserve(text.size() * 2);
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == '{') {
        const auto close = text.find('}', i + 1);
        if (close != std::string::npos) {
          auto it = vars.find(text.substr(i + 1, close - i - 1));
          if (it != vars.end()) {
            out += it->second;
            i = close + 1;
            continue;
          }
        }
      }
      out += text[i++];
    }
    return out;
  }

 private:
  std::map<std::string, std::string> templates_;
};

enum class ModeDirective { Auto, ForceThink, ForceNothink };

inline Mode directive_mode(ModeDirective d) {
  switch (d) {
    case ModeDirective::ForceThink: return Mode::Think;
    case ModeDirective::ForceNothink: return Mode::Nothink;
    case ModeDirective::Auto: return Mode::Auto;
  }
  return Mode::Auto;
}

inline ModeDirective parse_mode_directive(std::string_view s) {
  if (s == "auto") return ModeDirective::Auto;
  if (s == "think") return ModeDirective::ForceThink;
  if (s == "nothink") return ModeDirective::ForceNothink;
  throw Error(Errc::InvalidArgument, "mode must be auto, think or nothink");
}

struct CorrectionRequest {
  std::string hypothesis;
  EntitySpan span;
  RankedCandidates candidates;
  std::string template_id = "correct";
  ModeDirective mode_directive = ModeDirective::Auto;
};

inline std::string format_candidates(const RankedCandidates& ranked, const Markers& markers) {
  std::string out;
  char similarity[32];
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    const auto& c = ranked.candidates[i];
    std::snprintf(similarity, sizeof similarity, "%.4f", c.similarity);
    out += std::to_string(i + 1) + ". " + c.entity.surface + " (similarity " + similarity + ")\n";
  }
  out += "0. " + markers.keep_token + " (keep the original text)";
  return out;
}

inline std::string mark_span(std::string_view hypothesis, const EntitySpan& span, const Markers& markers) {
  const auto chars = utf8::decode(hypothesis);
  if (span.start >= span.end || span.end > chars.size()) {
    throw Error(Errc::SpanOutOfBounds, "span outside hypothesis");
  }
  const std::u32string_view view(chars);
  return utf8::encode(view.substr(0, span.start)) + markers.span_open +
         utf8::encode(view.substr(span.start, span.length())) + markers.span_close +
         utf8::encode(view.substr(span.end));
}

inline std::map<std::string, std::string> prompt_variables(const CorrectionRequest& request,
                                                           const Markers& markers) {
  return {
      {"hypothesis", request.hypothesis},
      {"marked_hypothesis", mark_span(request.hypothesis, request.span, markers)},
      {"span", utf8::substr(request.hypothesis, request.span.start, request.span.end)},
      {"candidates", format_candidates(request.candidates, markers)},
      {"keep_token", markers.keep_token},
      {"answer_open", markers.answer_open},
      {"answer_close", markers.answer_close},
  };
}

inline std::string render_prompt(const CorrectionRequest& request, const PromptTemplates& templates,
                                 const Markers& markers = {}) {
  if (request.candidates.candidates.empty()) {
    throw Error(Errc::InvalidArgument, "correction request without candidates");
  }
  return templates.render(request.template_id, prompt_variables(request, markers));
}

struct ModelResponse {
  Mode mode = Mode::Nothink;
  std::optional<std::string> reasoning;
  std::string answer;
  std::string raw;
  long token_count = 0;
  bool token_count_estimated = false;
  bool malformed = false;
};

/// Mode is Think iff a reasoning block is present. The answer is the last
/// complete answer pair after the reasoning block (anywhere for Nothink).
/// Without an answer pair the response is marked malformed and the answer
/// left empty.
inline ModelResponse parse_response(std::string_view raw, std::optional<long> reported_tokens = std::nullopt,
                                    const Markers& markers = {}) {
  ModelResponse out;
  out.raw = std::string(raw);
  if (reported_tokens) {
    out.token_count = *reported_tokens;
  } else {
    out.token_count = static_cast<long>(utf8::length(raw));
    out.token_count_estimated = true;
  }

  std::string_view region = raw;
  const auto open = raw.find(markers.think_open);
  if (open != std::string_view::npos) {
    out.mode = Mode::Think;
    const auto body = open + markers.think_open.size();
    const auto close = raw.find(markers.think_close, body);
    if (close == std::string_view::npos) {
      out.reasoning = std::string(raw.substr(body));
      region = {};
    } else {
      out.reasoning = std::string(raw.substr(body, close - body));
      region = raw.substr(close + markers.think_close.size());
    }
  }

  std::optional<std::string_view> answer;
  std::size_t pos = 0;
  while (true) {
    const auto a = region.find(markers.answer_open, pos);
    if (a == std::string_view::npos) break;
    const auto start = a + markers.answer_open.size();
    const auto b = region.find(markers.answer_close, start);
    if (b == std::string_view::npos) break;
    answer = region.substr(start, b - start);
    pos = b + markers.answer_close.size();
  }
  if (answer) {
    out.answer = utf8::strip(utf8::nfc(*answer));
  } else {
    out.malformed = true;
  }
  return out;
}

/// Replaces span characters with `replacement`; nullopt keeps the text.
inline std::string apply_correction(std::string_view hypothesis, const EntitySpan& span,
                                    const std::optional<std::string>& replacement) {
  const auto chars = utf8::decode(hypothesis);
  if (span.start > span.end || span.end > chars.size()) {
    throw Error(Errc::SpanOutOfBounds, "span [" + std::to_string(span.start) + ", " +
                                           std::to_string(span.end) + ") outside hypothesis");
  }
  if (!replacement) return std::string(hypothesis);
  const std::u32string_view view(chars);
  return utf8::encode(view.substr(0, span.start)) + *replacement + utf8::encode(view.substr(span.end));
}

/// Applies several replacements, right to left so offsets refer to the
/// original hypothesis throughout.
inline std::string apply_corrections(
    std::string_view hypothesis,
    std::vector<std::pair<EntitySpan, std::optional<std::string>>> edits) {
  std::sort(edits.begin(), edits.end(),
            [](const auto& a, const auto& b) { return a.first.start < b.first.start; });
  for (std::size_t i = 1; i < edits.size(); ++i) {
    if (edits[i].first.start < edits[i - 1].first.end) {
      throw Error(Errc::OverlappingSpans, "corrections overlap");
    }
  }
  std::string out(hypothesis);
  for (auto it = edits.rbegin(); it != edits.rend(); ++it) {
    out = apply_correction(out, it->first, it->second);
  }
  return out;
}

struct CorrectionResult {
  CorrectionRequest request;
  std::string prompt;
  std::string corrected_text;
  std::optional<Entity> chosen;  // nullopt = keep original
  ModelResponse response;
  Mode mode_used = Mode::Nothink;
  bool answer_rejected = false;  // answer named neither a candidate nor the keep token
  std::optional<std::string> error;  // backend failure; text kept
};

struct CorrectionOptions {
  std::string template_id = "correct";
  ModeDirective mode_directive = ModeDirective::Auto;
  Markers markers;
  Sampling sampling;
  std::size_t k = 3;
  bool type_filter = false;
};

/// The model may pick a candidate surface or the keep token; anything else
/// keeps the original span.
inline CorrectionResult correct_span(const CorrectionRequest& request, const PromptTemplates& templates,
                                     ModelBackend& backend, const CorrectionOptions& options,
                                     const std::string& request_id) {
  CorrectionResult result;
  result.request = request;
  result.prompt = render_prompt(request, templates, options.markers);
  BackendRequest call{result.prompt, directive_mode(request.mode_directive), options.sampling, request_id};
  try {
    const BackendReply reply = backend.invoke(call);
    result.response = parse_response(reply.text, reply.token_count, options.markers);
  } catch (const Error& e) {
    if (e.code() != Errc::BackendFailure && e.code() != Errc::Timeout && e.code() != Errc::ProtocolError) {
      throw;
    }
    result.error = e.what();
    result.response.malformed = true;
  }
  result.mode_used = result.response.mode;
  if (!result.response.malformed && result.response.answer != options.markers.keep_token) {
    for (const auto& c : request.candidates.candidates) {
      if (c.entity.surface == result.response.answer) {
        result.chosen = c.entity;
        break;
      }
    }
    if (!result.chosen) result.answer_rejected = true;
  }
  result.corrected_text = apply_correction(
      request.hypothesis, request.span,
      result.chosen ? std::optional<std::string>(result.chosen->surface) : std::nullopt);
  return result;
}

struct UtteranceCorrection {
  std::string id;
  std::string hypothesis;
  std::string corrected;
  std::vector<CorrectionResult> results;
};

/// Retrieves candidates for every span, asks the backend about each span
/// separately against the original hypothesis, then splices all choices.
inline UtteranceCorrection correct_utterance(const std::string& id, const std::string& hypothesis,
                                             const std::vector<EntitySpan>& spans,
                                             const EntityRepository& repo, const PromptTemplates& templates,
                                             ModelBackend& backend, const CorrectionOptions& options) {
  UtteranceCorrection out{id, hypothesis, hypothesis, {}};
  std::vector<std::pair<EntitySpan, std::optional<std::string>>> edits;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    CorrectionRequest request;
    request.hypothesis = hypothesis;
    request.span = spans[i];
    request.span.text = utf8::substr(hypothesis, spans[i].start, spans[i].end);
    request.template_id = options.template_id;
    request.mode_directive = options.mode_directive;
    std::optional<EntityType> filter;
    if (options.type_filter && spans[i].type) filter = spans[i].type;
    request.candidates = retrieve_top_k(request.span.text, repo, options.k, filter);
    if (request.candidates.candidates.empty()) continue;
    auto result = correct_span(request, templates, backend, options, id + "#" + std::to_string(i));
    edits.emplace_back(result.request.span,
                       result.chosen ? std::optional<std::string>(result.chosen->surface) : std::nullopt);
    out.results.push_back(std::move(result));
  }
  out.corrected = apply_corrections(hypothesis, std::move(edits));
  return out;
}

struct RunStats {
  double mean_token_count = 0.0;
  double nothink_ratio = 0.0;
  std::size_t total = 0;
  std::size_t think_count = 0;
  std::size_t nothink_count = 0;
  std::size_t estimated_token_counts = 0;  // responses counted in characters, not tokens
};

/// Mean token count over all responses whatever their mode, and the share
/// answered without a reasoning block.
inline RunStats run_stats(std::span<const ModelResponse> responses) {
  if (responses.empty()) throw Error(Errc::EmptyResults, "no responses to summarize");
  RunStats stats;
  long double tokens = 0;
  for (const auto& r : responses) {
    tokens += r.token_count;
    (r.mode == Mode::Think ? stats.think_count : stats.nothink_count)++;
    if (r.token_count_estimated) ++stats.estimated_token_counts;
  }
  stats.total = responses.size();
  stats.mean_token_count = static_cast<double>(tokens / static_cast<long double>(stats.total));
  stats.nothink_ratio = static_cast<double>(stats.nothink_count) / static_cast<double>(stats.total);
  return stats;
}

inline RunStats run_stats(std::span<const CorrectionResult> results) {
  std::vector<ModelResponse> responses;
  responses.reserve(results.size());
  for (const auto& r : results) responses.push_back(r.response);
  return run_stats(responses);
}

inline nlohmann::ordered_json span_json(const EntitySpan& span) {
  nlohmann::ordered_json j = {{"start", span.start}, {"end", span.end}, {"text", span.text}};
  if (span.type) j["type"] = entity_type_code(*span.type);
  return j;
}

inline nlohmann::ordered_json candidates_json(const RankedCandidates& ranked) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    const auto& c = ranked.candidates[i];
    list.push_back({{"rank", i + 1},
                    {"surface", c.entity.surface},
                    {"type", entity_type_code(c.entity.type)},
                    {"similarity", c.similarity},
                    {"probability", c.probability}});
  }
  return list;
}

/// One correction-log line.
inline nlohmann::ordered_json correction_log_json(const std::string& id, const CorrectionResult& r) {
  nlohmann::ordered_json j = {
      {"id", id},
      {"hypothesis", r.request.hypothesis},
      {"span", span_json(r.request.span)},
      {"candidates", candidates_json(r.request.candidates)},
      {"template", r.request.template_id},
      {"prompt", r.prompt},
      {"raw", r.response.raw},
      {"mode", mode_name(r.response.mode)},
      {"reasoning", r.response.reasoning ? nlohmann::ordered_json(*r.response.reasoning) : nlohmann::ordered_json()},
      {"answer", r.response.answer},
      {"token_count", r.response.token_count},
      {"token_count_estimated", r.response.token_count_estimated},
      {"malformed", r.response.malformed},
      {"answer_rejected", r.answer_rejected},
      {"chosen", r.chosen ? nlohmann::ordered_json(r.chosen->surface) : nlohmann::ordered_json()},
      {"corrected", r.corrected_text},
  };
  if (r.error) j["error"] = *r.error;
  return j;
}

/// Rebuilds the response fields of a correction-log line.
inline ModelResponse response_from_log(const nlohmann::json& j) {
  ModelResponse r;
  r.mode = parse_mode(j.at("mode").get<std::string>());
  if (r.mode == Mode::Auto) throw Error(Errc::DataError, "log mode must be think or nothink");
  if (j.contains("reasoning") && j["reasoning"].is_string()) r.reasoning = j["reasoning"].get<std::string>();
  r.answer = j.value("answer", std::string());
  r.raw = j.value("raw", std::string());
  r.token_count = j.at("token_count").get<long>();
  if (r.token_count < 0) throw Error(Errc::DataError, "negative token_count");
  r.token_count_estimated = j.value("token_count_estimated", false);
  r.malformed = j.value("malformed", false);
  return r;
}

}  // namespace rastar
