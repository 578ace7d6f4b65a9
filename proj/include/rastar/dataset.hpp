// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// JSON-lines dataset records and file helpers.
//
//   {"id": str, "reference": str, "hypothesis": str|null, "nbest": [str]|null,
//    "entities": [{"start": int, "end": int, "type": "PER"|"LOC"|"ORG"}]}
//
// Entity offsets index reference characters. All text is NFC-normalized on
// load.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rastar/alignment.hpp"
#include "rastar/astar.hpp"
#include "rastar/correction.hpp"
#include "rastar/error.hpp"
#include "rastar/ner.hpp"
#include "rastar/repository.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

struct DatasetRecord {
  std::string id;
  std::string reference;
  std::optional<std::string> hypothesis;
  std::vector<std::string> nbest;
  std::vector<EntitySpan> entities;  // on the reference, text filled in

  TaggedUtterance reference_tagged() const { return TaggedUtterance::from_spans(reference, entities); }
};

/// Calls `fn(line_no, json)` for each non-blank line.
inline void for_each_jsonl(std::istream& in, const std::string& source,
                           const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::strip(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::DataError, source + " line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(line_no, j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::DataError, source + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != Errc::DataError && e.code() != Errc::SpanOutOfBounds &&
          e.code() != Errc::OverlappingSpans && e.code() != Errc::InvalidArgument) {
        throw;
      }
      throw Error(Errc::DataError, source + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline DatasetRecord parse_dataset_record(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::DataError, "record is not an object");
  DatasetRecord r;
  r.id = j.at("id").get<std::string>();
  r.reference = utf8::nfc(j.at("reference").get<std::string>());
  if (j.contains("hypothesis") && !j["hypothesis"].is_null()) {
    r.hypothesis = utf8::nfc(j["hypothesis"].get<std::string>());
  }
  if (j.contains("nbest") && !j["nbest"].is_null()) {
    for (const auto& h : j["nbest"]) r.nbest.push_back(utf8::nfc(h.get<std::string>()));
  }
  if (j.contains("entities") && !j["entities"].is_null()) {
    for (const auto& e : j["entities"]) {
      EntitySpan span;
      const long start = e.at("start").get<long>();
      const long end = e.at("end").get<long>();
      if (start < 0 || end < 0) throw Error(Errc::DataError, "negative entity offset");
      span.start = static_cast<std::size_t>(start);
      span.end = static_cast<std::size_t>(end);
      if (e.contains("type") && !e["type"].is_null()) span.type = parse_entity_type(e["type"].get<std::string>());
      r.entities.push_back(span);
    }
  }
  std::sort(r.entities.begin(), r.entities.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  const auto chars = utf8::decode(r.reference);
  validate_spans(r.entities, chars.size());
  for (auto& s : r.entities) s.text = utf8::encode(std::u32string_view(chars).substr(s.start, s.length()));
  return r;
}

inline std::vector<DatasetRecord> parse_dataset(std::istream& in, const std::string& source = "dataset") {
  std::vector<DatasetRecord> records;
  for_each_jsonl(in, source, [&](std::size_t, const nlohmann::json& j) {
    records.push_back(parse_dataset_record(j));
  });
  return records;
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open dataset '" + path + "'");
  return parse_dataset(in, path);
}

/// The smallest hypothesis range covering every character aligned (matched
/// or substituted) to a character of `span`. nullopt when the whole span was
/// deleted.
inline std::optional<EntitySpan> project_span(std::span<const AlignmentOp> ops, const EntitySpan& span,
                                              std::u32string_view hypothesis) {
  std::optional<std::size_t> first, last;
  for (const auto& op : ops) {
    if (!op.ref || !op.hyp || *op.ref < span.start || *op.ref >= span.end) continue;
    if (!first) first = *op.hyp;
    last = *op.hyp;
  }
  if (!first) return std::nullopt;
  EntitySpan out{*first, *last + 1, utf8::encode(hypothesis.substr(*first, *last + 1 - *first)), span.type};
  return out;
}

struct ProblemSet {
  std::vector<ProblemRecord> problems;
  std::vector<std::pair<std::string, std::string>> skipped;  // (id, reason)
};

/// One correction problem per reference entity of every record that has a
/// hypothesis. The entity is projected onto the hypothesis through the
/// character alignment; the ground truth is the reference surface, or the
/// keep token when the hypothesis already has it right. Problem ids are the
/// record id, suffixed with "#<n>" when a record holds several entities.
inline ProblemSet problems_from_dataset(std::span<const DatasetRecord> records, const EntityRepository& repo,
                                        std::size_t k, const std::string& template_id = "correct",
                                        const Markers& markers = {}) {
  ProblemSet out;
  for (const auto& r : records) {
    if (!r.hypothesis) {
      out.skipped.emplace_back(r.id, "no hypothesis");
      continue;
    }
    const auto ref_chars = utf8::decode(r.reference);
    const auto hyp_chars = utf8::decode(*r.hypothesis);
    const auto ops = align_sequences(ref_chars, hyp_chars);
    for (std::size_t e = 0; e < r.entities.size(); ++e) {
      const std::string id = r.entities.size() == 1 ? r.id : r.id + "#" + std::to_string(e);
      const auto projected = project_span(ops, r.entities[e], hyp_chars);
      if (!projected) {
        out.skipped.emplace_back(id, "entity deleted in hypothesis");
        continue;
      }
      ProblemRecord p;
      p.id = id;
      p.hypothesis = *r.hypothesis;
      p.span = *projected;
      p.template_id = template_id;
      p.ground_truth = projected->text == r.entities[e].text ? markers.keep_token : r.entities[e].text;
      p.candidates = retrieve_top_k(projected->text, repo, k);
      if (p.candidates.candidates.empty()) {
        out.skipped.emplace_back(id, "no candidates");
        continue;
      }
      out.problems.push_back(std::move(p));
    }
  }
  return out;
}

inline nlohmann::ordered_json rlm_example_json(const RlmExample& ex) {
  return {{"input", ex.input}, {"masked", ex.masked}, {"target", ex.target}};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Writes `contents` next to `path` and renames it into place.
inline void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  std::filesystem::path temp = target;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write '" + temp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw Error(Errc::IoError, "short write to '" + temp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(temp, target, ec);
  if (ec) {
    std::filesystem::remove(temp);
    throw Error(Errc::IoError, "cannot move output into '" + path + "': " + ec.message());
  }
}

}  // namespace rastar
