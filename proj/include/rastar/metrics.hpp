// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Character error rates, entity-region error rates, entity recall and
// entity-level NER scores.
//
// Entity-region rates project reference spans through the character
// alignment. An op belongs to the entity region when its reference character
// lies inside a span. An insertion has no reference character; it takes the
// region of the closest reference character before it, and counts as entity
// only when that character is inside a span and not the span's last one (so
// insertions at span boundaries are charged to the surrounding text).

#include <cstddef>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rastar/alignment.hpp"
#include "rastar/error.hpp"
#include "rastar/ner.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

inline std::vector<AlignmentOp> align(std::string_view ref, std::string_view hyp) {
  return align_sequences(utf8::decode(ref), utf8::decode(hyp));
}

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  std::size_t total() const { return substitutions + deletions + insertions; }

  void add(EditKind kind) {
    switch (kind) {
      case EditKind::Substitute: ++substitutions; break;
      case EditKind::Delete: ++deletions; break;
      case EditKind::Insert: ++insertions; break;
      case EditKind::Match: break;
    }
  }

  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    return *this;
  }
};

inline double cer(std::string_view ref, std::string_view hyp) {
  const auto r = utf8::decode(ref);
  if (r.empty()) throw Error(Errc::EmptyReference, "CER needs a non-empty reference");
  return static_cast<double>(levenshtein(r, utf8::decode(hyp))) / static_cast<double>(r.size());
}

/// Per-utterance breakdown; also the unit that corpus reports sum over.
struct RegionCounts {
  std::size_t ref_chars = 0;
  std::size_t entity_chars = 0;
  std::size_t non_entity_chars = 0;
  EditCounts edits;
  EditCounts entity_edits;
  EditCounts non_entity_edits;
  std::size_t entities = 0;
  std::size_t entities_recalled = 0;

  RegionCounts& operator+=(const RegionCounts& o) {
    ref_chars += o.ref_chars;
    entity_chars += o.entity_chars;
    non_entity_chars += o.non_entity_chars;
    edits += o.edits;
    entity_edits += o.entity_edits;
    non_entity_edits += o.non_entity_edits;
    entities += o.entities;
    entities_recalled += o.entities_recalled;
    return *this;
  }
};

/// An entity is recalled when each of its reference characters is matched.
inline RegionCounts region_counts(std::string_view ref, std::string_view hyp,
                                  std::span<const EntitySpan> spans) {
  const auto r = utf8::decode(ref);
  const auto h = utf8::decode(hyp);
  validate_spans(spans, r.size());

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(r.size(), kNone);  // span index per reference char
  for (std::size_t s = 0; s < spans.size(); ++s) {
    for (std::size_t i = spans[s].start; i < spans[s].end; ++i) owner[i] = s;
  }
  std::vector<bool> intact(spans.size(), true);

  RegionCounts c;
  c.ref_chars = r.size();
  for (std::size_t s : owner) (s == kNone ? c.non_entity_chars : c.entity_chars)++;
  c.entities = spans.size();

  std::size_t previous_ref = kNone;
  for (const auto& op : align_sequences(r, h)) {
    std::size_t span_index = kNone;
    if (op.ref) {
      span_index = owner[*op.ref];
      previous_ref = *op.ref;
    } else if (previous_ref != kNone && owner[previous_ref] != kNone &&
               previous_ref + 1 < spans[owner[previous_ref]].end) {
      span_index = owner[previous_ref];
    }
    if (op.kind == EditKind::Match) continue;
    c.edits.add(op.kind);
    if (span_index == kNone) {
      c.non_entity_edits.add(op.kind);
    } else {
      c.entity_edits.add(op.kind);
      if (op.ref) intact[span_index] = false;
    }
  }
  for (bool ok : intact) c.entities_recalled += ok ? 1 : 0;
  return c;
}

struct RegionCer {
  double ne_cer = 0.0;
  double nne_cer = 0.0;
  bool entity_region_empty = false;
  bool non_entity_region_empty = false;
  RegionCounts counts;
};

inline double rate(std::size_t edits, std::size_t chars) {
  return chars == 0 ? 0.0 : static_cast<double>(edits) / static_cast<double>(chars);
}

inline RegionCer region_cer(std::string_view ref, std::string_view hyp, std::span<const EntitySpan> spans) {
  RegionCer out;
  out.counts = region_counts(ref, hyp, spans);
  out.ne_cer = rate(out.counts.entity_edits.total(), out.counts.entity_chars);
  out.nne_cer = rate(out.counts.non_entity_edits.total(), out.counts.non_entity_chars);
  out.entity_region_empty = out.counts.entity_chars == 0;
  out.non_entity_region_empty = out.counts.non_entity_chars == 0;
  return out;
}

/// 1.0 when there are no entities.
inline double ne_recall(std::string_view ref, std::string_view hyp, std::span<const EntitySpan> spans) {
  const auto c = region_counts(ref, hyp, spans);
  return c.entities == 0 ? 1.0 : static_cast<double>(c.entities_recalled) / static_cast<double>(c.entities);
}

struct Prf {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

/// Micro-averaged exact-boundary scores. `predicted[u]` and `gold[u]` are the
/// spans of utterance u. Types must agree only when both spans carry one.
inline Prf ner_prf(std::span<const std::vector<EntitySpan>> predicted,
                   std::span<const std::vector<EntitySpan>> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(Errc::LengthMismatch, "predicted and gold cover different numbers of utterances");
  }
  Prf out;
  for (std::size_t u = 0; u < gold.size(); ++u) {
    out.predicted += predicted[u].size();
    out.gold += gold[u].size();
    std::vector<bool> used(gold[u].size(), false);
    for (const auto& p : predicted[u]) {
      for (std::size_t g = 0; g < gold[u].size(); ++g) {
        const auto& s = gold[u][g];
        if (used[g] || s.start != p.start || s.end != p.end) continue;
        if (s.type && p.type && *s.type != *p.type) continue;
        used[g] = true;
        ++out.true_positives;
        break;
      }
    }
  }
  out.recall = out.gold == 0 ? 0.0 : static_cast<double>(out.true_positives) / static_cast<double>(out.gold);
  out.precision =
      out.predicted == 0 ? 0.0 : static_cast<double>(out.true_positives) / static_cast<double>(out.predicted);
  out.f1 = out.recall + out.precision == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

/// Corpus-level report. Rates are fractions; percentages are a display
/// concern.
struct MetricReport {
  RegionCounts counts;
  std::size_t utterances = 0;
  std::optional<Prf> ner;

  void add(std::string_view ref, std::string_view hyp, std::span<const EntitySpan> spans) {
    counts += region_counts(ref, hyp, spans);
    ++utterances;
  }

  MetricReport& operator+=(const MetricReport& o) {
    counts += o.counts;
    utterances += o.utterances;
    return *this;
  }

  double cer() const { return rate(counts.edits.total(), counts.ref_chars); }
  double ne_cer() const { return rate(counts.entity_edits.total(), counts.entity_chars); }
  double nne_cer() const { return rate(counts.non_entity_edits.total(), counts.non_entity_chars); }
  double ne_recall() const {
    return counts.entities == 0 ? 1.0
                                : static_cast<double>(counts.entities_recalled) / static_cast<double>(counts.entities);
  }

  nlohmann::ordered_json to_json() const {
    auto edits = [](const EditCounts& e) {
      return nlohmann::ordered_json{{"substitutions", e.substitutions},
                                    {"deletions", e.deletions},
                                    {"insertions", e.insertions},
                                    {"total", e.total()}};
    };
    nlohmann::ordered_json j = {
        {"utterances", utterances},
        {"cer", cer()},
        {"nne_cer", nne_cer()},
        {"ne_cer", ne_cer()},
        {"ne_recall", ne_recall()},
        {"counts",
         {{"reference_chars", counts.ref_chars},
          {"entity_chars", counts.entity_chars},
          {"non_entity_chars", counts.non_entity_chars},
          {"edits", edits(counts.edits)},
          {"entity_edits", edits(counts.entity_edits)},
          {"non_entity_edits", edits(counts.non_entity_edits)},
          {"entities", counts.entities},
          {"entities_recalled", counts.entities_recalled}}},
        {"flags",
         {{"empty_reference", counts.ref_chars == 0},
          {"empty_entity_region", counts.entity_chars == 0},
          {"empty_non_entity_region", counts.non_entity_chars == 0},
          {"no_entities", counts.entities == 0}}},
    };
    if (ner) {
      j["ner"] = {{"recall", ner->recall},
                  {"precision", ner->precision},
                  {"f1", ner->f1},
                  {"true_positives", ner->true_positives},
                  {"predicted", ner->predicted},
                  {"gold", ner->gold}};
    }
    return j;
  }

  std::string to_text() const {
    char line[160];
    std::string out;
    auto pct = [&](const char* name, double v, const char* note) {
      std::snprintf(line, sizeof line, "%-10s %8.2f%%%s\n", name, 100.0 * v, note);
      out += line;
    };
    out += "utterances " + std::to_string(utterances) + "\n";
    pct("CER", cer(), "");
    pct("NNE-CER", nne_cer(), counts.non_entity_chars == 0 ? "  (empty region)" : "");
    pct("NE-CER", ne_cer(), counts.entity_chars == 0 ? "  (empty region)" : "");
    pct("NE-Recall", ne_recall(), counts.entities == 0 ? "  (no entities)" : "");
    std::snprintf(line, sizeof line, "edits      %zu (S %zu, D %zu, I %zu) over %zu reference chars\n",
                  counts.edits.total(), counts.edits.substitutions, counts.edits.deletions,
                  counts.edits.insertions, counts.ref_chars);
    out += line;
    if (ner) {
      pct("NER-R", ner->recall, "");
      pct("NER-P", ner->precision, "");
      pct("NER-F1", ner->f1, "");
    }
    return out;
  }
};

}  // namespace rastar
