// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Named-entity candidate repository with phonetic top-k retrieval.
//
// For a detected span s, each entity e gets
//
//   P(e | s) = sim(Pin(e), Pin(s)) / sum over e' of sim(Pin(e'), Pin(s))
//
// and the k most probable entities are returned. When every similarity is
// zero the distribution is uniform.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rastar/error.hpp"
#include "rastar/phonetics.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

enum class EntityType { Person, Location, Organization, Unknown };

inline std::string_view entity_type_code(EntityType type) {
  switch (type) {
    case EntityType::Person: return "PER";
    case EntityType::Location: return "LOC";
    case EntityType::Organization: return "ORG";
    case EntityType::Unknown: return "UNK";
  }
  return "UNK";
}

inline EntityType parse_entity_type(std::string_view code) {
  if (code == "PER") return EntityType::Person;
  if (code == "LOC") return EntityType::Location;
  if (code == "ORG") return EntityType::Organization;
  if (code == "UNK") return EntityType::Unknown;
  throw Error(Errc::DataError, "unknown entity type '" + std::string(code) + "'");
}

struct Entity {
  std::string surface;
  EntityType type = EntityType::Unknown;
  PhoneticSequence phonetic;
  std::size_t length = 0;  // characters in surface
};

struct EntityRecord {
  std::string surface;
  EntityType type = EntityType::Unknown;
};

/// Reads an entity list: `<surface>` or `<surface>\t<PER|LOC|ORG>` per line,
/// '#' comments and blank lines skipped.
inline std::vector<EntityRecord> parse_entity_list(std::istream& in) {
  std::vector<EntityRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    EntityRecord record;
    const auto tab = line.find('\t');
    record.surface = utf8::nfc(utf8::strip(line.substr(0, tab)));
    if (tab != std::string::npos) {
      try {
        record.type = parse_entity_type(utf8::strip(line.substr(tab + 1)));
      } catch (const Error& e) {
        throw Error(Errc::DataError, "entity list line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (record.surface.empty()) continue;
    records.push_back(std::move(record));
  }
  return records;
}

inline std::vector<EntityRecord> load_entity_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open entity list '" + path + "'");
  return parse_entity_list(in);
}

struct ScoredEntity {
  std::size_t index;  // into EntityRepository::entities()
  double similarity;
  double probability;
};

struct Candidate {
  Entity entity;
  double probability;
  double similarity;
};

struct RankedCandidates {
  std::string query;
  std::vector<Candidate> candidates;
};

class EntityRepository {
 public:
  struct BuildResult;

  /// Deduplicates on surface (first occurrence wins) and precomputes every
  /// entity's pronunciation.
  static BuildResult build(const std::vector<EntityRecord>& records,
                           std::shared_ptr<const PinyinDictionary> dict,
                           PhoneticOptions options = {});

  /// A repository with no entities. Retrieval over it yields nothing and the
  /// dictionary tagger tags everything O.
  static EntityRepository empty(std::shared_ptr<const PinyinDictionary> dict, PhoneticOptions options = {}) {
    if (!dict) throw Error(Errc::InvalidArgument, "repository needs a pinyin dictionary");
    EntityRepository repo;
    repo.dict_ = std::move(dict);
    repo.options_ = options;
    return repo;
  }

  const std::vector<Entity>& entities() const { return entities_; }
  std::size_t size() const { return entities_.size(); }
  const PinyinDictionary& dictionary() const { return *dict_; }
  PhoneticOptions options() const { return options_; }
  std::size_t max_entity_length() const { return max_length_; }

  PhoneticSequence romanize(std::string_view text) const {
    return rastar::romanize(text, *dict_, options_);
  }

 private:
  std::vector<Entity> entities_;
  std::shared_ptr<const PinyinDictionary> dict_;
  PhoneticOptions options_;
  std::size_t max_length_ = 0;
};

struct EntityRepository::BuildResult {
  EntityRepository repository;
  std::size_t duplicates_dropped = 0;
};

inline EntityRepository::BuildResult EntityRepository::build(
    const std::vector<EntityRecord>& records, std::shared_ptr<const PinyinDictionary> dict,
    PhoneticOptions options) {
  if (!dict) throw Error(Errc::InvalidArgument, "repository needs a pinyin dictionary");
  BuildResult result;
  EntityRepository& repo = result.repository;
  repo.dict_ = std::move(dict);
  repo.options_ = options;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string surface = utf8::nfc(records[i].surface);
    if (surface.empty()) {
      throw Error(Errc::DataError, "entity record " + std::to_string(i) + " has empty surface");
    }
    if (!seen.insert(surface).second) {
      ++result.duplicates_dropped;
      continue;
    }
    Entity entity;
    entity.surface = surface;
    entity.type = records[i].type;
    try {
      entity.phonetic = rastar::romanize(surface, *repo.dict_, options);
    } catch (const UnknownCharacterError& e) {
      throw UnknownCharacterError(e.character(), e.position(), utf8::encode(e.character()),
                                  "entity '" + surface + "' (record " + std::to_string(i) + ")");
    }
    entity.length = entity.phonetic.syllables().size();
    repo.max_length_ = std::max(repo.max_length_, entity.length);
    repo.entities_.push_back(std::move(entity));
  }
  if (repo.entities_.empty()) throw Error(Errc::EmptyRepository, "no entities to index");
  return result;
}

/// P(e | span) for every entity, in repository order. With `type_filter` set
/// only entities of that type take part and the rest are omitted.
inline std::vector<ScoredEntity> candidate_probability(
    std::string_view span, const EntityRepository& repo,
    std::optional<EntityType> type_filter = std::nullopt) {
  const PhoneticSequence query = repo.romanize(span);
  std::vector<ScoredEntity> scored;
  scored.reserve(repo.size());
  double total = 0.0;
  const auto& entities = repo.entities();
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (type_filter && entities[i].type != *type_filter) continue;
    const double sim = similarity(entities[i].phonetic, query);
    total += sim;
    scored.push_back({i, sim, 0.0});
  }
  if (scored.empty()) return scored;
  if (total > 0.0) {
    for (auto& s : scored) s.probability = s.similarity / total;
  } else {
    const double uniform = 1.0 / static_cast<double>(scored.size());
    for (auto& s : scored) s.probability = uniform;
  }
  return scored;
}

/// Probability descending, then shorter surface, then surface byte order.
inline bool ranks_before(const ScoredEntity& a, const ScoredEntity& b,
                         const std::vector<Entity>& entities) {
  if (a.probability != b.probability) return a.probability > b.probability;
  const Entity& ea = entities[a.index];
  const Entity& eb = entities[b.index];
  if (ea.length != eb.length) return ea.length < eb.length;
  return ea.surface < eb.surface;
}

inline RankedCandidates retrieve_top_k(std::string_view span, const EntityRepository& repo,
                                       std::size_t k,
                                       std::optional<EntityType> type_filter = std::nullopt) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
  auto scored = candidate_probability(span, repo, type_filter);
  const auto& entities = repo.entities();
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [&](const ScoredEntity& a, const ScoredEntity& b) {
                      return ranks_before(a, b, entities);
                    });
  RankedCandidates out;
  out.query = std::string(span);
  out.candidates.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.candidates.push_back({entities[scored[i].index], scored[i].probability, scored[i].similarity});
  }
  return out;
}

}  // namespace rastar
