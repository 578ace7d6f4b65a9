// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// BIO tagging data model and the data side of the rephrasing tagger:
// span extraction, projecting reference tags onto ASR hypotheses, building
// masked `x1..xn <s> m1..mn` training examples, and a phonetic dictionary
// tagger usable without a trained model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rastar/alignment.hpp"
#include "rastar/error.hpp"
#include "rastar/repository.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

enum class BioTag : char { B = 'B', I = 'I', O = 'O' };

inline char to_char(BioTag tag) { return static_cast<char>(tag); }

inline BioTag parse_bio_tag(std::string_view s) {
  if (s == "B") return BioTag::B;
  if (s == "I") return BioTag::I;
  if (s == "O") return BioTag::O;
  throw Error(Errc::DataError, "unknown BIO tag '" + std::string(s) + "'");
}

struct EntitySpan {
  std::size_t start = 0;  // inclusive, characters
  std::size_t end = 0;    // exclusive
  std::string text;
  std::optional<EntityType> type;

  std::size_t length() const { return end - start; }
  bool operator==(const EntitySpan&) const = default;
};

/// Rewrites every I that starts a run (position 0 or after O) to B. Returns
/// the rewritten positions.
inline std::vector<std::size_t> repair_tags(std::vector<BioTag>& tags) {
  std::vector<std::size_t> repaired;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == BioTag::I && (i == 0 || tags[i - 1] == BioTag::O)) {
      tags[i] = BioTag::B;
      repaired.push_back(i);
    }
  }
  return repaired;
}

inline bool is_valid_bio(std::span<const BioTag> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == BioTag::I && (i == 0 || tags[i - 1] == BioTag::O)) return false;
  }
  return true;
}

/// Maximal B I* runs as spans. Orphan I tags are treated as B; their
/// positions are reported through `repaired` when given.
inline std::vector<EntitySpan> extract_spans(std::span<const BioTag> tags, std::string_view text,
                                             std::vector<std::size_t>* repaired = nullptr) {
  const auto chars = utf8::decode(text);
  if (chars.size() != tags.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(tags.size()) + " tags for " +
                                          std::to_string(chars.size()) + " characters");
  }
  std::vector<BioTag> fixed(tags.begin(), tags.end());
  auto fixes = repair_tags(fixed);
  if (repaired) *repaired = std::move(fixes);

  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < fixed.size()) {
    if (fixed[i] != BioTag::B) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < fixed.size() && fixed[end] == BioTag::I) ++end;
    spans.push_back({i, end, utf8::encode(std::u32string_view(chars).substr(i, end - i)), std::nullopt});
    i = end;
  }
  return spans;
}

/// Spans must be sorted, non-overlapping and inside [0, length).
inline void validate_spans(std::span<const EntitySpan> spans, std::size_t length) {
  std::size_t previous_end = 0;
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) {
      throw Error(Errc::SpanOutOfBounds, "span [" + std::to_string(s.start) + ", " +
                                             std::to_string(s.end) + ") invalid for length " +
                                             std::to_string(length));
    }
    if (s.start < previous_end) {
      throw Error(Errc::OverlappingSpans, "span starting at " + std::to_string(s.start) +
                                              " overlaps or is out of order");
    }
    previous_end = s.end;
  }
}

inline std::vector<BioTag> tags_from_spans(std::size_t length, std::span<const EntitySpan> spans) {
  validate_spans(spans, length);
  std::vector<BioTag> tags(length, BioTag::O);
  for (const auto& s : spans) {
    tags[s.start] = BioTag::B;
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = BioTag::I;
  }
  return tags;
}

struct TaggedUtterance {
  std::string text;
  std::vector<BioTag> tags;
  std::vector<EntitySpan> spans;

  /// Spans may omit `text`; it is filled in from the utterance.
  static TaggedUtterance from_spans(std::string text, std::vector<EntitySpan> spans) {
    const auto chars = utf8::decode(text);
    TaggedUtterance out;
    out.tags = tags_from_spans(chars.size(), spans);
    for (auto& s : spans) s.text = utf8::encode(std::u32string_view(chars).substr(s.start, s.length()));
    out.text = std::move(text);
    out.spans = std::move(spans);
    return out;
  }

  static TaggedUtterance from_tags(std::string text, std::vector<BioTag> tags) {
    TaggedUtterance out;
    out.spans = extract_spans(tags, text);
    repair_tags(tags);
    out.text = std::move(text);
    out.tags = std::move(tags);
    return out;
  }
};

/// Carries reference tags over to a hypothesis through a character
/// alignment. Matched and substituted characters inherit the reference tag,
/// inserted characters get O, and the result is BIO-repaired.
inline std::vector<BioTag> align_tags_to_hypothesis(const TaggedUtterance& ref,
                                                    std::string_view hyp_text) {
  const auto ref_chars = utf8::decode(ref.text);
  const auto hyp_chars = utf8::decode(hyp_text);
  if (ref_chars.empty() || hyp_chars.empty()) {
    throw Error(Errc::EmptyInput, "alignment needs non-empty reference and hypothesis");
  }
  if (ref.tags.size() != ref_chars.size()) {
    throw Error(Errc::LengthMismatch, "reference tags do not cover the reference text");
  }
  std::vector<BioTag> tags(hyp_chars.size(), BioTag::O);
  for (const auto& op : align_sequences(ref_chars, hyp_chars)) {
    if (op.kind == EditKind::Match || op.kind == EditKind::Substitute) {
      tags[*op.hyp] = ref.tags[*op.ref];
    }
  }
  // A B whose reference character was deleted leaves its I run orphaned.
  repair_tags(tags);
  return tags;
}

inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kSeparatorToken = "<s>";

/// Tokens `x1..xn <s> t1..tn` where the second segment holds the BIO tags.
/// `masked` lists masked positions ascending and `target` the original token
/// at each of them; `input` shows [MASK] there.
struct RlmExample {
  std::vector<std::string> input;
  std::vector<std::size_t> masked;
  std::vector<std::string> target;
};

/// Uniform integer in [0, bound) by rejection, stable across standard
/// libraries.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

/// `count` distinct indices drawn from [0, population), sorted.
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count,
                                               std::mt19937_64& rng) {
  std::vector<std::size_t> pool(population);
  for (std::size_t i = 0; i < population; ++i) pool[i] = i;
  count = std::min(count, population);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded_draw(rng, population - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// floor(fraction * count). The epsilon keeps products such as 0.3 * 10
/// from landing just under the integer.
inline std::size_t masked_count(double fraction, std::size_t count) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count) + 1e-9));
}

inline RlmExample build_rlm_example(const TaggedUtterance& tagged, double mask_fraction,
                                    std::uint64_t seed) {
  if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "mask fraction must lie in [0, 1]");
  }
  const auto chars = utf8::decode(tagged.text);
  if (tagged.tags.size() != chars.size()) {
    throw Error(Errc::LengthMismatch, "tags do not cover the text");
  }
  const std::size_t n = chars.size();

  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < n; ++i) {
    if (tagged.tags[i] == BioTag::O) outside.push_back(i);
  }
  std::mt19937_64 rng(seed);
  const auto picks = sample_indices(outside.size(), masked_count(mask_fraction, outside.size()), rng);

  RlmExample ex;
  ex.input.reserve(2 * n + 1);
  for (char32_t c : chars) ex.input.push_back(utf8::encode(c));
  for (std::size_t p : picks) {
    const std::size_t pos = outside[p];
    ex.masked.push_back(pos);
    ex.target.push_back(ex.input[pos]);
    ex.input[pos] = kMaskToken;
  }
  ex.input.emplace_back(kSeparatorToken);
  for (std::size_t i = 0; i < n; ++i) {
    ex.masked.push_back(n + 1 + i);
    ex.target.emplace_back(1, to_char(tagged.tags[i]));
    ex.input.emplace_back(kMaskToken);
  }
  return ex;
}

/// Anything that turns text into one BIO tag per character.
class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<BioTag> tag(std::string_view text) const = 0;
};

/// Marks substrings (length 2 up to the longest entity) whose phonetic
/// similarity to some repository entity reaches `threshold`. Overlaps are
/// settled greedily by similarity, then length, then leftmost start.
inline std::vector<BioTag> dictionary_tagger(std::string_view text, const EntityRepository& repo,
                                             double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(Errc::InvalidArgument, "tagger threshold must lie in (0, 1]");
  }
  const PhoneticSequence phonetic = repo.romanize(text);
  const std::size_t n = phonetic.syllables().size();
  std::vector<BioTag> tags(n, BioTag::O);
  if (repo.size() == 0) return tags;

  struct Hit {
    double similarity;
    std::size_t length;
    std::size_t start;
  };
  std::vector<Hit> hits;
  const std::size_t max_length = repo.max_entity_length();
  for (std::size_t start = 0; start < n; ++start) {
    for (std::size_t len = 2; len <= max_length && start + len <= n; ++len) {
      const PhoneticSequence window = phonetic.slice(start, start + len);
      double best = 0.0;
      for (const auto& entity : repo.entities()) {
        best = std::max(best, similarity(window, entity.phonetic));
        if (best == 1.0) break;
      }
      if (best >= threshold) hits.push_back({best, len, start});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return std::tuple(-a.similarity, b.length, a.start) < std::tuple(-b.similarity, a.length, b.start);
  });
  std::vector<bool> taken(n, false);
  for (const Hit& h : hits) {
    const auto first = taken.begin() + static_cast<std::ptrdiff_t>(h.start);
    if (std::any_of(first, first + static_cast<std::ptrdiff_t>(h.length), [](bool t) { return t; })) {
      continue;
    }
    std::fill(first, first + static_cast<std::ptrdiff_t>(h.length), true);
    tags[h.start] = BioTag::B;
    for (std::size_t i = h.start + 1; i < h.start + h.length; ++i) tags[i] = BioTag::I;
  }
  return tags;
}

class DictionaryTagger : public Tagger {
 public:
  DictionaryTagger(const EntityRepository& repo, double threshold)
      : repo_(repo), threshold_(threshold) {}

  std::vector<BioTag> tag(std::string_view text) const override {
    return dictionary_tagger(text, repo_, threshold_);
  }

 private:
  const EntityRepository& repo_;
  double threshold_;
};

}  // namespace rastar
