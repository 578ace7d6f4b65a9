// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Mandarin romanization and phonetic similarity.
//
// Text is romanized character by character into pinyin syllables using the
// first reading listed in a PinyinDictionary. Distance is unit-cost
// Levenshtein over a token stream whose shape depends on the granularity:
//
//   Phoneme   峨眉山 -> e, m, ei, sh, an      (initial and final per syllable)
//   Syllable  峨眉山 -> e, mei, shan
//
// Tones are dropped from tokens unless PhoneticOptions::tones is set.

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rastar/alignment.hpp"
#include "rastar/error.hpp"
#include "rastar/utf8.hpp"

namespace rastar {

enum class Granularity { Syllable, Phoneme };

struct PhoneticOptions {
  Granularity granularity = Granularity::Phoneme;
  bool tones = false;

  bool operator==(const PhoneticOptions&) const = default;
};

inline Granularity parse_granularity(std::string_view name) {
  if (name == "phoneme") return Granularity::Phoneme;
  if (name == "syllable") return Granularity::Syllable;
  throw Error(Errc::InvalidArgument, "unknown granularity '" + std::string(name) + "'");
}

struct PinyinSyllable {
  std::string initial;  // empty for zero-initial syllables such as "e" or "an"
  std::string final;
  int tone = 0;  // 1-4, 5 = neutral, 0 = unknown

  bool operator==(const PinyinSyllable&) const = default;

  /// Parses "shang4", "e2", "men5" or a toneless "lv".
  static PinyinSyllable parse(std::string_view reading) {
    static constexpr std::array<std::string_view, 23> kInitials = {
        "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g",
        "k",  "h",  "j",  "q", "x", "r", "z", "c", "s", "y", "w"};
    PinyinSyllable out;
    std::string_view body = reading;
    if (!body.empty() && body.back() >= '0' && body.back() <= '9') {
      out.tone = body.back() - '0';
      body.remove_suffix(1);
      if (out.tone > 5) throw Error(Errc::DataError, "tone out of range in '" + std::string(reading) + "'");
    }
    if (body.empty()) throw Error(Errc::DataError, "empty reading '" + std::string(reading) + "'");
    for (char c : body) {
      if (c < 'a' || c > 'z') {
        throw Error(Errc::DataError, "reading '" + std::string(reading) + "' is not lowercase pinyin");
      }
    }
    for (std::string_view initial : kInitials) {
      if (body.size() > initial.size() && body.starts_with(initial)) {
        out.initial = initial;
        body.remove_prefix(initial.size());
        break;
      }
    }
    out.final = body;
    return out;
  }

  std::string to_string() const {
    std::string out = initial + final;
    if (tone != 0) out += static_cast<char>('0' + tone);
    return out;
  }
};

/// Pronunciation of a string plus the token stream used for distances.
class PhoneticSequence {
 public:
  PhoneticSequence() = default;

  PhoneticSequence(std::vector<PinyinSyllable> syllables, PhoneticOptions options)
      : syllables_(std::move(syllables)), options_(options) {
    tokens_.reserve(syllables_.size() * 2);
    for (const auto& s : syllables_) {
      const std::string tone =
          options_.tones && s.tone != 0 ? std::string(1, static_cast<char>('0' + s.tone)) : "";
      if (options_.granularity == Granularity::Syllable) {
        tokens_.push_back(s.initial + s.final + tone);
      } else {
        if (!s.initial.empty()) tokens_.push_back(s.initial);
        tokens_.push_back(s.final + tone);
      }
    }
  }

  const std::vector<PinyinSyllable>& syllables() const { return syllables_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  PhoneticOptions options() const { return options_; }
  Granularity granularity() const { return options_.granularity; }
  bool empty() const { return syllables_.empty(); }

  /// Sub-sequence covering syllables [first, last).
  PhoneticSequence slice(std::size_t first, std::size_t last) const {
    return PhoneticSequence(
        std::vector<PinyinSyllable>(syllables_.begin() + static_cast<std::ptrdiff_t>(first),
                                    syllables_.begin() + static_cast<std::ptrdiff_t>(last)),
        options_);
  }

  /// Space-separated toned syllables, e.g. "e2 mei2 shan1".
  std::string to_string() const {
    std::string out;
    for (const auto& s : syllables_) {
      if (!out.empty()) out += ' ';
      out += s.to_string();
    }
    return out;
  }

 private:
  std::vector<PinyinSyllable> syllables_;
  PhoneticOptions options_;
  std::vector<std::string> tokens_;
};

/// Character -> readings table, read-only once loaded.
class PinyinDictionary {
 public:
  void add(char32_t ch, std::vector<PinyinSyllable> readings) {
    if (readings.empty()) {
      throw Error(Errc::DataError, "character '" + utf8::encode(ch) + "' has no readings");
    }
    entries_[ch] = std::move(readings);
  }

  /// nullptr when the character has no entry.
  const std::vector<PinyinSyllable>* readings(char32_t ch) const {
    auto it = entries_.find(ch);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }

  /// Every character with an entry, in code point order.
  std::vector<char32_t> characters() const {
    std::vector<char32_t> out;
    out.reserve(entries_.size());
    for (const auto& [ch, readings] : entries_) out.push_back(ch);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Reads the `<char>\t<reading> <reading>...` format; '#' starts a comment line.
  static PinyinDictionary parse(std::istream& in) {
    PinyinDictionary dict;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      auto fail = [&](const std::string& why) {
        return Error(Errc::DataError, "pinyin dictionary line " + std::to_string(line_no) + ": " + why);
      };
      if (tab == std::string::npos) throw fail("missing tab separator");
      const auto chars = utf8::decode(utf8::nfc(line.substr(0, tab)));
      if (chars.size() != 1) throw fail("key must be exactly one character");
      std::istringstream readings_in(line.substr(tab + 1));
      std::vector<PinyinSyllable> readings;
      std::string reading;
      try {
        while (readings_in >> reading) readings.push_back(PinyinSyllable::parse(reading));
      } catch (const Error& e) {
        throw fail(e.what());
      }
      if (readings.empty()) throw fail("no readings");
      dict.add(chars.front(), std::move(readings));
    }
    return dict;
  }

  static PinyinDictionary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open pinyin dictionary '" + path + "'");
    return parse(in);
  }

 private:
  std::unordered_map<char32_t, std::vector<PinyinSyllable>> entries_;
};

/// One syllable per character. Han characters take their default reading;
/// anything else becomes a toneless syllable whose final is the lowercased
/// character.
inline PhoneticSequence romanize(std::string_view text, const PinyinDictionary& dict,
                                 PhoneticOptions options = {}) {
  const auto chars = utf8::decode(text);
  std::vector<PinyinSyllable> syllables;
  syllables.reserve(chars.size());
  for (std::size_t pos = 0; pos < chars.size(); ++pos) {
    const char32_t c = chars[pos];
    if (utf8::is_han(c)) {
      const auto* readings = dict.readings(c);
      if (readings == nullptr) throw UnknownCharacterError(c, pos, utf8::encode(c));
      syllables.push_back(readings->front());
    } else {
      syllables.push_back({"", utf8::encode(utf8::to_lower(c)), 0});
    }
  }
  return PhoneticSequence(std::move(syllables), options);
}

inline void require_same_options(const PhoneticSequence& a, const PhoneticSequence& b) {
  if (a.options() != b.options()) {
    throw Error(Errc::GranularityMismatch, "phonetic sequences use different token options");
  }
}

inline std::size_t edit_distance(const PhoneticSequence& a, const PhoneticSequence& b) {
  require_same_options(a, b);
  return levenshtein(a.tokens(), b.tokens());
}

/// 1 - distance / max(token counts).
inline double similarity(const PhoneticSequence& a, const PhoneticSequence& b) {
  require_same_options(a, b);
  const std::size_t longest = std::max(a.tokens().size(), b.tokens().size());
  if (longest == 0) throw Error(Errc::BothEmpty, "similarity of two empty sequences");
  return 1.0 - static_cast<double>(levenshtein(a.tokens(), b.tokens())) /
                   static_cast<double>(longest);
}

}  // namespace rastar
