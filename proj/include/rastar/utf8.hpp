// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

// Character handling. A "character" everywhere in this library is one Unicode
// scalar value of NFC-normalized text; all offsets count characters.

#include <cstddef>
#include <string>
#include <string_view>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/utf8.h>

#include "rastar/error.hpp"

namespace rastar::utf8 {

inline std::u32string decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) {
      throw Error(Errc::InvalidArgument,
                  "invalid UTF-8 near byte " + std::to_string(i - 1));
    }
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

inline void append(std::string& out, char32_t c) {
  uint8_t buffer[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buffer, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) throw Error(Errc::InvalidArgument, "not a Unicode scalar value");
  out.append(reinterpret_cast<const char*>(buffer), static_cast<std::size_t>(n));
}

inline std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size() * 3);
  for (char32_t c : text) append(out, c);
  return out;
}

inline std::string encode(char32_t c) {
  std::string out;
  append(out, c);
  return out;
}

inline std::size_t length(std::string_view text) { return decode(text).size(); }

/// Characters [start, end) of `text`.
inline std::string substr(std::string_view text, std::size_t start, std::size_t end) {
  const auto chars = decode(text);
  if (start > end || end > chars.size()) {
    throw Error(Errc::SpanOutOfBounds, "[" + std::to_string(start) + ", " + std::to_string(end) +
                                           ") outside text of length " +
                                           std::to_string(chars.size()));
  }
  return encode(std::u32string_view(chars).substr(start, end - start));
}

inline std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(Errc::IoError, "ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw Error(Errc::InvalidArgument, "NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

/// Removes leading and trailing Unicode white space.
inline std::string strip(std::string_view text) {
  const auto chars = decode(text);
  std::size_t begin = 0;
  std::size_t end = chars.size();
  while (begin < end && u_isUWhiteSpace(static_cast<UChar32>(chars[begin]))) ++begin;
  while (end > begin && u_isUWhiteSpace(static_cast<UChar32>(chars[end - 1]))) --end;
  return encode(std::u32string_view(chars).substr(begin, end - begin));
}

inline bool is_han(char32_t c) {
  UErrorCode status = U_ZERO_ERROR;
  return uscript_getScript(static_cast<UChar32>(c), &status) == USCRIPT_HAN &&
         U_SUCCESS(status);
}

inline char32_t to_lower(char32_t c) {
  return static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
}

}  // namespace rastar::utf8
