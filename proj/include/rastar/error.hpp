// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rastar {

enum class Errc {
  InvalidArgument,
  UnknownCharacter,
  GranularityMismatch,
  BothEmpty,
  EmptyRepository,
  LengthMismatch,
  EmptyInput,
  SpanOutOfBounds,
  OverlappingSpans,
  EmptyReference,
  EmptyResults,
  UnknownTemplate,
  MalformedResponse,
  MissingResponse,
  NonFiniteInput,
  BackendFailure,
  Timeout,
  ProtocolError,
  DataError,
  IoError,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnknownCharacter: return "UnknownCharacter";
    case Errc::GranularityMismatch: return "GranularityMismatch";
    case Errc::BothEmpty: return "BothEmpty";
    case Errc::EmptyRepository: return "EmptyRepository";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::SpanOutOfBounds: return "SpanOutOfBounds";
    case Errc::OverlappingSpans: return "OverlappingSpans";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::EmptyResults: return "EmptyResults";
    case Errc::UnknownTemplate: return "UnknownTemplate";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::MissingResponse: return "MissingResponse";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::BackendFailure: return "BackendFailure";
    case Errc::Timeout: return "Timeout";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::DataError: return "DataError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Base of every error the library throws. `code()` is stable; the message is
/// for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// A CJK character with no dictionary entry. `position` counts characters,
/// not bytes.
class UnknownCharacterError : public Error {
 public:
  UnknownCharacterError(char32_t ch, std::size_t position, const std::string& character_utf8,
                        const std::string& context = {})
      : Error(Errc::UnknownCharacter,
              "no reading for '" + character_utf8 + "' at position " + std::to_string(position) +
                  (context.empty() ? std::string() : " in " + context)),
        character_(ch),
        position_(position) {}

  char32_t character() const noexcept { return character_; }
  std::size_t position() const noexcept { return position_; }

 private:
  char32_t character_;
  std::size_t position_;
};

}  // namespace rastar
