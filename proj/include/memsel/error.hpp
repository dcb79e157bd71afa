#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace memsel {

enum class ErrorCode {
  MissingFile,
  IoFailure,
  ParseError,
  UnsupportedVersion,
  DimMismatch,
  CountMismatch,
  NonFiniteValue,
  ZeroVector,
  NormOutOfRange,
  AmbiguousLoss,
  InvalidItem,
  EmptySet,
  EmptyInput,
  MissingImageEmbedding,
  ModalityMismatch,
  EmptyCandidates,
  NonPositiveTemperature,
  MissingNegativeEmbedding,
  NoSubstitutableToken,
  DuplicateId,
  EmptyCorpus,
  EmptyCandidate,
  EmptyReferences,
  MissingIdf,
  NonFiniteScore,
  UnmappedItem,
  InvalidConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NormOutOfRange: return "NormOutOfRange";
    case ErrorCode::AmbiguousLoss: return "AmbiguousLoss";
    case ErrorCode::InvalidItem: return "InvalidItem";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingImageEmbedding: return "MissingImageEmbedding";
    case ErrorCode::ModalityMismatch: return "ModalityMismatch";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::MissingNegativeEmbedding: return "MissingNegativeEmbedding";
    case ErrorCode::NoSubstitutableToken: return "NoSubstitutableToken";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyCandidate: return "EmptyCandidate";
    case ErrorCode::EmptyReferences: return "EmptyReferences";
    case ErrorCode::MissingIdf: return "MissingIdf";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::UnmappedItem: return "UnmappedItem";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a code that
// tests and the CLI can branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// Value-or-error holder for batch operations that isolate per-index failures.
template <typename T>
class Result {
 public:
  Result(T value) : state_(std::move(value)) {}
  Result(Error error) : state_(std::move(error)) {}

  bool ok() const noexcept { return std::holds_alternative<T>(state_); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const& {
    if (!ok()) throw std::get<Error>(state_);
    return std::get<T>(state_);
  }
  T&& value() && {
    if (!ok()) throw std::get<Error>(state_);
    return std::get<T>(std::move(state_));
  }
  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<Error>(state_); }

 private:
  std::variant<T, Error> state_;
};

}  // namespace memsel
