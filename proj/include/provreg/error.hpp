#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace provreg {

enum class ErrorCode {
  TooFewSamples,
  DimensionMismatch,
  DegenerateCovariance,
  NonFiniteInput,
  LengthMismatch,
  OutOfRange,
  Unachievable,
  EmptyInput,
  EmptyVector,
  BackendMismatch,
  WidthOverflow,
  InvalidThreshold,
  KeyMismatch,
  EmptyDatabase,
  BindingMismatch,
  DecryptionIncomplete,
  BadSignature,
  DuplicateId,
  NotFound,
  IntegrityError,
  UnknownRequest,
  FormatError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::Unachievable: return "Unachievable";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyVector: return "EmptyVector";
    case ErrorCode::BackendMismatch: return "BackendMismatch";
    case ErrorCode::WidthOverflow: return "WidthOverflow";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::BindingMismatch: return "BindingMismatch";
    case ErrorCode::DecryptionIncomplete: return "DecryptionIncomplete";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::UnknownRequest: return "UnknownRequest";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure in the library surfaces as this exception; code() is what
// callers (service status mapping, CLI error JSON) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace provreg
