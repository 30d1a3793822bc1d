#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snav {

enum class ErrorCode {
  InvalidArgument,
  EmptyCloud,
  TooFewPoints,
  DegenerateGeometry,
  NoMarkerFound,
  AmbiguousMarker,
  InsufficientMotion,
  TooFewSamples,
  InfeasibleBox,
  LengthMismatch,
  EmptyRecords,
  CorrectionOutOfRange,
  EmptyStream,
  NonMonotoneTime,
  NoPeriodicity,
  MissingSection,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NoMarkerFound: return "NoMarkerFound";
    case ErrorCode::AmbiguousMarker: return "AmbiguousMarker";
    case ErrorCode::InsufficientMotion: return "InsufficientMotion";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::InfeasibleBox: return "InfeasibleBox";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyRecords: return "EmptyRecords";
    case ErrorCode::CorrectionOutOfRange: return "CorrectionOutOfRange";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::NoPeriodicity: return "NoPeriodicity";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace snav
