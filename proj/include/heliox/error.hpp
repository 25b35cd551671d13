#ifndef HELIOX_ERROR_HPP
#define HELIOX_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace heliox {

enum class ErrorCode {
  MalformedRow,
  DuplicateId,
  CoordinateOutOfRange,
  UnknownAoi,
  DuplicateTimestamp,
  MisalignedTimestamp,
  NegativeInput,
  BelowFloor,
  MissingField,
  TooManyFolds,
  NoCandidates,
  DonorGap,
  InsufficientData,
  LayoutMismatch,
  NonFiniteLoss,
  ComboMismatch,
  BadMagic,
  VersionUnsupported,
  Truncated,
  CorruptModel,
  EmptyAfterMask,
  ZeroMean,
  NightIssue,
  NoValidPeriods,
  TooFewPairs,
  DegenerateMatrix,
  InvalidConfig,
  IoFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::UnknownAoi: return "UnknownAoi";
    case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
    case ErrorCode::MisalignedTimestamp: return "MisalignedTimestamp";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::BelowFloor: return "BelowFloor";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::TooManyFolds: return "TooManyFolds";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::DonorGap: return "DonorGap";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ComboMismatch: return "ComboMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::EmptyAfterMask: return "EmptyAfterMask";
    case ErrorCode::ZeroMean: return "ZeroMean";
    case ErrorCode::NightIssue: return "NightIssue";
    case ErrorCode::NoValidPeriods: return "NoValidPeriods";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code;
/// `what()` is "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace heliox

#endif  // HELIOX_ERROR_HPP
