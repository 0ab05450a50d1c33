#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qglut {

enum class ErrorCode {
  InvalidArgument,
  InvalidImage,
  UnsupportedConversion,
  InvalidSize,
  DimensionMismatch,
  ScoreOutOfRange,
  LabelOutOfRange,
  ShapeMismatch,
  StaleTape,
  EmptyMask,
  TooFewPoints,
  DegenerateClustering,
  TooFewRatings,
  AllSubjectsRejected,
  ZeroVarianceSubject,
  ModeViolation,
  MissingMask,
  NonFiniteLoss,
  ArchitectureMismatch,
  IoError,
  VersionMismatch,
  CorruptCheckpoint,
  UnresolvedLabel,
  ScoreOutOfGuideRange,
  EmptyDataset,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI and the HTTP layer can map it to a stable machine-readable token.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace qglut
