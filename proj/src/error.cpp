#include "qglut/error.hpp"

namespace qglut {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::UnsupportedConversion: return "UnsupportedConversion";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleTape: return "StaleTape";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateClustering: return "DegenerateClustering";
    case ErrorCode::TooFewRatings: return "TooFewRatings";
    case ErrorCode::AllSubjectsRejected: return "AllSubjectsRejected";
    case ErrorCode::ZeroVarianceSubject: return "ZeroVarianceSubject";
    case ErrorCode::ModeViolation: return "ModeViolation";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UnresolvedLabel: return "UnresolvedLabel";
    case ErrorCode::ScoreOutOfGuideRange: return "ScoreOutOfGuideRange";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
  }
  return "Unknown";
}

}  // namespace qglut
