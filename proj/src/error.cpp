#include "cmde/error.hpp"

namespace cmde {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kInvalidArchitecture: return "InvalidArchitecture";
    case ErrorKind::kSpecMismatch: return "SpecMismatch";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kNonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorKind::kDivergedTraining: return "DivergedTraining";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kSchemaError: return "SchemaError";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kNoMatchedRows: return "NoMatchedRows";
    case ErrorKind::kEmptyPredictions: return "EmptyPredictions";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cmde
