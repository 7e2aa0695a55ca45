#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmde {

enum class ErrorKind {
  kNotPositiveDefinite,
  kDimensionMismatch,
  kInvalidArchitecture,
  kSpecMismatch,
  kEmptyDataset,
  kNonBinaryTreatment,
  kDivergedTraining,
  kParseError,
  kSchemaError,
  kLengthMismatch,
  kMissingGroundTruth,
  kNoMatchedRows,
  kEmptyPredictions,
  kConfigError,
  kIoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it to
// an exit code and a machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cmde
