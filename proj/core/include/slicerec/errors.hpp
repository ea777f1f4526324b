#pragma once

#include <stdexcept>
#include <string>

namespace slicerec {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or slice-stack shape mismatch.
struct ShapeError : Error { using Error::Error; };
// Slice/volume geometry violations (padding wider than target, etc.).
struct DimensionError : Error { using Error::Error; };
// Out-of-range slice indices.
struct BoundsError : Error { using Error::Error; };
// Non-finite pixels or otherwise unusable data.
struct DataError : Error { using Error::Error; };
// Metric input outside its required domain.
struct DomainError : Error { using Error::Error; };
// On-disk container violations (bad magic, truncation, manifest mismatch).
struct FormatError : Error { using Error::Error; };
// Invalid configuration values or unknown config keys.
struct ConfigError : Error { using Error::Error; };
// A scan with cdr != 0 reached the training path.
struct RegimeViolationError : Error { using Error::Error; };
// Non-finite training loss.
struct DivergenceError : Error { using Error::Error; };
struct ScoringError : Error { using Error::Error; };
struct EvaluationError : Error { using Error::Error; };
struct SelectionError : Error { using Error::Error; };
struct MissingInputError : Error { using Error::Error; };
struct OverwriteRefusedError : Error { using Error::Error; };

}  // namespace slicerec
