#pragma once

#include <stdexcept>
#include <string>

namespace cir {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Bad argument values: out-of-range labels, non-positive temperature,
// invalid configuration fields.
struct ValueError : Error {
  using Error::Error;
};

// Non-finite intermediate values (NaN/inf in gradients or activations).
struct NumericError : Error {
  using Error::Error;
};

// A batch cannot support the requested operation: fully masked
// reconstruction row, batch-norm training with batch size 1.
struct DegenerateError : Error {
  using Error::Error;
};

// Split curation failures: empty train/test set, single-video dataset.
struct SplitError : Error {
  using Error::Error;
};

// Feature-store / checkpoint file problems: bad magic, truncation,
// index/payload disagreement.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace cir
