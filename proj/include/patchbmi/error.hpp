#pragma once

#include <stdexcept>
#include <string>

namespace patchbmi {

// Invalid input or configuration: malformed files, bad shapes, out-of-range
// hyperparameters. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while processing well-formed input, e.g. a degenerate ROI or an
// evaluation with too many failed samples. The CLI maps this to exit code 2.
class ProcessingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace patchbmi
