#pragma once

#include <stdexcept>
#include <string>

namespace ufm {

// Bad input: malformed files, out-of-range marks, shape mismatches.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values in a forward/backward pass or during sampling.
// The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ufm
