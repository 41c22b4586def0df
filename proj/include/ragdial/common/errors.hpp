#pragma once

#include <stdexcept>
#include <string>

namespace ragdial {

// Bad input supplied by the caller: malformed files, out-of-range options,
// missing paths. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two artifacts disagree about the state they were built from (stale index,
// checkpoint/config hash mismatch). The CLI maps this to exit code 3.
class StateMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ragdial
