#pragma once

#include <stdexcept>
#include <string>

namespace res {

/// A state that the algorithm guarantees can never occur was observed
/// (e.g. a non positive definite curvature estimate with delta > 0).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace res
