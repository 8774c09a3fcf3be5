#pragma once

#include <stdexcept>
#include <string>

namespace cmsre {

/// Bad input data, configuration, or files. Maps to CLI exit status 2.
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver or numerical failure. Maps to CLI exit status 3.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cmsre
