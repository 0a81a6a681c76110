#pragma once

#include <stdexcept>
#include <string>

namespace saeme {

/// File or stream could not be opened / read / written.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// A resampling or iterative procedure exceeded its failure budget.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace saeme
