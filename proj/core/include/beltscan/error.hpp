#pragma once

#include <stdexcept>
#include <string>

namespace beltscan {

// Anything wrong with input data, files or shapes. The CLI maps this to
// exit code 2; genuine usage errors exit with 1.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace beltscan
