#pragma once

#include <stdexcept>
#include <string>

namespace protofuse {

// Malformed or inconsistent input data (files, knowledge, episode shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced a non-finite or otherwise unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace protofuse
