#pragma once

#include <stdexcept>
#include <string>

namespace shockfis {

// Exception hierarchy. Each family maps onto one CLI exit code:
//   UsageError -> 1, DataError -> 2, NumericalError -> 3.

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shockfis
