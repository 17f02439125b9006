#pragma once

#include <stdexcept>
#include <string>

namespace emte {

// Bad command-line usage or malformed configuration. Maps to CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, corrupt, or mismatched data files. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace emte
