#pragma once

#include <stdexcept>
#include <string>

namespace visdep {

// Process exit codes used by the CLI. Library code throws the matching
// exception type and the CLI maps it back to the code.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kDivergence = 4,
};

/// Invalid arguments or configuration.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data, I/O failures, or a violated type invariant.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace visdep
