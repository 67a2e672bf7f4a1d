#pragma once

#include <stdexcept>
#include <string>

namespace rewriter {

// Exit-code mapping used by the CLI: validation-type errors -> 1,
// everything else escaping main -> 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : ValidationError {
  ParseError(const std::string& msg, long line)
      : ValidationError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  long line_number;
};

struct UsageError : ValidationError {
  using ValidationError::ValidationError;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  DimensionError(const std::string& op, const std::string& lhs, const std::string& rhs)
      : std::runtime_error(op + ": incompatible shapes " + lhs + " and " + rhs) {}
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rewriter
