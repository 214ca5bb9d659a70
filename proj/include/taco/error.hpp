#pragma once

#include <stdexcept>
#include <string>

namespace taco {

// Configuration mistakes: bad shapes/dims declared up front, invalid option values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse at call time: wrong sequence length, step after done, N < 2, ...
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent on-disk data.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values surfaced from numerics.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Retryable: the buffer cannot serve a batch yet.
struct NotReady : std::runtime_error {
  explicit NotReady(const std::string& msg) : std::runtime_error(msg) {}
};

#define TACO_CHECK(cond, ErrType, msg)         \
  do {                                         \
    if (!(cond)) throw ErrType(msg);           \
  } while (0)

}  // namespace taco
