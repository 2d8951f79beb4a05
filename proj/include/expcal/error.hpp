#pragma once

#include <stdexcept>
#include <string>

namespace expcal {

// Base error for everything thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed us something that violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Parse / schema / file-format problems. Carries an optional line number.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Predictor failures. `retryable` distinguishes transport hiccups from
// requests that will never succeed.
class PredictError : public Error {
 public:
  PredictError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

#define EXPCAL_REQUIRE(cond, msg)                       \
  do {                                                  \
    if (!(cond)) throw ::expcal::InvalidArgument(msg);  \
  } while (0)

}  // namespace expcal
