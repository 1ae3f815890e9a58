#pragma once

#include <stdexcept>
#include <string>

namespace prefopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (dimension mismatch, bad index, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double last_gradient_norm = 0.0)
      : Error(what), last_gradient_norm_(last_gradient_norm) {}
  double last_gradient_norm() const { return last_gradient_norm_; }

 private:
  double last_gradient_norm_;
};

// The user abstained too many times in a row.
class StalledUserError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row = -1) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

// Conflicts with the current state of a session (stale query, wrong status).
class StateError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IncompatibleLogError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefopt
