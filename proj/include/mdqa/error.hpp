#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid input record; `line` is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  DataError(const std::string& message, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Response that violates a provider wire contract (length mismatch, NaN, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Retriable transport failure (connection refused, timeout, 5xx, 429).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Non-retriable failure of one provider request (4xx, refusal, unusable output).
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Retry budget exhausted; the provider is considered down.
class ProviderUnavailable : public Error {
 public:
  using Error::Error;
};

/// Request rejected before sending because it cannot fit the model budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdqa
