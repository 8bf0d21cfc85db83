#pragma once

#include <stdexcept>
#include <string>

namespace aes {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, inconsistent splits, missing predictions.
class DataError : public Error {
 public:
  using Error::Error;
};

// Kappa or correlation whose denominator vanishes.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (singular system, non-finite input).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Response text that does not follow the SCORE/RATIONALE format.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Chat-completion transport or protocol failure.
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace aes
