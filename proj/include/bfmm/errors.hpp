#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace bfmm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid distribution or model parameter (non-positive shape, bad df, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A matrix that should be symmetric positive definite failed Cholesky.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Input data or configuration violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed token in an input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Under/overflow or degenerate probability vector.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

}  // namespace bfmm
