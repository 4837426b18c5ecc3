// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ROTAVG_ERROR_HPP
#define ROTAVG_ERROR_HPP

#include <cstddef>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace rotavg {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented precondition (bad config, invalid matrix).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input data that is well-formed but unusable (disconnected graph,
/// singular system, degenerate geometry).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical procedure ended in a state that cannot be trusted.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Rank-3 factor whose blocks disagree in determinant sign.
class MixedSignError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// Point behind the camera.
class CheiralityError : public DataError {
 public:
  using DataError::DataError;
};

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) {
    std::cerr << "rotavg: warning: " << msg << '\n';
  };
  return sink;
}
}  // namespace detail

/// Replaces the process-wide warning handler; returns the previous one.
/// Not thread-safe; install once at startup.
inline WarningSink set_warning_sink(WarningSink sink) {
  return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& msg) {
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace rotavg

#endif  // ROTAVG_ERROR_HPP
