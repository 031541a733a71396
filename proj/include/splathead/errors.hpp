// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splathead {

// Error taxonomy; the CLI maps these onto process exit codes
// (invalid input -> 2, numerical failure -> 3, I/O failure -> 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Thrown by projection when a point lands at or behind the near plane.
class BehindCameraError : public InvalidInputError {
 public:
  using InvalidInputError::InvalidInputError;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  // Final residual of the failed solve, when one is meaningful.
  double residual() const { return residual_; }

 private:
  double residual_ = 0.0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace splathead
