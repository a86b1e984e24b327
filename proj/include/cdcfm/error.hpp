// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cdcfm {

/// Tensor dimensions are incompatible with the requested operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An argument is outside the operation's domain.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Attempt to go below the coarsest pyramid level.
struct UnderflowError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A NaN or Inf showed up in a state that must stay finite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed binary file (RTEN tensors, CDCM checkpoints).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration. `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace cdcfm
