/*
 * Copyright 2026 The WoRA Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wora {

// Exception hierarchy. The CLI maps these onto exit codes:
//   ConfigError -> 2, FormatError / IoError (and subclasses) -> 3, rest -> 1.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid parameters or preconditions supplied by the caller.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed file content (bad magic, version, dtype, sidecar layout, ...).
struct FormatError : Error {
  using Error::Error;
};

// Payload length disagrees with the header.
struct LengthError : FormatError {
  using FormatError::FormatError;
};

// Structurally valid file holding unusable values (NaN / Inf).
struct DataError : FormatError {
  DataError(const std::string& what, std::size_t row)
      : FormatError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Filesystem failures; the message always carries the path.
struct IoError : Error {
  using Error::Error;
};

// Non-finite value produced by a computation.
struct NumericError : Error {
  using Error::Error;
};

// Training diverged.
struct RunError : Error {
  RunError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace wora
