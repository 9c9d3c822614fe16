/*
 * Copyright 2026 The Loopmark Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LOOPMARK_ERROR_HPP_
#define LOOPMARK_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace loopmark {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// process exit codes (see `exit_code`).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed label, prediction or label-map text. Carries the 1-based line
/// number and 1-based field index when they apply (0 otherwise).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, int line = 0, int field = 0)
      : Error(Describe(what, line, field)), line_(line), field_(field) {}

  int line() const { return line_; }
  int field() const { return field_; }

 private:
  static std::string Describe(const std::string& what, int line, int field) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (field > 0) out += "field " + std::to_string(field) + ": ";
    return out + what;
  }

  int line_;
  int field_;
};

/// A value violates a domain invariant (box outside the unit square, bad
/// spec range, singular transform, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A precondition on caller-visible state failed (workspace not empty,
/// wrong loop phase, unknown image id, ...). Exit code 2.
class UserError : public Error {
 public:
  using Error::Error;
};

/// The loop is in a phase that does not permit the requested operation.
class PhaseError : public UserError {
 public:
  using UserError::UserError;
};

/// The workspace on disk disagrees with its manifest. Exit code 4.
class CorruptWorkspace : public Error {
 public:
  using Error::Error;
};

/// An external detector call failed. Exit code 3.
class AdapterError : public Error {
 public:
  AdapterError(const std::string& what, std::string output = {})
      : Error(what), output_(std::move(output)) {}
  const std::string& output() const { return output_; }

 private:
  std::string output_;
};

class TrainFailed : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class DetectFailed : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class AdapterTimeout : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class MissingWeights : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const AdapterError*>(&e)) return 3;
  if (dynamic_cast<const CorruptWorkspace*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 2;
  return 1;
}

}  // namespace loopmark

#endif  // LOOPMARK_ERROR_HPP_
