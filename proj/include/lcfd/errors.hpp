// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace lcfd {

// Coarse failure classes; the CLI maps each to its own exit code.
enum class ErrorKind {
  kInput,          // bad arguments, unreadable or malformed input files
  kCorrupt,        // compressed stream or checkpoint fails validation
  kModelMismatch,  // container was produced with different weights
  kTraining,       // optimisation diverged
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) {
  return Error(ErrorKind::kInput, what);
}

inline Error corrupt_error(const std::string& what) {
  return Error(ErrorKind::kCorrupt, what);
}

// A compressed section could not be decoded. `section` is the position in
// coding order; `subimage` its printable name, e.g. "(Y,b)".
class StreamError : public Error {
 public:
  StreamError(int section, std::string subimage, const std::string& what)
      : Error(ErrorKind::kCorrupt,
              "section " + std::to_string(section + 1) + " " + subimage +
                  ": " + what),
        section_(section),
        subimage_(std::move(subimage)) {}

  int section() const noexcept { return section_; }
  const std::string& subimage() const noexcept { return subimage_; }

 private:
  int section_;
  std::string subimage_;
};

}  // namespace lcfd
