// Copyright 2026 The sead Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEAD_ERROR_HPP_
#define SEAD_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sead {

// Error categories. The numeric values of the last three line up with the CLI
// exit codes (1 contract violation, 2 I/O, 3 numeric divergence).
enum class ErrorKind {
  kInvalidInput,
  kInvalidConfig,
  kShape,
  kContract,
  kIo,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Messages are built before the call; hot paths should branch and call Fail.
inline void Require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) Fail(kind, what);
}

inline void Require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) Fail(kind, what);
}

}  // namespace sead

#endif  // SEAD_ERROR_HPP_
