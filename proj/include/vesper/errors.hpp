// include/vesper/errors.hpp

// Copyright 2026 The vesper-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VESPER_ERRORS_HPP_
#define VESPER_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vesper {

// Broken precondition or invariant of an API contract (bad index, odd layer
// count, non-scalar loss, ...). The CLI maps these to exit code 2.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string &what) : std::invalid_argument(what) {}
};

// Tensor extents do not agree.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string &what) : ContractError(what) {}
};

// A forward op produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string &what) : std::runtime_error(what) {}
};

// Invalid configuration file / flag values. Exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string &what) : std::invalid_argument(what) {}
};

// File system failure. Exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string &what) : std::runtime_error(what) {}
};

// Malformed binary or text input. Carries the byte offset where decoding
// stopped (or -1 when not meaningful). Exit code 3.
class ParseError : public IoError {
 public:
  ParseError(const std::string &what, std::int64_t offset)
      : IoError(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")"
                            : what),
        offset_(offset) {}
  std::int64_t offset() const { return offset_; }

 private:
  std::int64_t offset_;
};

}  // namespace vesper

#endif  // VESPER_ERRORS_HPP_
