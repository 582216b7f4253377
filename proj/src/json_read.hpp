// src/json_read.hpp

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

#ifndef VESPER_SRC_JSON_READ_HPP_
#define VESPER_SRC_JSON_READ_HPP_

#include <cstdint>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "vesper/errors.hpp"

namespace vesper::detail {

// Typed read of a config value; ConfigError naming the key on mismatch.
// Integers must be JSON integers, doubles accept any number.
template <typename T>
T read_as(const nlohmann::json &j, const std::string &key) {
  bool ok;
  if constexpr (std::is_same_v<T, bool>) ok = j.is_boolean();
  else if constexpr (std::is_unsigned_v<T>) ok = j.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) ok = j.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) ok = j.is_number();
  else ok = j.is_string();
  if (!ok) throw ConfigError("config key '" + key + "' has the wrong type (" + j.dump() + ")");
  return j.get<T>();
}

inline void require_object(const nlohmann::json &j, const std::string &where) {
  if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
}

[[noreturn]] inline void unknown_key(const std::string &where, const std::string &key) {
  throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

}  // namespace vesper::detail

#endif  // VESPER_SRC_JSON_READ_HPP_
