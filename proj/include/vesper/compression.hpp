// include/vesper/compression.hpp

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

#ifndef VESPER_COMPRESSION_HPP_
#define VESPER_COMPRESSION_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vesper/encoder.hpp"

namespace vesper {

enum class InitStrategy { kExtraction, kAveraging, kRandom };
const char *init_strategy_name(InitStrategy s);
InitStrategy parse_init_strategy(const std::string &name);  // ConfigError

// Teacher layer ranges per student layer, 1-based and inclusive. Extraction
// ranges have width one.
struct LayerMapping {
  InitStrategy strategy = InitStrategy::kExtraction;
  std::vector<std::pair<std::int64_t, std::int64_t>> sources;
};

// Student layer i takes teacher layer 1 + floor(M/N)(i-1).
LayerMapping extraction_map(std::int64_t n, std::int64_t m);
// Student layer i averages teacher layers 1 + floor(M/N)(i-1) .. floor(M/N) i.
LayerMapping averaging_map(std::int64_t n, std::int64_t m);

// Builds a student from a teacher:
//  - frontend, positional conv and (when both have it) final norm are copied;
//  - layers follow the mapping (copy or element-wise mean);
//  - the mask embedding is drawn from normal(0, 0.02) with `seed`.
// kRandom draws the layers and final norm fresh from init_random(seed) but
// still copies the frozen frontend and the positional conv. The teacher is
// not modified. Dimension mismatches raise ContractError naming the tensors.
EncoderState init_student(const EncoderState &teacher, const EncoderConfig &student_config,
                          InitStrategy strategy, std::uint64_t seed);

}  // namespace vesper

#endif  // VESPER_COMPRESSION_HPP_
