// src/compression.cpp

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

#include "vesper/compression.hpp"

namespace vesper {

namespace {

void check_nm(std::int64_t n, std::int64_t m) {
  if (n < 1 || m < 1) throw ContractError("layer counts must be >= 1");
  if (n > m)
    throw ContractError("student has more layers (" + std::to_string(n) + ") than the teacher (" +
                        std::to_string(m) + ")");
}

bool is_layer_parameter(const std::string &name) { return name.rfind("layers.", 0) == 0; }

// Parameter suffixes of one layer ("attn.q.weight", ...).
std::vector<std::string> layer_suffixes(const EncoderConfig &config) {
  std::vector<std::string> out;
  const auto p = layer_prefix(1);
  for (const auto &[name, shape] : parameter_shapes(config))
    if (name.rfind(p, 0) == 0) out.push_back(name.substr(p.size()));
  return out;
}

}  // namespace

const char *init_strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::kExtraction: return "extraction";
    case InitStrategy::kAveraging: return "averaging";
    case InitStrategy::kRandom: return "random";
  }
  return "?";
}

InitStrategy parse_init_strategy(const std::string &name) {
  if (name == "extraction") return InitStrategy::kExtraction;
  if (name == "averaging") return InitStrategy::kAveraging;
  if (name == "random") return InitStrategy::kRandom;
  throw ConfigError("unknown init strategy '" + name + "' (expected extraction, averaging, random)");
}

LayerMapping extraction_map(std::int64_t n, std::int64_t m) {
  check_nm(n, m);
  LayerMapping map{InitStrategy::kExtraction, {}};
  const auto step = m / n;
  for (std::int64_t i = 1; i <= n; ++i) {
    const auto src = 1 + step * (i - 1);
    map.sources.emplace_back(src, src);
  }
  return map;
}

LayerMapping averaging_map(std::int64_t n, std::int64_t m) {
  check_nm(n, m);
  LayerMapping map{InitStrategy::kAveraging, {}};
  const auto step = m / n;
  for (std::int64_t i = 1; i <= n; ++i) map.sources.emplace_back(1 + step * (i - 1), step * i);
  return map;
}

EncoderState init_student(const EncoderState &teacher, const EncoderConfig &student_config,
                          InitStrategy strategy, std::uint64_t seed) {
  student_config.validate();
  if (student_config.role != Role::kStudent) throw ContractError("init_student needs a student config");
  check_complete(teacher);

  auto student = init_random(student_config, seed, teacher.dtype);
  std::string mismatched;
  for (const auto &[name, shape] : parameter_shapes(student_config)) {
    if (is_layer_parameter(name) || name == "mask_emb") continue;
    if (!teacher.has(name)) {
      if (name.rfind("final_norm.", 0) == 0) continue;  // teacher without final norm keeps the fresh one
      mismatched += " " + name + " (absent in teacher);";
      continue;
    }
    if (teacher.param(name).shape() != shape)
      mismatched += " " + name + " " + shape_to_string(teacher.param(name).shape()) + " vs " + shape_to_string(shape) + ";";
  }
  if (student_config.num_layers > 0) {
    for (const auto &suffix : layer_suffixes(student_config)) {
      const auto name = layer_prefix(1) + suffix;
      if (!teacher.has(name)) mismatched += " " + name + " (absent in teacher);";
      else if (teacher.param(name).shape() != student.param(name).shape())
        mismatched += " " + name + " " + shape_to_string(teacher.param(name).shape()) + " vs " +
                      shape_to_string(student.param(name).shape()) + ";";
    }
  }
  if (!mismatched.empty()) throw ContractError("teacher and student dimensions differ:" + mismatched);

  for (auto &[name, t] : student.params) {
    if (is_layer_parameter(name) || name == "mask_emb") continue;
    const bool always = is_frontend_parameter(name) || name.rfind("pos_conv.", 0) == 0;
    if (!teacher.has(name)) continue;
    if (always || strategy != InitStrategy::kRandom) t = teacher.param(name).clone();
  }
  if (strategy == InitStrategy::kRandom) return student;

  const auto map = strategy == InitStrategy::kExtraction
                       ? extraction_map(student_config.num_layers, teacher.config.num_layers)
                       : averaging_map(student_config.num_layers, teacher.config.num_layers);
  for (std::int64_t i = 1; i <= student_config.num_layers; ++i) {
    const auto [lo, hi] = map.sources[static_cast<std::size_t>(i - 1)];
    for (const auto &suffix : layer_suffixes(student_config)) {
      auto &dst = student.param(layer_prefix(i) + suffix);
      if (lo == hi) {
        dst = teacher.param(layer_prefix(lo) + suffix).clone();
        continue;
      }
      auto out = dst.mutable_data();
      std::fill(out.begin(), out.end(), 0.0);
      for (auto j = lo; j <= hi; ++j) {
        auto src = teacher.param(layer_prefix(j) + suffix).data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += src[k];
      }
      const double count = static_cast<double>(hi - lo + 1);
      for (auto &v : out) v /= count;
      dst.round_to_dtype();
    }
  }
  return student;
}

}  // namespace vesper
