// include/vesper/masking.hpp

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

#ifndef VESPER_MASKING_HPP_
#define VESPER_MASKING_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesper/audio.hpp"

namespace vesper {

enum class MaskStrategy { kEnergyGuided, kEnergyPitchGuided, kRandom };
const char *strategy_name(MaskStrategy s);
MaskStrategy parse_strategy(const std::string &name);  // ConfigError on unknown names

struct MaskConfig {
  double phoneme_span_ms = 160.0;
  double word_span_ms = 800.0;
  std::int64_t phoneme_count = 20;
  std::int64_t word_count = 4;
  double stride_ms = 20.0;
  MaskStrategy strategy = MaskStrategy::kEnergyGuided;
  // Required for kEnergyPitchGuided; there is no default.
  std::optional<double> pitch_variation_threshold;
  std::uint64_t seed = 0;

  std::int64_t phoneme_span_frames() const;
  std::int64_t word_span_frames() const;
  void validate() const;  // ConfigError
};

struct MaskFlags {
  bool zone_fallback = false;   // a zone was short, deficit taken from the other zone
  bool noise_fallback = false;  // Noise frames were used as centers
  bool count_reduced = false;   // fewer frames than requested centers
  bool pitch_backfill = false;  // pitch-restricted pool too small, refilled from its zone

  bool any() const { return zone_fallback || noise_fallback || count_reduced || pitch_backfill; }
};

struct CenterSelection {
  std::vector<std::int64_t> centers;  // ascending
  std::vector<Zone> zones;            // zone of each center
  MaskFlags flags;
};

struct MaskPlan {
  std::int64_t frames = 0;
  std::vector<std::int64_t> phoneme_centers;  // ascending
  std::vector<Zone> phoneme_zones;
  std::vector<std::int64_t> word_centers;  // ascending, subset of phoneme_centers
  std::vector<std::int64_t> I_p;           // ascending, unique
  std::vector<std::int64_t> I_w;
  MaskFlags flags;
};

// Uniform integer in [0, n) by rejection on the raw 64-bit stream, so plans
// do not depend on the standard library's distribution implementation.
std::uint64_t uniform_index(std::mt19937_64 &rng, std::uint64_t n);

// k distinct elements of pool by partial Fisher-Yates. k == 0 draws nothing.
std::vector<std::int64_t> sample_without_replacement(std::vector<std::int64_t> pool, std::int64_t k,
                                                     std::mt19937_64 &rng);

CenterSelection select_centers_energy(const EnergyProfile &profile, std::int64_t count,
                                      std::mt19937_64 &rng);
CenterSelection select_centers_energy(const EnergyProfile &profile, std::int64_t count,
                                      std::uint64_t seed);

// Per latent frame: autocorrelation F0 over a 40 ms window centred on the
// frame (search 60..400 Hz, unvoiced frames 0), then |F0(f) - F0(f-1)|.
std::vector<double> pitch_track(const AudioClip &clip, std::int64_t stride = kFrameStride);
std::vector<double> pitch_change_scores(const AudioClip &clip, std::int64_t stride = kFrameStride);

CenterSelection select_centers_energy_pitch(const EnergyProfile &profile,
                                            std::span<const double> scores, double threshold,
                                            std::int64_t count, std::mt19937_64 &rng);
CenterSelection select_centers_energy_pitch(const EnergyProfile &profile,
                                            std::span<const double> scores, double threshold,
                                            std::int64_t count, std::uint64_t seed);

// Union of [c - floor(s/2), c + ceil(s/2)) over centers, clipped to [0, frames).
std::vector<std::int64_t> expand_spans(std::span<const std::int64_t> centers, std::int64_t span,
                                       std::int64_t frames);

// Phoneme centres by the configured strategy, then word centres as a uniform
// subsample of them, then span expansion. pitch_scores is needed only for
// kEnergyPitchGuided.
MaskPlan build_plan(const MaskConfig &config, const EnergyProfile &profile, std::int64_t frames,
                    std::uint64_t seed, std::span<const double> pitch_scores = {});

// Span expansion on caller-provided centres.
MaskPlan plan_from_centers(const MaskConfig &config, std::int64_t frames,
                           std::vector<std::int64_t> phoneme_centers,
                           std::vector<std::int64_t> word_centers);

nlohmann::json plan_to_json(const MaskPlan &plan);

}  // namespace vesper

#endif  // VESPER_MASKING_HPP_
