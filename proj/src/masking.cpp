// src/masking.cpp

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

#include "vesper/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vesper {

namespace {

constexpr double kPitchWindowS = 0.040;
constexpr double kMinF0 = 60.0;
constexpr double kMaxF0 = 400.0;
constexpr double kVoicingThreshold = 0.5;
constexpr double kPeakFraction = 0.9;
constexpr double kSilenceEnergy = 1e-10;

struct ZoneTake {
  std::int64_t high = 0, low = 0, noise = 0;
};

struct Pools {
  std::vector<std::int64_t> high, low, noise;
};

Pools zone_pools(const EnergyProfile &profile) {
  if (static_cast<std::int64_t>(profile.zones.size()) != profile.frames())
    throw ContractError("energy profile has no zones; call normalize_and_zone first");
  Pools p;
  for (std::int64_t f = 0; f < profile.frames(); ++f) {
    switch (profile.zones[static_cast<std::size_t>(f)]) {
      case Zone::kHigh: p.high.push_back(f); break;
      case Zone::kLow: p.low.push_back(f); break;
      case Zone::kNoise: p.noise.push_back(f); break;
    }
  }
  return p;
}

ZoneTake plan_takes(const Pools &pools, std::int64_t &count, MaskFlags &flags) {
  if (count < 1) throw ContractError("center count must be >= 1");
  const auto total = static_cast<std::int64_t>(pools.high.size() + pools.low.size() + pools.noise.size());
  if (total < count) {
    count = total;
    flags.count_reduced = true;
  }
  const auto H = static_cast<std::int64_t>(pools.high.size());
  const auto L = static_cast<std::int64_t>(pools.low.size());
  ZoneTake t;
  t.high = std::min((count + 1) / 2, H);
  t.low = std::min(count / 2, L);
  auto rem = count - t.high - t.low;
  const auto extra_low = std::min(rem, L - t.low);
  t.low += extra_low;
  rem -= extra_low;
  const auto extra_high = std::min(rem, H - t.high);
  t.high += extra_high;
  rem -= extra_high;
  if (extra_low > 0 || extra_high > 0) flags.zone_fallback = true;
  t.noise = rem;
  if (rem > 0) flags.noise_fallback = true;
  return t;
}

CenterSelection finish(std::vector<std::pair<std::int64_t, Zone>> picked, MaskFlags flags) {
  std::sort(picked.begin(), picked.end());
  CenterSelection s;
  s.flags = flags;
  for (auto &[c, z] : picked) {
    s.centers.push_back(c);
    s.zones.push_back(z);
  }
  return s;
}

void append(std::vector<std::pair<std::int64_t, Zone>> &out, const std::vector<std::int64_t> &centers,
            Zone zone) {
  for (auto c : centers) out.emplace_back(c, zone);
}

// Restricted draw: all of `restricted` when it is too small, backfilled from
// the rest of the zone; otherwise a plain sample from `restricted`.
std::vector<std::int64_t> draw_restricted(const std::vector<std::int64_t> &zone_pool,
                                          std::span<const double> scores, double threshold,
                                          std::int64_t n, std::mt19937_64 &rng, MaskFlags &flags) {
  std::vector<std::int64_t> restricted, rest;
  for (auto f : zone_pool)
    (scores[static_cast<std::size_t>(f)] >= threshold ? restricted : rest).push_back(f);
  const auto r = static_cast<std::int64_t>(restricted.size());
  if (r >= n) return sample_without_replacement(std::move(restricted), n, rng);
  flags.pitch_backfill = true;
  auto fill = sample_without_replacement(std::move(rest), n - r, rng);
  restricted.insert(restricted.end(), fill.begin(), fill.end());
  return restricted;
}

double normalized_autocorr(const std::vector<double> &w, std::int64_t lag) {
  double xy = 0.0, xx = 0.0, yy = 0.0;
  const auto n = static_cast<std::int64_t>(w.size()) - lag;
  for (std::int64_t i = 0; i < n; ++i) {
    const double a = w[static_cast<std::size_t>(i)];
    const double b = w[static_cast<std::size_t>(i + lag)];
    xy += a * b;
    xx += a * a;
    yy += b * b;
  }
  if (xx <= kSilenceEnergy || yy <= kSilenceEnergy) return 0.0;
  return xy / std::sqrt(xx * yy);
}

}  // namespace

const char *strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kEnergyGuided: return "energy";
    case MaskStrategy::kEnergyPitchGuided: return "energy_pitch";
    case MaskStrategy::kRandom: return "random";
  }
  return "?";
}

MaskStrategy parse_strategy(const std::string &name) {
  if (name == "energy") return MaskStrategy::kEnergyGuided;
  if (name == "energy_pitch") return MaskStrategy::kEnergyPitchGuided;
  if (name == "random") return MaskStrategy::kRandom;
  throw ConfigError("unknown mask strategy '" + name + "' (expected energy, energy_pitch, random)");
}

std::int64_t MaskConfig::phoneme_span_frames() const {
  return static_cast<std::int64_t>(std::llround(phoneme_span_ms / stride_ms));
}

std::int64_t MaskConfig::word_span_frames() const {
  return static_cast<std::int64_t>(std::llround(word_span_ms / stride_ms));
}

void MaskConfig::validate() const {
  if (!(stride_ms > 0.0)) throw ConfigError("mask stride_ms must be positive");
  if (!(phoneme_span_ms > 0.0) || !(word_span_ms > 0.0))
    throw ConfigError("mask spans must be positive");
  if (phoneme_span_frames() < 1 || word_span_frames() < 1)
    throw ConfigError("mask spans must cover at least one frame");
  if (phoneme_count < 1 || word_count < 1) throw ConfigError("mask counts must be >= 1");
  if (word_count > phoneme_count) throw ConfigError("word_count must not exceed phoneme_count");
  if (strategy == MaskStrategy::kEnergyPitchGuided && !pitch_variation_threshold)
    throw ConfigError("energy_pitch masking needs pitch_variation_threshold");
}

std::uint64_t uniform_index(std::mt19937_64 &rng, std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return x % n;
}

std::vector<std::int64_t> sample_without_replacement(std::vector<std::int64_t> pool, std::int64_t k,
                                                     std::mt19937_64 &rng) {
  const auto n = static_cast<std::int64_t>(pool.size());
  if (k < 0 || k > n) throw ContractError("sample_without_replacement: k out of range");
  for (std::int64_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

CenterSelection select_centers_energy(const EnergyProfile &profile, std::int64_t count,
                                      std::mt19937_64 &rng) {
  const auto pools = zone_pools(profile);
  MaskFlags flags;
  const auto t = plan_takes(pools, count, flags);
  std::vector<std::pair<std::int64_t, Zone>> picked;
  append(picked, sample_without_replacement(pools.high, t.high, rng), Zone::kHigh);
  append(picked, sample_without_replacement(pools.low, t.low, rng), Zone::kLow);
  append(picked, sample_without_replacement(pools.noise, t.noise, rng), Zone::kNoise);
  return finish(std::move(picked), flags);
}

CenterSelection select_centers_energy(const EnergyProfile &profile, std::int64_t count,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return select_centers_energy(profile, count, rng);
}

CenterSelection select_centers_energy_pitch(const EnergyProfile &profile,
                                            std::span<const double> scores, double threshold,
                                            std::int64_t count, std::mt19937_64 &rng) {
  if (static_cast<std::int64_t>(scores.size()) != profile.frames())
    throw DimensionError("pitch scores have " + std::to_string(scores.size()) +
                         " frames, energy profile has " + std::to_string(profile.frames()));
  const auto pools = zone_pools(profile);
  MaskFlags flags;
  const auto t = plan_takes(pools, count, flags);
  std::vector<std::pair<std::int64_t, Zone>> picked;
  append(picked, draw_restricted(pools.high, scores, threshold, t.high, rng, flags), Zone::kHigh);
  append(picked, draw_restricted(pools.low, scores, threshold, t.low, rng, flags), Zone::kLow);
  append(picked, draw_restricted(pools.noise, scores, threshold, t.noise, rng, flags), Zone::kNoise);
  return finish(std::move(picked), flags);
}

CenterSelection select_centers_energy_pitch(const EnergyProfile &profile,
                                            std::span<const double> scores, double threshold,
                                            std::int64_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return select_centers_energy_pitch(profile, scores, threshold, count, rng);
}

std::vector<double> pitch_track(const AudioClip &clip, std::int64_t stride) {
  if (clip.sample_rate != kSampleRate) throw UnsupportedRateError(clip.sample_rate);
  if (stride < 1) throw ContractError("pitch_track: stride must be >= 1");
  const auto frames = frame_count(clip.size(), stride);
  const auto window = static_cast<std::int64_t>(std::llround(kPitchWindowS * kSampleRate));
  const auto min_lag = static_cast<std::int64_t>(std::floor(kSampleRate / kMaxF0));
  const auto max_lag = static_cast<std::int64_t>(std::ceil(kSampleRate / kMinF0));
  std::vector<double> f0(static_cast<std::size_t>(frames), 0.0);
  std::vector<double> w(static_cast<std::size_t>(window));
  std::vector<double> r(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (std::int64_t f = 0; f < frames; ++f) {
    const auto start = f * stride + stride / 2 - window / 2;
    for (std::int64_t i = 0; i < window; ++i) {
      const auto s = start + i;
      w[static_cast<std::size_t>(i)] = (s >= 0 && s < clip.size()) ? clip.samples[static_cast<std::size_t>(s)] : 0.0;
    }
    for (std::int64_t lag = min_lag - 1; lag <= max_lag + 1; ++lag)
      r[static_cast<std::size_t>(lag)] = normalized_autocorr(w, lag);
    double best = 0.0;
    for (std::int64_t lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    if (best < kVoicingThreshold) continue;
    for (std::int64_t lag = min_lag; lag <= max_lag; ++lag) {
      const double c = r[static_cast<std::size_t>(lag)];
      const double a = r[static_cast<std::size_t>(lag - 1)];
      const double b = r[static_cast<std::size_t>(lag + 1)];
      if (c < kPeakFraction * best || c < a || c < b) continue;
      const double denom = a - 2.0 * c + b;
      const double shift = denom < 0.0 ? 0.5 * (a - b) / denom : 0.0;
      f0[static_cast<std::size_t>(f)] = kSampleRate / (static_cast<double>(lag) + shift);
      break;
    }
  }
  return f0;
}

std::vector<double> pitch_change_scores(const AudioClip &clip, std::int64_t stride) {
  auto f0 = pitch_track(clip, stride);
  std::vector<double> scores(f0.size(), 0.0);
  for (std::size_t f = 1; f < f0.size(); ++f) scores[f] = std::abs(f0[f] - f0[f - 1]);
  return scores;
}

std::vector<std::int64_t> expand_spans(std::span<const std::int64_t> centers, std::int64_t span,
                                       std::int64_t frames) {
  if (span < 1) throw ContractError("expand_spans: span must be >= 1");
  std::vector<char> hit(static_cast<std::size_t>(std::max<std::int64_t>(frames, 0)), 0);
  for (auto c : centers) {
    if (c < 0 || c >= frames) throw ContractError("mask center " + std::to_string(c) + " outside [0, T)");
    const auto lo = std::max<std::int64_t>(0, c - span / 2);
    const auto hi = std::min(frames, c + (span + 1) / 2);
    for (auto i = lo; i < hi; ++i) hit[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < frames; ++i)
    if (hit[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

MaskPlan plan_from_centers(const MaskConfig &config, std::int64_t frames,
                           std::vector<std::int64_t> phoneme_centers,
                           std::vector<std::int64_t> word_centers) {
  if (frames < 1) throw ContractError("cannot build a mask plan for an empty clip");
  std::sort(phoneme_centers.begin(), phoneme_centers.end());
  std::sort(word_centers.begin(), word_centers.end());
  for (auto c : word_centers)
    if (!std::binary_search(phoneme_centers.begin(), phoneme_centers.end(), c))
      throw ContractError("word center " + std::to_string(c) + " is not a phoneme center");
  MaskPlan plan;
  plan.frames = frames;
  plan.I_p = expand_spans(phoneme_centers, config.phoneme_span_frames(), frames);
  plan.I_w = expand_spans(word_centers, config.word_span_frames(), frames);
  plan.phoneme_centers = std::move(phoneme_centers);
  plan.word_centers = std::move(word_centers);
  return plan;
}

MaskPlan build_plan(const MaskConfig &config, const EnergyProfile &profile, std::int64_t frames,
                    std::uint64_t seed, std::span<const double> pitch_scores) {
  config.validate();
  if (frames < 1) throw ContractError("cannot build a mask plan for an empty clip");
  if (profile.frames() != frames)
    throw DimensionError("energy profile has " + std::to_string(profile.frames()) +
                         " frames but the latent sequence has " + std::to_string(frames));
  std::mt19937_64 rng(seed);
  CenterSelection sel;
  switch (config.strategy) {
    case MaskStrategy::kEnergyGuided:
      sel = select_centers_energy(profile, config.phoneme_count, rng);
      break;
    case MaskStrategy::kEnergyPitchGuided:
      sel = select_centers_energy_pitch(profile, pitch_scores, *config.pitch_variation_threshold,
                                        config.phoneme_count, rng);
      break;
    case MaskStrategy::kRandom: {
      std::vector<std::int64_t> all(static_cast<std::size_t>(frames));
      for (std::int64_t i = 0; i < frames; ++i) all[static_cast<std::size_t>(i)] = i;
      auto count = config.phoneme_count;
      if (count > frames) {
        count = frames;
        sel.flags.count_reduced = true;
      }
      sel.centers = sample_without_replacement(std::move(all), count, rng);
      std::sort(sel.centers.begin(), sel.centers.end());
      for (auto c : sel.centers) sel.zones.push_back(profile.zones.at(static_cast<std::size_t>(c)));
      break;
    }
  }
  const auto n_word = std::min<std::int64_t>(config.word_count, static_cast<std::int64_t>(sel.centers.size()));
  auto words = sample_without_replacement(sel.centers, n_word, rng);
  auto plan = plan_from_centers(config, frames, sel.centers, std::move(words));
  plan.phoneme_zones = std::move(sel.zones);
  plan.flags = sel.flags;
  return plan;
}

nlohmann::json plan_to_json(const MaskPlan &plan) {
  nlohmann::json zones = nlohmann::json::array();
  for (auto z : plan.phoneme_zones) zones.push_back(zone_name(z));
  return {{"frames", plan.frames},
          {"centers_p", plan.phoneme_centers},
          {"centers_w", plan.word_centers},
          {"zones", zones},
          {"I_p", plan.I_p},
          {"I_w", plan.I_w},
          {"flags",
           {{"zone_fallback", plan.flags.zone_fallback},
            {"noise_fallback", plan.flags.noise_fallback},
            {"count_reduced", plan.flags.count_reduced},
            {"pitch_backfill", plan.flags.pitch_backfill}}}};
}

}  // namespace vesper
