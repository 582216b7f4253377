// tests/masking_test.cpp

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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "vesper/masking.hpp"

namespace vesper {
namespace {

EnergyProfile profile_from_zones(const std::vector<Zone> &zones) {
  EnergyProfile p;
  for (auto z : zones) {
    p.rms.push_back(z == Zone::kHigh ? 1.0 : z == Zone::kLow ? 0.4 : 0.1);
  }
  return normalize_and_zone(p);
}

std::vector<Zone> random_zones(std::mt19937_64 &rng, std::int64_t frames, int high, int low) {
  std::vector<Zone> z(static_cast<std::size_t>(frames), Zone::kNoise);
  std::vector<std::size_t> idx(z.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int i = 0; i < high; ++i) z[idx[i]] = Zone::kHigh;
  for (int i = 0; i < low; ++i) z[idx[high + i]] = Zone::kLow;
  return z;
}

AudioClip tone(double seconds, const std::function<double(double)> &freq_at) {
  AudioClip c;
  const auto n = static_cast<std::size_t>(std::llround(seconds * 16000));
  c.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(0.5 * std::sin(phase));
    phase += 2.0 * std::numbers::pi * freq_at(i / 16000.0) / 16000.0;
  }
  return c;
}

TEST(MaskConfig, SpanFramesAndValidation) {
  MaskConfig c;
  EXPECT_EQ(c.phoneme_span_frames(), 8);
  EXPECT_EQ(c.word_span_frames(), 40);
  EXPECT_NO_THROW(c.validate());
  c.word_count = 21;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MaskConfig{};
  c.strategy = MaskStrategy::kEnergyPitchGuided;
  EXPECT_THROW(c.validate(), ConfigError);
  c.pitch_variation_threshold = 5.0;
  EXPECT_NO_THROW(c.validate());
  c = MaskConfig{};
  c.phoneme_span_ms = 5.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_strategy("random"), MaskStrategy::kRandom);
  EXPECT_THROW(parse_strategy("rand"), ConfigError);
}

TEST(SampleWithoutReplacement, DistinctAndUniformish) {
  std::mt19937_64 rng(1);
  std::vector<std::int64_t> pool(10);
  for (int i = 0; i < 10; ++i) pool[i] = i;
  std::vector<int> hits(10, 0);
  for (int t = 0; t < 20000; ++t) {
    auto s = sample_without_replacement(pool, 3, rng);
    std::set<std::int64_t> u(s.begin(), s.end());
    ASSERT_EQ(u.size(), 3u);
    for (auto v : s) ++hits[v];
  }
  for (int h : hits) EXPECT_NEAR(h / 20000.0, 0.3, 0.02);
  std::mt19937_64 a(5), b(5);
  EXPECT_TRUE(sample_without_replacement({}, 0, a).empty());
  EXPECT_EQ(a(), b());  // empty draw consumes nothing
  EXPECT_THROW(sample_without_replacement(pool, 11, a), ContractError);
}

TEST(SelectCentersEnergy, HalfHighHalfLow) {
  std::mt19937_64 rng(2);
  auto prof = profile_from_zones(random_zones(rng, 250, 40, 40));
  auto sel = select_centers_energy(prof, 20, std::uint64_t{7});
  ASSERT_EQ(sel.centers.size(), 20u);
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kHigh), 10);
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kLow), 10);
  for (std::size_t i = 0; i < sel.centers.size(); ++i)
    EXPECT_EQ(prof.zones[sel.centers[i]], sel.zones[i]);
  EXPECT_FALSE(sel.flags.any());
  EXPECT_TRUE(std::is_sorted(sel.centers.begin(), sel.centers.end()));
}

TEST(SelectCentersEnergy, OddCountFavoursHigh) {
  std::mt19937_64 rng(3);
  auto prof = profile_from_zones(random_zones(rng, 100, 20, 20));
  auto sel = select_centers_energy(prof, 7, std::uint64_t{1});
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kHigh), 4);
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kLow), 3);
}

TEST(SelectCentersEnergy, AllHighFallsBack) {
  auto prof = profile_from_zones(std::vector<Zone>(30, Zone::kHigh));
  auto sel = select_centers_energy(prof, 4, std::uint64_t{0});
  EXPECT_EQ(sel.centers.size(), 4u);
  for (auto z : sel.zones) EXPECT_EQ(z, Zone::kHigh);
  EXPECT_TRUE(sel.flags.zone_fallback);
  EXPECT_FALSE(sel.flags.noise_fallback);
}

TEST(SelectCentersEnergy, NoiseFallbackAndCountReduction) {
  std::vector<Zone> z = {Zone::kHigh, Zone::kLow, Zone::kNoise, Zone::kNoise, Zone::kNoise};
  auto prof = profile_from_zones(z);
  auto sel = select_centers_energy(prof, 4, std::uint64_t{0});
  EXPECT_EQ(sel.centers.size(), 4u);
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kNoise), 2);
  EXPECT_TRUE(sel.flags.noise_fallback);
  EXPECT_FALSE(sel.flags.count_reduced);
  auto all = select_centers_energy(prof, 20, std::uint64_t{0});
  EXPECT_EQ(all.centers, (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
  EXPECT_TRUE(all.flags.count_reduced);
}

TEST(SelectCentersEnergy, Deterministic) {
  std::mt19937_64 rng(4);
  auto prof = profile_from_zones(random_zones(rng, 250, 30, 50));
  auto first = select_centers_energy(prof, 20, std::uint64_t{42});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_centers_energy(prof, 20, std::uint64_t{42}).centers, first.centers);
  EXPECT_NE(select_centers_energy(prof, 20, std::uint64_t{43}).centers, first.centers);
}

TEST(SelectCentersEnergyPitch, ThresholdZeroMatchesEnergy) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto prof = profile_from_zones(random_zones(rng, 200, 15 + seed, 25));
    std::vector<double> scores(200);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (auto &s : scores) s = u(rng);
    auto e = select_centers_energy(prof, 20, std::uint64_t(seed));
    auto p = select_centers_energy_pitch(prof, scores, 0.0, 20, std::uint64_t(seed));
    EXPECT_EQ(p.centers, e.centers);
    EXPECT_FALSE(p.flags.pitch_backfill);
    auto hi = select_centers_energy_pitch(prof, scores, 1e9, 20, std::uint64_t(seed));
    EXPECT_EQ(hi.centers, e.centers);
    EXPECT_TRUE(hi.flags.pitch_backfill);
  }
}

TEST(SelectCentersEnergyPitch, HighCentersComeFromPassingFrames) {
  std::mt19937_64 rng(9);
  auto zones = random_zones(rng, 200, 30, 30);
  auto prof = profile_from_zones(zones);
  std::vector<double> scores(200, 0.0);
  std::vector<std::int64_t> high;
  for (std::int64_t f = 0; f < 200; ++f)
    if (zones[f] == Zone::kHigh) high.push_back(f);
  std::set<std::int64_t> passing(high.begin(), high.begin() + 12);
  for (auto f : passing) scores[f] = 10.0;
  for (std::int64_t f = 0; f < 200; ++f)
    if (zones[f] == Zone::kLow) scores[f] = 10.0;
  for (int seed = 0; seed < 20; ++seed) {
    auto sel = select_centers_energy_pitch(prof, scores, 5.0, 20, std::uint64_t(seed));
    int n_high = 0;
    for (std::size_t i = 0; i < sel.centers.size(); ++i)
      if (sel.zones[i] == Zone::kHigh) {
        ++n_high;
        EXPECT_TRUE(passing.count(sel.centers[i]));
      }
    EXPECT_EQ(n_high, 10);
    EXPECT_FALSE(sel.flags.pitch_backfill);
  }
}

TEST(SelectCentersEnergyPitch, SmallPoolIsTakenWholeThenBackfilled) {
  std::mt19937_64 rng(10);
  auto zones = random_zones(rng, 200, 30, 30);
  auto prof = profile_from_zones(zones);
  std::vector<double> scores(200, 0.0);
  std::vector<std::int64_t> high;
  for (std::int64_t f = 0; f < 200; ++f)
    if (zones[f] == Zone::kHigh) high.push_back(f);
  for (int i = 0; i < 6; ++i) scores[high[i]] = 10.0;
  auto sel = select_centers_energy_pitch(prof, scores, 5.0, 20, std::uint64_t{3});
  for (int i = 0; i < 6; ++i)
    EXPECT_TRUE(std::binary_search(sel.centers.begin(), sel.centers.end(), high[i]));
  EXPECT_TRUE(sel.flags.pitch_backfill);
  EXPECT_EQ(std::count(sel.zones.begin(), sel.zones.end(), Zone::kHigh), 10);
  std::vector<double> short_scores(10);
  EXPECT_THROW(select_centers_energy_pitch(prof, short_scores, 1.0, 20, std::uint64_t{0}), DimensionError);
}

TEST(PitchScores, ConstantTone) {
  auto clip = tone(1.0, [](double) { return 200.0; });
  auto f0 = pitch_track(clip);
  ASSERT_EQ(f0.size(), 50u);
  for (std::size_t f = 2; f + 2 < f0.size(); ++f) EXPECT_NEAR(f0[f], 200.0, 2.0);
  auto s = pitch_change_scores(clip);
  EXPECT_EQ(s[0], 0.0);
  for (std::size_t f = 2; f + 2 < s.size(); ++f) EXPECT_LT(s[f], 1.0);
}

TEST(PitchScores, StepProducesSingleSpike) {
  auto clip = tone(1.0, [](double t) { return t < 0.5 ? 150.0 : 300.0; });
  auto f0 = pitch_track(clip);
  EXPECT_NEAR(f0[10], 150.0, 2.0);
  EXPECT_NEAR(f0[40], 300.0, 3.0);
  auto s = pitch_change_scores(clip);
  const auto peak = std::max_element(s.begin() + 2, s.end() - 2) - s.begin();
  EXPECT_GE(s[peak], 100.0);
  EXPECT_NEAR(static_cast<double>(peak), 25.0, 1.0);
  for (std::size_t f = 2; f + 2 < s.size(); ++f)
    if (static_cast<std::int64_t>(f) != peak) EXPECT_LT(s[f], 10.0) << "frame " << f;
}

TEST(PitchScores, SilenceIsZero) {
  AudioClip clip;
  clip.samples.assign(16000, 0.0f);
  for (double v : pitch_change_scores(clip)) EXPECT_EQ(v, 0.0);
  for (double v : pitch_track(clip)) EXPECT_EQ(v, 0.0);
}

TEST(ExpandSpans, HandCases) {
  std::vector<std::int64_t> c10 = {10};
  EXPECT_EQ(expand_spans(c10, 8, 100), (std::vector<std::int64_t>{6, 7, 8, 9, 10, 11, 12, 13}));
  std::vector<std::int64_t> c2 = {2};
  EXPECT_EQ(expand_spans(c2, 8, 100), (std::vector<std::int64_t>{0, 1, 2, 3, 4, 5}));
  std::vector<std::int64_t> edge = {99};
  EXPECT_EQ(expand_spans(edge, 8, 100), (std::vector<std::int64_t>{95, 96, 97, 98, 99}));
  std::vector<std::int64_t> odd = {5};
  EXPECT_EQ(expand_spans(odd, 3, 100), (std::vector<std::int64_t>{4, 5, 6}));
  std::vector<std::int64_t> overlap = {10, 12};
  EXPECT_EQ(expand_spans(overlap, 8, 100).size(), 10u);
  std::vector<std::int64_t> bad = {100};
  EXPECT_THROW(expand_spans(bad, 8, 100), ContractError);
}

TEST(BuildPlan, DefaultCounts) {
  std::mt19937_64 rng(12);
  auto prof = profile_from_zones(random_zones(rng, 250, 40, 60));
  MaskConfig cfg;
  auto plan = build_plan(cfg, prof, 250, 5);
  EXPECT_EQ(plan.phoneme_centers.size(), 20u);
  EXPECT_EQ(plan.word_centers.size(), 4u);
  for (auto w : plan.word_centers)
    EXPECT_TRUE(std::binary_search(plan.phoneme_centers.begin(), plan.phoneme_centers.end(), w));
  EXPECT_LE(plan.I_p.size(), 20u * 8u);
  EXPECT_THROW(build_plan(cfg, prof, 0, 5), ContractError);
  EXPECT_THROW(build_plan(cfg, prof, 251, 5), DimensionError);
}

TEST(BuildPlan, RandomSharesSpanExpansion) {
  std::mt19937_64 rng(13);
  auto prof = profile_from_zones(random_zones(rng, 250, 40, 60));
  MaskConfig cfg;
  cfg.strategy = MaskStrategy::kRandom;
  auto r = build_plan(cfg, prof, 250, 8);
  EXPECT_EQ(r.phoneme_centers.size(), 20u);
  auto injected = plan_from_centers(MaskConfig{}, 250, r.phoneme_centers, r.word_centers);
  EXPECT_EQ(injected.I_p, r.I_p);
  EXPECT_EQ(injected.I_w, r.I_w);
  EXPECT_THROW(plan_from_centers(cfg, 250, {1, 2}, {3}), ContractError);
}

TEST(BuildPlan, JsonShape) {
  std::mt19937_64 rng(14);
  auto prof = profile_from_zones(random_zones(rng, 100, 20, 20));
  auto j = plan_to_json(build_plan(MaskConfig{}, prof, 100, 1));
  for (const char *k : {"centers_p", "centers_w", "zones", "I_p", "I_w", "flags"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["centers_p"].size(), 20u);
  EXPECT_EQ(j["zones"][0].get<std::string>().empty(), false);
}

// Properties over random profiles and seeds.
class PlanProperties : public ::testing::TestWithParam<int> {};

TEST_P(PlanProperties, Invariants) {
  std::mt19937_64 rng(GetParam());
  std::uniform_int_distribution<std::int64_t> frames_dist(30, 400);
  const auto T = frames_dist(rng);
  std::uniform_int_distribution<int> zone_dist(0, static_cast<int>(T / 2));
  auto zones = random_zones(rng, T, zone_dist(rng), zone_dist(rng));
  auto prof = profile_from_zones(zones);
  for (auto strategy : {MaskStrategy::kEnergyGuided, MaskStrategy::kRandom}) {
    MaskConfig cfg;
    cfg.strategy = strategy;
    auto plan = build_plan(cfg, prof, T, GetParam() * 31u);
    auto again = build_plan(cfg, prof, T, GetParam() * 31u);
    EXPECT_EQ(plan.I_p, again.I_p);
    EXPECT_EQ(plan.word_centers, again.word_centers);
    std::set<std::int64_t> uniq(plan.phoneme_centers.begin(), plan.phoneme_centers.end());
    EXPECT_EQ(uniq.size(), plan.phoneme_centers.size());
    EXPECT_EQ(static_cast<std::int64_t>(plan.word_centers.size()),
              std::min<std::int64_t>(4, static_cast<std::int64_t>(plan.phoneme_centers.size())));
    for (auto w : plan.word_centers) EXPECT_TRUE(uniq.count(w));
    for (auto i : plan.I_p) EXPECT_TRUE(i >= 0 && i < T);
    for (auto i : plan.I_w) EXPECT_TRUE(i >= 0 && i < T);
    EXPECT_LE(plan.I_p.size(), plan.phoneme_centers.size() * 8);
    // Independent recount of the union.
    std::set<std::int64_t> ip;
    for (auto c : plan.phoneme_centers)
      for (auto i = c - 4; i < c + 4; ++i)
        if (i >= 0 && i < T) ip.insert(i);
    EXPECT_EQ(std::vector<std::int64_t>(ip.begin(), ip.end()), plan.I_p);
    if (strategy == MaskStrategy::kEnergyGuided) {
      const auto H = std::count(zones.begin(), zones.end(), Zone::kHigh);
      const auto L = std::count(zones.begin(), zones.end(), Zone::kLow);
      const auto nh = std::count(plan.phoneme_zones.begin(), plan.phoneme_zones.end(), Zone::kHigh);
      const auto nl = std::count(plan.phoneme_zones.begin(), plan.phoneme_zones.end(), Zone::kLow);
      if (H >= 10 && L >= 10) {
        EXPECT_EQ(nh, 10);
        EXPECT_EQ(nl, 10);
        EXPECT_FALSE(plan.flags.any());
      }
      if (H + L >= 20) EXPECT_FALSE(plan.flags.noise_fallback);
      EXPECT_EQ(nh, std::min<std::int64_t>(H, std::max<std::int64_t>(10, 20 - std::min<std::int64_t>(L, 10))));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PlanProperties, ::testing::Range(0, 40));

}  // namespace
}  // namespace vesper
