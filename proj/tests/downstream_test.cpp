// tests/downstream_test.cpp

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
#include <numeric>
#include <random>
#include <set>

#include "vesper/downstream.hpp"
#include "vesper/errors.hpp"
#include "vesper/ops.hpp"

namespace vesper {
namespace {

Tensor randm(std::int64_t r, std::int64_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::randn({r, c}, rng, 1.0);
}

ForwardTrace random_trace(std::int64_t layers, std::uint64_t seed) {
  ForwardTrace t;
  t.x0 = randm(4, 3, seed);
  for (std::int64_t i = 0; i < layers; ++i) t.layers.push_back(randm(4, 3, seed + 1 + i));
  return t;
}

TEST(LayerWeighting, OneHotSelectsLayer) {
  auto trace = random_trace(3, 1);
  for (std::int64_t k = 0; k < 4; ++k) {
    auto w = LayerWeighting::uniform(3);
    w.logits.mutable_data()[k] = 40.0;
    Tape tape;
    auto out = weighted_layer_sum(tape, trace, w);
    const auto &rep = k == 0 ? trace.x0 : trace.layers[k - 1];
    for (std::int64_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out.at(i), rep.at(i), 1e-4);
  }
}

TEST(LayerWeighting, UniformIsMean) {
  auto trace = random_trace(2, 5);
  auto w = LayerWeighting::uniform(2);
  EXPECT_EQ(w.count(), 3);
  auto ws = w.weights();
  EXPECT_NEAR(std::accumulate(ws.begin(), ws.end(), 0.0), 1.0, 1e-15);
  Tape tape;
  auto out = weighted_layer_sum(tape, trace, w);
  for (std::int64_t i = 0; i < out.numel(); ++i)
    EXPECT_NEAR(out.at(i), (trace.x0.at(i) + trace.layers[0].at(i) + trace.layers[1].at(i)) / 3.0, 1e-14);
}

TEST(LayerWeighting, ExcludingX0) {
  auto trace = random_trace(2, 8);
  auto w = LayerWeighting::uniform(2, false);
  EXPECT_EQ(w.count(), 2);
  Tape tape;
  auto out = weighted_layer_sum(tape, trace, w);
  for (std::int64_t i = 0; i < out.numel(); ++i)
    EXPECT_NEAR(out.at(i), (trace.layers[0].at(i) + trace.layers[1].at(i)) / 2.0, 1e-14);
}

TEST(LayerWeighting, LengthMismatch) {
  auto trace = random_trace(3, 2);
  Tape tape;
  EXPECT_THROW(weighted_layer_sum(tape, trace, LayerWeighting::uniform(2)), DimensionError);
  EXPECT_THROW(LayerWeighting::uniform(0), ContractError);
}

TEST(LayerWeighting, GradientMatchesCentralDifference) {
  auto trace = random_trace(3, 11);
  auto w = LayerWeighting::uniform(3);
  w.logits.mutable_data()[1] = 0.3;
  w.logits.mutable_data()[3] = -0.7;
  auto probe = randm(4, 3, 99);
  auto loss_of = [&](LayerWeighting &lw) {
    Tape tape;
    auto out = weighted_layer_sum(tape, trace, lw);
    double s = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += out.at(i) * probe.at(i);
    return s;
  };
  Tape tape;
  auto out = weighted_layer_sum(tape, trace, w);
  auto loss = ops::mean(tape, ops::reshape(tape, ops::mul(tape, out, probe), {12}), 0);
  tape.backward(loss);
  auto g = w.logits.grad();
  for (std::int64_t k = 0; k < 4; ++k) {
    const double h = 1e-6, x = w.logits.at(k);
    w.logits.mutable_data()[k] = x + h;
    const double up = loss_of(w);
    w.logits.mutable_data()[k] = x - h;
    const double down = loss_of(w);
    w.logits.mutable_data()[k] = x;
    const double fd = (up - down) / (2 * h) / 12.0;
    EXPECT_NE(g[k], 0.0);
    EXPECT_NEAR(g[k], fd, 1e-8 + 1e-6 * std::abs(fd)) << k;
  }
}

Classifier hand_classifier() {
  Classifier c;
  c.config = {2, 2, 2};
  c.params["fc1.weight"] = Tensor::from_values({2, 2}, {1, 2, -1, 0.5});
  c.params["fc1.bias"] = Tensor::from_values({2}, {0.5, -1});
  c.params["fc2.weight"] = Tensor::from_values({2, 2}, {2, 0, 1, -3});
  c.params["fc2.bias"] = Tensor::from_values({2}, {0, 1});
  return c;
}

TEST(Classify, HandComputedLogits) {
  // Frames (1, 2) and (3, -1): fc1 gives (-0.5, 2) and (4.5, 4.5); mean (2, 3.25).
  // fc2: (2*2 + 1*3.25, 0*2 - 3*3.25 + 1) = (7.25, -8.75).
  auto rep = Tensor::from_values({2, 2}, {1, 2, 3, -1});
  Tape tape;
  auto logits = classify(tape, rep, hand_classifier());
  EXPECT_EQ(logits.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(logits.at(0), 7.25);
  EXPECT_DOUBLE_EQ(logits.at(1), -8.75);
}

TEST(Classify, SingleFrameIsTwoLinearMaps) {
  auto c = Classifier::create({3, 5, 4}, 17);
  auto rep = randm(1, 3, 3);
  Tape tape;
  auto logits = classify(tape, rep, c);
  auto h = ops::linear(tape, rep, c.params.at("fc1.weight"), c.params.at("fc1.bias"));
  auto want = ops::linear(tape, h, c.params.at("fc2.weight"), c.params.at("fc2.bias"));
  for (std::int64_t i = 0; i < 4; ++i) EXPECT_NEAR(logits.at(i), want.at(i), 1e-14);
}

TEST(Classify, MeanPoolingInvariances) {
  auto c = Classifier::create({3, 8, 3}, 4);
  auto rep = randm(5, 3, 8);
  Tape tape;
  auto base = classify(tape, rep, c);
  auto doubled = classify(tape, ops::concat(tape, {rep, rep}, 0), c);
  std::vector<std::int64_t> perm = {3, 0, 4, 2, 1};
  auto shuffled = classify(tape, ops::gather_rows(tape, rep, perm), c);
  for (std::int64_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(doubled.at(i), base.at(i), 1e-13);
    EXPECT_NEAR(shuffled.at(i), base.at(i), 1e-13);
  }
}

TEST(Classify, DefaultsAndValidation) {
  ClassifierConfig cc;
  EXPECT_EQ(cc.hidden_dim, 256);
  EXPECT_THROW((Classifier::create({4, 256, 1}, 0)), ConfigError);
  EXPECT_THROW((Classifier::create({0, 256, 2}, 0)), ConfigError);
  auto c = Classifier::create({4, 256, 3}, 1);
  const double bound = 1.0 / std::sqrt(4.0);
  for (double v : c.params.at("fc1.weight").data()) EXPECT_LE(std::abs(v), bound);
  Tape tape;
  EXPECT_THROW(classify(tape, Tensor::zeros({4}), c), DimensionError);
}

using Matrix = std::vector<std::vector<std::int64_t>>;

TEST(Metrics, HandCases) {
  auto perfect = compute_metrics({{5, 0, 0}, {0, 2, 0}, {0, 0, 7}});
  EXPECT_EQ(perfect.wa, 1.0);
  EXPECT_EQ(perfect.ua, 1.0);
  EXPECT_EQ(perfect.wf1, 1.0);

  auto r = compute_metrics({{9, 1}, {4, 6}});
  EXPECT_DOUBLE_EQ(r.wa, 0.75);
  EXPECT_DOUBLE_EQ(r.ua, 0.75);
  // F1(0) = 2 * (9/13) * 0.9 / (9/13 + 0.9) = 18/23, F1(1) = 2 * (6/7) * 0.6 / (6/7 + 0.6) = 12/17.
  EXPECT_NEAR(r.wf1, (18.0 / 23.0 + 12.0 / 17.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.wf1, 0.744, 1e-3);

  auto degenerate = compute_metrics({{10, 0}, {10, 0}});
  EXPECT_DOUBLE_EQ(degenerate.wa, 0.5);
  EXPECT_DOUBLE_EQ(degenerate.ua, 0.5);
  EXPECT_EQ(degenerate.per_class[1].f1, 0.0);
}

TEST(Metrics, EmptyClassCountsInUa) {
  auto r = compute_metrics({{4, 0, 0}, {0, 0, 0}, {0, 0, 4}});
  EXPECT_EQ(r.per_class[1].accuracy, 0.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(r.ua, 2.0 / 3.0);
  EXPECT_EQ(r.wa, 1.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(compute_metrics({{0, 0}, {0, 0}}), ContractError);
  EXPECT_THROW(compute_metrics({{1, -1}, {0, 2}}), ContractError);
  EXPECT_THROW(compute_metrics({{1, 2}}), ContractError);
  EXPECT_THROW(compute_metrics({}), ContractError);
}

// Walks a sample list expanded from the matrix; counts come from the walk,
// not from the matrix.
struct Brute {
  double wa, ua, wf1;
  std::vector<double> acc, f1;
};

Brute brute_force(const Matrix &m) {
  const auto c = m.size();
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::int64_t k = 0; k < m[i][j]; ++k) samples.emplace_back(i, j);
  std::vector<std::int64_t> truth(c, 0), pred(c, 0), hit(c, 0);
  std::int64_t correct = 0;
  for (auto [t, p] : samples) {
    ++truth[t];
    ++pred[p];
    if (t == p) {
      ++hit[t];
      ++correct;
    }
  }
  Brute b;
  const double total = static_cast<double>(samples.size());
  b.wa = static_cast<double>(correct) / total;
  double ua = 0.0, wf1 = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double r = truth[k] ? static_cast<double>(hit[k]) / static_cast<double>(truth[k]) : 0.0;
    double p = pred[k] ? static_cast<double>(hit[k]) / static_cast<double>(pred[k]) : 0.0;
    double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    b.acc.push_back(r);
    b.f1.push_back(f);
    ua += r;
    wf1 += static_cast<double>(truth[k]) * f;
  }
  b.ua = ua / static_cast<double>(c);
  b.wf1 = wf1 / total;
  return b;
}

Matrix random_matrix(std::mt19937_64 &rng) {
  const std::size_t c = 2 + rng() % 6;
  Matrix m(c, std::vector<std::int64_t>(c));
  do {
    for (auto &row : m)
      for (auto &v : row) v = (rng() % 4 == 0) ? 0 : static_cast<std::int64_t>(rng() % 30);
  } while (std::all_of(m.begin(), m.end(), [](const auto &row) {
    return std::all_of(row.begin(), row.end(), [](auto v) { return v == 0; });
  }));
  return m;
}

TEST(Metrics, MatchesBruteForceWalk) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto m = random_matrix(rng);
    auto r = compute_metrics(m);
    auto b = brute_force(m);
    ASSERT_EQ(r.wa, b.wa) << trial;
    ASSERT_EQ(r.ua, b.ua) << trial;
    ASSERT_EQ(r.wf1, b.wf1) << trial;
    for (std::size_t k = 0; k < m.size(); ++k) {
      ASSERT_EQ(r.per_class[k].accuracy, b.acc[k]);
      ASSERT_EQ(r.per_class[k].f1, b.f1[k]);
    }
    std::int64_t total = 0;
    for (const auto &row : m) total = std::accumulate(row.begin(), row.end(), total);
    ASSERT_EQ(r.total(), total);
    for (double v : {r.wa, r.ua, r.wf1}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, PermutationInvariance) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = random_matrix(rng);
    std::vector<std::size_t> perm(m.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix p(m.size(), std::vector<std::int64_t>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = 0; j < m.size(); ++j) p[perm[i]][perm[j]] = m[i][j];
    auto a = compute_metrics(m), b = compute_metrics(p);
    EXPECT_EQ(a.wa, b.wa);
    EXPECT_NEAR(a.ua, b.ua, 1e-15);
    EXPECT_NEAR(a.wf1, b.wf1, 1e-15);
  }
}

TEST(Metrics, BalancedClassesGiveWaEqualUa) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t c = 2 + rng() % 5;
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng() % 40);
    Matrix m(c, std::vector<std::int64_t>(c, 0));
    for (auto &row : m)
      for (std::int64_t k = 0; k < n; ++k) ++row[rng() % c];
    auto r = compute_metrics(m);
    EXPECT_NEAR(r.wa, r.ua, 4e-16) << trial;
  }
}

TEST(Metrics, ConfusionFromPredictionsAndJson) {
  std::vector<std::int64_t> truth = {0, 0, 1, 2, 2, 2}, pred = {0, 1, 1, 2, 0, 2};
  auto m = confusion_matrix(truth, pred, 3);
  EXPECT_EQ(m, (Matrix{{1, 1, 0}, {0, 1, 0}, {1, 0, 2}}));
  EXPECT_THROW(confusion_matrix(truth, {pred.data(), 5}, 3), ContractError);
  std::vector<std::int64_t> bad = {0, 0, 1, 2, 2, 3};
  EXPECT_THROW(confusion_matrix(truth, bad, 3), ContractError);
  auto r = compute_metrics(m);
  r.mode = "last";
  r.fold = 3;
  r.class_names = {"a", "b", "c"};
  auto j = r.to_json();
  for (const char *k : {"mode", "fold", "confusion", "wa", "ua", "wf1", "per_class"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["mode"], "last");
  EXPECT_EQ(j["fold"], 3);
  EXPECT_EQ(j["per_class"][2]["label"], "c");
  EXPECT_EQ(j["confusion"][2][2], 2);
}

std::vector<ManifestEntry> speaker_manifest(int speakers, int per_speaker) {
  std::vector<ManifestEntry> e;
  for (int s = 0; s < speakers; ++s)
    for (int k = 0; k < per_speaker; ++k)
      e.push_back({"s" + std::to_string(s) + "_" + std::to_string(k) + ".wav", "x", "spk" + std::to_string(s), ""});
  return e;
}

TEST(KFold, BySpeakerPartition) {
  auto entries = speaker_manifest(10, 3);
  auto folds = kfold_split(entries, 5, FoldMode::kBySpeaker, 42);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(entries.size(), 0);
  for (const auto &f : folds) {
    std::set<std::string> test_spk, train_spk;
    for (auto i : f.test) {
      test_spk.insert(entries[i].speaker);
      ++seen[i];
    }
    for (auto i : f.train) train_spk.insert(entries[i].speaker);
    EXPECT_EQ(test_spk.size(), 2u);
    EXPECT_EQ(f.test.size() + f.train.size(), entries.size());
    for (const auto &s : test_spk) EXPECT_EQ(train_spk.count(s), 0u) << s;
  }
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(KFold, DeterministicAndSeedSensitive) {
  auto entries = speaker_manifest(10, 2);
  auto a = kfold_split(entries, 5, FoldMode::kBySpeaker, 1);
  auto b = kfold_split(entries, 5, FoldMode::kBySpeaker, 1);
  auto c = kfold_split(entries, 5, FoldMode::kBySpeaker, 2);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].test, b[i].test);
    EXPECT_EQ(a[i].train, b[i].train);
    differs |= a[i].test != c[i].test;
  }
  EXPECT_TRUE(differs);
}

TEST(KFold, RandomModeCoversOnce) {
  auto entries = speaker_manifest(1, 23);
  auto folds = kfold_split(entries, 4, FoldMode::kRandom, 3);
  std::vector<int> seen(entries.size(), 0);
  for (const auto &f : folds) {
    EXPECT_GE(f.test.size(), 5u);
    EXPECT_LE(f.test.size(), 6u);
    for (auto i : f.test) ++seen[i];
  }
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(KFold, Errors) {
  EXPECT_THROW(kfold_split(speaker_manifest(3, 2), 4, FoldMode::kBySpeaker, 0), ConfigError);
  EXPECT_THROW(kfold_split(speaker_manifest(3, 2), 1, FoldMode::kBySpeaker, 0), ConfigError);
  auto e = speaker_manifest(4, 1);
  e[2].speaker.clear();
  EXPECT_THROW(kfold_split(e, 2, FoldMode::kBySpeaker, 0), ConfigError);
  EXPECT_THROW(parse_fold_mode("group"), ConfigError);
  EXPECT_THROW(parse_rep_mode("mean"), ConfigError);
  EXPECT_EQ(parse_rep_mode("last"), RepMode::kLastLayerOnly);
}

TEST(Evaluate, SingleLayerModesDifferOnlyByX0) {
  auto trace = random_trace(1, 30);
  auto w = LayerWeighting::uniform(1);
  Tape tape;
  auto weighted = select_representation(tape, trace, RepMode::kWeighted, w);
  auto last = select_representation(tape, trace, RepMode::kLastLayerOnly, w);
  for (std::int64_t i = 0; i < last.numel(); ++i) {
    EXPECT_EQ(last.at(i), trace.layers[0].at(i));
    EXPECT_NEAR(weighted.at(i), 0.5 * (trace.x0.at(i) + trace.layers[0].at(i)), 1e-15);
  }
  auto no_x0 = LayerWeighting::uniform(1, false);
  auto same = select_representation(tape, trace, RepMode::kWeighted, no_x0);
  for (std::int64_t i = 0; i < last.numel(); ++i) EXPECT_NEAR(same.at(i), last.at(i), 1e-15);
}

}  // namespace
}  // namespace vesper
