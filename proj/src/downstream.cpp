// src/downstream.cpp

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

#include "vesper/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "vesper/errors.hpp"
#include "vesper/masking.hpp"
#include "vesper/ops.hpp"

namespace vesper {

const char *rep_mode_name(RepMode mode) {
  return mode == RepMode::kWeighted ? "weighted" : "last";
}

RepMode parse_rep_mode(const std::string &name) {
  if (name == "weighted") return RepMode::kWeighted;
  if (name == "last") return RepMode::kLastLayerOnly;
  throw ConfigError("unknown representation mode '" + name + "' (weighted|last)");
}

LayerWeighting LayerWeighting::uniform(std::int64_t layers, bool include_x0, DType dtype) {
  if (layers < 1) throw ContractError("layer weighting needs at least one layer");
  LayerWeighting w;
  w.include_x0 = include_x0;
  w.logits = Tensor::zeros({layers + (include_x0 ? 1 : 0)}, dtype, true);
  return w;
}

std::vector<double> LayerWeighting::weights() const {
  Tape tape;
  auto s = ops::softmax(tape, logits);
  return {s.data().begin(), s.data().end()};
}

std::vector<Tensor> trace_representations(const ForwardTrace &trace, bool include_x0) {
  std::vector<Tensor> reps;
  if (include_x0) reps.push_back(trace.x0);
  reps.insert(reps.end(), trace.layers.begin(), trace.layers.end());
  return reps;
}

Tensor weighted_layer_sum(Tape &tape, const ForwardTrace &trace, const LayerWeighting &weighting) {
  auto reps = trace_representations(trace, weighting.include_x0);
  if (weighting.count() != static_cast<std::int64_t>(reps.size()))
    throw DimensionError("layer weighting has " + std::to_string(weighting.count()) +
                         " logits for " + std::to_string(reps.size()) + " representations");
  auto w = ops::softmax(tape, weighting.logits);
  return ops::weighted_sum(tape, reps, w);
}

Tensor select_representation(Tape &tape, const ForwardTrace &trace, RepMode mode,
                             const LayerWeighting &weighting) {
  if (mode == RepMode::kLastLayerOnly) {
    if (trace.layers.empty()) throw ContractError("trace has no layers");
    return trace.layers.back();
  }
  return weighted_layer_sum(tape, trace, weighting);
}

void ClassifierConfig::validate() const {
  if (input_dim < 1) throw ConfigError("classifier input_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("classifier hidden_dim must be >= 1");
  if (classes < 2) throw ConfigError("classifier needs at least 2 classes");
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64 &rng, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto &x : v) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = (2.0 * u - 1.0) * bound;
  }
  return Tensor::from_values(std::move(shape), std::move(v), dtype);
}

}  // namespace

Classifier Classifier::create(const ClassifierConfig &config, std::uint64_t seed, DType dtype) {
  config.validate();
  std::mt19937_64 rng(seed);
  Classifier c;
  c.config = config;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  c.params["fc1.weight"] = uniform_tensor({config.input_dim, config.hidden_dim}, b1, rng, dtype);
  c.params["fc1.bias"] = uniform_tensor({config.hidden_dim}, b1, rng, dtype);
  c.params["fc2.weight"] = uniform_tensor({config.hidden_dim, config.classes}, b2, rng, dtype);
  c.params["fc2.bias"] = uniform_tensor({config.classes}, b2, rng, dtype);
  return c;
}

Classifier Classifier::clone() const {
  Classifier c;
  c.config = config;
  for (const auto &[n, t] : params) c.params.emplace(n, t.clone());
  return c;
}

Tensor classify(Tape &tape, const Tensor &rep, const Classifier &classifier) {
  if (rep.rank() != 2 || rep.dim(0) < 1)
    throw DimensionError("classify expects [T x d], got " + shape_to_string(rep.shape()));
  const auto &p = classifier.params;
  auto h = ops::linear(tape, rep, p.at("fc1.weight"), p.at("fc1.bias"));
  auto pooled = ops::reshape(tape, ops::mean(tape, h, 0), {1, classifier.config.hidden_dim});
  return ops::linear(tape, pooled, p.at("fc2.weight"), p.at("fc2.bias"));
}

std::int64_t MetricsReport::total() const {
  std::int64_t n = 0;
  for (const auto &row : confusion) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json pc = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    nlohmann::json e = {{"support", per_class[c].support},
                        {"accuracy", per_class[c].accuracy},
                        {"precision", per_class[c].precision},
                        {"f1", per_class[c].f1}};
    if (c < class_names.size()) e["label"] = class_names[c];
    pc.push_back(std::move(e));
  }
  return {{"mode", mode},
          {"fold", fold ? nlohmann::json(*fold) : nlohmann::json(nullptr)},
          {"confusion", confusion},
          {"wa", wa},
          {"ua", ua},
          {"wf1", wf1},
          {"per_class", pc}};
}

MetricsReport compute_metrics(const std::vector<std::vector<std::int64_t>> &confusion) {
  const auto c = static_cast<std::int64_t>(confusion.size());
  if (c < 1) throw ContractError("empty confusion matrix");
  std::vector<std::int64_t> row_sum(c, 0), col_sum(c, 0);
  std::int64_t total = 0;
  for (std::int64_t i = 0; i < c; ++i) {
    if (static_cast<std::int64_t>(confusion[i].size()) != c)
      throw ContractError("confusion matrix must be square");
    for (std::int64_t j = 0; j < c; ++j) {
      auto v = confusion[i][j];
      if (v < 0) throw ContractError("negative count in confusion matrix");
      row_sum[i] += v;
      col_sum[j] += v;
      total += v;
    }
  }
  if (total == 0) throw ContractError("confusion matrix is all zero");

  MetricsReport r;
  r.confusion = confusion;
  r.per_class.resize(c);
  double trace = 0.0, ua = 0.0, wf1 = 0.0;
  for (std::int64_t i = 0; i < c; ++i) {
    auto &m = r.per_class[i];
    const double tp = static_cast<double>(confusion[i][i]);
    m.support = row_sum[i];
    m.accuracy = row_sum[i] ? tp / static_cast<double>(row_sum[i]) : 0.0;
    m.precision = col_sum[i] ? tp / static_cast<double>(col_sum[i]) : 0.0;
    m.f1 = m.precision + m.accuracy > 0.0
               ? 2.0 * m.precision * m.accuracy / (m.precision + m.accuracy)
               : 0.0;
    trace += tp;
    ua += m.accuracy;
    wf1 += static_cast<double>(m.support) * m.f1;
  }
  // sum_c N_c * Acc(c) is the trace.
  r.wa = trace / static_cast<double>(total);
  r.ua = ua / static_cast<double>(c);
  r.wf1 = wf1 / static_cast<double>(total);
  return r;
}

std::vector<std::vector<std::int64_t>> confusion_matrix(std::span<const std::int64_t> truth,
                                                        std::span<const std::int64_t> predicted,
                                                        std::int64_t classes) {
  if (truth.size() != predicted.size())
    throw ContractError("confusion_matrix: truth and prediction counts differ");
  std::vector<std::vector<std::int64_t>> m(classes, std::vector<std::int64_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes)
      throw ContractError("confusion_matrix: class index out of range");
    ++m[truth[i]][predicted[i]];
  }
  return m;
}

const char *fold_mode_name(FoldMode mode) {
  return mode == FoldMode::kBySpeaker ? "speaker" : "random";
}

FoldMode parse_fold_mode(const std::string &name) {
  if (name == "speaker") return FoldMode::kBySpeaker;
  if (name == "random") return FoldMode::kRandom;
  throw ConfigError("unknown fold mode '" + name + "' (speaker|random)");
}

std::vector<Fold> kfold_split(const std::vector<ManifestEntry> &entries, std::int64_t k,
                              FoldMode mode, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  const auto n = static_cast<std::int64_t>(entries.size());
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> fold_of(n);

  if (mode == FoldMode::kBySpeaker) {
    std::set<std::string> unique;
    for (const auto &e : entries) {
      if (e.speaker.empty())
        throw ConfigError("speaker folds need a speaker on every manifest entry (" +
                          e.path.string() + ")");
      unique.insert(e.speaker);
    }
    if (static_cast<std::int64_t>(unique.size()) < k)
      throw ConfigError(std::to_string(unique.size()) + " speakers cannot fill " +
                        std::to_string(k) + " folds");
    std::vector<std::string> speakers(unique.begin(), unique.end());
    for (std::size_t i = speakers.size(); i > 1; --i)
      std::swap(speakers[i - 1], speakers[uniform_index(rng, i)]);
    std::map<std::string, std::int64_t> assign;
    for (std::size_t i = 0; i < speakers.size(); ++i)
      assign[speakers[i]] = static_cast<std::int64_t>(i) % k;
    for (std::int64_t i = 0; i < n; ++i) fold_of[i] = assign.at(entries[i].speaker);
  } else {
    if (n < k)
      throw ConfigError(std::to_string(n) + " entries cannot fill " + std::to_string(k) +
                        " folds");
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::int64_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, static_cast<std::uint64_t>(i))]);
    for (std::int64_t i = 0; i < n; ++i) fold_of[order[i]] = i % k;
  }

  std::vector<Fold> folds(k);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t f = 0; f < k; ++f)
      (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
  return folds;
}

}  // namespace vesper
