// include/vesper/downstream.hpp

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

#ifndef VESPER_DOWNSTREAM_HPP_
#define VESPER_DOWNSTREAM_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesper/audio.hpp"
#include "vesper/encoder.hpp"
#include "vesper/tensor.hpp"

namespace vesper {

enum class RepMode { kWeighted, kLastLayerOnly };
const char *rep_mode_name(RepMode mode);
RepMode parse_rep_mode(const std::string &name);  // "weighted" | "last"; ConfigError

// Trainable logits over the representations fed to the classifier: x_0 and
// layers 1..N when include_x0, else layers 1..N only.
struct LayerWeighting {
  Tensor logits;
  bool include_x0 = true;

  static LayerWeighting uniform(std::int64_t layers, bool include_x0 = true,
                                DType dtype = DType::kF64);
  std::int64_t count() const { return logits.numel(); }
  std::vector<double> weights() const;  // softmax(logits)
};

std::vector<Tensor> trace_representations(const ForwardTrace &trace, bool include_x0);
// sum_k softmax(logits)_k * rep_k. DimensionError when the logit count does
// not match the trace.
Tensor weighted_layer_sum(Tape &tape, const ForwardTrace &trace, const LayerWeighting &weighting);
Tensor select_representation(Tape &tape, const ForwardTrace &trace, RepMode mode,
                             const LayerWeighting &weighting);

struct ClassifierConfig {
  std::int64_t input_dim = 0;
  std::int64_t hidden_dim = 256;
  std::int64_t classes = 0;
  void validate() const;  // ConfigError
};

// FC(d -> hidden) per frame, mean over frames, FC(hidden -> C).
// Parameters "fc1.weight" [d x hidden], "fc1.bias", "fc2.weight", "fc2.bias".
struct Classifier {
  ClassifierConfig config;
  std::map<std::string, Tensor> params;

  // Weights and biases uniform in +-1/sqrt(fan_in).
  static Classifier create(const ClassifierConfig &config, std::uint64_t seed,
                           DType dtype = DType::kF64);
  Classifier clone() const;
};

// rep [T x d] with T >= 1 -> logits [1 x C].
Tensor classify(Tape &tape, const Tensor &rep, const Classifier &classifier);

struct ClassMetrics {
  std::int64_t support = 0;
  double accuracy = 0.0;  // recall
  double precision = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::vector<std::vector<std::int64_t>> confusion;  // rows truth, columns prediction
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> class_names;
  double wa = 0.0, ua = 0.0, wf1 = 0.0;
  std::string mode = "weighted";
  std::optional<std::int64_t> fold;

  std::int64_t total() const;
  nlohmann::json to_json() const;
};

// ContractError on non-square input, negative counts or an all-zero matrix.
MetricsReport compute_metrics(const std::vector<std::vector<std::int64_t>> &confusion);
std::vector<std::vector<std::int64_t>> confusion_matrix(std::span<const std::int64_t> truth,
                                                        std::span<const std::int64_t> predicted,
                                                        std::int64_t classes);

enum class FoldMode { kBySpeaker, kRandom };
const char *fold_mode_name(FoldMode mode);
FoldMode parse_fold_mode(const std::string &name);  // "speaker" | "random"

struct Fold {
  std::vector<std::int64_t> train;  // manifest indices, ascending
  std::vector<std::int64_t> test;
};

// kBySpeaker shuffles the distinct speakers with `seed` and deals them
// round-robin to the folds; kRandom does the same with entries.
std::vector<Fold> kfold_split(const std::vector<ManifestEntry> &entries, std::int64_t k,
                              FoldMode mode, std::uint64_t seed);

}  // namespace vesper

#endif  // VESPER_DOWNSTREAM_HPP_
