// include/vesper/objectives.hpp

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

#ifndef VESPER_OBJECTIVES_HPP_
#define VESPER_OBJECTIVES_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "json.hpp"
#include "vesper/encoder.hpp"
#include "vesper/masking.hpp"
#include "vesper/tensor.hpp"

namespace vesper {

// Linear -> GELU -> Linear. An identity predictor passes its input through
// unchanged and has no parameters.
class Predictor {
 public:
  Predictor() = default;
  static Predictor create(std::int64_t d_in, std::int64_t d_hidden, std::int64_t d_out, std::mt19937_64 &rng,
                          DType dtype = DType::kF64);
  static Predictor identity();

  Tensor forward(Tape &tape, const Tensor &x) const;
  bool is_identity() const { return identity_; }
  std::int64_t out_dim() const;
  // "in.weight", "in.bias", "out.weight", "out.bias"; empty for identity.
  std::map<std::string, Tensor> &params() { return params_; }
  const std::map<std::string, Tensor> &params() const { return params_; }

 private:
  bool identity_ = false;
  std::map<std::string, Tensor> params_;
};

// P1 (mid layers, phoneme mask), P2 (final layers, word mask), P3 (student
// final against teacher mid).
struct Predictors {
  Predictor low, high, cross;

  static Predictors create(std::int64_t student_dim, std::int64_t teacher_dim, std::uint64_t seed,
                           DType dtype = DType::kF64);
  static Predictors identity();
  // "predictor.low.in.weight", ...
  std::map<std::string, Tensor *> named();
  Predictors clone() const;
};

struct LossWeights {
  double l = 1.0;
  double h = 0.1;
  double x = 1.0;
  void validate() const;  // ConfigError unless finite and >= 0
};

// Mean over rows in `rows` and all columns of (P(student) - teacher)^2.
// An empty index set gives a constant 0.
Tensor loss_ll(Tape &tape, const Tensor &student_mid, const Tensor &teacher_mid, const Predictor &p1,
               std::span<const std::int64_t> I_p);
Tensor loss_lh(Tape &tape, const Tensor &student_final, const Tensor &teacher_final, const Predictor &p2,
               std::span<const std::int64_t> I_w);
// Mean over every row and column.
Tensor loss_lx(Tape &tape, const Tensor &student_final, const Tensor &teacher_mid, const Predictor &p3);
Tensor total_loss(Tape &tape, const Tensor &l_l, const Tensor &l_h, const Tensor &l_x, const LossWeights &w);

// tau^2 * mean over rows of KL(softmax(teacher / tau) || softmax(student / tau)).
Tensor kd_loss(Tape &tape, const Tensor &student_final, const Tensor &teacher_final, double temperature);

struct LossReport {
  double l_l = 0.0, l_h = 0.0, l_x = 0.0, total = 0.0;
  std::optional<double> kd;
  std::int64_t masked_p = 0, masked_w = 0;

  nlohmann::json to_json() const;
};

struct LossTerms {
  Tensor total;
  LossReport report;
};

// Hierarchical objective on one clip: L_l on x'_{N/2} vs y_{M/2} over I_p,
// L_h on x''_N vs y_M over I_w, L_x on x''_N vs y_{M/2} over all frames.
LossTerms pretraining_loss(Tape &tape, const ForwardTrace &student, const ForwardTrace &teacher,
                           const Predictors &predictors, const MaskPlan &plan, const LossWeights &weights);
// KD objective on the final layers only.
LossTerms distillation_loss(Tape &tape, const ForwardTrace &student, const ForwardTrace &teacher,
                            double temperature);

}  // namespace vesper

#endif  // VESPER_OBJECTIVES_HPP_
