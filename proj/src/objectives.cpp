// src/objectives.cpp

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

#include "vesper/objectives.hpp"

#include <cmath>

#include "vesper/ops.hpp"

namespace vesper {

namespace {

constexpr double kPredictorInitStd = 0.02;

void check_pair(const char *what, const Tensor &student, const Tensor &teacher, const Predictor &p) {
  if (student.rank() != 2 || teacher.rank() != 2 || student.dim(0) != teacher.dim(0))
    throw DimensionError(std::string(what) + ": student " + shape_to_string(student.shape()) + " and teacher " +
                         shape_to_string(teacher.shape()) + " must be [T x d] with equal T");
  const auto out = p.is_identity() ? student.dim(1) : p.out_dim();
  if (out != teacher.dim(1))
    throw DimensionError(std::string(what) + ": predictor output " + std::to_string(out) +
                         " does not match teacher dim " + std::to_string(teacher.dim(1)));
}

Tensor masked_mse(Tape &tape, const char *what, const Tensor &student, const Tensor &teacher, const Predictor &p,
                  std::span<const std::int64_t> rows) {
  check_pair(what, student, teacher, p);
  for (auto r : rows)
    if (r < 0 || r >= student.dim(0))
      throw ContractError(std::string(what) + ": index " + std::to_string(r) + " outside [0, " +
                          std::to_string(student.dim(0)) + ")");
  if (rows.empty()) return Tensor::scalar(0.0, student.dtype());
  auto s = ops::gather_rows(tape, student, rows);
  auto t = ops::gather_rows(tape, teacher, rows);
  return ops::mse(tape, p.forward(tape, s), t);
}

}  // namespace

Predictor Predictor::create(std::int64_t d_in, std::int64_t d_hidden, std::int64_t d_out, std::mt19937_64 &rng,
                            DType dtype) {
  Predictor p;
  p.params_["in.bias"] = Tensor::zeros({d_hidden}, dtype);
  p.params_["in.weight"] = Tensor::randn({d_in, d_hidden}, rng, kPredictorInitStd, dtype);
  p.params_["out.bias"] = Tensor::zeros({d_out}, dtype);
  p.params_["out.weight"] = Tensor::randn({d_hidden, d_out}, rng, kPredictorInitStd, dtype);
  return p;
}

Predictor Predictor::identity() {
  Predictor p;
  p.identity_ = true;
  return p;
}

std::int64_t Predictor::out_dim() const {
  if (identity_) throw ContractError("identity predictor has no fixed output dim");
  return params_.at("out.bias").dim(0);
}

Tensor Predictor::forward(Tape &tape, const Tensor &x) const {
  if (identity_) return x;
  auto h = ops::gelu(tape, ops::linear(tape, x, params_.at("in.weight"), params_.at("in.bias")));
  return ops::linear(tape, h, params_.at("out.weight"), params_.at("out.bias"));
}

Predictors Predictors::create(std::int64_t student_dim, std::int64_t teacher_dim, std::uint64_t seed, DType dtype) {
  std::mt19937_64 rng(seed);
  Predictors p;
  p.low = Predictor::create(student_dim, student_dim, teacher_dim, rng, dtype);
  p.high = Predictor::create(student_dim, student_dim, teacher_dim, rng, dtype);
  p.cross = Predictor::create(student_dim, student_dim, teacher_dim, rng, dtype);
  return p;
}

Predictors Predictors::identity() { return {Predictor::identity(), Predictor::identity(), Predictor::identity()}; }

std::map<std::string, Tensor *> Predictors::named() {
  std::map<std::string, Tensor *> out;
  for (auto [name, p] : {std::pair<const char *, Predictor *>{"low", &low}, {"high", &high}, {"cross", &cross}})
    for (auto &[k, t] : p->params()) out["predictor." + std::string(name) + "." + k] = &t;
  return out;
}

Predictors Predictors::clone() const {
  Predictors c = *this;
  for (auto *p : {&c.low, &c.high, &c.cross})
    for (auto &[k, t] : p->params()) t = t.clone();
  return c;
}

void LossWeights::validate() const {
  for (double v : {l, h, x})
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and >= 0");
}

Tensor loss_ll(Tape &tape, const Tensor &student_mid, const Tensor &teacher_mid, const Predictor &p1,
               std::span<const std::int64_t> I_p) {
  return masked_mse(tape, "loss_ll", student_mid, teacher_mid, p1, I_p);
}

Tensor loss_lh(Tape &tape, const Tensor &student_final, const Tensor &teacher_final, const Predictor &p2,
               std::span<const std::int64_t> I_w) {
  return masked_mse(tape, "loss_lh", student_final, teacher_final, p2, I_w);
}

Tensor loss_lx(Tape &tape, const Tensor &student_final, const Tensor &teacher_mid, const Predictor &p3) {
  check_pair("loss_lx", student_final, teacher_mid, p3);
  return ops::mse(tape, p3.forward(tape, student_final), teacher_mid);
}

Tensor total_loss(Tape &tape, const Tensor &l_l, const Tensor &l_h, const Tensor &l_x, const LossWeights &w) {
  w.validate();
  auto t = ops::add(tape, ops::scale(tape, l_l, w.l), ops::scale(tape, l_h, w.h));
  return ops::add(tape, t, ops::scale(tape, l_x, w.x));
}

Tensor kd_loss(Tape &tape, const Tensor &student_final, const Tensor &teacher_final, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ContractError("kd_loss: temperature must be > 0");
  if (student_final.shape() != teacher_final.shape())
    throw DimensionError("kd_loss: shapes " + shape_to_string(student_final.shape()) + " and " +
                         shape_to_string(teacher_final.shape()) + " differ");
  const double inv = 1.0 / temperature;
  auto kl = ops::kl_div_softmax(tape, ops::scale(tape, teacher_final, inv), ops::scale(tape, student_final, inv));
  return ops::scale(tape, kl, temperature * temperature);
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j = {{"l_l", l_l}, {"l_h", l_h}, {"l_x", l_x}, {"total", total},
                      {"masked_p", masked_p}, {"masked_w", masked_w}};
  if (kd) j["kd"] = *kd;
  return j;
}

LossTerms pretraining_loss(Tape &tape, const ForwardTrace &student, const ForwardTrace &teacher,
                           const Predictors &predictors, const MaskPlan &plan, const LossWeights &weights) {
  const auto n = static_cast<std::int64_t>(student.layers.size());
  const auto m = static_cast<std::int64_t>(teacher.layers.size());
  if (n < 2 || n % 2 != 0) throw ContractError("student trace needs an even, positive layer count");
  if (m < 2 || m % 2 != 0) throw ContractError("teacher trace needs an even, positive layer count");
  const auto &x_mid = student.layers[static_cast<std::size_t>(n / 2 - 1)];
  const auto &x_fin = student.layers[static_cast<std::size_t>(n - 1)];
  const auto &y_mid = teacher.layers[static_cast<std::size_t>(m / 2 - 1)];
  const auto &y_fin = teacher.layers[static_cast<std::size_t>(m - 1)];
  auto ll = loss_ll(tape, x_mid, y_mid, predictors.low, plan.I_p);
  auto lh = loss_lh(tape, x_fin, y_fin, predictors.high, plan.I_w);
  auto lx = loss_lx(tape, x_fin, y_mid, predictors.cross);
  LossTerms terms;
  terms.total = total_loss(tape, ll, lh, lx, weights);
  terms.report.l_l = ll.item();
  terms.report.l_h = lh.item();
  terms.report.l_x = lx.item();
  terms.report.total = terms.total.item();
  terms.report.masked_p = static_cast<std::int64_t>(plan.I_p.size());
  terms.report.masked_w = static_cast<std::int64_t>(plan.I_w.size());
  return terms;
}

LossTerms distillation_loss(Tape &tape, const ForwardTrace &student, const ForwardTrace &teacher, double temperature) {
  if (student.layers.empty() || teacher.layers.empty()) throw ContractError("distillation needs non-empty traces");
  LossTerms terms;
  terms.total = kd_loss(tape, student.layers.back(), teacher.layers.back(), temperature);
  terms.report.kd = terms.total.item();
  terms.report.total = terms.total.item();
  return terms;
}

}  // namespace vesper
