// src/tensor.cpp

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

#include "vesper/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vesper/errors.hpp"

namespace vesper {

struct Tensor::Impl {
  Shape shape;
  DType dtype = DType::kF64;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
};

std::string shape_to_string(const Shape &shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape &shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

const char *dtype_name(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

namespace {

void check_shape(const Shape &shape) {
  for (auto e : shape)
    if (e <= 0)
      throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
}

void round_values(std::vector<double> &values, DType dtype) {
  if (dtype != DType::kF32) return;
  for (auto &v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  return full(std::move(shape), 0.0, dtype, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, DType dtype, bool requires_grad) {
  check_shape(shape);
  auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                     dtype, requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, DType dtype,
                           bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_to_string(shape));
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor construction");
  round_values(values, dtype);
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  impl->leaf = true;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, DType dtype) { return from_values({1}, {value}, dtype); }

Tensor Tensor::randn(Shape shape, std::mt19937_64 &rng, double stddev, DType dtype,
                     bool requires_grad) {
  check_shape(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto &v : values) v = dist(rng);
  return from_values(std::move(shape), std::move(values), dtype, requires_grad);
}

Tensor::Impl &Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape &Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::dim(std::int64_t axis) const {
  const auto &s = shape();
  if (axis < 0) axis += static_cast<std::int64_t>(s.size());
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size()))
    throw DimensionError("axis out of range for shape " + shape_to_string(s));
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl().data.size()); }

DType Tensor::dtype() const { return impl().dtype; }

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() { return impl().data; }

void Tensor::round_to_dtype() { round_values(impl().data, impl().dtype); }

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on non-scalar tensor of shape " + shape_to_string(shape()));
  return impl().data[0];
}

double Tensor::at(std::int64_t i) const {
  if (i < 0 || i >= numel()) throw ContractError("flat index out of range");
  return impl().data[static_cast<std::size_t>(i)];
}

double Tensor::at(std::int64_t row, std::int64_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix");
  if (row < 0 || row >= dim(0) || col < 0 || col >= dim(1))
    throw ContractError("matrix index out of range");
  return impl().data[static_cast<std::size_t>(row * dim(1) + col)];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!impl().leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl().requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl().leaf; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (impl().grad.empty()) return std::vector<double>(impl().data.size(), 0.0);
  return impl().grad;
}

std::span<double> Tensor::mutable_grad() const {
  auto &g = impl().grad;
  if (g.empty()) g.assign(impl().data.size(), 0.0);
  return g;
}

void Tensor::zero_grad() {
  auto &g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl_copy = std::make_shared<Impl>();
  impl_copy->shape = impl().shape;
  impl_copy->dtype = impl().dtype;
  impl_copy->data = impl().data;
  impl_copy->requires_grad = impl().requires_grad && impl().leaf;
  impl_copy->leaf = true;
  return Tensor(std::move(impl_copy));
}

Tensor make_op_output(std::string_view op, Shape shape, DType dtype, std::vector<double> values) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
    throw DimensionError(std::string(op) + ": internal size mismatch");
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  round_values(values, dtype);
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(values);
  impl->leaf = false;
  return Tensor(std::move(impl));
}

Tensor Tape::record(std::string_view op, const std::vector<Tensor> &inputs, Tensor output,
                    BackwardFn backward) {
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor &t) { return t.defined() && t.requires_grad(); });
  if (!any) return output;
  output.impl().requires_grad = true;
  output.impl().leaf = false;
  records_.push_back(Record{std::string(op), inputs, output, std::move(backward)});
  return output;
}

void Tape::backward(const Tensor &loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1)
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  if (!loss.requires_grad()) return;  // nothing upstream needs gradients

  auto produced = std::find_if(records_.begin(), records_.end(), [&](const Record &r) {
    return r.output.same_storage(loss);
  });
  if (produced == records_.end() && !loss.is_leaf())
    throw ContractError("backward: loss was not produced on this tape");

  for (auto &r : records_) r.output.impl().grad.clear();

  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;

  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto &out = it->output.impl();
    if (out.grad.empty()) continue;
    it->backward(out.grad);
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(records_.size());
  for (const auto &r : records_) names.push_back(r.op);
  return names;
}

}  // namespace vesper
