// include/vesper/tensor.hpp

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

#ifndef VESPER_TENSOR_HPP_
#define VESPER_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vesper {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape &shape);
std::int64_t shape_numel(const Shape &shape);
const char *dtype_name(DType dtype);

// Dense row-major tensor handle. Copies share storage; use clone() for a
// deep copy. Values are held in double storage; a kF32 tensor only ever holds
// values exactly representable in binary32 (every write rounds through
// float), so kF32 results are what a float32 kernel with float64
// accumulation would produce.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kF64, bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype = DType::kF64,
                     bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            DType dtype = DType::kF64, bool requires_grad = false);
  static Tensor scalar(double value, DType dtype = DType::kF64);
  static Tensor randn(Shape shape, std::mt19937_64 &rng, double stddev,
                      DType dtype = DType::kF64, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape &shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const;
  DType dtype() const;

  std::span<const double> data() const;
  // Direct write access for parameter initialization and optimizer updates.
  // Callers must keep values finite; kF32 tensors must be re-rounded with
  // round_to_dtype() after writes.
  std::span<double> mutable_data();
  void round_to_dtype();

  double item() const;
  double at(std::int64_t i) const;
  double at(std::int64_t row, std::int64_t col) const;

  bool requires_grad() const;
  // Only leaves may change their flag.
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  // Gradient values; an all-zero view when no gradient has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor &other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl &impl() const;

  std::shared_ptr<Impl> impl_;

  friend class Tape;
  friend Tensor make_op_output(std::string_view op, Shape shape, DType dtype,
                               std::vector<double> values);
};

// Builds an intermediate result: rounds to dtype and rejects NaN/Inf.
Tensor make_op_output(std::string_view op, Shape shape, DType dtype, std::vector<double> values);

// Per-forward-pass record of differentiable ops. An op is recorded only when
// at least one input requires gradients; the output then requires gradients
// too. backward() walks the records in exact reverse execution order.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;
  Tape(Tape &&) = default;
  Tape &operator=(Tape &&) = default;

  // Registers `output` as produced by `op` from `inputs`. Returns output.
  Tensor record(std::string_view op, const std::vector<Tensor> &inputs, Tensor output,
                BackwardFn backward);

  // Accumulates d(loss)/d(leaf) into every grad-enabled leaf reachable on
  // this tape. Intermediate gradients are reset first, so calling backward
  // twice (with zero_grad on the leaves in between) reproduces the same
  // leaf gradients.
  void backward(const Tensor &loss);

  std::size_t size() const { return records_.size(); }
  std::vector<std::string> op_names() const;
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
};

}  // namespace vesper

#endif  // VESPER_TENSOR_HPP_
