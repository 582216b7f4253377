// include/vesper/ops.hpp

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

#ifndef VESPER_OPS_HPP_
#define VESPER_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "vesper/tensor.hpp"

// Differentiable forward ops. Every op validates shapes (DimensionError on
// mismatch), requires equal dtypes across tensor inputs, and records itself
// on `tape` when any input requires gradients.
namespace vesper::ops {

// a[m x k] * b[k x n]
Tensor matmul(Tape &tape, const Tensor &a, const Tensor &b);

// Elementwise. `b` may either match `a` exactly or match a's trailing
// extents (bias broadcast over the leading axes).
Tensor add(Tape &tape, const Tensor &a, const Tensor &b);
Tensor sub(Tape &tape, const Tensor &a, const Tensor &b);
// Elementwise product; shapes must match exactly.
Tensor mul(Tape &tape, const Tensor &a, const Tensor &b);
Tensor scale(Tape &tape, const Tensor &a, double factor);

Tensor relu(Tape &tape, const Tensor &x);
// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(Tape &tape, const Tensor &x);

// Softmax over the last axis with max subtraction.
Tensor softmax(Tape &tape, const Tensor &x);

// Normalizes over the last axis, then applies gain/bias (both [last]).
inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(Tape &tape, const Tensor &x, const Tensor &gain, const Tensor &bias,
                  double eps = kLayerNormEps);

struct Conv1dOptions {
  std::int64_t stride = 1;
  std::int64_t groups = 1;
  std::int64_t pad_left = 0;
  std::int64_t pad_right = 0;
};
// x[in_channels x length], w[out_channels x in_channels/groups x kernel]
// -> [out_channels x out_length]. No bias; add one after transposing.
Tensor conv1d(Tape &tape, const Tensor &x, const Tensor &w, const Conv1dOptions &options);

// Mean over `axis`; the axis is dropped (a rank-1 input yields shape [1]).
Tensor mean(Tape &tape, const Tensor &x, std::int64_t axis);
Tensor transpose(Tape &tape, const Tensor &x);
Tensor reshape(Tape &tape, const Tensor &x, Shape shape);
Tensor concat(Tape &tape, const std::vector<Tensor> &parts, std::int64_t axis);

// Rows of x[T x d] listed in `rows` are replaced by `row`[d]. Gradient to
// `row` accumulates from the replaced rows only; x receives gradient on the
// untouched rows only.
Tensor row_replace(Tape &tape, const Tensor &x, const Tensor &row,
                   std::span<const std::int64_t> rows);
// Selects rows of x[T x d] -> [|rows| x d]. Duplicates allowed.
Tensor gather_rows(Tape &tape, const Tensor &x, std::span<const std::int64_t> rows);
// Columns [start, start + width) of x[T x d].
Tensor slice_cols(Tape &tape, const Tensor &x, std::int64_t start, std::int64_t width);
// sum_k weights[k] * parts[k]; parts share a shape, weights is [K].
Tensor weighted_sum(Tape &tape, const std::vector<Tensor> &parts, const Tensor &weights);

// mean((a - b)^2) over all elements -> [1].
Tensor mse(Tape &tape, const Tensor &a, const Tensor &b);
// logits[B x C] (or [C]) against integer labels; mean over rows -> [1].
Tensor cross_entropy(Tape &tape, const Tensor &logits, std::span<const std::int64_t> labels);
// Row-wise KL(softmax(target) || softmax(pred)) over the last axis, averaged
// over rows -> [1].
Tensor kl_div_softmax(Tape &tape, const Tensor &target_logits, const Tensor &pred_logits);

// x * w + b for x[T x in], w[in x out], b[out].
Tensor linear(Tape &tape, const Tensor &x, const Tensor &w, const Tensor &b);

}  // namespace vesper::ops

#endif  // VESPER_OPS_HPP_
