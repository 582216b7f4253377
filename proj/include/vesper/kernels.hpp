// include/vesper/kernels.hpp

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

// Dense inner loops used by the tensor ops. Every kernel exists twice:
// `serial` is the plain reference kept for testing, `parallel` splits the
// outermost output axis across OpenMP threads. Each output element is
// reduced in the same order in both versions, so results are bit-identical
// regardless of thread count.

#ifndef VESPER_KERNELS_HPP_
#define VESPER_KERNELS_HPP_

#include <cstdint>
#include <span>

namespace vesper::kernels {

struct Conv1dGeometry {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t length = 1;  // input samples per channel
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t groups = 1;
  std::int64_t pad_left = 0;
  std::int64_t pad_right = 0;

  std::int64_t out_length() const { return (length + pad_left + pad_right - kernel) / stride + 1; }
  std::int64_t in_per_group() const { return in_channels / groups; }
  std::int64_t out_per_group() const { return out_channels / groups; }
};

// c[m x n] (+)= a[m x k] * b[k x n]
// a_t_b: c[k x n] (+)= a[m x k]^T * b[m x n]
// a_b_t: c[m x k] (+)= a[m x n] * b[k x n]^T
// conv1d layouts: x[in_channels x length], w[out_channels x in_per_group x
// kernel], y[out_channels x out_length]. Backward kernels accumulate.
namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void matmul_a_t_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void matmul_a_b_t(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate);
void conv1d_forward(const Conv1dGeometry &g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y);
void conv1d_backward_input(const Conv1dGeometry &g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv1d_backward_weight(const Conv1dGeometry &g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void matmul_a_t_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void matmul_a_b_t(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate);
void conv1d_forward(const Conv1dGeometry &g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y);
void conv1d_backward_input(const Conv1dGeometry &g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv1d_backward_weight(const Conv1dGeometry &g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw);
}  // namespace parallel

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace vesper::kernels

#endif  // VESPER_KERNELS_HPP_
