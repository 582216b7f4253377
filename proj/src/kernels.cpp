// src/kernels.cpp

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

#include "vesper/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vesper::kernels {

namespace {

// Row bodies shared by both variants. Each computes one slice of the output
// that no other row touches.

inline void matmul_row(const double *a, const double *b, double *c, std::int64_t i,
                       std::int64_t k, std::int64_t n, bool accumulate) {
  double *crow = c + i * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  const double *arow = a + i * k;
  for (std::int64_t p = 0; p < k; ++p) {
    const double aip = arow[p];
    const double *brow = b + p * n;
#pragma omp simd
    for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
  }
}

// row p of a^T b
inline void matmul_a_t_b_row(const double *a, const double *b, double *c, std::int64_t p,
                             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  double *crow = c + p * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double aip = a[i * k + p];
    const double *brow = b + i * n;
#pragma omp simd
    for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
  }
}

// row i of a b^T
inline void matmul_a_b_t_row(const double *a, const double *b, double *c, std::int64_t i,
                             std::int64_t n, std::int64_t k, bool accumulate) {
  const double *arow = a + i * n;
  double *crow = c + i * k;
  for (std::int64_t p = 0; p < k; ++p) {
    const double *brow = b + p * n;
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += arow[j] * brow[j];
    crow[p] = accumulate ? crow[p] + s : s;
  }
}

inline void conv_forward_channel(const Conv1dGeometry &g, const double *x, const double *w,
                                 double *y, std::int64_t co) {
  const std::int64_t out_len = g.out_length();
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t group = co / g.out_per_group();
  double *yrow = y + co * out_len;
  std::fill(yrow, yrow + out_len, 0.0);
  for (std::int64_t cl = 0; cl < cin_g; ++cl) {
    const double *xrow = x + (group * cin_g + cl) * g.length;
    const double *wrow = w + (co * cin_g + cl) * g.kernel;
    for (std::int64_t t = 0; t < out_len; ++t) {
      const std::int64_t base = t * g.stride - g.pad_left;
      const std::int64_t lo = std::max<std::int64_t>(0, -base);
      const std::int64_t hi = std::min<std::int64_t>(g.kernel, g.length - base);
      double s = 0.0;
      for (std::int64_t kk = lo; kk < hi; ++kk) s += wrow[kk] * xrow[base + kk];
      yrow[t] += s;
    }
  }
}

inline void conv_backward_input_channel(const Conv1dGeometry &g, const double *dy,
                                        const double *w, double *dx, std::int64_t ci) {
  const std::int64_t out_len = g.out_length();
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t cout_g = g.out_per_group();
  const std::int64_t group = ci / cin_g;
  const std::int64_t cl = ci % cin_g;
  double *dxrow = dx + ci * g.length;
  for (std::int64_t co = group * cout_g; co < (group + 1) * cout_g; ++co) {
    const double *dyrow = dy + co * out_len;
    const double *wrow = w + (co * cin_g + cl) * g.kernel;
    for (std::int64_t t = 0; t < out_len; ++t) {
      const std::int64_t base = t * g.stride - g.pad_left;
      const std::int64_t lo = std::max<std::int64_t>(0, -base);
      const std::int64_t hi = std::min<std::int64_t>(g.kernel, g.length - base);
      const double d = dyrow[t];
      for (std::int64_t kk = lo; kk < hi; ++kk) dxrow[base + kk] += d * wrow[kk];
    }
  }
}

inline void conv_backward_weight_channel(const Conv1dGeometry &g, const double *dy,
                                         const double *x, double *dw, std::int64_t co) {
  const std::int64_t out_len = g.out_length();
  const std::int64_t cin_g = g.in_per_group();
  const std::int64_t group = co / g.out_per_group();
  const double *dyrow = dy + co * out_len;
  for (std::int64_t cl = 0; cl < cin_g; ++cl) {
    const double *xrow = x + (group * cin_g + cl) * g.length;
    double *dwrow = dw + (co * cin_g + cl) * g.kernel;
    for (std::int64_t kk = 0; kk < g.kernel; ++kk) {
      double s = 0.0;
      for (std::int64_t t = 0; t < out_len; ++t) {
        const std::int64_t pos = t * g.stride - g.pad_left + kk;
        if (pos >= 0 && pos < g.length) s += dyrow[t] * xrow[pos];
      }
      dwrow[kk] += s;
    }
  }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void matmul_a_t_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
  for (std::int64_t p = 0; p < k; ++p)
    matmul_a_t_b_row(a.data(), b.data(), c.data(), p, m, k, n, accumulate);
}

void matmul_a_b_t(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i)
    matmul_a_b_t_row(a.data(), b.data(), c.data(), i, n, k, accumulate);
}

void conv1d_forward(const Conv1dGeometry &g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y) {
  for (std::int64_t co = 0; co < g.out_channels; ++co)
    conv_forward_channel(g, x.data(), w.data(), y.data(), co);
}

void conv1d_backward_input(const Conv1dGeometry &g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
    conv_backward_input_channel(g, dy.data(), w.data(), dx.data(), ci);
}

void conv1d_backward_weight(const Conv1dGeometry &g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw) {
  for (std::int64_t co = 0; co < g.out_channels; ++co)
    conv_backward_weight_channel(g, dy.data(), x.data(), dw.data(), co);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a.data(), b.data(), c.data(), i, k, n, accumulate);
}

void matmul_a_t_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < k; ++p)
    matmul_a_t_b_row(a.data(), b.data(), c.data(), p, m, k, n, accumulate);
}

void matmul_a_b_t(std::span<const double> a, std::span<const double> b, std::span<double> c,
                  std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    matmul_a_b_t_row(a.data(), b.data(), c.data(), i, n, k, accumulate);
}

void conv1d_forward(const Conv1dGeometry &g, std::span<const double> x,
                    std::span<const double> w, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < g.out_channels; ++co)
    conv_forward_channel(g, x.data(), w.data(), y.data(), co);
}

void conv1d_backward_input(const Conv1dGeometry &g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
    conv_backward_input_channel(g, dy.data(), w.data(), dx.data(), ci);
}

void conv1d_backward_weight(const Conv1dGeometry &g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw) {
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < g.out_channels; ++co)
    conv_backward_weight_channel(g, dy.data(), x.data(), dw.data(), co);
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace vesper::kernels
