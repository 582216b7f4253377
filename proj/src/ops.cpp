// src/ops.cpp

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

#include "vesper/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "vesper/errors.hpp"
#include "vesper/kernels.hpp"

namespace vesper::ops {

namespace {

using Values = std::vector<double>;

void require_defined(const char *op, const Tensor &t) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined input tensor");
}

void require_same_dtype(const char *op, const Tensor &a, const Tensor &b) {
  if (a.dtype() != b.dtype())
    throw ContractError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                        dtype_name(b.dtype()));
}

void require_rank(const char *op, const Tensor &t, std::int64_t rank) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
}

[[noreturn]] void shape_mismatch(const char *op, const Tensor &a, const Tensor &b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                       " vs " + shape_to_string(b.shape()));
}

// Number of times b repeats inside a under the bias-broadcast rule.
std::int64_t broadcast_repeats(const char *op, const Tensor &a, const Tensor &b) {
  const auto &sa = a.shape();
  const auto &sb = b.shape();
  if (sb.size() > sa.size()) shape_mismatch(op, a, b);
  if (!std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size())))
    shape_mismatch(op, a, b);
  return a.numel() / b.numel();
}

// Shape split around `axis`: outer x extent x inner.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape &shape, std::int64_t axis) {
  AxisSplit s;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(shape.size()); ++i) {
    if (i < axis) s.outer *= shape[static_cast<std::size_t>(i)];
    else if (i == axis) s.extent = shape[static_cast<std::size_t>(i)];
    else s.inner *= shape[static_cast<std::size_t>(i)];
  }
  return s;
}

std::int64_t normalize_axis(const char *op, const Tensor &t, std::int64_t axis) {
  if (axis < 0) axis += t.rank();
  if (axis < 0 || axis >= t.rank())
    throw DimensionError(std::string(op) + ": axis out of range for shape " +
                         shape_to_string(t.shape()));
  return axis;
}

template <typename Fn>
Tensor unary(Tape &tape, const char *op, const Tensor &x, Fn value_and_slope) {
  require_defined(op, x);
  auto in = x.data();
  Values out(in.size());
  auto slope = std::make_shared<Values>(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto [v, s] = value_and_slope(in[i]);
    out[i] = v;
    (*slope)[i] = s;
  }
  auto y = make_op_output(op, x.shape(), x.dtype(), std::move(out));
  return tape.record(op, {x}, y, [x, slope](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*slope)[i];
  });
}

}  // namespace

Tensor matmul(Tape &tape, const Tensor &a, const Tensor &b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  require_same_dtype("matmul", a, b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a, b);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Values out(static_cast<std::size_t>(m * n));
  kernels::parallel::matmul(a.data(), b.data(), out, m, k, n, false);
  auto c = make_op_output("matmul", {m, n}, a.dtype(), std::move(out));
  return tape.record("matmul", {a, b}, c, [a, b, m, k, n](std::span<const double> g) mutable {
    if (a.requires_grad()) kernels::parallel::matmul_a_b_t(g, b.data(), a.mutable_grad(), m, n, k, true);
    if (b.requires_grad()) kernels::parallel::matmul_a_t_b(a.data(), g, b.mutable_grad(), m, k, n, true);
  });
}

namespace {

Tensor add_or_sub(Tape &tape, const char *op, const Tensor &a, const Tensor &b, double sign) {
  require_defined(op, a);
  require_defined(op, b);
  require_same_dtype(op, a, b);
  const auto repeats = broadcast_repeats(op, a, b);
  const auto inner = b.numel();
  auto av = a.data();
  auto bv = b.data();
  Values out(av.size());
  for (std::int64_t o = 0; o < repeats; ++o)
    for (std::int64_t j = 0; j < inner; ++j) {
      const auto i = static_cast<std::size_t>(o * inner + j);
      out[i] = av[i] + sign * bv[static_cast<std::size_t>(j)];
    }
  auto y = make_op_output(op, a.shape(), a.dtype(), std::move(out));
  return tape.record(op, {a, b}, y, [a, b, repeats, inner, sign](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::int64_t o = 0; o < repeats; ++o)
        for (std::int64_t j = 0; j < inner; ++j)
          db[static_cast<std::size_t>(j)] += sign * g[static_cast<std::size_t>(o * inner + j)];
    }
  });
}

}  // namespace

Tensor add(Tape &tape, const Tensor &a, const Tensor &b) { return add_or_sub(tape, "add", a, b, 1.0); }

Tensor sub(Tape &tape, const Tensor &a, const Tensor &b) { return add_or_sub(tape, "sub", a, b, -1.0); }

Tensor mul(Tape &tape, const Tensor &a, const Tensor &b) {
  require_defined("mul", a);
  require_defined("mul", b);
  require_same_dtype("mul", a, b);
  if (a.shape() != b.shape()) shape_mismatch("mul", a, b);
  auto av = a.data();
  auto bv = b.data();
  Values out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto y = make_op_output("mul", a.shape(), a.dtype(), std::move(out));
  return tape.record("mul", {a, b}, y, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      auto bv = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      auto av = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Tensor scale(Tape &tape, const Tensor &a, double factor) {
  return unary(tape, "scale", a, [factor](double v) { return std::pair{v * factor, factor}; });
}

Tensor relu(Tape &tape, const Tensor &x) {
  return unary(tape, "relu", x,
               [](double v) { return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0}; });
}

Tensor gelu(Tape &tape, const Tensor &x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary(tape, "gelu", x, [](double v) {
    const double u = kC * (v + kA * v * v * v);
    const double th = std::tanh(u);
    const double du = kC * (1.0 + 3.0 * kA * v * v);
    const double value = 0.5 * v * (1.0 + th);
    const double slope = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    return std::pair{value, slope};
  });
}

Tensor softmax(Tape &tape, const Tensor &x) {
  require_defined("softmax", x);
  const auto n = x.dim(-1);
  const auto rows = x.numel() / n;
  auto in = x.data();
  auto out = std::make_shared<Values>(in.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double *row = in.data() + r * n;
    double *o = out->data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::int64_t j = 0; j < n; ++j) o[j] /= z;
  }
  auto y = make_op_output("softmax", x.shape(), x.dtype(), *out);
  return tape.record("softmax", {x}, y, [x, out, rows, n](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double *yr = out->data() + r * n;
      const double *gr = g.data() + r * n;
      double dot = 0.0;
      for (std::int64_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      for (std::int64_t j = 0; j < n; ++j) dx[static_cast<std::size_t>(r * n + j)] += yr[j] * (gr[j] - dot);
    }
  });
}

Tensor layer_norm(Tape &tape, const Tensor &x, const Tensor &gain, const Tensor &bias,
                  double eps) {
  require_defined("layer_norm", x);
  require_defined("layer_norm", gain);
  require_defined("layer_norm", bias);
  require_same_dtype("layer_norm", x, gain);
  require_same_dtype("layer_norm", x, bias);
  const auto n = x.dim(-1);
  if (gain.shape() != Shape{n}) shape_mismatch("layer_norm", x, gain);
  if (bias.shape() != Shape{n}) shape_mismatch("layer_norm", x, bias);
  const auto rows = x.numel() / n;
  auto in = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  auto xhat = std::make_shared<Values>(in.size());
  auto inv = std::make_shared<Values>(static_cast<std::size_t>(rows));
  Values out(in.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double *row = in.data() + r * n;
    double mu = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv)[static_cast<std::size_t>(r)] = is;
    for (std::int64_t j = 0; j < n; ++j) {
      const auto i = static_cast<std::size_t>(r * n + j);
      (*xhat)[i] = (row[j] - mu) * is;
      out[i] = (*xhat)[i] * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  auto y = make_op_output("layer_norm", x.shape(), x.dtype(), std::move(out));
  return tape.record(
      "layer_norm", {x, gain, bias}, y,
      [x, gain, bias, xhat, inv, rows, n](std::span<const double> g) mutable {
        const double nn = static_cast<double>(n);
        if (gain.requires_grad() || bias.requires_grad()) {
          auto dgain = gain.requires_grad() ? gain.mutable_grad() : std::span<double>{};
          auto dbias = bias.requires_grad() ? bias.mutable_grad() : std::span<double>{};
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < n; ++j) {
              const auto i = static_cast<std::size_t>(r * n + j);
              if (!dgain.empty()) dgain[static_cast<std::size_t>(j)] += g[i] * (*xhat)[i];
              if (!dbias.empty()) dbias[static_cast<std::size_t>(j)] += g[i];
            }
        }
        if (!x.requires_grad()) return;
        auto dx = x.mutable_grad();
        auto gv = gain.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::int64_t j = 0; j < n; ++j) {
            const auto i = static_cast<std::size_t>(r * n + j);
            const double d = g[i] * gv[static_cast<std::size_t>(j)];
            sum_d += d;
            sum_dx += d * (*xhat)[i];
          }
          const double is = (*inv)[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < n; ++j) {
            const auto i = static_cast<std::size_t>(r * n + j);
            const double d = g[i] * gv[static_cast<std::size_t>(j)];
            dx[i] += is / nn * (nn * d - sum_d - (*xhat)[i] * sum_dx);
          }
        }
      });
}

Tensor conv1d(Tape &tape, const Tensor &x, const Tensor &w, const Conv1dOptions &options) {
  require_defined("conv1d", x);
  require_defined("conv1d", w);
  require_same_dtype("conv1d", x, w);
  require_rank("conv1d", x, 2);
  require_rank("conv1d", w, 3);
  kernels::Conv1dGeometry geo;
  geo.in_channels = x.dim(0);
  geo.length = x.dim(1);
  geo.out_channels = w.dim(0);
  geo.kernel = w.dim(2);
  geo.stride = options.stride;
  geo.groups = options.groups;
  geo.pad_left = options.pad_left;
  geo.pad_right = options.pad_right;
  if (geo.stride < 1 || geo.groups < 1 || geo.pad_left < 0 || geo.pad_right < 0)
    throw ContractError("conv1d: stride/groups must be >= 1 and padding >= 0");
  if (geo.in_channels % geo.groups != 0 || geo.out_channels % geo.groups != 0 ||
      w.dim(1) != geo.in_per_group())
    shape_mismatch("conv1d", x, w);
  if (geo.length + geo.pad_left + geo.pad_right < geo.kernel)
    throw DimensionError("conv1d: input of length " + std::to_string(geo.length) +
                         " is shorter than kernel " + std::to_string(geo.kernel));
  const auto out_len = geo.out_length();
  Values out(static_cast<std::size_t>(geo.out_channels * out_len));
  kernels::parallel::conv1d_forward(geo, x.data(), w.data(), out);
  auto y = make_op_output("conv1d", {geo.out_channels, out_len}, x.dtype(), std::move(out));
  return tape.record("conv1d", {x, w}, y, [x, w, geo](std::span<const double> g) mutable {
    if (x.requires_grad()) kernels::parallel::conv1d_backward_input(geo, g, w.data(), x.mutable_grad());
    if (w.requires_grad()) kernels::parallel::conv1d_backward_weight(geo, g, x.data(), w.mutable_grad());
  });
}

Tensor mean(Tape &tape, const Tensor &x, std::int64_t axis) {
  require_defined("mean", x);
  axis = normalize_axis("mean", x, axis);
  const auto s = split_axis(x.shape(), axis);
  Shape out_shape;
  for (std::int64_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[static_cast<std::size_t>(i)]);
  if (out_shape.empty()) out_shape = {1};
  auto in = x.data();
  Values out(static_cast<std::size_t>(s.outer * s.inner), 0.0);
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t e = 0; e < s.extent; ++e)
      for (std::int64_t i = 0; i < s.inner; ++i)
        out[static_cast<std::size_t>(o * s.inner + i)] +=
            in[static_cast<std::size_t>((o * s.extent + e) * s.inner + i)];
  for (auto &v : out) v /= static_cast<double>(s.extent);
  auto y = make_op_output("mean", out_shape, x.dtype(), std::move(out));
  return tape.record("mean", {x}, y, [x, s](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    const double f = 1.0 / static_cast<double>(s.extent);
    for (std::int64_t o = 0; o < s.outer; ++o)
      for (std::int64_t e = 0; e < s.extent; ++e)
        for (std::int64_t i = 0; i < s.inner; ++i)
          dx[static_cast<std::size_t>((o * s.extent + e) * s.inner + i)] +=
              f * g[static_cast<std::size_t>(o * s.inner + i)];
  });
}

Tensor transpose(Tape &tape, const Tensor &x) {
  require_defined("transpose", x);
  require_rank("transpose", x, 2);
  const auto r = x.dim(0), c = x.dim(1);
  auto in = x.data();
  Values out(in.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j * r + i)] = in[static_cast<std::size_t>(i * c + j)];
  auto y = make_op_output("transpose", {c, r}, x.dtype(), std::move(out));
  return tape.record("transpose", {x}, y, [x, r, c](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j)
        dx[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * r + i)];
  });
}

Tensor reshape(Tape &tape, const Tensor &x, Shape shape) {
  require_defined("reshape", x);
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
  auto in = x.data();
  auto y = make_op_output("reshape", std::move(shape), x.dtype(), Values(in.begin(), in.end()));
  return tape.record("reshape", {x}, y, [x](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Tensor concat(Tape &tape, const std::vector<Tensor> &parts, std::int64_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  for (const auto &p : parts) require_defined("concat", p);
  axis = normalize_axis("concat", parts[0], axis);
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto &p : parts) {
    require_same_dtype("concat", parts[0], p);
    if (p.rank() != parts[0].rank()) shape_mismatch("concat", parts[0], p);
    for (std::int64_t i = 0; i < p.rank(); ++i)
      if (i != axis && p.shape()[static_cast<std::size_t>(i)] != out_shape[static_cast<std::size_t>(i)])
        shape_mismatch("concat", parts[0], p);
    total += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  const auto s = split_axis(out_shape, axis);
  Values out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t offset = 0;
  for (const auto &p : parts) {
    offsets.push_back(offset);
    const auto ext = p.dim(axis);
    auto pv = p.data();
    for (std::int64_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + o * ext * s.inner, ext * s.inner,
                  out.begin() + (o * total + offset) * s.inner);
    offset += ext;
  }
  auto y = make_op_output("concat", out_shape, parts[0].dtype(), std::move(out));
  return tape.record("concat", parts, y,
                     [parts, offsets, s, total, axis](std::span<const double> g) mutable {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         auto &p = parts[k];
                         if (!p.requires_grad()) continue;
                         const auto ext = p.dim(axis);
                         auto dp = p.mutable_grad();
                         for (std::int64_t o = 0; o < s.outer; ++o)
                           for (std::int64_t i = 0; i < ext * s.inner; ++i)
                             dp[static_cast<std::size_t>(o * ext * s.inner + i)] +=
                                 g[static_cast<std::size_t>((o * total + offsets[k]) * s.inner + i)];
                       }
                     });
}

Tensor row_replace(Tape &tape, const Tensor &x, const Tensor &row,
                   std::span<const std::int64_t> rows) {
  require_defined("row_replace", x);
  require_defined("row_replace", row);
  require_same_dtype("row_replace", x, row);
  require_rank("row_replace", x, 2);
  const auto t = x.dim(0), d = x.dim(1);
  if (row.shape() != Shape{d}) shape_mismatch("row_replace", x, row);
  auto masked = std::make_shared<std::vector<char>>(static_cast<std::size_t>(t), 0);
  for (auto r : rows) {
    if (r < 0 || r >= t)
      throw ContractError("row_replace: index " + std::to_string(r) + " outside [0, " +
                          std::to_string(t) + ")");
    (*masked)[static_cast<std::size_t>(r)] = 1;
  }
  auto in = x.data();
  auto rv = row.data();
  Values out(in.begin(), in.end());
  for (std::int64_t r = 0; r < t; ++r)
    if ((*masked)[static_cast<std::size_t>(r)]) std::copy(rv.begin(), rv.end(), out.begin() + r * d);
  auto y = make_op_output("row_replace", x.shape(), x.dtype(), std::move(out));
  return tape.record("row_replace", {x, row}, y,
                     [x, row, masked, t, d](std::span<const double> g) mutable {
                       auto dx = x.requires_grad() ? x.mutable_grad() : std::span<double>{};
                       auto dr = row.requires_grad() ? row.mutable_grad() : std::span<double>{};
                       for (std::int64_t r = 0; r < t; ++r) {
                         const bool m = (*masked)[static_cast<std::size_t>(r)];
                         for (std::int64_t j = 0; j < d; ++j) {
                           const auto i = static_cast<std::size_t>(r * d + j);
                           if (m && !dr.empty()) dr[static_cast<std::size_t>(j)] += g[i];
                           if (!m && !dx.empty()) dx[i] += g[i];
                         }
                       }
                     });
}

Tensor gather_rows(Tape &tape, const Tensor &x, std::span<const std::int64_t> rows) {
  require_defined("gather_rows", x);
  require_rank("gather_rows", x, 2);
  if (rows.empty()) throw ContractError("gather_rows: empty index set");
  const auto t = x.dim(0), d = x.dim(1);
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows.begin(), rows.end());
  auto in = x.data();
  Values out(static_cast<std::size_t>(rows.size() * static_cast<std::size_t>(d)));
  for (std::size_t k = 0; k < idx->size(); ++k) {
    const auto r = (*idx)[k];
    if (r < 0 || r >= t)
      throw ContractError("gather_rows: index " + std::to_string(r) + " outside [0, " +
                          std::to_string(t) + ")");
    std::copy_n(in.begin() + r * d, d, out.begin() + static_cast<std::ptrdiff_t>(k) * d);
  }
  auto y = make_op_output("gather_rows", {static_cast<std::int64_t>(idx->size()), d}, x.dtype(),
                          std::move(out));
  return tape.record("gather_rows", {x}, y, [x, idx, d](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::size_t k = 0; k < idx->size(); ++k)
      for (std::int64_t j = 0; j < d; ++j)
        dx[static_cast<std::size_t>((*idx)[k] * d + j)] += g[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
  });
}

Tensor slice_cols(Tape &tape, const Tensor &x, std::int64_t start, std::int64_t width) {
  require_defined("slice_cols", x);
  require_rank("slice_cols", x, 2);
  const auto t = x.dim(0), d = x.dim(1);
  if (start < 0 || width < 1 || start + width > d)
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") outside " + shape_to_string(x.shape()));
  auto in = x.data();
  Values out(static_cast<std::size_t>(t * width));
  for (std::int64_t r = 0; r < t; ++r)
    std::copy_n(in.begin() + r * d + start, width, out.begin() + r * width);
  auto y = make_op_output("slice_cols", {t, width}, x.dtype(), std::move(out));
  return tape.record("slice_cols", {x}, y, [x, t, d, start, width](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto dx = x.mutable_grad();
    for (std::int64_t r = 0; r < t; ++r)
      for (std::int64_t j = 0; j < width; ++j)
        dx[static_cast<std::size_t>(r * d + start + j)] += g[static_cast<std::size_t>(r * width + j)];
  });
}

Tensor weighted_sum(Tape &tape, const std::vector<Tensor> &parts, const Tensor &weights) {
  require_defined("weighted_sum", weights);
  if (parts.empty()) throw ContractError("weighted_sum: no inputs");
  if (weights.shape() != Shape{static_cast<std::int64_t>(parts.size())})
    throw DimensionError("weighted_sum: " + std::to_string(parts.size()) +
                         " parts but weights of shape " + shape_to_string(weights.shape()));
  for (const auto &p : parts) {
    require_defined("weighted_sum", p);
    require_same_dtype("weighted_sum", weights, p);
    if (p.shape() != parts[0].shape()) shape_mismatch("weighted_sum", parts[0], p);
  }
  auto wv = weights.data();
  Values out(static_cast<std::size_t>(parts[0].numel()), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[k] * pv[i];
  }
  std::vector<Tensor> inputs = parts;
  inputs.push_back(weights);
  auto y = make_op_output("weighted_sum", parts[0].shape(), weights.dtype(), std::move(out));
  return tape.record("weighted_sum", inputs, y, [parts, weights](std::span<const double> g) mutable {
    auto wv = weights.data();
    auto dw = weights.requires_grad() ? weights.mutable_grad() : std::span<double>{};
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto &p = parts[k];
      if (p.requires_grad()) {
        auto dp = p.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dp[i] += wv[k] * g[i];
      }
      if (!dw.empty()) {
        auto pv = p.data();
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * pv[i];
        dw[k] += s;
      }
    }
  });
}

Tensor mse(Tape &tape, const Tensor &a, const Tensor &b) {
  require_defined("mse", a);
  require_defined("mse", b);
  require_same_dtype("mse", a, b);
  if (a.shape() != b.shape()) shape_mismatch("mse", a, b);
  auto av = a.data();
  auto bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  auto y = make_op_output("mse", {1}, a.dtype(), {s / n});
  return tape.record("mse", {a, b}, y, [a, b, n](std::span<const double> g) mutable {
    auto av = a.data();
    auto bv = b.data();
    const double f = 2.0 * g[0] / n;
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < av.size(); ++i) da[i] += f * (av[i] - bv[i]);
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < av.size(); ++i) db[i] -= f * (av[i] - bv[i]);
    }
  });
}

Tensor cross_entropy(Tape &tape, const Tensor &logits, std::span<const std::int64_t> labels) {
  require_defined("cross_entropy", logits);
  if (logits.rank() != 1 && logits.rank() != 2)
    throw DimensionError("cross_entropy: logits must be [C] or [B x C], got " +
                         shape_to_string(logits.shape()));
  const auto c = logits.dim(-1);
  const auto b = logits.numel() / c;
  if (static_cast<std::int64_t>(labels.size()) != b)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(b) + " rows");
  auto in = logits.data();
  auto probs = std::make_shared<Values>(in.size());
  auto lab = std::make_shared<std::vector<std::int64_t>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::int64_t r = 0; r < b; ++r) {
    const auto y = (*lab)[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c)
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(c) + ")");
    const double *row = in.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::int64_t j = 0; j < c; ++j)
      (*probs)[static_cast<std::size_t>(r * c + j)] = std::exp(row[j] - lse);
    loss += lse - row[y];
  }
  auto out = make_op_output("cross_entropy", {1}, logits.dtype(), {loss / static_cast<double>(b)});
  return tape.record("cross_entropy", {logits}, out,
                     [logits, probs, lab, b, c](std::span<const double> g) mutable {
                       if (!logits.requires_grad()) return;
                       auto dz = logits.mutable_grad();
                       const double f = g[0] / static_cast<double>(b);
                       for (std::int64_t r = 0; r < b; ++r)
                         for (std::int64_t j = 0; j < c; ++j) {
                           const auto i = static_cast<std::size_t>(r * c + j);
                           const double onehot = (*lab)[static_cast<std::size_t>(r)] == j ? 1.0 : 0.0;
                           dz[i] += f * ((*probs)[i] - onehot);
                         }
                     });
}

Tensor kl_div_softmax(Tape &tape, const Tensor &target_logits, const Tensor &pred_logits) {
  require_defined("kl_div_softmax", target_logits);
  require_defined("kl_div_softmax", pred_logits);
  require_same_dtype("kl_div_softmax", target_logits, pred_logits);
  if (target_logits.shape() != pred_logits.shape())
    shape_mismatch("kl_div_softmax", target_logits, pred_logits);
  const auto n = target_logits.dim(-1);
  const auto rows = target_logits.numel() / n;
  auto tv = target_logits.data();
  auto sv = pred_logits.data();
  auto log_p = std::make_shared<Values>(tv.size());
  auto log_q = std::make_shared<Values>(sv.size());
  auto row_kl = std::make_shared<Values>(static_cast<std::size_t>(rows));
  auto log_softmax_row = [n](const double *in, double *out) {
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::int64_t j = 0; j < n; ++j) out[j] = in[j] - lse;
  };
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    log_softmax_row(tv.data() + r * n, log_p->data() + r * n);
    log_softmax_row(sv.data() + r * n, log_q->data() + r * n);
    double kl = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      const auto i = static_cast<std::size_t>(r * n + j);
      kl += std::exp((*log_p)[i]) * ((*log_p)[i] - (*log_q)[i]);
    }
    (*row_kl)[static_cast<std::size_t>(r)] = kl;
    total += kl;
  }
  auto out = make_op_output("kl_div_softmax", {1}, target_logits.dtype(),
                            {total / static_cast<double>(rows)});
  return tape.record(
      "kl_div_softmax", {target_logits, pred_logits}, out,
      [target_logits, pred_logits, log_p, log_q, row_kl, rows, n](std::span<const double> g) mutable {
        const double f = g[0] / static_cast<double>(rows);
        auto dt = target_logits.requires_grad() ? target_logits.mutable_grad() : std::span<double>{};
        auto ds = pred_logits.requires_grad() ? pred_logits.mutable_grad() : std::span<double>{};
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < n; ++j) {
            const auto i = static_cast<std::size_t>(r * n + j);
            const double p = std::exp((*log_p)[i]);
            const double q = std::exp((*log_q)[i]);
            if (!ds.empty()) ds[i] += f * (q - p);
            if (!dt.empty())
              dt[i] += f * p * ((*log_p)[i] - (*log_q)[i] - (*row_kl)[static_cast<std::size_t>(r)]);
          }
      });
}

Tensor linear(Tape &tape, const Tensor &x, const Tensor &w, const Tensor &b) {
  return add(tape, matmul(tape, x, w), b);
}

}  // namespace vesper::ops
