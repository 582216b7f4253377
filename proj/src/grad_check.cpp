// src/grad_check.cpp

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

#include "vesper/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vesper/errors.hpp"

namespace vesper {

namespace {

double evaluate(const ScalarFn &f) {
  Tape tape;
  Tensor out = f(tape);
  if (out.numel() != 1) throw ContractError("grad_check: function must return a scalar");
  return out.item();
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarFn &f, std::vector<Tensor> inputs, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  for (auto &t : inputs) {
    if (!t.is_leaf()) throw ContractError("grad_check: inputs must be leaf tensors");
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor out = f(tape);
    if (out.numel() != 1) throw ContractError("grad_check: function must return a scalar");
    tape.backward(out);
    for (auto &t : inputs) analytic.push_back(t.grad());
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate(f);
      values[i] = saved - eps;
      const double minus = evaluate(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = k;
        result.worst_index = static_cast<std::int64_t>(i);
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
    inputs[k].zero_grad();
  }
  return result;
}

}  // namespace vesper
