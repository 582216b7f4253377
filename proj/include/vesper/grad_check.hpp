// include/vesper/grad_check.hpp

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

#ifndef VESPER_GRAD_CHECK_HPP_
#define VESPER_GRAD_CHECK_HPP_

#include <functional>
#include <vector>

#include "vesper/tensor.hpp"

namespace vesper {

using ScalarFn = std::function<Tensor(Tape &)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares tape gradients of `f` against central differences
// (f(x+eps) - f(x-eps)) / 2eps for every coordinate of every tensor in
// `inputs`. Per coordinate the error is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// and the maximum is returned. `f` must build its graph from `inputs` on
// the tape it is handed and return a scalar. Inputs are left unchanged and
// their gradients zeroed.
GradCheckResult grad_check_detailed(const ScalarFn &f, std::vector<Tensor> inputs, double eps);

inline double grad_check(const ScalarFn &f, std::vector<Tensor> inputs, double eps) {
  return grad_check_detailed(f, std::move(inputs), eps).max_relative_error;
}

}  // namespace vesper

#endif  // VESPER_GRAD_CHECK_HPP_
