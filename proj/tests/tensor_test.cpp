// tests/tensor_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vesper/errors.hpp"
#include "vesper/grad_check.hpp"
#include "vesper/ops.hpp"
#include "vesper/tensor.hpp"

namespace vesper {
namespace {

constexpr double kGradTol = 1e-4;
constexpr double kEps = 1e-5;
constexpr int kSeeds = 20;

Tensor mat(Shape shape, std::vector<double> v) { return Tensor::from_values(shape, v); }

Tensor rnd(Shape shape, std::mt19937_64 &rng, double stddev = 1.0) {
  return Tensor::randn(std::move(shape), rng, stddev, DType::kF64, true);
}

// Projects any tensor to a scalar with fixed random weights so every output
// coordinate contributes a distinct amount to the checked gradient.
Tensor probe(Tape &tape, const Tensor &y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = Tensor::randn(y.shape(), rng, 1.0);
  auto flat = ops::reshape(tape, ops::mul(tape, y, w), {y.numel()});
  return ops::scale(tape, ops::mean(tape, flat, 0), static_cast<double>(y.numel()));
}

TEST(Matmul, IdentityAndHandCases) {
  Tape tape;
  auto a = mat({2, 2}, {1, 2, 3, 4});
  auto eye = mat({2, 2}, {1, 0, 0, 1});
  auto c = ops::matmul(tape, a, eye);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 2, 3, 4}));
  auto d = ops::matmul(tape, mat({1, 2}, {1, 2}), mat({2, 1}, {3, 4}));
  EXPECT_DOUBLE_EQ(d.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    ops::matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError &e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = rnd({3, 4}, rng);
    auto b = rnd({4, 2}, rng);
    double err = grad_check(
        [&](Tape &t) { return probe(t, ops::matmul(t, a, b), seed); }, {a, b}, kEps);
    EXPECT_LT(err, kGradTol) << "seed " << seed;
  }
}

TEST(Softmax, ClosedFormCases) {
  Tape tape;
  auto s = ops::softmax(tape, mat({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  auto big = ops::softmax(tape, mat({2}, {1000, 1000}));
  EXPECT_DOUBLE_EQ(big.at(0), 0.5);
  EXPECT_DOUBLE_EQ(big.at(1), 0.5);
  auto r = ops::softmax(tape, mat({2}, {std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(r.at(0), 0.25, 1e-15);
  EXPECT_NEAR(r.at(1), 0.75, 1e-15);
}

TEST(Softmax, RowsAreDistributions) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    Tape tape;
    auto y = ops::softmax(tape, Tensor::randn({5, 7}, rng, 10.0));
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        EXPECT_GE(y.at(r, j), 0.0);
        s += y.at(r, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(LayerNorm, NormalizesRowsBeforeAffine) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    Tape tape;
    auto x = Tensor::randn({4, 16}, rng, 3.0);
    auto y = ops::layer_norm(tape, x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
    for (int r = 0; r < 4; ++r) {
      double mu = 0.0, var = 0.0;
      for (int j = 0; j < 16; ++j) mu += y.at(r, j);
      mu /= 16;
      for (int j = 0; j < 16; ++j) var += (y.at(r, j) - mu) * (y.at(r, j) - mu);
      var /= 16;
      EXPECT_LT(std::abs(mu), 1e-6);
      EXPECT_NEAR(var, 1.0, 1e-4);
    }
  }
}

TEST(Backward, AnalyticScalarDerivatives) {
  auto x = Tensor::from_values({1}, {3.0}, DType::kF64, true);
  Tape tape;
  tape.backward(ops::mul(tape, x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  auto a = Tensor::from_values({1}, {2.0}, DType::kF64, true);
  auto b = Tensor::from_values({1}, {5.0}, DType::kF64, true);
  Tape tape2;
  tape2.backward(ops::mul(tape2, a, b));
  EXPECT_DOUBLE_EQ(a.grad()[0], 5.0);
  EXPECT_DOUBLE_EQ(b.grad()[0], 2.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Tensor::from_values({1}, {3.0}, DType::kF64, true);
  Tape tape;
  auto y = ops::mul(tape, x, x);
  tape.backward(y);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, ZeroGradBetweenCallsReproduces) {
  std::mt19937_64 rng(7);
  auto x = rnd({3, 5}, rng);
  auto w = rnd({5, 4}, rng);
  Tape tape;
  auto loss = ops::mse(tape, ops::gelu(tape, ops::matmul(tape, x, w)), Tensor::zeros({3, 4}));
  tape.backward(loss);
  auto first = w.grad();
  w.zero_grad();
  x.zero_grad();
  tape.backward(loss);
  EXPECT_EQ(first, w.grad());
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = Tensor::from_values({2}, {1.0, 2.0}, DType::kF64, true);
  Tape tape;
  auto y = ops::scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, VisitsOpsInReverseExecutionOrder) {
  auto x = Tensor::from_values({2}, {1.0, -2.0}, DType::kF64, true);
  Tape tape;
  auto y = ops::relu(tape, ops::scale(tape, x, 3.0));
  auto loss = ops::mean(tape, y, 0);
  EXPECT_EQ(tape.op_names(), (std::vector<std::string>{"scale", "relu", "mean"}));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.5);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Backward, CompositeLayerNormLinearMse) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto x = rnd({4, 8}, rng);
    auto gain = rnd({8}, rng);
    auto bias = rnd({8}, rng);
    auto w = rnd({8, 3}, rng);
    auto b = rnd({3}, rng);
    auto target = Tensor::randn({4, 3}, rng, 1.0);
    double err = grad_check(
        [&](Tape &t) {
          auto h = ops::layer_norm(t, x, gain, bias);
          return ops::mse(t, ops::linear(t, h, w, b), target);
        },
        {x, gain, bias, w, b}, kEps);
    EXPECT_LT(err, kGradTol) << "seed " << seed;
  }
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  auto x = Tensor::from_values({3}, {1, 2, 3});
  double err = grad_check([](Tape &) { return Tensor::scalar(4.0); }, {x}, 1e-5);
  EXPECT_EQ(err, 0.0);
}

TEST(GradCheck, LinearLayer) {
  std::mt19937_64 rng(1);
  auto x = rnd({5, 6}, rng);
  auto w = rnd({6, 4}, rng);
  auto b = rnd({4}, rng);
  double err = grad_check([&](Tape &t) { return probe(t, ops::linear(t, x, w, b), 9); },
                          {x, w, b}, 1e-5);
  EXPECT_LT(err, kGradTol);
}

TEST(GradCheck, SoftmaxMseComposite) {
  std::mt19937_64 rng(2);
  auto x = rnd({3, 5}, rng);
  auto target = Tensor::randn({3, 5}, rng, 0.3);
  double err = grad_check([&](Tape &t) { return ops::mse(t, ops::softmax(t, x), target); },
                          {x}, 1e-5);
  EXPECT_LT(err, kGradTol);
}

TEST(GradCheck, NonScalarFunctionIsContractError) {
  auto x = Tensor::from_values({2}, {1, 2});
  EXPECT_THROW(grad_check([&](Tape &t) { return ops::scale(t, x, 2.0); }, {x}, 1e-5),
               ContractError);
  EXPECT_THROW(grad_check([&](Tape &t) { return ops::mean(t, x, 0); }, {x}, 0.0), ContractError);
}

// One finite-difference sweep per op, 20 seeds each.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, AllOpsMatchCentralDifferences) {
  const int seed = GetParam();
  std::mt19937_64 rng(1000 + seed);
  auto check = [&](const char *name, const ScalarFn &f, std::vector<Tensor> in) {
    auto r = grad_check_detailed(f, in, kEps);
    EXPECT_LT(r.max_relative_error, kGradTol)
        << name << " seed " << seed << " input " << r.worst_input << "[" << r.worst_index
        << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
  };

  auto a = rnd({3, 4}, rng);
  auto b = rnd({3, 4}, rng);
  auto bias = rnd({4}, rng);
  check("add", [&](Tape &t) { return probe(t, ops::add(t, a, b), seed); }, {a, b});
  check("add_bias", [&](Tape &t) { return probe(t, ops::add(t, a, bias), seed); }, {a, bias});
  check("sub", [&](Tape &t) { return probe(t, ops::sub(t, a, bias), seed); }, {a, bias});
  check("mul", [&](Tape &t) { return probe(t, ops::mul(t, a, b), seed); }, {a, b});
  check("scale", [&](Tape &t) { return probe(t, ops::scale(t, a, -1.7), seed); }, {a});
  check("relu", [&](Tape &t) { return probe(t, ops::relu(t, a), seed); }, {a});
  check("gelu", [&](Tape &t) { return probe(t, ops::gelu(t, a), seed); }, {a});
  check("softmax", [&](Tape &t) { return probe(t, ops::softmax(t, a), seed); }, {a});

  auto gain = rnd({4}, rng);
  check("layer_norm", [&](Tape &t) { return probe(t, ops::layer_norm(t, a, gain, bias), seed); },
        {a, gain, bias});

  auto sig = rnd({4, 23}, rng);
  auto w = rnd({6, 2, 5}, rng);
  ops::Conv1dOptions conv{.stride = 3, .groups = 2, .pad_left = 2, .pad_right = 3};
  check("conv1d", [&](Tape &t) { return probe(t, ops::conv1d(t, sig, w, conv), seed); }, {sig, w});

  auto cube = rnd({2, 3, 4}, rng);
  check("mean0", [&](Tape &t) { return probe(t, ops::mean(t, cube, 0), seed); }, {cube});
  check("mean1", [&](Tape &t) { return probe(t, ops::mean(t, cube, 1), seed); }, {cube});
  check("transpose", [&](Tape &t) { return probe(t, ops::transpose(t, a), seed); }, {a});
  check("reshape", [&](Tape &t) { return probe(t, ops::reshape(t, a, {2, 6}), seed); }, {a});
  auto c = rnd({3, 2}, rng);
  check("concat", [&](Tape &t) { return probe(t, ops::concat(t, {a, c, a}, 1), seed); }, {a, c});
  auto mk = rnd({4}, rng);
  std::vector<std::int64_t> rows{0, 2};
  check("row_replace", [&](Tape &t) { return probe(t, ops::row_replace(t, a, mk, rows), seed); },
        {a, mk});
  std::vector<std::int64_t> pick{2, 0, 2};
  check("gather_rows", [&](Tape &t) { return probe(t, ops::gather_rows(t, a, pick), seed); }, {a});
  check("slice_cols", [&](Tape &t) { return probe(t, ops::slice_cols(t, a, 1, 2), seed); }, {a});
  auto wts = rnd({2}, rng);
  check("weighted_sum",
        [&](Tape &t) { return probe(t, ops::weighted_sum(t, {a, b}, wts), seed); }, {a, b, wts});
  check("matmul", [&](Tape &t) { return probe(t, ops::matmul(t, a, ops::transpose(t, b)), seed); },
        {a, b});
  check("mse", [&](Tape &t) { return ops::mse(t, a, b); }, {a, b});
  std::vector<std::int64_t> labels{1, 3, 0};
  check("cross_entropy", [&](Tape &t) { return ops::cross_entropy(t, a, labels); }, {a});
  check("kl_div_softmax", [&](Tape &t) { return ops::kl_div_softmax(t, a, b); }, {a, b});
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, kSeeds));

TEST(Ops, DeterministicForward) {
  std::mt19937_64 rng(3);
  auto x = Tensor::randn({6, 8}, rng, 1.0);
  auto w = Tensor::randn({8, 8}, rng, 1.0);
  Tape t1, t2;
  auto y1 = ops::softmax(t1, ops::gelu(t1, ops::matmul(t1, x, w)));
  auto y2 = ops::softmax(t2, ops::gelu(t2, ops::matmul(t2, x, w)));
  EXPECT_TRUE(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

TEST(Ops, BroadcastOnlyOverLeadingAxes) {
  Tape tape;
  EXPECT_THROW(ops::add(tape, Tensor::zeros({3, 4}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(ops::mul(tape, Tensor::zeros({3, 4}), Tensor::zeros({4})), DimensionError);
  EXPECT_NO_THROW(ops::add(tape, Tensor::zeros({2, 3, 4}), Tensor::zeros({3, 4})));
}

TEST(Ops, NonFiniteOutputIsError) {
  Tape tape;
  auto x = Tensor::from_values({1}, {1e200});
  EXPECT_THROW(ops::mul(tape, x, x), NumericError);
}

TEST(Ops, RowReplaceContract) {
  Tape tape;
  auto x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
  auto mk = Tensor::from_values({2}, {9, 9});
  std::vector<std::int64_t> bad{3};
  EXPECT_THROW(ops::row_replace(tape, x, mk, bad), ContractError);
  std::vector<std::int64_t> one{1};
  auto y = ops::row_replace(tape, x, mk, one);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{1, 2, 9, 9, 5, 6}));
}

TEST(Ops, Float32ResultsAreRepresentable) {
  Tape tape;
  auto x = Tensor::from_values({2}, {0.1, 1.0 / 3.0}, DType::kF32);
  auto y = ops::scale(tape, x, 3.0);
  for (double v : y.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  EXPECT_THROW(ops::add(tape, x, Tensor::zeros({2})), ContractError);
}

TEST(Ops, ConstantInputsRecordNothing) {
  Tape tape;
  auto y = ops::gelu(tape, Tensor::zeros({2, 2}));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace vesper
