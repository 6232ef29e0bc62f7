// Copyright 2026 The QANA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "oracles.hpp"
#include "qana/ops.hpp"

using namespace qana;
using oracle::random_tensor;

namespace {

// Loss L = sum(r * f(x)) so dL/dy = r.
double weighted_sum(const TensorD& y, const TensorD& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Conv2d, IdentityAndZeroKernels) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 5, 4, 1}, rng);
  TensorD one({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(ops::conv2d(x, one), x);
  TensorD zero({3, 3, 1, 2}, 0.0);
  EXPECT_EQ(max_abs(ops::conv2d(x, zero)), 0.0);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({1, 4, 4, 1}, rng);
  auto k = random_tensor({3, 3, 1, 1}, rng);
  EXPECT_LT(oracle::max_rel_diff(ops::conv2d(x, k), oracle::conv2d(x, k, {}, 1, true)), 1e-12);
  auto x2 = random_tensor({2, 7, 5, 3}, rng);
  auto k2 = random_tensor({3, 2, 3, 4}, rng);
  std::vector<double> bias{0.1, -0.2, 0.3, 0.0};
  for (std::size_t stride : {1, 2, 3}) {
    EXPECT_LT(oracle::max_rel_diff(ops::conv2d(x2, k2, bias, stride, ops::Padding::same),
                                   oracle::conv2d(x2, k2, bias, stride, true)), 1e-12);
    EXPECT_LT(oracle::max_rel_diff(ops::conv2d(x2, k2, bias, stride, ops::Padding::valid),
                                   oracle::conv2d(x2, k2, bias, stride, false)), 1e-12);
  }
}

TEST(Conv2d, ShapeErrorNamesDimension) {
  TensorD x({1, 4, 4, 3});
  TensorD k({3, 3, 2, 1});
  try {
    ops::conv2d(x, k);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.dimension(), "input channels");
  }
  EXPECT_THROW(ops::conv2d(x, TensorD({3, 3, 3, 1}), {}, 0), Error);
}

TEST(Depthwise, IdentityZeroedChannelAndOnes) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({1, 6, 6, 2}, rng);
  EXPECT_EQ(ops::depthwise_conv2d(x, TensorD({1, 1, 2, 1}, 1.0)), x);

  auto k = random_tensor({3, 3, 2, 1}, rng);
  for (std::size_t i = 0; i < 9; ++i) k[i * 2] = 0.0;
  auto y = ops::depthwise_conv2d(x, k);
  auto ref = oracle::depthwise(x, k, 1, true);
  for (std::size_t i = 0; i < y.size(); i += 2) EXPECT_EQ(y[i], 0.0);
  EXPECT_LT(oracle::max_rel_diff(y, ref), 1e-12);

  TensorD c({1, 5, 5, 1}, 0.7);
  auto ones = ops::depthwise_conv2d(c, TensorD({3, 3, 1, 1}, 1.0));
  EXPECT_NEAR(ones.at(0, 2, 2, 0), 9 * 0.7, 1e-12);
}

TEST(Separable, CompositionAndShape) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({1, 4, 4, 6}, rng);
  auto dk = random_tensor({3, 3, 6, 1}, rng);
  auto pk = random_tensor({1, 1, 6, 5}, rng);
  auto y = ops::separable_conv2d(x, dk, pk);
  EXPECT_EQ(y, ops::conv2d(ops::depthwise_conv2d(x, dk), pk));
  auto ref = oracle::conv2d(oracle::depthwise(x, dk, 1, true), pk, {}, 1, true);
  EXPECT_LT(oracle::max_rel_diff(y, ref), 1e-12);

  Tensor big({1, 4, 4, 128}, 0.5f);
  EXPECT_EQ(ops::separable_conv2d(big, Tensor({3, 3, 128, 1}, 0.1f), Tensor({1, 1, 128, 256}, 0.01f)).shape(),
            (Shape{1, 4, 4, 256}));
}

TEST(BatchNorm, IdentityInferAndTrainStatistics) {
  std::mt19937_64 rng(11);
  auto x = random_tensor({4, 3, 3, 2}, rng, -2.0, 5.0);
  std::vector<double> g{1, 1}, b{0, 0}, m{0, 0}, v{1, 1};
  auto y = ops::batch_norm_infer<double>(x, g, b, m, v, 1e-3);
  EXPECT_LT(max_abs_diff(y, x), 5 * 1e-3 / 2 * 5.0);

  std::vector<double> rm{0, 0}, rv{1, 1};
  auto yt = ops::batch_norm_train<double>(x, g, b, rm, rv, 0.9, 1e-5);
  // Two-pass oracle.
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0, ymean = 0, yvar = 0;
    const std::size_t n = x.size() / 2;
    for (std::size_t i = c; i < x.size(); i += 2) mean += x[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = c; i < x.size(); i += 2) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(n);
    for (std::size_t i = c; i < x.size(); i += 2) {
      EXPECT_NEAR(yt[i], (x[i] - mean) / std::sqrt(var + 1e-5), 1e-12);
      ymean += yt[i];
    }
    ymean /= static_cast<double>(n);
    for (std::size_t i = c; i < x.size(); i += 2) yvar += (yt[i] - ymean) * (yt[i] - ymean);
    yvar /= static_cast<double>(n);
    EXPECT_NEAR(ymean, 0.0, 1e-12);
    EXPECT_NEAR(yvar, 1.0, 1e-4);
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * var, 1e-12);
  }
  EXPECT_THROW(ops::batch_norm_infer<double>(x, g, b, m, v, 0.0), Error);
}

TEST(Activations, ClampValuesAndRanges) {
  Tensor x({5}, std::vector<float>{7.2f, -3.f, 0.4f, 0.f, 1e30f});
  auto r = ops::relu6(x);
  EXPECT_EQ(r[0], 6.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(ops::bounded_unit(x)[2], 0.4f);
  auto s = ops::sigmoid(x);
  EXPECT_EQ(s[3], 0.5f);
  const float extremes[] = {-std::numeric_limits<float>::max(), -1e6f, 1e6f, std::numeric_limits<float>::max()};
  for (float v : extremes) {
    const float sv = ops::sigmoid_scalar(v);
    EXPECT_GT(sv, 0.0f);
    EXPECT_LT(sv, 1.0f);
    const float b = ops::bounded_unit(Tensor({1}, v))[0];
    EXPECT_GE(b, 0.0f);
    EXPECT_LE(b, 1.0f);
  }
  // Subgradient is zero exactly at the corners.
  TensorD corners({4}, std::vector<double>{0.0, 6.0, 0.0, 1.0});
  TensorD ones({4}, 1.0);
  auto d6 = ops::relu6_backward(corners, ones);
  EXPECT_EQ(d6[0], 0.0);
  EXPECT_EQ(d6[1], 0.0);
  auto db = ops::bounded_unit_backward(corners, ones);
  EXPECT_EQ(db[2], 0.0);
  EXPECT_EQ(db[3], 0.0);
}

TEST(MaxPool, ValuesTieBreakAndComposition) {
  TensorD x({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(ops::maxpool2d(x)[0], 4.0);
  TensorD c({1, 4, 4, 2}, 3.0);
  std::vector<std::size_t> arg;
  auto yc = ops::maxpool2d(c, 2, 2, &arg);
  for (double v : yc.data()) EXPECT_EQ(v, 3.0);
  EXPECT_EQ(arg[0], 0u);  // first index wins ties

  std::mt19937_64 rng(13);
  auto r = random_tensor({2, 8, 8, 3}, rng);
  EXPECT_EQ(ops::maxpool2d(r), oracle::maxpool(r, 2, 2));
  EXPECT_EQ(ops::maxpool2d(ops::maxpool2d(r)), ops::maxpool2d(r, 4, 4));
}

TEST(Dense, IdentityShapeAndOracle) {
  std::mt19937_64 rng(17);
  auto x = random_tensor({3, 4}, rng);
  TensorD eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  EXPECT_EQ(ops::dense(x, eye), x);
  Tensor flat({2, 4096}, 0.1f);
  EXPECT_EQ(ops::dense(flat, Tensor({7, 4096}, 0.01f)).shape(), (Shape{2, 7}));
  auto w = random_tensor({5, 4}, rng);
  std::vector<double> b{1, 2, 3, 4, 5};
  EXPECT_LT(oracle::max_rel_diff(ops::dense(x, w, b), oracle::dense(x, w, b)), 1e-12);
}

TEST(Dropout, IdentityCasesAndSurvivorFraction) {
  std::mt19937_64 rng(19);
  auto x = random_tensor({1000}, rng);
  EXPECT_EQ(ops::dropout(x, 0.0, ops::Mode::train, rng), x);
  EXPECT_EQ(ops::dropout(x, 0.7, ops::Mode::infer, rng), x);
  TensorD ones({100000}, 1.0);
  auto y = ops::dropout(ones, 0.5, ops::Mode::train, rng);
  std::size_t survivors = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      ++survivors;
      EXPECT_EQ(v, 2.0);
    }
  }
  const double sigma = std::sqrt(100000 * 0.25);
  EXPECT_LT(std::abs(static_cast<double>(survivors) - 50000.0), 3 * sigma);
  EXPECT_THROW(ops::dropout(x, 1.0, ops::Mode::train, rng), Error);
}

TEST(SpatialMean, ConstantAndSum) {
  TensorD c({2, 4, 4, 3}, 2.5);
  const auto mc = ops::spatial_mean(c);
  for (double v : mc.data()) EXPECT_DOUBLE_EQ(v, 2.5);
  std::mt19937_64 rng(23);
  auto x = random_tensor({1, 4, 4, 2}, rng);
  auto m = ops::spatial_mean(x);
  double sum0 = 0;
  for (std::size_t i = 0; i < x.size(); i += 2) sum0 += x[i];
  EXPECT_NEAR(m[0], sum0 / 16.0, 1e-14);
}

// ---------------------------------------------------------------------------
// finite-difference checks of every backward pass at 64-bit

TEST(Gradients, Conv2d) {
  std::mt19937_64 rng(29);
  for (std::size_t stride : {1, 2}) {
    auto x = random_tensor({2, 5, 5, 3}, rng);
    auto k = random_tensor({3, 3, 3, 2}, rng);
    std::vector<double> bias{0.3, -0.1};
    auto r = random_tensor({2, (5 + stride - 1) / stride, (5 + stride - 1) / stride, 2}, rng);
    auto g = ops::conv2d_backward(x, k, r, stride);
    auto f = [&] { return weighted_sum(ops::conv2d<double>(x, k, bias, stride), r); };
    EXPECT_LT(oracle::relative_error(to_vec(g.dx.data()), oracle::numeric_gradient(x.data(), f)), 1e-4);
    EXPECT_LT(oracle::relative_error(to_vec(g.dkernel.data()), oracle::numeric_gradient(k.data(), f)), 1e-4);
    EXPECT_LT(oracle::relative_error(g.dbias, oracle::numeric_gradient(bias, f)), 1e-4);
  }
}

TEST(Gradients, Depthwise) {
  std::mt19937_64 rng(31);
  auto x = random_tensor({2, 4, 5, 3}, rng);
  auto k = random_tensor({3, 3, 3, 1}, rng);
  auto r = random_tensor({2, 4, 5, 3}, rng);
  auto g = ops::depthwise_conv2d_backward(x, k, r);
  auto f = [&] { return weighted_sum(ops::depthwise_conv2d(x, k), r); };
  EXPECT_LT(oracle::relative_error(to_vec(g.dx.data()), oracle::numeric_gradient(x.data(), f)), 1e-4);
  EXPECT_LT(oracle::relative_error(to_vec(g.dkernel.data()), oracle::numeric_gradient(k.data(), f)), 1e-4);
}

TEST(Gradients, BatchNormTrainAndInfer) {
  std::mt19937_64 rng(37);
  auto x = random_tensor({3, 2, 2, 3}, rng, -1.0, 2.0);
  std::vector<double> gamma{1.2, 0.7, -0.4}, beta{0.1, 0.0, -0.3}, mean{0.2, -0.1, 0.0}, var{0.5, 1.5, 2.0};
  auto r = random_tensor(x.shape(), rng);
  for (bool train : {true, false}) {
    auto f = [&] {
      if (train) return weighted_sum(ops::batch_norm_train<double>(x, gamma, beta, {}, {}, 0.9, 1e-3), r);
      return weighted_sum(ops::batch_norm_infer<double>(x, gamma, beta, mean, var, 1e-3), r);
    };
    ops::BatchNormCache<double> cache;
    if (train)
      ops::batch_norm_train<double>(x, gamma, beta, {}, {}, 0.9, 1e-3, &cache);
    else
      ops::batch_norm_infer<double>(x, gamma, beta, mean, var, 1e-3, &cache);
    auto g = ops::batch_norm_backward<double>(r, gamma, cache);
    EXPECT_LT(oracle::relative_error(to_vec(g.dx.data()), oracle::numeric_gradient(x.data(), f)), 1e-4);
    EXPECT_LT(oracle::relative_error(g.dgamma, oracle::numeric_gradient(gamma, f)), 1e-4);
    EXPECT_LT(oracle::relative_error(g.dbeta, oracle::numeric_gradient(beta, f)), 1e-4);
  }
}

TEST(Gradients, DenseMaxPoolSpatialMeanActivations) {
  std::mt19937_64 rng(41);
  auto x = random_tensor({3, 6}, rng);
  auto w = random_tensor({4, 6}, rng);
  std::vector<double> b{0.1, 0.2, 0.3, 0.4};
  auto r = random_tensor({3, 4}, rng);
  auto g = ops::dense_backward(x, w, r);
  auto f = [&] { return weighted_sum(ops::dense<double>(x, w, b), r); };
  EXPECT_LT(oracle::relative_error(to_vec(g.dx.data()), oracle::numeric_gradient(x.data(), f)), 1e-4);
  EXPECT_LT(oracle::relative_error(to_vec(g.dweight.data()), oracle::numeric_gradient(w.data(), f)), 1e-4);
  EXPECT_LT(oracle::relative_error(g.dbias, oracle::numeric_gradient(b, f)), 1e-4);

  auto p = random_tensor({2, 4, 4, 2}, rng);
  auto rp = random_tensor({2, 2, 2, 2}, rng);
  std::vector<std::size_t> arg;
  ops::maxpool2d(p, 2, 2, &arg);
  auto dp = ops::maxpool2d_backward(p.shape(), arg, rp);
  auto fp = [&] { return weighted_sum(ops::maxpool2d(p), rp); };
  EXPECT_LT(oracle::relative_error(to_vec(dp.data()), oracle::numeric_gradient(p.data(), fp)), 1e-4);

  auto rm = random_tensor({2, 2}, rng);
  auto dm = ops::spatial_mean_backward(p.shape(), rm);
  auto fm = [&] { return weighted_sum(ops::spatial_mean(p), rm); };
  EXPECT_LT(oracle::relative_error(to_vec(dm.data()), oracle::numeric_gradient(p.data(), fm)), 1e-4);

  // Evaluation points kept away from the clamp corners.
  auto a = random_tensor({50}, rng, -2.0, 8.0);
  for (auto& v : a.data())
    for (double corner : {0.0, 1.0, 6.0})
      if (std::abs(v - corner) < 1e-3) v += 0.01;
  auto ra = random_tensor({50}, rng);
  auto check = [&](auto fwd, auto bwd) {
    auto fa = [&] { return weighted_sum(fwd(a), ra); };
    EXPECT_LT(oracle::relative_error(to_vec(bwd().data()), oracle::numeric_gradient(a.data(), fa)), 1e-4);
  };
  check([](const TensorD& t) { return ops::relu6(t); }, [&] { return ops::relu6_backward(a, ra); });
  check([](const TensorD& t) { return ops::bounded_unit(t); }, [&] { return ops::bounded_unit_backward(a, ra); });
  check([](const TensorD& t) { return ops::relu(t); }, [&] { return ops::relu_backward(a, ra); });
  check([](const TensorD& t) { return ops::sigmoid(t); }, [&] { return ops::sigmoid_backward(ops::sigmoid(a), ra); });
}

TEST(Gradients, SoftmaxCrossEntropy) {
  std::mt19937_64 rng(43);
  auto logits = random_tensor({4, 7}, rng, -3.0, 3.0);
  std::vector<int> labels{0, 3, 6, 2};
  auto res = ops::softmax_cross_entropy<double>(logits, labels);
  auto f = [&] { return ops::softmax_cross_entropy<double>(logits, labels).loss; };
  EXPECT_LT(oracle::relative_error(to_vec(res.dlogits.data()), oracle::numeric_gradient(logits.data(), f)), 1e-6);
}
