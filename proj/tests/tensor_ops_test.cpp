/* Copyright 2026 The remdet-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "remdet/gradcheck.hpp"
#include "remdet/ops.hpp"
#include "remdet/tape.hpp"
#include "remdet/threading.hpp"
#include "test_util.hpp"

namespace remdet {
namespace {

using testing::naive_conv;
using testing::ulp_distance;

TensorD T1(Shape s, std::vector<double> v) { return TensorD::from_data(std::move(s), std::move(v)); }

// ---- Tensor ---------------------------------------------------------------

TEST(Tensor, DataLengthMatchesShape) {
  TensorD t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_REMDET_ERROR(TensorD::from_data({2, 2}, {1, 2, 3}), ErrorCode::kShapeMismatch);
}

TEST(Tensor, StrictRejectsNonFinite) {
  EXPECT_REMDET_ERROR(TensorD::from_data({2}, {1.0, std::nan("")}, true), ErrorCode::kNonFinite);
  EXPECT_REMDET_ERROR(TensorF::from_data({1}, {INFINITY}, true), ErrorCode::kNonFinite);
  EXPECT_NO_THROW(TensorD::from_data({2}, {1.0, std::nan("")}, false));
}

TEST(Tensor, RankAndExtentsValidated) {
  EXPECT_REMDET_ERROR(TensorD({1, 1, 1, 1, 1}), ErrorCode::kShapeMismatch);
  EXPECT_REMDET_ERROR(TensorD({2, 0}), ErrorCode::kShapeMismatch);
}

TEST(Tensor, SeededRandomIsReproducible) {
  Rng a(5), b(5);
  EXPECT_EQ(random_normal<double>({3, 4}, a), random_normal<double>({3, 4}, b));
}

// ---- conv2d ---------------------------------------------------------------

TEST(Conv2d, SingleMultiplyAdd) {
  const auto y = conv2d<double>(T1({1, 1, 1, 1}, {2}), T1({1, 1, 1, 1}, {3}), std::vector<double>{1.0},
                                ConvSpec::pointwise(1, 1));
  EXPECT_EQ(y[0], 7.0);
}

TEST(Conv2d, IdentityPointwise) {
  Rng rng(1);
  const auto x = random_normal<double>({2, 3, 4, 5}, rng);
  TensorD w({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 1.0;
  EXPECT_EQ(conv2d<double>(x, w, {}, ConvSpec::pointwise(3, 3)), x);
}

TEST(Conv2d, DepthwiseOnesBorderCounts) {
  const TensorD x({1, 1, 3, 3}, 1.0);
  const TensorD w({1, 1, 3, 3}, 1.0);
  const auto y = conv2d<double>(x, w, {}, ConvSpec::depthwise(1, 3));
  const auto oracle = naive_conv<double>(x, w, {}, 1, 1, 1);
  EXPECT_EQ(y, oracle);
  const std::vector<double> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(y.vec(), expected);
}

struct ConvCase {
  ConvSpec spec;
  std::int64_t n, h, w;
};

std::vector<ConvCase> conv_cases() {
  return {
      {{3, 5, 3, 3, 1, 1, 1}, 2, 7, 6},  {{4, 4, 3, 3, 2, 1, 4}, 1, 8, 8}, {{8, 8, 1, 1, 1, 0, 2}, 2, 4, 4},
      {{6, 9, 3, 2, 2, 0, 3}, 1, 9, 7},  {{2, 4, 5, 5, 1, 2, 1}, 1, 6, 6}, {{16, 16, 3, 3, 1, 1, 16}, 2, 5, 5},
      {{3, 16, 3, 3, 2, 1, 1}, 1, 64, 64},
  };
}

TEST(Conv2d, FastPathMatchesReferenceAndOracle) {
  Rng rng(2);
  for (const auto& c : conv_cases()) {
    const auto x = random_normal<double>({c.n, c.spec.in_channels, c.h, c.w}, rng);
    const auto w = random_normal<double>(c.spec.weight_shape(), rng);
    const auto b = random_normal<double>({c.spec.out_channels}, rng);
    const auto fast = conv2d<double>(x, w, b.vec(), c.spec);
    const auto ref = conv2d_reference<double>(x, w, b.vec(), c.spec);
    const auto oracle = naive_conv<double>(x, w, b.vec(), c.spec.stride, c.spec.padding, c.spec.groups);
    ASSERT_EQ(fast.shape(), oracle.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i) {
      EXPECT_LE(ulp_distance(fast[i], ref[i]), 4);
      EXPECT_LE(ulp_distance(fast[i], oracle[i]), 4);
    }
  }
}

TEST(Conv2d, CountingExecutorMatchesValuesAndFormula) {
  Rng rng(3);
  for (const auto& c : conv_cases()) {
    const auto x = random_normal<double>({c.n, c.spec.in_channels, c.h, c.w}, rng);
    const auto w = random_normal<double>(c.spec.weight_shape(), rng);
    std::uint64_t mults = 0;
    const auto y = conv2d_counting<double>(x, w, {}, c.spec, mults);
    const auto oracle = naive_conv<double>(x, w, {}, c.spec.stride, c.spec.padding, c.spec.groups);
    EXPECT_LE(max_abs_diff(y, oracle), 1e-12);
    const std::uint64_t expected = static_cast<std::uint64_t>(c.n * c.spec.in_channels / c.spec.groups *
                                                              c.spec.out_channels * c.spec.kernel_h *
                                                              c.spec.kernel_w * y.dim(2) * y.dim(3));
    EXPECT_EQ(mults, expected);
  }
}

TEST(Conv2d, LinearInInput) {
  Rng rng(4);
  const ConvSpec spec{4, 6, 3, 3, 1, 1, 2};
  const auto x = random_normal<double>({2, 4, 6, 6}, rng);
  const auto w = random_normal<double>(spec.weight_shape(), rng);
  const auto base = conv2d<double>(x, w, {}, spec);
  for (double alpha : {-1.0, 0.5, 2.0}) {
    TensorD xs = x;
    for (auto& v : xs.data()) v *= alpha;
    const auto y = conv2d<double>(xs, w, {}, spec);
    for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_LE(ulp_distance(y[i], alpha * base[i]), 4) << alpha;
  }
}

TEST(Conv2d, TranslationEquivariantInInterior) {
  Rng rng(5);
  const ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
  const std::int64_t h = 8, w = 8;
  auto x = random_normal<double>({1, 2, h, w}, rng);
  for (std::int64_t c = 0; c < 2; ++c) {
    for (std::int64_t i = 0; i < h; ++i) x.at(0, c, i, w - 1) = 0.0;  // room to shift right
  }
  TensorD shifted({1, 2, h, w});
  for (std::int64_t c = 0; c < 2; ++c) {
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j + 1 < w; ++j) shifted.at(0, c, i, j + 1) = x.at(0, c, i, j);
    }
  }
  const auto wt = random_normal<double>(spec.weight_shape(), rng);
  const auto a = conv2d<double>(x, wt, {}, spec);
  const auto b = conv2d<double>(shifted, wt, {}, spec);
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t i = 1; i + 1 < h; ++i) {
      for (std::int64_t j = 2; j + 1 < w; ++j) EXPECT_EQ(b.at(0, c, i, j), a.at(0, c, i, j - 1));
    }
  }
}

TEST(Conv2d, Errors) {
  const TensorD x({1, 3, 4, 4});
  EXPECT_REMDET_ERROR(conv2d<double>(x, TensorD({2, 2, 1, 1}), {}, ConvSpec::pointwise(2, 2)),
                      ErrorCode::kShapeMismatch);
  EXPECT_REMDET_ERROR(conv2d<double>(x, TensorD({2, 3, 3, 3}), {}, ConvSpec::pointwise(3, 2)),
                      ErrorCode::kShapeMismatch);
  EXPECT_REMDET_ERROR(conv2d<double>(x, TensorD({2, 3, 7, 7}), {}, ConvSpec{3, 2, 7, 7, 1, 1, 1}),
                      ErrorCode::kNonIntegralOutputExtent);
  EXPECT_REMDET_ERROR((ConvSpec{3, 4, 1, 1, 1, 0, 2}.validate()), ErrorCode::kShapeMismatch);
}

TEST(Conv2d, ThreadCountDoesNotChangeBits) {
  Rng rng(6);
  const ConvSpec spec{8, 12, 3, 3, 1, 1, 1};
  const auto x = random_normal<float>({2, 8, 9, 9}, rng);
  const auto w = random_normal<float>(spec.weight_shape(), rng);
  const auto one = conv2d<float>(x, w, {}, spec);
  set_num_threads(3);
  const auto three = conv2d<float>(x, w, {}, spec);
  set_num_threads(1);
  EXPECT_EQ(one, three);
  EXPECT_EQ(one, conv2d<float>(x, w, {}, spec));
}

// ---- conv2d VJP -----------------------------------------------------------

TEST(Conv2dVjp, ZeroGradGivesZeros) {
  Rng rng(7);
  const ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
  const auto x = random_normal<double>({1, 2, 5, 5}, rng);
  const auto w = random_normal<double>(spec.weight_shape(), rng);
  const auto g = conv2d_vjp<double>(x, w, true, spec, TensorD({1, 3, 5, 5}));
  for (double v : g.grad_x.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.grad_w.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.grad_b) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.grad_x.shape(), x.shape());
  EXPECT_EQ(g.grad_w.shape(), w.shape());
  EXPECT_EQ(g.grad_b.size(), 3u);
}

TEST(Conv2dVjp, IdentityRoutesGradient) {
  Rng rng(8);
  TensorD w({2, 2, 1, 1});
  w.at(0, 0, 0, 0) = w.at(1, 1, 0, 0) = 1.0;
  const auto x = random_normal<double>({1, 2, 3, 3}, rng);
  const auto go = random_normal<double>({1, 2, 3, 3}, rng);
  Tape<double> tape;
  const Var xv = tape.leaf(x, true);
  const Var y = ad::conv2d(tape, xv, tape.leaf(w, true), std::nullopt, ConvSpec::pointwise(2, 2));
  EXPECT_EQ(tape.conv2d_vjp(y, go).grad_x, go);
}

TEST(Conv2dVjp, DepthwiseMatchesFiniteDifferences) {
  Rng rng(9);
  const ConvSpec spec = ConvSpec::depthwise(4, 3);
  const auto x = random_normal<double>({1, 4, 6, 6}, rng);
  const auto w = random_normal<double>(spec.weight_shape(), rng);
  const auto b = random_normal<double>({4}, rng);
  const auto r = random_normal<double>({1, 4, 6, 6}, rng);
  const auto dot = [&](const TensorD& y) { return std::inner_product(y.vec().begin(), y.vec().end(), r.vec().begin(), 0.0); };
  const auto g = conv2d_vjp<double>(x, w, true, spec, r);
  EXPECT_LE(relative_error(g.grad_x, finite_diff_scaled<double>([&](const TensorD& p) { return dot(conv2d<double>(p, w, b.vec(), spec)); }, x)), 1e-5);
  EXPECT_LE(relative_error(g.grad_w, finite_diff_scaled<double>([&](const TensorD& p) { return dot(conv2d<double>(x, p, b.vec(), spec)); }, w)), 1e-5);
  const auto gb = TensorD::from_data({4}, g.grad_b);
  EXPECT_LE(relative_error(gb, finite_diff_scaled<double>([&](const TensorD& p) { return dot(conv2d<double>(x, w, p.vec(), spec)); }, b)), 1e-5);
}

TEST(Conv2dVjp, NonConvNodeIsTapeCorrupt) {
  Tape<double> tape;
  const Var a = tape.leaf(TensorD({1, 1, 2, 2}, 1.0), true);
  const Var s = ad::activation(tape, a, Act::kSiLU);
  EXPECT_REMDET_ERROR(tape.conv2d_vjp(s, TensorD({1, 1, 2, 2})), ErrorCode::kTapeCorrupt);
}

// ---- batch norm -----------------------------------------------------------

TEST(BatchNormInfer, IdentityParameterizations) {
  Rng rng(10);
  const auto x = random_normal<double>({2, 3, 4, 4}, rng);
  BatchNormParams<double> bn = BatchNormParams<double>::identity(3);
  bn.eps = 0.0;
  EXPECT_EQ(batchnorm_infer(x, bn.view()), x);

  BatchNormParams<double> c = BatchNormParams<double>::identity(3);
  c.eps = 1e-3;
  c.running_mean = {0.3, -1.2, 2.0};
  c.running_var = {0.5, 1.5, 3.0};
  for (std::size_t i = 0; i < 3; ++i) {
    c.gamma[i] = std::sqrt(c.running_var[i] + c.eps);
    c.beta[i] = c.running_mean[i];
  }
  EXPECT_LE(max_abs_diff(batchnorm_infer(x, c.view()), x), 1e-14);
}

TEST(BatchNormInfer, MatchesScalarLoop) {
  Rng rng(11);
  const auto x = random_normal<double>({2, 3, 3, 5}, rng);
  BatchNormParams<double> bn = BatchNormParams<double>::identity(3);
  for (std::size_t i = 0; i < 3; ++i) {
    bn.gamma[i] = rng.uniform(0.5, 2);
    bn.beta[i] = rng.normal();
    bn.running_mean[i] = rng.normal();
    bn.running_var[i] = rng.uniform(0.1, 3);
  }
  const auto y = batchnorm_infer(x, bn.view());
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const auto k = static_cast<std::size_t>(c);
      for (std::int64_t i = 0; i < 3; ++i) {
        for (std::int64_t j = 0; j < 5; ++j) {
          const double want = bn.gamma[k] * (x.at(n, c, i, j) - bn.running_mean[k]) /
                                  std::sqrt(bn.running_var[k] + bn.eps) +
                              bn.beta[k];
          EXPECT_EQ(y.at(n, c, i, j), want);
        }
      }
    }
  }
  EXPECT_REMDET_ERROR(batchnorm_infer(TensorD({1, 2, 2, 2}), bn.view()), ErrorCode::kShapeMismatch);
}

TEST(BatchNormTrain, ConstantChannelGivesBeta) {
  BatchNormParams<double> bn = BatchNormParams<double>::identity(2);
  bn.eps = 1e-5;
  bn.beta = {0.25, -3.0};
  TensorD x({2, 2, 3, 3}, 4.0);
  const auto y = batchnorm_train(x, bn);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], i % 18 < 9 ? 0.25 : -3.0);
}

TEST(BatchNormTrain, MomentumOneCopiesBatchStats) {
  Rng rng(12);
  const auto x = random_normal<double>({3, 2, 4, 4}, rng);
  BatchNormParams<double> bn = BatchNormParams<double>::identity(2);
  bn.momentum = 1.0;
  batchnorm_train(x, bn);
  for (std::int64_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    const double m = 3 * 16;
    for (std::int64_t n = 0; n < 3; ++n) {
      for (std::int64_t i = 0; i < 16; ++i) sum += x[(n * 2 + c) * 16 + i];
    }
    const double mean = sum / m;
    for (std::int64_t n = 0; n < 3; ++n) {
      for (std::int64_t i = 0; i < 16; ++i) sq += (x[(n * 2 + c) * 16 + i] - mean) * (x[(n * 2 + c) * 16 + i] - mean);
    }
    EXPECT_NEAR(bn.running_mean[static_cast<std::size_t>(c)], mean, 1e-14);
    EXPECT_NEAR(bn.running_var[static_cast<std::size_t>(c)], sq / (m - 1), 1e-13);
  }
}

TEST(BatchNormTrain, NormalizesRandomBatch) {
  Rng rng(13);
  auto x = random_normal<double>({4, 3, 5, 5}, rng, 3.0);
  for (auto& v : x.data()) v += 1.5;
  BatchNormParams<double> bn = BatchNormParams<double>::identity(3);
  const auto y = batchnorm_train(x, bn);
  for (std::int64_t c = 0; c < 3; ++c) {
    // Biased variance of the input channel; the output variance is v/(v+eps).
    double xs = 0, xq = 0;
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t i = 0; i < 25; ++i) xs += x[(n * 3 + c) * 25 + i];
    }
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t i = 0; i < 25; ++i) xq += std::pow(x[(n * 3 + c) * 25 + i] - xs / 100, 2);
    }
    const double v = xq / 100;
    double sum = 0, sq = 0;
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t i = 0; i < 25; ++i) sum += y[(n * 3 + c) * 25 + i];
    }
    const double mean = sum / 100;
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t i = 0; i < 25; ++i) sq += std::pow(y[(n * 3 + c) * 25 + i] - mean, 2);
    }
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 100, v / (v + bn.eps), 1e-12);
  }
}

TEST(BatchNormTrain, DegenerateBatch) {
  BatchNormParams<double> bn = BatchNormParams<double>::identity(2);
  EXPECT_REMDET_ERROR(batchnorm_train(TensorD({1, 2, 1, 1}), bn), ErrorCode::kDegenerateBatch);
  EXPECT_NO_THROW(batchnorm_train(TensorD({2, 2, 1, 1}), bn));
}

// ---- activations ----------------------------------------------------------

TEST(Activation, ClosedForms) {
  EXPECT_EQ(silu(0.0), 0.0);
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(silu(1.0), 0.7310585786300049, 1e-15);
  const long double one = 1.0L;
  const long double want = 0.5L * one * (1.0L + std::erf(one / std::sqrt(2.0L)));
  EXPECT_NEAR(gelu(1.0), static_cast<double>(want), 1e-12);
  const TensorD x = T1({3}, {-1.5, 0.0, 2.0});
  EXPECT_EQ(activation(x, Act::kNone), x);
}

// ---- elementwise ----------------------------------------------------------

TEST(Elementwise, ZerosAndSymmetry) {
  Rng rng(14);
  const auto a = random_normal<double>({2, 3, 2, 2}, rng);
  const auto b = random_normal<double>({2, 3, 2, 2}, rng);
  const TensorD z(a.shape());
  const auto prod = ew_mul(a, z);
  for (double v : prod.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(ew_add(a, z), a);
  EXPECT_EQ(ew_mul(a, b), ew_mul(b, a));
  EXPECT_REMDET_ERROR(ew_mul(a, TensorD({2, 3, 2, 1})), ErrorCode::kShapeMismatch);
  EXPECT_REMDET_ERROR(ew_add(a, TensorD({2, 3, 4})), ErrorCode::kShapeMismatch);
}

TEST(Elementwise, ProductRule) {
  Tape<double> tape;
  const Var a = tape.leaf(T1({1}, {2.0}), true);
  const Var b = tape.leaf(T1({1}, {3.0}), true);
  tape.backward(ad::mul(tape, a, b));
  EXPECT_EQ(tape.grad(a)[0], 3.0);
  EXPECT_EQ(tape.grad(b)[0], 2.0);
}

// ---- split / concat -------------------------------------------------------

TEST(SplitConcat, Roundtrip) {
  Rng rng(15);
  const auto x = random_normal<double>({1, 4, 2, 2}, rng);
  const std::int64_t halves[] = {2, 2};
  const auto parts = split_channels<double>(x, halves);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(concat_channels<double>(parts), x);
  const std::int64_t all[] = {4};
  const auto one = split_channels<double>(x, all);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], x);
  const std::int64_t bad[] = {1, 2};
  EXPECT_REMDET_ERROR(split_channels<double>(x, bad), ErrorCode::kSizeSumMismatch);
}

TEST(SplitConcat, PermutedThreeWay) {
  Rng rng(16);
  const auto x = random_normal<double>({2, 6, 3, 2}, rng);
  const std::int64_t sizes[] = {1, 3, 2};
  const auto parts = split_channels<double>(x, sizes);
  // Each channel of each part is where index bookkeeping says it should be.
  std::int64_t base = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::int64_t n = 0; n < 2; ++n) {
      for (std::int64_t c = 0; c < sizes[p]; ++c) {
        for (std::int64_t i = 0; i < 3; ++i) {
          for (std::int64_t j = 0; j < 2; ++j) EXPECT_EQ(parts[p].at(n, c, i, j), x.at(n, base + c, i, j));
        }
      }
    }
    base += sizes[p];
  }
  const std::vector<TensorD> permuted{parts[2], parts[0], parts[1]};
  const auto cat = concat_channels<double>(permuted);
  const std::int64_t psizes[] = {2, 1, 3};
  const auto back = split_channels<double>(cat, psizes);
  const std::vector<TensorD> restored{back[1], back[2], back[0]};
  EXPECT_EQ(concat_channels<double>(restored), x);
}

// ---- patch merge ----------------------------------------------------------

TEST(PatchMerge, DefinitionalOrdering) {
  const auto y = patch_merge(T1({1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 4, 1, 1}));
  EXPECT_EQ(y.vec(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(PatchMerge, IndexOracleAndInverse) {
  Rng rng(17);
  const auto x = random_normal<double>({2, 8, 6, 6}, rng);
  const auto y = patch_merge(x);
  ASSERT_EQ(y.shape(), (Shape{2, 32, 3, 3}));
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 8; ++c) {
      for (std::int64_t dy = 0; dy < 2; ++dy) {
        for (std::int64_t dx = 0; dx < 2; ++dx) {
          for (std::int64_t i = 0; i < 3; ++i) {
            for (std::int64_t j = 0; j < 3; ++j) {
              EXPECT_EQ(y.at(n, 4 * c + 2 * dy + dx, i, j), x.at(n, c, 2 * i + dy, 2 * j + dx));
            }
          }
        }
      }
    }
  }
  auto a = x.vec(), b = y.vec();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(patch_split(y), x);
}

TEST(PatchMerge, Errors) {
  EXPECT_REMDET_ERROR(patch_merge(TensorD({1, 1, 3, 2})), ErrorCode::kOddSpatialExtent);
  EXPECT_REMDET_ERROR(patch_merge(TensorD({1, 1, 2, 5})), ErrorCode::kOddSpatialExtent);
  EXPECT_REMDET_ERROR(patch_split(TensorD({1, 6, 2, 2})), ErrorCode::kChannelNotDivisibleBy4);
}

// ---- head -----------------------------------------------------------------

TEST(Head, UniformAndSaturatedLoss) {
  const std::vector<std::int64_t> labels{0, 3};
  const auto uniform = softmax_cross_entropy(TensorD({2, 4}, 0.7), labels);
  EXPECT_NEAR(uniform.loss, std::log(4.0), 1e-12);
  TensorD sharp({2, 4});
  sharp.data()[0] = 100.0;
  sharp.data()[7] = 100.0;
  EXPECT_LT(softmax_cross_entropy(sharp, labels).loss, 1e-10);
  const std::vector<std::int64_t> bad{0, 4};
  EXPECT_REMDET_ERROR(softmax_cross_entropy(sharp, bad), ErrorCode::kLabelOutOfRange);
  const std::vector<std::int64_t> neg{-1, 0};
  EXPECT_REMDET_ERROR(softmax_cross_entropy(sharp, neg), ErrorCode::kLabelOutOfRange);
}

TEST(Head, LossGradientMatchesFiniteDifferences) {
  Rng rng(18);
  const auto logits = random_normal<double>({5, 4}, rng, 2.0);
  const std::vector<std::int64_t> labels{0, 1, 2, 3, 1};
  const auto lg = softmax_cross_entropy(logits, labels);
  const auto fd = finite_diff_scaled<double>([&](const TensorD& z) { return softmax_cross_entropy(z, labels).loss; }, logits);
  EXPECT_LE(relative_error(lg.grad, fd), 1e-6);
}

TEST(Head, PoolAndLinear) {
  const auto x = T1({1, 2, 2, 2}, {1, 2, 3, 4, -1, -1, -1, -1});
  const auto p = global_avg_pool(x);
  EXPECT_EQ(p.vec(), (std::vector<double>{2.5, -1.0}));
  const auto y = linear<double>(p, T1({1, 2}, {2, 3}), std::vector<double>{0.5});
  EXPECT_EQ(y[0], 2.5 * 2 - 3 + 0.5);
}

// ---- finite differences ---------------------------------------------------

TEST(FiniteDiff, KnownDerivatives) {
  const auto sq = [](const TensorD& x) { return x[0] * x[0]; };
  EXPECT_NEAR(finite_diff<double>(sq, T1({1}, {3.0}), 1e-6)[0], 6.0, 1e-8);
  const auto lin = [](const TensorD& x) { return 3.0 * x[0] - 2.0 * x[1]; };
  for (double h : {1e-3, 1e-1, 1.0}) {
    const auto g = finite_diff<double>(lin, T1({2}, {0.5, -4.0}), h);
    EXPECT_NEAR(g[0], 3.0, 1e-12);
    EXPECT_NEAR(g[1], -2.0, 1e-12);
  }
}

// ---- every op's VJP against central differences ---------------------------

// Builds a scalar r . op(inputs) on a tape and compares the tape gradient of
// each input with finite differences.
using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

void check_vjp(const std::vector<TensorD>& inputs, const Builder& build, std::uint64_t seed) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  const Var out = build(tape, vars);
  Rng rng(seed);
  const auto r = random_normal<double>(tape.value(out).shape(), rng);
  tape.backward(ad::weighted_sum(tape, out, r));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto f = [&](const TensorD& p) {
      Tape<double> t2(false);
      std::vector<Var> vs;
      for (std::size_t j = 0; j < inputs.size(); ++j) vs.push_back(t2.constant(j == k ? p : inputs[j]));
      const auto& y = t2.value(build(t2, vs));
      return std::inner_product(y.vec().begin(), y.vec().end(), r.vec().begin(), 0.0);
    };
    EXPECT_LE(relative_error(tape.grad(vars[k]), finite_diff_scaled<double>(f, inputs[k])), 1e-5) << "input " << k;
  }
}

TEST(Vjp, AllOpsMatchFiniteDifferences) {
  Rng rng(19);
  const auto x = random_normal<double>({2, 4, 4, 4}, rng);
  const auto y = random_normal<double>({2, 4, 4, 4}, rng);
  const ConvSpec grouped{4, 6, 3, 3, 2, 1, 2};
  check_vjp({x, random_normal<double>(grouped.weight_shape(), rng), random_normal<double>({6}, rng)},
            [&](Tape<double>& t, const std::vector<Var>& v) { return ad::conv2d(t, v[0], v[1], v[2], grouped); }, 1);
  const auto gamma = random_uniform<double>({4}, rng, 0.5, 1.5);
  const auto beta = random_normal<double>({4}, rng);
  const auto mean = random_normal<double>({4}, rng);
  const auto var = random_uniform<double>({4}, rng, 0.5, 2.0);
  check_vjp({x, gamma, beta},
            [&](Tape<double>& t, const std::vector<Var>& v) {
              return ad::batchnorm_infer(t, v[0], v[1], v[2], t.constant(mean), t.constant(var), 1e-3);
            },
            2);
  check_vjp({x, gamma, beta},
            [&](Tape<double>& t, const std::vector<Var>& v) {
              return ad::batchnorm_train<double>(t, v[0], v[1], v[2], 1e-3, nullptr);
            },
            3);
  for (Act a : {Act::kSiLU, Act::kGELU, Act::kNone}) {
    check_vjp({x}, [&](Tape<double>& t, const std::vector<Var>& v) { return ad::activation(t, v[0], a); }, 4);
  }
  check_vjp({x, y}, [](Tape<double>& t, const std::vector<Var>& v) { return ad::mul(t, v[0], v[1]); }, 5);
  check_vjp({x, y}, [](Tape<double>& t, const std::vector<Var>& v) { return ad::add(t, v[0], v[1]); }, 6);
  check_vjp({x},
            [](Tape<double>& t, const std::vector<Var>& v) {
              const std::int64_t s[] = {1, 3};
              const auto parts = ad::split_channels(t, v[0], s);
              return ad::mul(t, parts[1], parts[1]);
            },
            7);
  check_vjp({x, y},
            [](Tape<double>& t, const std::vector<Var>& v) {
              const Var vs[] = {v[1], v[0]};
              return ad::concat_channels<double>(t, vs);
            },
            8);
  check_vjp({x}, [](Tape<double>& t, const std::vector<Var>& v) { return ad::patch_merge(t, v[0]); }, 9);
  check_vjp({x}, [](Tape<double>& t, const std::vector<Var>& v) { return ad::global_avg_pool(t, v[0]); }, 10);
  check_vjp({random_normal<double>({3, 5}, rng), random_normal<double>({2, 5}, rng), random_normal<double>({2}, rng)},
            [](Tape<double>& t, const std::vector<Var>& v) { return ad::linear(t, v[0], v[1], v[2]); }, 11);
  const std::vector<std::int64_t> labels{1, 0, 2};
  check_vjp({random_normal<double>({3, 4}, rng)},
            [&](Tape<double>& t, const std::vector<Var>& v) { return ad::cross_entropy(t, v[0], labels); }, 12);
}

// ---- determinism ----------------------------------------------------------

TEST(Determinism, IdenticalSeedsGiveIdenticalBits) {
  const auto run = [] {
    Rng rng(20);
    const ConvSpec spec{3, 5, 3, 3, 2, 1, 1};
    const auto x = random_normal<float>({2, 3, 8, 8}, rng);
    const auto w = random_normal<float>(spec.weight_shape(), rng);
    return activation(conv2d<float>(x, w, {}, spec), Act::kGELU);
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace remdet
