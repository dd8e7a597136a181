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

#include <cmath>
#include <numeric>

#include "remdet/reparam.hpp"
#include "remdet/toy_train.hpp"
#include "test_util.hpp"

namespace remdet {
namespace {

// ---- dataset ----------------------------------------------------------------

TEST(Dataset, SameSeedSameBits) {
  const auto a = gen_synthetic(9, 64, 4);
  const auto b = gen_synthetic(9, 64, 4);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, gen_synthetic(10, 64, 4).images);
}

TEST(Dataset, BalancedAndInRange) {
  const auto d = gen_synthetic(1, 400, 4);
  EXPECT_EQ(d.images.shape(), (Shape{400, 1, 32, 32}));
  std::vector<int> counts(4, 0);
  for (auto l : d.labels) ++counts[static_cast<std::size_t>(l)];
  EXPECT_EQ(counts, (std::vector<int>{100, 100, 100, 100}));
  for (float v : d.images.vec()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  const auto odd = gen_synthetic(2, 43, 5);
  std::vector<int> c5(5, 0);
  for (auto l : odd.labels) ++c5[static_cast<std::size_t>(l)];
  EXPECT_LE(*std::max_element(c5.begin(), c5.end()) - *std::min_element(c5.begin(), c5.end()), 1);
}

TEST(Dataset, Preconditions) {
  EXPECT_REMDET_ERROR(gen_synthetic(1, 100, 1), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR(gen_synthetic(1, 100, 9), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR(gen_synthetic(1, 31, 4), ErrorCode::kInvalidConfig);
}

TEST(Dataset, Gather) {
  const auto d = gen_synthetic(3, 32, 4);
  const std::int64_t idx[] = {5, 0};
  const auto b = d.gather(idx);
  EXPECT_EQ(b.shape(), (Shape{2, 1, 32, 32}));
  for (std::int64_t i = 0; i < 1024; ++i) {
    EXPECT_EQ(b[i], d.images[5 * 1024 + i]);
    EXPECT_EQ(b[1024 + i], d.images[i]);
  }
  EXPECT_EQ(d.gather_labels(idx), (std::vector<std::int64_t>{d.labels[5], d.labels[0]}));
}

// Softmax regression on raw pixels, trained with full-batch gradient descent
// written out here so it shares nothing with the library's ops.
TEST(Dataset, LinearProbeSeparatesClasses) {
  const auto d = gen_synthetic(42, 256, 4);
  const std::size_t n = 256, f = 1024, k = 4;
  std::vector<double> w(k * f, 0.0), b(k, 0.0), logits(k), p(k);
  const auto forward = [&](std::size_t i) {
    for (std::size_t c = 0; c < k; ++c) {
      double z = b[c];
      for (std::size_t j = 0; j < f; ++j) z += w[c * f + j] * d.images[static_cast<std::int64_t>(i * f + j)];
      logits[c] = z;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += (p[c] = std::exp(logits[c] - m));
    for (auto& v : p) v /= s;
  };
  std::vector<double> gw(k * f), gb(k);
  for (int step = 0; step < 200; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      forward(i);
      for (std::size_t c = 0; c < k; ++c) {
        const double g = (p[c] - (static_cast<std::int64_t>(c) == d.labels[i] ? 1.0 : 0.0)) / n;
        gb[c] += g;
        for (std::size_t j = 0; j < f; ++j) gw[c * f + j] += g * d.images[static_cast<std::int64_t>(i * f + j)];
      }
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= 0.5 * gw[j];
    for (std::size_t c = 0; c < k; ++c) b[c] -= 0.5 * gb[c];
  }
  int correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    forward(i);
    correct += static_cast<std::int64_t>(std::max_element(logits.begin(), logits.end()) - logits.begin()) == d.labels[i];
  }
  EXPECT_GE(correct / 256.0, 0.6);
}

// ---- sgd --------------------------------------------------------------------

ParamStore<double> one_param(double v, ParamKind kind = ParamKind::kWeight) {
  ParamStore<double> s;
  s.add("p", TensorD::from_data({1}, {v}), kind);
  return s;
}

std::map<std::string, TensorD> grad_of(double g) { return {{"p", TensorD::from_data({1}, {g})}}; }

TEST(Sgd, PlainGradientStep) {
  auto s = one_param(1.0);
  SgdState<double> st;
  sgd_update(s, grad_of(0.5), SgdHyper{0.1, 0.0, 0.0}, st);
  EXPECT_EQ(s.get("p")[0], 1.0 - 0.1 * 0.5);
}

TEST(Sgd, ZeroGradientNoDecayIsStationary) {
  auto s = one_param(2.0);
  SgdState<double> st;
  for (int i = 0; i < 3; ++i) sgd_update(s, grad_of(0.0), SgdHyper{0.1, 0.9, 0.0}, st);
  EXPECT_EQ(s.get("p")[0], 2.0);
}

TEST(Sgd, HandUnrolledQuadratic) {
  // f(p) = p^2, g = 2p.
  auto s = one_param(1.0);
  SgdState<double> st;
  const SgdHyper h{0.1, 0.9, 0.0};
  double p = 1.0, v = 0.0;
  for (int i = 0; i < 2; ++i) {
    sgd_update(s, grad_of(2 * s.get("p")[0]), h, st);
    v = 0.9 * v + 2 * p;
    p = p - 0.1 * v;
  }
  EXPECT_NEAR(p, 0.46, 1e-15);
  EXPECT_EQ(s.get("p")[0], p);
}

TEST(Sgd, BnAffineSkipsWeightDecay) {
  const SgdHyper h{0.1, 0.9, 0.5};
  auto bn = one_param(2.0, ParamKind::kBnAffine);
  auto wt = one_param(2.0, ParamKind::kWeight);
  SgdState<double> s1, s2;
  sgd_update(bn, grad_of(0.0), h, s1);
  sgd_update(wt, grad_of(0.0), h, s2);
  EXPECT_EQ(bn.get("p")[0], 2.0);
  EXPECT_EQ(wt.get("p")[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Sgd, EntriesWithoutGradientUntouched) {
  auto s = one_param(3.0);
  SgdState<double> st;
  sgd_update(s, {}, SgdHyper{}, st);
  EXPECT_EQ(s.get("p")[0], 3.0);
}

TEST(Sgd, Errors) {
  auto s = one_param(1.0);
  SgdState<double> st;
  EXPECT_REMDET_ERROR(sgd_update(s, {{"p", TensorD({2})}}, SgdHyper{}, st), ErrorCode::kShapeMismatch);
  EXPECT_REMDET_ERROR((SgdHyper{0.0, 0.9, 0.0}.validate()), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR((SgdHyper{0.1, 1.0, 0.0}.validate()), ErrorCode::kInvalidConfig);
}

// ---- training ---------------------------------------------------------------

ToyTrainCfg small_cfg(StageBlock block, int steps) {
  ToyTrainCfg cfg;
  cfg.block = block;
  cfg.steps = steps;
  cfg.dataset_size = 128;
  cfg.batch = 16;
  return cfg;
}

TEST(Train, ZeroStepsNearChance) {
  for (StageBlock b : {StageBlock::kConvFFN, StageBlock::kMult, StageBlock::kGatedFFN}) {
    const auto r = train_toy(b, 3.0, 0, 42);
    EXPECT_TRUE(r.loss_curve.empty());
    EXPECT_NEAR(r.initial_loss, std::log(4.0), 0.15) << stage_block_name(b);
  }
}

TEST(Train, EveryTrainableReceivesGradient) {
  for (StageBlock b : {StageBlock::kConvFFN, StageBlock::kMult, StageBlock::kGatedFFN}) {
    const auto r = train_toy(small_cfg(b, 1));
    for (const auto& [name, e] : r.model.params.entries()) {
      if (is_trainable(e.kind)) EXPECT_TRUE(r.grads_seen.count(name)) << stage_block_name(b) << " " << name;
    }
  }
}

TEST(Train, BitReproducible) {
  const auto a = train_toy(small_cfg(StageBlock::kGatedFFN, 4));
  const auto b = train_toy(small_cfg(StageBlock::kGatedFFN, 4));
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.model.params, b.model.params);
  auto other = small_cfg(StageBlock::kGatedFFN, 4);
  other.seed = 43;
  EXPECT_NE(train_toy(other).loss_curve, a.loss_curve);
}

TEST(Train, ShortRunLossFalls) {
  const auto r = train_toy(small_cfg(StageBlock::kConvFFN, 60));
  ASSERT_EQ(r.loss_curve.size(), 60u);
  EXPECT_LT(mean_loss(r.loss_curve, 50, 60), mean_loss(r.loss_curve, 0, 10));
  EXPECT_EQ(r.final_loss, mean_loss(r.loss_curve, 50, 60));
}

TEST(Train, FusedModelSameAccuracy) {
  const auto r = train_toy(small_cfg(StageBlock::kGatedFFN, 30));
  const auto fused = fuse_model(r.model);
  EXPECT_EQ(toy_accuracy(fused, r.data), r.final_train_acc);
  EXPECT_EQ(predict_labels(fused, r.data.images), predict_labels(r.model, r.data.images));
}

TEST(Train, HugeLearningRateDiverges) {
  auto cfg = small_cfg(StageBlock::kMult, 50);
  cfg.hyper.lr = 1e6;
  EXPECT_REMDET_ERROR(train_toy(cfg), ErrorCode::kDivergedLoss);
}

TEST(Train, RejectsNonFfnBlocks) {
  EXPECT_REMDET_ERROR(train_toy(small_cfg(StageBlock::kC2f, 1)), ErrorCode::kInvalidConfig);
}

TEST(Train, MeanLossRange) {
  const std::vector<double> c{1, 2, 3, 4};
  EXPECT_EQ(mean_loss(c, 1, 3), 2.5);
}

}  // namespace
}  // namespace remdet
