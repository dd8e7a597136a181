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

#include <set>

#include "remdet/analysis.hpp"
#include "remdet/reparam.hpp"
#include "random_blocks.hpp"
#include "test_util.hpp"

namespace remdet {
namespace {

// ---- counting -------------------------------------------------------------

TEST(MacCount, PointwiseAndDepthwiseExamples) {
  const ConvModuleCfg pw{ConvSpec::pointwise(16, 32), true, Act::kSiLU};
  EXPECT_EQ(count_macs_params(pw, 8, 8).macs, 32768u);
  EXPECT_EQ(mac_oracle(pw, 8, 8), 32768u);
  const ConvModuleCfg dw{ConvSpec::depthwise(64, 3), true, Act::kNone};
  EXPECT_EQ(count_macs_params(dw, 8, 8).macs, 36864u);
  EXPECT_EQ(mac_oracle(dw, 8, 8), 36864u);
  // weight + BN affine; no running statistics
  EXPECT_EQ(count_macs_params(pw, 8, 8).params, 16u * 32 + 2 * 32);
}

TEST(MacCount, HandCountedOracleExamples) {
  EXPECT_EQ(mac_oracle(ConvModuleCfg{ConvSpec::pointwise(4, 4), false, Act::kNone}, 2, 2), 64u);
  EXPECT_EQ(mac_oracle(ConvModuleCfg{{8, 8, 1, 1, 1, 0, 2}, true, Act::kNone}, 4, 4), 512u);
  EXPECT_EQ(conv_macs({8, 8, 1, 1, 1, 0, 2}, 4, 4), 512u);
}

TEST(MacCount, ZeroSpatialRejected) {
  const ConvModuleCfg pw{ConvSpec::pointwise(4, 4), true, Act::kNone};
  EXPECT_REMDET_ERROR(count_macs_params(pw, 0, 8), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR(count_macs_params(pw, 8, -1), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR(count_macs_params(CEDCfg{4, 8, 1}, 5, 4), ErrorCode::kInvalidConfig);
}

TEST(MacCount, MatchesOracleOnRandomConfigs) {
  Rng rng(2024);
  std::set<std::string> kinds;
  for (int i = 0; i < 60; ++i) {
    const auto c = testing::random_block_case(i, rng);
    kinds.insert(std::string(block_kind_name(c.cfg)));
    EXPECT_EQ(count_macs_params(c.cfg, c.h, c.w).macs, mac_oracle(c.cfg, c.h, c.w))
        << i << " " << block_kind_name(c.cfg) << " " << c.h << "x" << c.w;
  }
  EXPECT_GE(kinds.size(), 8u);
}

void expect_tree_consistent(const MacReport& r) {
  if (r.is_leaf()) return;
  std::uint64_t macs = 0, params = 0;
  for (const auto& ch : r.children) {
    macs += ch.macs;
    params += ch.params;
    expect_tree_consistent(ch);
  }
  EXPECT_EQ(r.macs, macs) << r.name;
  EXPECT_EQ(r.params, params) << r.name;
}

TEST(MacCount, RootEqualsSumOfLeaves) {
  Rng rng(5);
  for (int i = 0; i < 24; ++i) {
    const auto c = testing::random_block_case(i, rng);
    const auto r = count_macs_params(c.cfg, c.h, c.w);
    expect_tree_consistent(r);
    std::uint64_t leaf_sum = 0;
    for (const auto* leaf : r.leaves()) leaf_sum += leaf->macs;
    EXPECT_EQ(leaf_sum, r.macs);
  }
  const auto model = count_model_macs(desk_backbone_cfg(), 64, 64);
  expect_tree_consistent(model);
  EXPECT_EQ(model.macs, model_mac_oracle(desk_backbone_cfg(), 64, 64));
}

TEST(MacCount, ParamsMatchStore) {
  Rng rng(6);
  for (int i = 0; i < 24; ++i) {
    const auto c = testing::random_block_case(i, rng);
    const auto store = make_block_params<double>(c.cfg, 1);
    EXPECT_EQ(count_macs_params(c.cfg, c.h, c.w).params, static_cast<std::uint64_t>(store.trainable_scalars()))
        << block_kind_name(c.cfg);
  }
}

TEST(MacCount, PerSampleUnderBatching) {
  Rng rng(7);
  const ConvSpec spec{4, 6, 3, 3, 2, 1, 2};
  for (std::int64_t n : {1, 2, 5}) {
    std::uint64_t mults = 0;
    conv2d_counting<double>(random_normal<double>({n, 4, 8, 8}, rng), random_normal<double>(spec.weight_shape(), rng), {},
                            spec, mults);
    EXPECT_EQ(mults, static_cast<std::uint64_t>(n) * conv_macs(spec, 8, 8));
  }
}

// ---- expansion sweep --------------------------------------------------------

TEST(Sweep, ClosedFormsAndOracle) {
  const auto r = expansion_sweep(64, 16, 16, {3.0});
  ASSERT_EQ(r.rows.size(), 1u);
  const auto& row = r.rows[0];
  EXPECT_EQ(row.macs_convffn, 6291456u);
  EXPECT_EQ(row.macs_mult, 4718592u);
  EXPECT_EQ(row.oracle_convffn, row.macs_convffn);
  EXPECT_EQ(row.oracle_mult, row.macs_mult);
  EXPECT_EQ(row.closed_convffn, 6291456.0);
  EXPECT_EQ(row.closed_mult, 4718592.0);
  EXPECT_EQ(row.ratio, 0.75);
}

TEST(Sweep, RatioAtEqualExpansion) {
  const auto r = expansion_sweep(64, 8, 8, {1, 2, 3, 4, 5, 6, 7, 8, 9}, false);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.ratio, 0.75) << row.e;
    EXPECT_EQ(static_cast<double>(row.macs_convffn), row.closed_convffn);
    EXPECT_EQ(row.oracle_convffn, 0u);
  }
}

TEST(Sweep, CrossRatio) {
  const Fraction f = cost_ratio(64, 16, 16, 9.0, 7.0);
  EXPECT_EQ(f, (Fraction{27, 28}));
  EXPECT_EQ(reduced(6, 8), (Fraction{3, 4}));
}

TEST(Sweep, Rejections) {
  EXPECT_REMDET_ERROR(expansion_sweep(64, 16, 16, {0.0}), ErrorCode::kInvalidConfig);
  EXPECT_REMDET_ERROR(expansion_sweep(0, 16, 16, {3.0}), ErrorCode::kInvalidConfig);
}

// ---- rank probe -------------------------------------------------------------

TEST(Rank, SmallDimensions) {
  const auto r1 = rank_experiment(1, 4);
  EXPECT_EQ(r1.estimated_rank, 1);
  EXPECT_TRUE(r1.pass);
  const auto r4 = rank_experiment(4, 64);
  EXPECT_EQ(r4.estimated_rank, 10);
  EXPECT_EQ(r4.expected, 10);
  EXPECT_EQ(r4.monomials, 10);
}

TEST(Rank, SixteenWithThreeHundredSamples) {
  const auto r = rank_experiment(16, 300);
  EXPECT_EQ(r.estimated_rank, 136);
  EXPECT_TRUE(r.pass);
}

TEST(Rank, NeverExceedsSymmetricDimension) {
  for (int d : {2, 3, 5}) {
    for (int samples : {d * (d + 1) / 2 + d, 40, 200}) {
      for (std::uint64_t seed : {1u, 2u}) {
        EXPECT_LE(rank_experiment(d, samples, 1e-8, seed).estimated_rank, d * (d + 1) / 2);
      }
    }
  }
}

TEST(Rank, InsufficientSamples) {
  EXPECT_REMDET_ERROR(rank_experiment(4, 13), ErrorCode::kInsufficientSamples);
  EXPECT_NO_THROW(rank_experiment(4, 14));
}

TEST(Monomials, Enumeration) {
  EXPECT_EQ(monomial_oracle(2), 3);
  EXPECT_EQ(monomial_oracle(8), 36);
  for (int d = 1; d <= 32; ++d) EXPECT_EQ(monomial_oracle(d), d * (d + 1) / 2);
}

}  // namespace
}  // namespace remdet
