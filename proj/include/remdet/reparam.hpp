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

// Deploy-time structural reparameterization of the RepDW pair
// BN(dw3x3(x)) + BN(dw1x1(x)) into a single biased dw3x3. All fusion
// arithmetic runs in f64 and is cast to the model dtype at the end.

#ifndef REMDET_REPARAM_HPP_
#define REMDET_REPARAM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "remdet/blocks.hpp"
#include "remdet/model.hpp"

namespace remdet {

template <typename T>
struct FoldedConv {
  Tensor<T> weight;
  std::vector<T> bias;
};

// w'_k = w_k * gamma_k / sqrt(var_k + eps);
// b'_k = beta_k + (b_k - mean_k) * gamma_k / sqrt(var_k + eps).
// An empty `bias` is treated as zero.
FoldedConv<double> fold_bn(const Tensor<double>& weight, std::span<const double> bias,
                           const BatchNormParams<double>& bn);

// [C,1,1,1] -> [C,1,3,3] with the value at the centre tap.
FoldedConv<double> embed_dw1x1_into_3x3(const Tensor<double>& w1, std::span<const double> b1);

/// Deploy-time depthwise 3x3 (stride 1, pad 1) with bias.
template <typename T>
struct FusedDWConv {
  Tensor<T> weight;  // [C,1,3,3]
  std::vector<T> bias;

  std::int64_t channels() const { return weight.dim(0); }
  ConvSpec spec() const { return fused_dw_spec(channels()); }
};

template <typename T>
struct RepDWTrainParams {
  Tensor<T> w3;  // [C,1,3,3]
  BatchNormParams<T> bn3;
  Tensor<T> w1;  // [C,1,1,1]
  BatchNormParams<T> bn1;
};

template <typename T>
RepDWTrainParams<T> read_repdw_params(const ParamStore<T>& store, const std::string& prefix);

template <typename T>
FusedDWConv<T> fuse_repdw(const RepDWTrainParams<T>& p);

// Rewrites one block in place: train-mode RepDW (standalone or inside a
// GatedFFN) becomes deploy-mode with `<prefix>.fused.*` entries. Returns
// the number of RepDW units fused.
template <typename T>
int fuse_block(BlockCfg& cfg, const std::string& prefix, ParamStore<T>& params);

// Throws AlreadyFused if model.cfg.deploy is set.
template <typename T>
Model<T> fuse_model(const Model<T>& model);

struct FusionReport {
  double max_abs_diff = 0.0;
  bool pass = false;
  int samples = 0;
  double tol = 0.0;
};

// Feeds `n_samples` seeded N(0,1)*2 inputs of [1, C, h, w] through both
// models and reports the worst absolute difference across every stage
// output (and logits, if present).
template <typename T>
FusionReport verify_fusion(const Model<T>& reference, const Model<T>& fused, int n_samples, double tol,
                           std::uint64_t seed, std::int64_t h, std::int64_t w);

// Same for a single block.
template <typename T>
FusionReport verify_block_fusion(const BlockCfg& reference_cfg, const ParamStore<T>& reference,
                                 const BlockCfg& fused_cfg, const ParamStore<T>& fused, int n_samples, double tol,
                                 std::uint64_t seed, std::int64_t h, std::int64_t w);

}  // namespace remdet

#endif  // REMDET_REPARAM_HPP_
