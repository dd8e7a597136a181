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

// Backbone composition: stem -> stages (downsample + blocks) -> optional
// toy classifier head.

#ifndef REMDET_MODEL_HPP_
#define REMDET_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "remdet/blocks.hpp"

namespace remdet {

enum class StageBlock : std::uint8_t { kConvFFN, kMult, kGatedFFN, kC2f, kChannelC2f };
enum class Downsample : std::uint8_t { kNone, kCED, kConv };
enum class HeadKind : std::uint8_t { kNone, kToyClassifier };

std::string_view stage_block_name(StageBlock kind);
std::optional<StageBlock> parse_stage_block(std::string_view name);
std::string_view downsample_name(Downsample d);

struct StemCfg {
  std::int64_t out_channels = 16;
  std::int64_t kernel = 3;
  std::int64_t stride = 2;
};

struct StageCfg {
  std::int64_t width = 0;
  // Block count; for c2f/channelc2f this is the bottleneck count of the
  // stage's single C2f block.
  std::int64_t blocks = 1;
  StageBlock block = StageBlock::kGatedFFN;
  double e = 3.0;  // expansion for convffn/mult/gatedffn
  bool retain_gate = false;
  Downsample downsample = Downsample::kCED;
  std::int64_t ced_t = 1;
};

struct HeadCfg {
  HeadKind kind = HeadKind::kNone;
  std::int64_t classes = 4;
};

struct ModelCfg {
  std::string name = "model";
  DType dtype = DType::kF32;
  std::int64_t in_channels = 3;
  StemCfg stem;
  std::vector<StageCfg> stages;
  HeadCfg head;
  bool deploy = false;  // RepDW branches already fused

  // Throws InvalidConfig / WidthMismatch.
  void validate() const;
  std::int64_t total_stride() const;
  std::vector<std::int64_t> stage_strides() const;
  std::int64_t out_channels() const { return stages.empty() ? stem.out_channels : stages.back().width; }
};

// The desk-scale backbone: widths (16,32,64,128,256), (3:3:6:3) GatedFFN
// stages with e=3, CED downsampling with t=2 on the first stage only.
ModelCfg desk_backbone_cfg();

// Stem conv (1 -> width, stride 2) -> `blocks` blocks -> GAP -> linear.
ModelCfg toy_classifier_cfg(StageBlock block, double e, std::int64_t width = 16, std::int64_t classes = 4,
                            std::int64_t blocks = 2);

struct ModelNode {
  std::string name;
  BlockCfg cfg;
  int stage = -1;  // -1 for the stem
  bool stage_output = false;
};

std::vector<ModelNode> expand_nodes(const ModelCfg& cfg);

inline const std::string kHeadWeight = "head.fc.weight";
inline const std::string kHeadBias = "head.fc.bias";

std::vector<ParamSpec> model_param_specs(const ModelCfg& cfg);

template <typename T>
struct Model {
  ModelCfg cfg;
  std::vector<ModelNode> nodes;
  ParamStore<T> params;
};

template <typename T>
Model<T> build_model(const ModelCfg& cfg, std::uint64_t seed);

// Alias kept for the backbone-only use case.
template <typename T>
Model<T> build_backbone(const ModelCfg& cfg, std::uint64_t seed) {
  return build_model<T>(cfg, seed);
}

struct ModelVars {
  std::vector<Var> features;  // one per stage
  std::optional<Var> logits;
};

// Throws InvalidInputExtent unless x is [N, in_channels, H, W] with H and W
// divisible by the total stride.
template <typename T>
ModelVars model_forward(Graph<T>& g, const Model<T>& model, Var x);

template <typename T>
struct ModelOutput {
  std::vector<Tensor<T>> features;
  std::optional<Tensor<T>> logits;
};

template <typename T>
ModelOutput<T> model_forward(const Model<T>& model, const Tensor<T>& x);

template <typename T>
std::vector<std::int64_t> predict_labels(const Model<T>& model, const Tensor<T>& x);

}  // namespace remdet

#endif  // REMDET_MODEL_HPP_
