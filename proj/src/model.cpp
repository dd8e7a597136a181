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

#include "remdet/model.hpp"

#include <algorithm>
#include <array>

namespace remdet {

namespace {

constexpr std::array<std::pair<StageBlock, std::string_view>, 5> kStageBlocks{{
    {StageBlock::kConvFFN, "convffn"},
    {StageBlock::kMult, "mult"},
    {StageBlock::kGatedFFN, "gatedffn"},
    {StageBlock::kC2f, "c2f"},
    {StageBlock::kChannelC2f, "channelc2f"},
}};

std::string stage_path(std::size_t i) { return "/stages/" + std::to_string(i); }

}  // namespace

std::string_view stage_block_name(StageBlock kind) {
  for (const auto& [k, name] : kStageBlocks) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<StageBlock> parse_stage_block(std::string_view name) {
  for (const auto& [k, n] : kStageBlocks) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view downsample_name(Downsample d) {
  switch (d) {
    case Downsample::kCED: return "ced";
    case Downsample::kConv: return "conv";
    case Downsample::kNone: break;
  }
  return "none";
}

void ModelCfg::validate() const {
  if (in_channels <= 0) throw Error(ErrorCode::kInvalidConfig, "in_channels must be positive", "/in_channels");
  if (stem.out_channels <= 0 || stem.kernel <= 0 || stem.stride <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "stem fields must be positive", "/stem");
  }
  if (stages.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one stage is required", "/stages");
  std::int64_t prev = stem.out_channels;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageCfg& s = stages[i];
    if (s.width <= 0) throw Error(ErrorCode::kInvalidConfig, "stage width must be positive", stage_path(i) + "/width");
    const bool c2f = s.block == StageBlock::kC2f || s.block == StageBlock::kChannelC2f;
    if (s.blocks < (c2f ? 0 : 1)) {
      throw Error(ErrorCode::kInvalidConfig, "stage block count too small", stage_path(i) + "/blocks");
    }
    if (!c2f && !(s.e > 0.0)) throw Error(ErrorCode::kInvalidConfig, "expansion must be positive", stage_path(i) + "/e");
    if (s.ced_t != 1 && s.ced_t != 2) {
      throw Error(ErrorCode::kInvalidConfig, "ced_t must be 1 or 2", stage_path(i) + "/ced_t");
    }
    if (s.downsample == Downsample::kNone && s.width != prev) {
      throw Error(ErrorCode::kWidthMismatch,
                  "stage without downsampling must keep width " + std::to_string(prev) + ", got " +
                      std::to_string(s.width),
                  stage_path(i) + "/width");
    }
    prev = s.width;
  }
  if (head.kind == HeadKind::kToyClassifier && head.classes < 2) {
    throw Error(ErrorCode::kInvalidConfig, "classifier needs at least 2 classes", "/head/classes");
  }
}

std::vector<std::int64_t> ModelCfg::stage_strides() const {
  std::vector<std::int64_t> out;
  std::int64_t s = stem.stride;
  for (const auto& st : stages) {
    if (st.downsample != Downsample::kNone) s *= 2;
    out.push_back(s);
  }
  return out;
}

std::int64_t ModelCfg::total_stride() const {
  const auto s = stage_strides();
  return s.empty() ? stem.stride : s.back();
}

ModelCfg desk_backbone_cfg() {
  ModelCfg cfg;
  cfg.name = "remdet-tiny-desk";
  cfg.in_channels = 3;
  cfg.stem = {16, 3, 2};
  const std::int64_t widths[] = {32, 64, 128, 256};
  const std::int64_t counts[] = {3, 3, 6, 3};
  for (int i = 0; i < 4; ++i) {
    StageCfg s;
    s.width = widths[i];
    s.blocks = counts[i];
    s.block = StageBlock::kGatedFFN;
    s.e = 3.0;
    s.downsample = Downsample::kCED;
    s.ced_t = i == 0 ? 2 : 1;
    cfg.stages.push_back(s);
  }
  return cfg;
}

ModelCfg toy_classifier_cfg(StageBlock block, double e, std::int64_t width, std::int64_t classes,
                            std::int64_t blocks) {
  ModelCfg cfg;
  cfg.name = "toy-" + std::string(stage_block_name(block));
  cfg.in_channels = 1;
  cfg.stem = {width, 3, 2};
  StageCfg s;
  s.width = width;
  s.blocks = blocks;
  s.block = block;
  s.e = e;
  s.downsample = Downsample::kNone;
  cfg.stages.push_back(s);
  cfg.head = {HeadKind::kToyClassifier, classes};
  return cfg;
}

std::vector<ModelNode> expand_nodes(const ModelCfg& cfg) {
  cfg.validate();
  std::vector<ModelNode> nodes;
  const std::int64_t k = cfg.stem.kernel;
  nodes.push_back({"stem",
                   ConvModuleCfg{{cfg.in_channels, cfg.stem.out_channels, k, k, cfg.stem.stride, k / 2, 1}, true, Act::kSiLU},
                   -1, false});
  const RepMode mode = cfg.deploy ? RepMode::kDeploy : RepMode::kTrain;
  std::int64_t prev = cfg.stem.out_channels;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageCfg& s = cfg.stages[i];
    const int stage = static_cast<int>(i);
    const std::string base = "stages." + std::to_string(i);
    if (s.downsample == Downsample::kCED) {
      nodes.push_back({base + ".down", CEDCfg{prev, s.width, s.ced_t}, stage, false});
    } else if (s.downsample == Downsample::kConv) {
      nodes.push_back({base + ".down", ConvModuleCfg{{prev, s.width, 3, 3, 2, 1, 1}, true, Act::kSiLU}, stage, false});
    }
    const std::int64_t w = s.width;
    switch (s.block) {
      case StageBlock::kC2f:
        nodes.push_back({base + ".c2f", C2fCfg::baseline(w, w, s.blocks), stage, false});
        break;
      case StageBlock::kChannelC2f:
        nodes.push_back({base + ".c2f", C2fCfg::channel(w, w, s.blocks), stage, false});
        break;
      default:
        for (std::int64_t j = 0; j < s.blocks; ++j) {
          BlockCfg b;
          if (s.block == StageBlock::kGatedFFN) {
            b = GatedFFNCfg{w, w, s.e, true, mode};
          } else if (s.block == StageBlock::kConvFFN) {
            b = ConvFFNCfg{w, w, s.e, true};
          } else {
            b = MultiplicationCfg{w, w, s.e, true, s.retain_gate, GateMerge::kConcat};
          }
          nodes.push_back({base + ".blocks." + std::to_string(j), b, stage, false});
        }
    }
    nodes.back().stage_output = true;
    prev = w;
  }
  return nodes;
}

std::vector<ParamSpec> model_param_specs(const ModelCfg& cfg) {
  std::vector<ParamSpec> specs;
  for (const auto& node : expand_nodes(cfg)) {
    auto s = block_param_specs(node.cfg, node.name);
    specs.insert(specs.end(), s.begin(), s.end());
  }
  if (cfg.head.kind == HeadKind::kToyClassifier) {
    const std::int64_t f = cfg.out_channels();
    specs.push_back({kHeadWeight, {cfg.head.classes, f}, ParamKind::kWeight, f, 0.0});
    specs.push_back({kHeadBias, {cfg.head.classes}, ParamKind::kBias, f, 0.0});
  }
  return specs;
}

template <typename T>
Model<T> build_model(const ModelCfg& cfg, std::uint64_t seed) {
  Model<T> m;
  m.cfg = cfg;
  m.cfg.dtype = dtype_of<T>();
  m.nodes = expand_nodes(cfg);
  Rng rng(seed);
  init_params(model_param_specs(cfg), m.params, rng);
  return m;
}

template <typename T>
ModelVars model_forward(Graph<T>& g, const Model<T>& model, Var x) {
  const Tensor<T>& xv = g.tape().value(x);
  const std::int64_t stride = model.cfg.total_stride();
  if (xv.rank() != 4 || xv.dim(1) != model.cfg.in_channels) {
    fail(ErrorCode::kInvalidInputExtent, "model expects [N," + std::to_string(model.cfg.in_channels) +
                                             ",H,W], got " + shape_str(xv.shape()));
  }
  if (xv.dim(2) % stride != 0 || xv.dim(3) % stride != 0) {
    fail(ErrorCode::kInvalidInputExtent, "input extent " + shape_str(xv.shape()) + " not divisible by stride " +
                                             std::to_string(stride));
  }
  ModelVars out;
  Var v = x;
  for (const auto& node : model.nodes) {
    v = block_forward(g, node.name, node.cfg, v);
    if (node.stage_output) out.features.push_back(v);
  }
  if (model.cfg.head.kind == HeadKind::kToyClassifier) {
    Var pooled = ad::global_avg_pool(g.tape(), v);
    out.logits = ad::linear(g.tape(), pooled, g.param(kHeadWeight), g.param(kHeadBias));
  }
  return out;
}

template <typename T>
ModelOutput<T> model_forward(const Model<T>& model, const Tensor<T>& x) {
  Tape<T> tape(false);
  Graph<T> g(tape, model.params);
  ModelVars vars = model_forward(g, model, tape.constant(x));
  ModelOutput<T> out;
  for (Var f : vars.features) out.features.push_back(tape.value(f));
  if (vars.logits) out.logits = tape.value(*vars.logits);
  return out;
}

template <typename T>
std::vector<std::int64_t> predict_labels(const Model<T>& model, const Tensor<T>& x) {
  const auto out = model_forward(model, x);
  if (!out.logits) fail(ErrorCode::kInvalidConfig, "model has no classifier head");
  const Tensor<T>& logits = *out.logits;
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = &logits[i * k];
    labels[static_cast<std::size_t>(i)] = std::max_element(row, row + k) - row;
  }
  return labels;
}

#define REMDET_INSTANTIATE_MODEL(T)                                                      \
  template Model<T> build_model<T>(const ModelCfg&, std::uint64_t);                      \
  template ModelVars model_forward<T>(Graph<T>&, const Model<T>&, Var);                  \
  template ModelOutput<T> model_forward<T>(const Model<T>&, const Tensor<T>&);           \
  template std::vector<std::int64_t> predict_labels<T>(const Model<T>&, const Tensor<T>&);

REMDET_INSTANTIATE_MODEL(float)
REMDET_INSTANTIATE_MODEL(double)

}  // namespace remdet
