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

// Building blocks: ConvModule, ConvFFN, MultiplicationFFN, RepDW, GatedFFN,
// CED, Bottleneck and C2f/ChannelC2f.
//
// Every block is described by a plain config struct and reads its weights
// from a ParamStore under a dotted name prefix, e.g. a GatedFFN at
// "stages.0.blocks.1" owns "stages.0.blocks.1.cv1.conv.weight",
// "stages.0.blocks.1.repdw.dw3.bn.gamma", and so on.

#ifndef REMDET_BLOCKS_HPP_
#define REMDET_BLOCKS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "remdet/ops.hpp"
#include "remdet/tape.hpp"
#include "remdet/tensor.hpp"

namespace remdet {

// Batch-norm constants used by every ConvModule.
inline constexpr double kBnEps = 1e-3;
inline constexpr double kBnMomentum = 0.03;

// Round half away from zero, minimum 1. Rejects non-positive requests.
std::int64_t round_channels(double requested);

struct ConvModuleCfg {
  ConvSpec spec;
  bool with_bn = true;  // with BN the conv has no bias
  Act act = Act::kSiLU;
};

struct ConvFFNCfg {
  std::int64_t c1 = 0;
  std::int64_t c2 = 0;
  double e = 3.0;
  bool add_identity = true;

  std::int64_t hidden() const { return round_channels(static_cast<double>(c2) * e); }
  bool residual() const { return add_identity && c1 == c2; }
};

// How the retained gate is merged before cv2 in the retained-gate variant.
enum class GateMerge : std::uint8_t { kConcat, kAdd };

struct MultiplicationCfg {
  std::int64_t c1 = 0;
  std::int64_t c2 = 0;
  double e = 3.0;
  bool add_identity = true;
  bool retain_gate = false;
  GateMerge gate_merge = GateMerge::kConcat;

  std::int64_t half_hidden() const { return round_channels(static_cast<double>(c2) * e / 2.0); }
  std::int64_t cv2_in() const {
    return retain_gate && gate_merge == GateMerge::kConcat ? 2 * half_hidden() : half_hidden();
  }
  bool residual() const { return add_identity && c1 == c2; }
};

enum class RepMode : std::uint8_t { kTrain, kDeploy };

struct RepDWCfg {
  std::int64_t channels = 0;
  RepMode mode = RepMode::kTrain;
};

struct GatedFFNCfg {
  std::int64_t c1 = 0;
  std::int64_t c2 = 0;
  double e = 3.0;
  bool add_identity = true;
  RepMode mode = RepMode::kTrain;

  std::int64_t half_hidden() const { return round_channels(static_cast<double>(c2) * e / 2.0); }
  bool residual() const { return add_identity && c1 == c2; }
};

struct CEDCfg {
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  std::int64_t t = 1;

  std::int64_t expanded() const { return t * c_in; }
  std::int64_t merged() const { return 4 * t * c_in; }
};

struct BottleneckCfg {
  std::int64_t channels = 0;
  double e = 1.0;
  bool shortcut = true;

  std::int64_t hidden() const { return round_channels(static_cast<double>(channels) * e); }
};

struct C2fCfg {
  std::int64_t c1 = 0;
  std::int64_t c2 = 0;
  std::int64_t n = 1;
  double e_overall = 0.5;
  double e_bottleneck = 1.0;
  bool shortcut = true;

  static C2fCfg baseline(std::int64_t c1, std::int64_t c2, std::int64_t n, bool shortcut = true) {
    return {c1, c2, n, 0.5, 1.0, shortcut};
  }
  static C2fCfg channel(std::int64_t c1, std::int64_t c2, std::int64_t n, bool shortcut = true) {
    return {c1, c2, n, 1.0, 0.25, shortcut};
  }

  std::int64_t hidden() const { return round_channels(static_cast<double>(c2) * e_overall); }
  std::int64_t concat_width() const { return (2 + n) * hidden(); }
};

using BlockCfg = std::variant<ConvModuleCfg, ConvFFNCfg, MultiplicationCfg, RepDWCfg, GatedFFNCfg, CEDCfg,
                              BottleneckCfg, C2fCfg>;

std::string_view block_kind_name(const BlockCfg& cfg);
std::int64_t block_in_channels(const BlockCfg& cfg);
std::int64_t block_out_channels(const BlockCfg& cfg);
// Spatial downsampling factor of the block (1 or 2 for the blocks here).
std::int64_t block_stride(const BlockCfg& cfg);
void validate_block(const BlockCfg& cfg);

// ---- sub-layer derivations (shared by forward, init and accounting) -------

ConvModuleCfg pointwise_module(std::int64_t cin, std::int64_t cout, Act act);
std::pair<ConvModuleCfg, ConvModuleCfg> convffn_layers(const ConvFFNCfg& cfg);
std::pair<ConvModuleCfg, ConvModuleCfg> multiplication_layers(const MultiplicationCfg& cfg);
std::pair<ConvModuleCfg, ConvModuleCfg> repdw_layers(std::int64_t channels);  // (3x3, 1x1), BN, no act
std::pair<ConvModuleCfg, ConvModuleCfg> gatedffn_layers(const GatedFFNCfg& cfg);
struct CEDLayers {
  ConvModuleCfg pw1, dw, pw2;
};
CEDLayers ced_layers(const CEDCfg& cfg);
std::pair<ConvModuleCfg, ConvModuleCfg> bottleneck_layers(const BottleneckCfg& cfg);
std::pair<ConvModuleCfg, ConvModuleCfg> c2f_layers(const C2fCfg& cfg);
BottleneckCfg c2f_bottleneck(const C2fCfg& cfg);
ConvSpec fused_dw_spec(std::int64_t channels);

std::string join_name(std::string_view prefix, std::string_view leaf);

// ---- parameters -----------------------------------------------------------

enum class ParamKind : std::uint8_t { kWeight, kBias, kBnAffine, kBnStat };

inline bool is_trainable(ParamKind k) { return k != ParamKind::kBnStat; }

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
  std::int64_t fan_in = 1;  // for weight/bias init
  double fill = 0.0;        // for BN entries
};

std::vector<ParamSpec> block_param_specs(const BlockCfg& cfg, const std::string& prefix);

/// Named tensors of a model, iterated in name order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    ParamKind kind;
  };

  void add(const std::string& name, Tensor<T> value, ParamKind kind);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;
  ParamKind kind(const std::string& name) const;
  void erase(const std::string& name) { entries_.erase(name); }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Scalars in trainable entries (BN running statistics excluded).
  std::int64_t trainable_scalars() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.kind);
    return out;
  }

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

// Kaiming-uniform (bound 1/sqrt(fan_in)) weights and biases; BN gamma=1,
// beta=0, mean=0, var=1. Values are drawn in f64 and cast, so f32 and f64
// stores built from the same seed hold the same numbers up to rounding.
template <typename T>
void init_params(const std::vector<ParamSpec>& specs, ParamStore<T>& store, Rng& rng);

template <typename T>
ParamStore<T> make_block_params(const BlockCfg& cfg, std::uint64_t seed, const std::string& prefix = "");

// Replaces BN running statistics with random values (mean ~ N(0, 0.5),
// var ~ U(0.5, 2)) and BN affine terms with gamma ~ U(0.5, 1.5),
// beta ~ N(0, 0.2), imitating a trained network.
template <typename T>
void randomize_bn(ParamStore<T>& store, Rng& rng);

// ---- forward graph --------------------------------------------------------

enum class BnMode : std::uint8_t { kInference, kBatchStats };

/// Binds a ParamStore to a Tape for one forward pass. Trainable entries
/// become gradient-carrying leaves on a recording tape. In kBatchStats mode
/// running statistics are written to `stats_sink` when it is non-null.
template <typename T>
class Graph {
 public:
  Graph(Tape<T>& tape, const ParamStore<T>& params, BnMode bn_mode = BnMode::kInference,
        ParamStore<T>* stats_sink = nullptr)
      : tape_(tape), params_(params), bn_mode_(bn_mode), stats_sink_(stats_sink) {}

  Tape<T>& tape() { return tape_; }
  const ParamStore<T>& params() const { return params_; }
  BnMode bn_mode() const { return bn_mode_; }
  ParamStore<T>* stats_sink() { return stats_sink_; }

  Var param(const std::string& name);
  const std::map<std::string, Var>& bound() const { return bound_; }

  // Counts convolution multiplies via the reference executor when set.
  void set_mac_counter(std::uint64_t* counter) { mac_counter_ = counter; }
  std::uint64_t* mac_counter() { return mac_counter_; }

  // Gradients of every bound trainable parameter after tape().backward().
  std::map<std::string, Tensor<T>> param_grads() const;

 private:
  Tape<T>& tape_;
  const ParamStore<T>& params_;
  BnMode bn_mode_;
  ParamStore<T>* stats_sink_;
  std::map<std::string, Var> bound_;
  std::uint64_t* mac_counter_ = nullptr;
};

extern template class Graph<float>;
extern template class Graph<double>;

template <typename T>
Var conv_module_forward(Graph<T>& g, const std::string& prefix, const ConvModuleCfg& cfg, Var x);
template <typename T>
Var convffn_forward(Graph<T>& g, const std::string& prefix, const ConvFFNCfg& cfg, Var x);
template <typename T>
Var multiplication_forward(Graph<T>& g, const std::string& prefix, const MultiplicationCfg& cfg, Var x);
template <typename T>
Var rep_dw_forward(Graph<T>& g, const std::string& prefix, const RepDWCfg& cfg, Var x);
template <typename T>
Var gatedffn_forward(Graph<T>& g, const std::string& prefix, const GatedFFNCfg& cfg, Var x);
template <typename T>
Var ced_forward(Graph<T>& g, const std::string& prefix, const CEDCfg& cfg, Var x);
template <typename T>
Var bottleneck_forward(Graph<T>& g, const std::string& prefix, const BottleneckCfg& cfg, Var x);
template <typename T>
Var c2f_forward(Graph<T>& g, const std::string& prefix, const C2fCfg& cfg, Var x);

template <typename T>
Var block_forward(Graph<T>& g, const std::string& prefix, const BlockCfg& cfg, Var x);

// Inference-mode convenience: runs one block on a non-recording tape.
template <typename T>
Tensor<T> run_block(const BlockCfg& cfg, const ParamStore<T>& params, const Tensor<T>& x,
                    const std::string& prefix = "");

}  // namespace remdet

#endif  // REMDET_BLOCKS_HPP_
