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

#include "remdet/blocks.hpp"

#include <cmath>

namespace remdet {

std::int64_t round_channels(double requested) {
  if (!std::isfinite(requested) || requested <= 0.0) {
    fail(ErrorCode::kInvalidConfig, "channel count must be positive, got " + std::to_string(requested));
  }
  return std::max<std::int64_t>(1, std::llround(requested));
}

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kInvalidConfig, what);
}

void require_positive_e(double e, const char* block) {
  require(std::isfinite(e) && e > 0.0, std::string(block) + " expansion must be positive");
}

}  // namespace

std::string_view block_kind_name(const BlockCfg& cfg) {
  return std::visit(Overloaded{
                        [](const ConvModuleCfg&) { return std::string_view("conv_module"); },
                        [](const ConvFFNCfg&) { return std::string_view("convffn"); },
                        [](const MultiplicationCfg&) { return std::string_view("mult"); },
                        [](const RepDWCfg&) { return std::string_view("repdw"); },
                        [](const GatedFFNCfg&) { return std::string_view("gatedffn"); },
                        [](const CEDCfg&) { return std::string_view("ced"); },
                        [](const BottleneckCfg&) { return std::string_view("bottleneck"); },
                        [](const C2fCfg& c) {
                          return c.e_overall == 1.0 && c.e_bottleneck == 0.25 ? std::string_view("channelc2f")
                                                                              : std::string_view("c2f");
                        },
                    },
                    cfg);
}

std::int64_t block_in_channels(const BlockCfg& cfg) {
  return std::visit(Overloaded{
                        [](const ConvModuleCfg& c) { return c.spec.in_channels; },
                        [](const ConvFFNCfg& c) { return c.c1; },
                        [](const MultiplicationCfg& c) { return c.c1; },
                        [](const RepDWCfg& c) { return c.channels; },
                        [](const GatedFFNCfg& c) { return c.c1; },
                        [](const CEDCfg& c) { return c.c_in; },
                        [](const BottleneckCfg& c) { return c.channels; },
                        [](const C2fCfg& c) { return c.c1; },
                    },
                    cfg);
}

std::int64_t block_out_channels(const BlockCfg& cfg) {
  return std::visit(Overloaded{
                        [](const ConvModuleCfg& c) { return c.spec.out_channels; },
                        [](const ConvFFNCfg& c) { return c.c2; },
                        [](const MultiplicationCfg& c) { return c.c2; },
                        [](const RepDWCfg& c) { return c.channels; },
                        [](const GatedFFNCfg& c) { return c.c2; },
                        [](const CEDCfg& c) { return c.c_out; },
                        [](const BottleneckCfg& c) { return c.channels; },
                        [](const C2fCfg& c) { return c.c2; },
                    },
                    cfg);
}

std::int64_t block_stride(const BlockCfg& cfg) {
  if (const auto* cm = std::get_if<ConvModuleCfg>(&cfg)) return cm->spec.stride;
  if (std::holds_alternative<CEDCfg>(cfg)) return 2;
  return 1;
}

void validate_block(const BlockCfg& cfg) {
  std::visit(Overloaded{
                 [](const ConvModuleCfg& c) { c.spec.validate(); },
                 [](const ConvFFNCfg& c) {
                   require(c.c1 > 0 && c.c2 > 0, "convffn channels must be positive");
                   require_positive_e(c.e, "convffn");
                   c.hidden();
                 },
                 [](const MultiplicationCfg& c) {
                   require(c.c1 > 0 && c.c2 > 0, "mult channels must be positive");
                   require_positive_e(c.e, "mult");
                   c.half_hidden();
                 },
                 [](const RepDWCfg& c) { require(c.channels > 0, "repdw channels must be positive"); },
                 [](const GatedFFNCfg& c) {
                   require(c.c1 > 0 && c.c2 > 0, "gatedffn channels must be positive");
                   require_positive_e(c.e, "gatedffn");
                   c.half_hidden();
                 },
                 [](const CEDCfg& c) {
                   require(c.c_in > 0 && c.c_out > 0, "ced channels must be positive");
                   require(c.t == 1 || c.t == 2, "ced expansion t must be 1 or 2");
                 },
                 [](const BottleneckCfg& c) {
                   require(c.channels > 0, "bottleneck channels must be positive");
                   require_positive_e(c.e, "bottleneck");
                   c.hidden();
                 },
                 [](const C2fCfg& c) {
                   require(c.c1 > 0 && c.c2 > 0, "c2f channels must be positive");
                   require(c.n >= 0, "c2f bottleneck count must be non-negative");
                   require_positive_e(c.e_overall, "c2f");
                   require_positive_e(c.e_bottleneck, "c2f bottleneck");
                   c.hidden();
                 },
             },
             cfg);
}

ConvModuleCfg pointwise_module(std::int64_t cin, std::int64_t cout, Act act) {
  return {ConvSpec::pointwise(cin, cout), true, act};
}

std::pair<ConvModuleCfg, ConvModuleCfg> convffn_layers(const ConvFFNCfg& cfg) {
  const std::int64_t h = cfg.hidden();
  return {pointwise_module(cfg.c1, h, Act::kSiLU), pointwise_module(h, cfg.c2, Act::kNone)};
}

std::pair<ConvModuleCfg, ConvModuleCfg> multiplication_layers(const MultiplicationCfg& cfg) {
  const std::int64_t c = cfg.half_hidden();
  return {pointwise_module(cfg.c1, 2 * c, Act::kSiLU), pointwise_module(cfg.cv2_in(), cfg.c2, Act::kNone)};
}

std::pair<ConvModuleCfg, ConvModuleCfg> repdw_layers(std::int64_t channels) {
  return {{ConvSpec::depthwise(channels, 3), true, Act::kNone}, {ConvSpec::depthwise(channels, 1), true, Act::kNone}};
}

std::pair<ConvModuleCfg, ConvModuleCfg> gatedffn_layers(const GatedFFNCfg& cfg) {
  const std::int64_t h = cfg.half_hidden();
  return {pointwise_module(cfg.c1, 2 * h, Act::kSiLU), pointwise_module(h, cfg.c2, Act::kNone)};
}

CEDLayers ced_layers(const CEDCfg& cfg) {
  return {pointwise_module(cfg.c_in, cfg.expanded(), Act::kSiLU),
          {ConvSpec::depthwise(cfg.expanded(), 3), true, Act::kSiLU},
          pointwise_module(cfg.merged(), cfg.c_out, Act::kSiLU)};
}

std::pair<ConvModuleCfg, ConvModuleCfg> bottleneck_layers(const BottleneckCfg& cfg) {
  const std::int64_t h = cfg.hidden();
  return {{{cfg.channels, h, 3, 3, 1, 1, 1}, true, Act::kSiLU}, {{h, cfg.channels, 3, 3, 1, 1, 1}, true, Act::kSiLU}};
}

std::pair<ConvModuleCfg, ConvModuleCfg> c2f_layers(const C2fCfg& cfg) {
  const std::int64_t h = cfg.hidden();
  return {pointwise_module(cfg.c1, 2 * h, Act::kSiLU), pointwise_module(cfg.concat_width(), cfg.c2, Act::kSiLU)};
}

BottleneckCfg c2f_bottleneck(const C2fCfg& cfg) { return {cfg.hidden(), cfg.e_bottleneck, cfg.shortcut}; }

ConvSpec fused_dw_spec(std::int64_t channels) { return ConvSpec::depthwise(channels, 3); }

std::string join_name(std::string_view prefix, std::string_view leaf) {
  if (prefix.empty()) return std::string(leaf);
  std::string out(prefix);
  out += '.';
  out += leaf;
  return out;
}

// ---- parameter specs ------------------------------------------------------

namespace {

void conv_module_specs(const ConvModuleCfg& cfg, const std::string& prefix, std::vector<ParamSpec>& out) {
  const ConvSpec& s = cfg.spec;
  const std::int64_t fan_in = (s.in_channels / s.groups) * s.kernel_h * s.kernel_w;
  out.push_back({join_name(prefix, "conv.weight"), s.weight_shape(), ParamKind::kWeight, fan_in, 0.0});
  if (!cfg.with_bn) {
    out.push_back({join_name(prefix, "conv.bias"), {s.out_channels}, ParamKind::kBias, fan_in, 0.0});
    return;
  }
  const Shape vec{s.out_channels};
  out.push_back({join_name(prefix, "bn.gamma"), vec, ParamKind::kBnAffine, 1, 1.0});
  out.push_back({join_name(prefix, "bn.beta"), vec, ParamKind::kBnAffine, 1, 0.0});
  out.push_back({join_name(prefix, "bn.running_mean"), vec, ParamKind::kBnStat, 1, 0.0});
  out.push_back({join_name(prefix, "bn.running_var"), vec, ParamKind::kBnStat, 1, 1.0});
}

void pair_specs(const std::pair<ConvModuleCfg, ConvModuleCfg>& layers, const std::string& prefix, const char* a,
                const char* b, std::vector<ParamSpec>& out) {
  conv_module_specs(layers.first, join_name(prefix, a), out);
  conv_module_specs(layers.second, join_name(prefix, b), out);
}

void repdw_specs(std::int64_t channels, RepMode mode, const std::string& prefix, std::vector<ParamSpec>& out) {
  if (mode == RepMode::kTrain) {
    pair_specs(repdw_layers(channels), prefix, "dw3", "dw1", out);
    return;
  }
  out.push_back({join_name(prefix, "fused.weight"), fused_dw_spec(channels).weight_shape(), ParamKind::kWeight, 9, 0.0});
  out.push_back({join_name(prefix, "fused.bias"), {channels}, ParamKind::kBias, 9, 0.0});
}

}  // namespace

std::vector<ParamSpec> block_param_specs(const BlockCfg& cfg, const std::string& prefix) {
  validate_block(cfg);
  std::vector<ParamSpec> out;
  std::visit(Overloaded{
                 [&](const ConvModuleCfg& c) { conv_module_specs(c, prefix, out); },
                 [&](const ConvFFNCfg& c) { pair_specs(convffn_layers(c), prefix, "cv1", "cv2", out); },
                 [&](const MultiplicationCfg& c) { pair_specs(multiplication_layers(c), prefix, "cv1", "cv2", out); },
                 [&](const RepDWCfg& c) { repdw_specs(c.channels, c.mode, prefix, out); },
                 [&](const GatedFFNCfg& c) {
                   const auto layers = gatedffn_layers(c);
                   conv_module_specs(layers.first, join_name(prefix, "cv1"), out);
                   repdw_specs(c.half_hidden(), c.mode, join_name(prefix, "repdw"), out);
                   conv_module_specs(layers.second, join_name(prefix, "cv2"), out);
                 },
                 [&](const CEDCfg& c) {
                   const auto layers = ced_layers(c);
                   conv_module_specs(layers.pw1, join_name(prefix, "pw1"), out);
                   conv_module_specs(layers.dw, join_name(prefix, "dw"), out);
                   conv_module_specs(layers.pw2, join_name(prefix, "pw2"), out);
                 },
                 [&](const BottleneckCfg& c) { pair_specs(bottleneck_layers(c), prefix, "cv1", "cv2", out); },
                 [&](const C2fCfg& c) {
                   const auto layers = c2f_layers(c);
                   conv_module_specs(layers.first, join_name(prefix, "cv1"), out);
                   const auto bottleneck = bottleneck_layers(c2f_bottleneck(c));
                   for (std::int64_t i = 0; i < c.n; ++i) {
                     pair_specs(bottleneck, join_name(prefix, "m." + std::to_string(i)), "cv1", "cv2", out);
                   }
                   conv_module_specs(layers.second, join_name(prefix, "cv2"), out);
                 },
             },
             cfg);
  return out;
}

// ---- ParamStore -----------------------------------------------------------

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> value, ParamKind kind) {
  if (name.empty()) fail(ErrorCode::kInvalidConfig, "empty parameter name");
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(value), kind});
  if (!inserted) fail(ErrorCode::kInvalidConfig, "duplicate parameter " + name);
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCode::kModeMismatch, "missing parameter " + name);
  return it->second.value;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCode::kModeMismatch, "missing parameter " + name);
  return it->second.value;
}

template <typename T>
ParamKind ParamStore<T>::kind(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCode::kModeMismatch, "missing parameter " + name);
  return it->second.kind;
}

template <typename T>
std::int64_t ParamStore<T>::trainable_scalars() const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (is_trainable(e.kind)) n += e.value.numel();
  }
  return n;
}

template <typename T>
bool ParamStore<T>::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.kind != b->second.kind || !(a->second.value == b->second.value)) {
      return false;
    }
  }
  return true;
}

template class ParamStore<float>;
template class ParamStore<double>;

template <typename T>
void init_params(const std::vector<ParamSpec>& specs, ParamStore<T>& store, Rng& rng) {
  for (const auto& s : specs) {
    Tensor<T> t(s.shape);
    if (s.kind == ParamKind::kWeight || s.kind == ParamKind::kBias) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
      for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    } else {
      t.fill(static_cast<T>(s.fill));
    }
    store.add(s.name, std::move(t), s.kind);
  }
}

template <typename T>
ParamStore<T> make_block_params(const BlockCfg& cfg, std::uint64_t seed, const std::string& prefix) {
  ParamStore<T> store;
  Rng rng(seed);
  init_params(block_param_specs(cfg, prefix), store, rng);
  return store;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void randomize_bn(ParamStore<T>& store, Rng& rng) {
  for (auto& [name, e] : store.entries()) {
    double lo = 0.0, hi = 0.0;
    bool normal = false;
    if (ends_with(name, "bn.gamma")) {
      lo = 0.5, hi = 1.5;
    } else if (ends_with(name, "bn.beta")) {
      normal = true, hi = 0.2;
    } else if (ends_with(name, "bn.running_mean")) {
      normal = true, hi = 0.5;
    } else if (ends_with(name, "bn.running_var")) {
      lo = 0.5, hi = 2.0;
    } else {
      continue;
    }
    for (auto& v : e.value.data()) v = static_cast<T>(normal ? rng.normal(0.0, hi) : rng.uniform(lo, hi));
  }
}

#define REMDET_INSTANTIATE_PARAMS(T)                                                              \
  template void init_params<T>(const std::vector<ParamSpec>&, ParamStore<T>&, Rng&);              \
  template ParamStore<T> make_block_params<T>(const BlockCfg&, std::uint64_t, const std::string&); \
  template void randomize_bn<T>(ParamStore<T>&, Rng&);

REMDET_INSTANTIATE_PARAMS(float)
REMDET_INSTANTIATE_PARAMS(double)

// ---- Graph ----------------------------------------------------------------

template <typename T>
Var Graph<T>::param(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor<T>& value = params_.get(name);
  const bool grad = is_trainable(params_.kind(name)) && tape_.recording();
  Var v = tape_.leaf(value, grad);
  bound_.emplace(name, v);
  return v;
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::param_grads() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, v] : bound_) {
    if (tape_.requires_grad(v)) out.emplace(name, tape_.grad(v));
  }
  return out;
}

template class Graph<float>;
template class Graph<double>;

// ---- forward --------------------------------------------------------------

template <typename T>
Var conv_module_forward(Graph<T>& g, const std::string& prefix, const ConvModuleCfg& cfg, Var x) {
  Tape<T>& tape = g.tape();
  std::optional<Var> bias;
  if (!cfg.with_bn) bias = g.param(join_name(prefix, "conv.bias"));
  Var y = ad::conv2d(tape, x, g.param(join_name(prefix, "conv.weight")), bias, cfg.spec, g.mac_counter());
  if (cfg.with_bn) {
    Var gamma = g.param(join_name(prefix, "bn.gamma"));
    Var beta = g.param(join_name(prefix, "bn.beta"));
    const std::string mean_name = join_name(prefix, "bn.running_mean");
    const std::string var_name = join_name(prefix, "bn.running_var");
    if (g.bn_mode() == BnMode::kInference) {
      y = ad::batchnorm_infer(tape, y, gamma, beta, g.param(mean_name), g.param(var_name), kBnEps);
    } else if (ParamStore<T>* sink = g.stats_sink()) {
      BatchNormParams<T> running;
      running.momentum = kBnMomentum;
      running.eps = kBnEps;
      const auto& mean = sink->get(mean_name);
      const auto& var = sink->get(var_name);
      running.running_mean.assign(mean.data().begin(), mean.data().end());
      running.running_var.assign(var.data().begin(), var.data().end());
      running.gamma.assign(mean.data().size(), T(1));
      running.beta.assign(mean.data().size(), T(0));
      y = ad::batchnorm_train(tape, y, gamma, beta, kBnEps, &running);
      std::copy(running.running_mean.begin(), running.running_mean.end(), sink->get(mean_name).data().begin());
      std::copy(running.running_var.begin(), running.running_var.end(), sink->get(var_name).data().begin());
    } else {
      y = ad::batchnorm_train<T>(tape, y, gamma, beta, kBnEps, nullptr);
    }
  }
  return ad::activation(tape, y, cfg.act);
}

namespace {

template <typename T>
void check_channels(Graph<T>& g, Var x, std::int64_t expected, std::string_view block) {
  const Tensor<T>& v = g.tape().value(x);
  if (v.rank() != 4 || v.dim(1) != expected) {
    fail(ErrorCode::kShapeMismatch, std::string(block) + " expects " + std::to_string(expected) +
                                        " input channels, got " + shape_str(v.shape()));
  }
}

}  // namespace

template <typename T>
Var convffn_forward(Graph<T>& g, const std::string& prefix, const ConvFFNCfg& cfg, Var x) {
  check_channels(g, x, cfg.c1, "convffn");
  const auto [cv1, cv2] = convffn_layers(cfg);
  Var y = conv_module_forward(g, join_name(prefix, "cv1"), cv1, x);
  y = conv_module_forward(g, join_name(prefix, "cv2"), cv2, y);
  return cfg.residual() ? ad::add(g.tape(), x, y) : y;
}

template <typename T>
Var multiplication_forward(Graph<T>& g, const std::string& prefix, const MultiplicationCfg& cfg, Var x) {
  check_channels(g, x, cfg.c1, "mult");
  Tape<T>& tape = g.tape();
  const auto [cv1, cv2] = multiplication_layers(cfg);
  const std::int64_t c = cfg.half_hidden();
  Var hidden = conv_module_forward(g, join_name(prefix, "cv1"), cv1, x);
  const std::int64_t sizes[] = {c, c};
  auto parts = ad::split_channels(tape, hidden, sizes);
  Var value = ad::activation(tape, parts[0], Act::kGELU);
  Var gate = ad::activation(tape, parts[1], Act::kGELU);
  Var y = ad::mul(tape, value, gate);
  if (cfg.retain_gate) {
    if (cfg.gate_merge == GateMerge::kConcat) {
      const Var both[] = {y, gate};
      y = ad::concat_channels<T>(tape, both);
    } else {
      y = ad::add(tape, y, gate);
    }
  }
  y = conv_module_forward(g, join_name(prefix, "cv2"), cv2, y);
  return cfg.residual() ? ad::add(tape, y, x) : y;
}

template <typename T>
Var rep_dw_forward(Graph<T>& g, const std::string& prefix, const RepDWCfg& cfg, Var x) {
  check_channels(g, x, cfg.channels, "repdw");
  if (cfg.mode == RepMode::kDeploy) {
    const std::string w = join_name(prefix, "fused.weight");
    if (!g.params().contains(w)) fail(ErrorCode::kModeMismatch, "deploy-mode RepDW without fused parameters at " + prefix);
    return ad::conv2d(g.tape(), x, g.param(w), g.param(join_name(prefix, "fused.bias")), fused_dw_spec(cfg.channels),
                      g.mac_counter());
  }
  const std::string w3 = join_name(prefix, "dw3.conv.weight");
  if (!g.params().contains(w3)) fail(ErrorCode::kModeMismatch, "train-mode RepDW without branch parameters at " + prefix);
  const auto [dw3, dw1] = repdw_layers(cfg.channels);
  Var a = conv_module_forward(g, join_name(prefix, "dw3"), dw3, x);
  Var b = conv_module_forward(g, join_name(prefix, "dw1"), dw1, x);
  return ad::add(g.tape(), a, b);
}

template <typename T>
Var gatedffn_forward(Graph<T>& g, const std::string& prefix, const GatedFFNCfg& cfg, Var x) {
  check_channels(g, x, cfg.c1, "gatedffn");
  Tape<T>& tape = g.tape();
  const auto [cv1, cv2] = gatedffn_layers(cfg);
  const std::int64_t h = cfg.half_hidden();
  Var hidden = conv_module_forward(g, join_name(prefix, "cv1"), cv1, x);
  const std::int64_t sizes[] = {h, h};
  auto parts = ad::split_channels(tape, hidden, sizes);
  Var value = rep_dw_forward(g, join_name(prefix, "repdw"), RepDWCfg{h, cfg.mode}, parts[0]);
  value = ad::activation(tape, value, Act::kGELU);
  Var gate = ad::activation(tape, parts[1], Act::kGELU);
  Var y = conv_module_forward(g, join_name(prefix, "cv2"), cv2, ad::mul(tape, value, gate));
  return cfg.residual() ? ad::add(tape, y, x) : y;
}

template <typename T>
Var ced_forward(Graph<T>& g, const std::string& prefix, const CEDCfg& cfg, Var x) {
  check_channels(g, x, cfg.c_in, "ced");
  const Tensor<T>& xv = g.tape().value(x);
  if (xv.dim(2) % 2 != 0 || xv.dim(3) % 2 != 0) {
    fail(ErrorCode::kOddSpatialExtent, "ced needs even H and W, got " + shape_str(xv.shape()));
  }
  const CEDLayers layers = ced_layers(cfg);
  Var y = conv_module_forward(g, join_name(prefix, "pw1"), layers.pw1, x);
  y = conv_module_forward(g, join_name(prefix, "dw"), layers.dw, y);
  y = ad::patch_merge(g.tape(), y);
  return conv_module_forward(g, join_name(prefix, "pw2"), layers.pw2, y);
}

template <typename T>
Var bottleneck_forward(Graph<T>& g, const std::string& prefix, const BottleneckCfg& cfg, Var x) {
  check_channels(g, x, cfg.channels, "bottleneck");
  const auto [cv1, cv2] = bottleneck_layers(cfg);
  Var y = conv_module_forward(g, join_name(prefix, "cv1"), cv1, x);
  y = conv_module_forward(g, join_name(prefix, "cv2"), cv2, y);
  return cfg.shortcut ? ad::add(g.tape(), x, y) : y;
}

template <typename T>
Var c2f_forward(Graph<T>& g, const std::string& prefix, const C2fCfg& cfg, Var x) {
  check_channels(g, x, cfg.c1, "c2f");
  Tape<T>& tape = g.tape();
  const auto [cv1, cv2] = c2f_layers(cfg);
  const std::int64_t h = cfg.hidden();
  const std::int64_t sizes[] = {h, h};
  std::vector<Var> ys = ad::split_channels(tape, conv_module_forward(g, join_name(prefix, "cv1"), cv1, x), sizes);
  const BottleneckCfg bcfg = c2f_bottleneck(cfg);
  for (std::int64_t i = 0; i < cfg.n; ++i) {
    ys.push_back(bottleneck_forward(g, join_name(prefix, "m." + std::to_string(i)), bcfg, ys.back()));
  }
  Var cat = ad::concat_channels<T>(tape, ys);
  return conv_module_forward(g, join_name(prefix, "cv2"), cv2, cat);
}

template <typename T>
Var block_forward(Graph<T>& g, const std::string& prefix, const BlockCfg& cfg, Var x) {
  return std::visit(Overloaded{
                        [&](const ConvModuleCfg& c) { return conv_module_forward(g, prefix, c, x); },
                        [&](const ConvFFNCfg& c) { return convffn_forward(g, prefix, c, x); },
                        [&](const MultiplicationCfg& c) { return multiplication_forward(g, prefix, c, x); },
                        [&](const RepDWCfg& c) { return rep_dw_forward(g, prefix, c, x); },
                        [&](const GatedFFNCfg& c) { return gatedffn_forward(g, prefix, c, x); },
                        [&](const CEDCfg& c) { return ced_forward(g, prefix, c, x); },
                        [&](const BottleneckCfg& c) { return bottleneck_forward(g, prefix, c, x); },
                        [&](const C2fCfg& c) { return c2f_forward(g, prefix, c, x); },
                    },
                    cfg);
}

template <typename T>
Tensor<T> run_block(const BlockCfg& cfg, const ParamStore<T>& params, const Tensor<T>& x, const std::string& prefix) {
  Tape<T> tape(false);
  Graph<T> g(tape, params);
  Var out = block_forward(g, prefix, cfg, tape.constant(x));
  return tape.value(out);
}

#define REMDET_INSTANTIATE_BLOCKS(T)                                                                        \
  template Var conv_module_forward<T>(Graph<T>&, const std::string&, const ConvModuleCfg&, Var);            \
  template Var convffn_forward<T>(Graph<T>&, const std::string&, const ConvFFNCfg&, Var);                   \
  template Var multiplication_forward<T>(Graph<T>&, const std::string&, const MultiplicationCfg&, Var);     \
  template Var rep_dw_forward<T>(Graph<T>&, const std::string&, const RepDWCfg&, Var);                      \
  template Var gatedffn_forward<T>(Graph<T>&, const std::string&, const GatedFFNCfg&, Var);                 \
  template Var ced_forward<T>(Graph<T>&, const std::string&, const CEDCfg&, Var);                           \
  template Var bottleneck_forward<T>(Graph<T>&, const std::string&, const BottleneckCfg&, Var);             \
  template Var c2f_forward<T>(Graph<T>&, const std::string&, const C2fCfg&, Var);                           \
  template Var block_forward<T>(Graph<T>&, const std::string&, const BlockCfg&, Var);                       \
  template Tensor<T> run_block<T>(const BlockCfg&, const ParamStore<T>&, const Tensor<T>&, const std::string&);

REMDET_INSTANTIATE_BLOCKS(float)
REMDET_INSTANTIATE_BLOCKS(double)

}  // namespace remdet
