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

#include "remdet/reparam.hpp"

#include <algorithm>
#include <cmath>

namespace remdet {

namespace {

template <typename T>
std::vector<T> to_vec(const Tensor<T>& t) {
  return t.vec();
}

template <typename T>
BatchNormParams<T> read_bn(const ParamStore<T>& store, const std::string& prefix) {
  BatchNormParams<T> bn;
  bn.gamma = to_vec(store.get(join_name(prefix, "gamma")));
  bn.beta = to_vec(store.get(join_name(prefix, "beta")));
  bn.running_mean = to_vec(store.get(join_name(prefix, "running_mean")));
  bn.running_var = to_vec(store.get(join_name(prefix, "running_var")));
  bn.eps = kBnEps;
  bn.momentum = kBnMomentum;
  return bn;
}

BatchNormParams<double> bn_to_f64(const BatchNormParams<float>& bn) {
  BatchNormParams<double> out;
  out.gamma.assign(bn.gamma.begin(), bn.gamma.end());
  out.beta.assign(bn.beta.begin(), bn.beta.end());
  out.running_mean.assign(bn.running_mean.begin(), bn.running_mean.end());
  out.running_var.assign(bn.running_var.begin(), bn.running_var.end());
  out.eps = bn.eps;
  out.momentum = bn.momentum;
  return out;
}

const BatchNormParams<double>& bn_to_f64(const BatchNormParams<double>& bn) { return bn; }

template <typename T>
void erase_subtree(ParamStore<T>& store, const std::string& prefix) {
  const std::string p = prefix + ".";
  auto& e = store.entries();
  for (auto it = e.lower_bound(p); it != e.end() && it->first.compare(0, p.size(), p) == 0;) it = e.erase(it);
}

template <typename T>
int fuse_unit(const std::string& prefix, ParamStore<T>& params) {
  const FusedDWConv<T> fused = fuse_repdw(read_repdw_params(params, prefix));
  erase_subtree(params, join_name(prefix, "dw3"));
  erase_subtree(params, join_name(prefix, "dw1"));
  const std::int64_t c = fused.channels();
  params.add(join_name(prefix, "fused.weight"), fused.weight, ParamKind::kWeight);
  params.add(join_name(prefix, "fused.bias"), Tensor<T>::from_data({c}, fused.bias), ParamKind::kBias);
  return 1;
}

template <typename T>
void track(FusionReport& r, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) fail(ErrorCode::kShapeMismatch, "fused output shape differs: " + shape_str(a.shape()) +
                                                                   " vs " + shape_str(b.shape()));
  const double d = max_abs_diff(a, b);
  // NaN must fail the comparison rather than vanish inside std::max.
  r.max_abs_diff = std::isnan(d) || std::isnan(r.max_abs_diff) ? std::nan("") : std::max(r.max_abs_diff, d);
}

void finish(FusionReport& r) { r.pass = !std::isnan(r.max_abs_diff) && r.max_abs_diff <= r.tol; }

}  // namespace

FoldedConv<double> fold_bn(const Tensor<double>& weight, std::span<const double> bias,
                           const BatchNormParams<double>& bn) {
  bn.validate();
  const std::int64_t cout = weight.rank() > 0 ? weight.dim(0) : 0;
  if (bn.channels() != cout) {
    fail(ErrorCode::kShapeMismatch, "bn has " + std::to_string(bn.channels()) + " channels, conv has " +
                                        std::to_string(cout));
  }
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != cout) {
    fail(ErrorCode::kShapeMismatch, "bias length does not match out_channels");
  }
  FoldedConv<double> out{weight, std::vector<double>(static_cast<std::size_t>(cout))};
  const std::int64_t per = weight.numel() / cout;
  for (std::int64_t k = 0; k < cout; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double scale = bn.gamma[i] / std::sqrt(bn.running_var[i] + bn.eps);
    for (std::int64_t j = 0; j < per; ++j) out.weight[k * per + j] = weight[k * per + j] * scale;
    const double b = bias.empty() ? 0.0 : bias[i];
    out.bias[i] = bn.beta[i] + (b - bn.running_mean[i]) * scale;
  }
  return out;
}

FoldedConv<double> embed_dw1x1_into_3x3(const Tensor<double>& w1, std::span<const double> b1) {
  if (w1.rank() != 4 || w1.dim(1) != 1 || w1.dim(2) != 1 || w1.dim(3) != 1) {
    fail(ErrorCode::kShapeMismatch, "expected a [C,1,1,1] depthwise kernel, got " + shape_str(w1.shape()));
  }
  const std::int64_t c = w1.dim(0);
  Tensor<double> w3({c, 1, 3, 3});
  for (std::int64_t k = 0; k < c; ++k) w3.at(k, 0, 1, 1) = w1[k];
  return {std::move(w3), std::vector<double>(b1.begin(), b1.end())};
}

template <typename T>
RepDWTrainParams<T> read_repdw_params(const ParamStore<T>& store, const std::string& prefix) {
  RepDWTrainParams<T> p;
  p.w3 = store.get(join_name(prefix, "dw3.conv.weight"));
  p.bn3 = read_bn(store, join_name(prefix, "dw3.bn"));
  p.w1 = store.get(join_name(prefix, "dw1.conv.weight"));
  p.bn1 = read_bn(store, join_name(prefix, "dw1.bn"));
  return p;
}

template <typename T>
FusedDWConv<T> fuse_repdw(const RepDWTrainParams<T>& p) {
  if (p.w3.rank() != 4 || p.w3.dim(1) != 1 || p.w3.dim(2) != 3 || p.w3.dim(3) != 3) {
    fail(ErrorCode::kShapeMismatch, "RepDW 3x3 branch must be [C,1,3,3], got " + shape_str(p.w3.shape()));
  }
  const std::int64_t c = p.w3.dim(0);
  if (p.w1.rank() != 4 || p.w1.dim(0) != c) {
    fail(ErrorCode::kShapeMismatch, "RepDW 1x1 branch must be [" + std::to_string(c) + ",1,1,1], got " +
                                        shape_str(p.w1.shape()));
  }
  const FoldedConv<double> a = fold_bn(p.w3.template cast<double>(), {}, bn_to_f64(p.bn3));
  const FoldedConv<double> f1 = fold_bn(p.w1.template cast<double>(), {}, bn_to_f64(p.bn1));
  const FoldedConv<double> b = embed_dw1x1_into_3x3(f1.weight, f1.bias);
  Tensor<double> w = a.weight;
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] += b.weight[i];
  FusedDWConv<T> out;
  out.weight = w.template cast<T>();
  out.bias.resize(static_cast<std::size_t>(c));
  for (std::size_t k = 0; k < out.bias.size(); ++k) out.bias[k] = static_cast<T>(a.bias[k] + b.bias[k]);
  return out;
}

template <typename T>
int fuse_block(BlockCfg& cfg, const std::string& prefix, ParamStore<T>& params) {
  if (auto* r = std::get_if<RepDWCfg>(&cfg)) {
    if (r->mode == RepMode::kDeploy) fail(ErrorCode::kAlreadyFused, "RepDW at " + prefix + " is already fused");
    r->mode = RepMode::kDeploy;
    return fuse_unit(prefix, params);
  }
  if (auto* gcfg = std::get_if<GatedFFNCfg>(&cfg)) {
    if (gcfg->mode == RepMode::kDeploy) fail(ErrorCode::kAlreadyFused, "GatedFFN at " + prefix + " is already fused");
    gcfg->mode = RepMode::kDeploy;
    return fuse_unit(join_name(prefix, "repdw"), params);
  }
  return 0;
}

template <typename T>
Model<T> fuse_model(const Model<T>& model) {
  if (model.cfg.deploy) fail(ErrorCode::kAlreadyFused, "model '" + model.cfg.name + "' is already fused");
  Model<T> out = model;
  for (auto& node : out.nodes) fuse_block(node.cfg, node.name, out.params);
  out.cfg.deploy = true;
  return out;
}

template <typename T>
FusionReport verify_fusion(const Model<T>& reference, const Model<T>& fused, int n_samples, double tol,
                           std::uint64_t seed, std::int64_t h, std::int64_t w) {
  FusionReport r;
  r.tol = tol;
  r.samples = n_samples;
  Rng rng(seed);
  for (int s = 0; s < n_samples; ++s) {
    const auto x = random_normal<T>({1, reference.cfg.in_channels, h, w}, rng, 2.0);
    const auto a = model_forward(reference, x);
    const auto b = model_forward(fused, x);
    for (std::size_t i = 0; i < a.features.size(); ++i) track(r, a.features[i], b.features.at(i));
    if (a.logits && b.logits) track(r, *a.logits, *b.logits);
  }
  finish(r);
  return r;
}

template <typename T>
FusionReport verify_block_fusion(const BlockCfg& reference_cfg, const ParamStore<T>& reference,
                                 const BlockCfg& fused_cfg, const ParamStore<T>& fused, int n_samples, double tol,
                                 std::uint64_t seed, std::int64_t h, std::int64_t w) {
  FusionReport r;
  r.tol = tol;
  r.samples = n_samples;
  Rng rng(seed);
  const std::int64_t c = block_in_channels(reference_cfg);
  for (int s = 0; s < n_samples; ++s) {
    const auto x = random_normal<T>({1, c, h, w}, rng, 2.0);
    track(r, run_block(reference_cfg, reference, x), run_block(fused_cfg, fused, x));
  }
  finish(r);
  return r;
}

#define REMDET_INSTANTIATE_REPARAM(T)                                                                          \
  template RepDWTrainParams<T> read_repdw_params<T>(const ParamStore<T>&, const std::string&);                 \
  template FusedDWConv<T> fuse_repdw<T>(const RepDWTrainParams<T>&);                                           \
  template int fuse_block<T>(BlockCfg&, const std::string&, ParamStore<T>&);                                   \
  template Model<T> fuse_model<T>(const Model<T>&);                                                            \
  template FusionReport verify_fusion<T>(const Model<T>&, const Model<T>&, int, double, std::uint64_t,         \
                                         std::int64_t, std::int64_t);                                          \
  template FusionReport verify_block_fusion<T>(const BlockCfg&, const ParamStore<T>&, const BlockCfg&,         \
                                               const ParamStore<T>&, int, double, std::uint64_t, std::int64_t, \
                                               std::int64_t);

REMDET_INSTANTIATE_REPARAM(float)
REMDET_INSTANTIATE_REPARAM(double)

}  // namespace remdet
