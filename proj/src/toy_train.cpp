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

#include "remdet/toy_train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace remdet {

namespace {

constexpr double kNoiseSigma = 0.05;

// Distance from (px, py) to the segment through (cx, cy) with direction
// (dx, dy) and half-length `half`.
double segment_distance(double px, double py, double cx, double cy, double dx, double dy, double half) {
  const double t = std::clamp((px - cx) * dx + (py - cy) * dy, -half, half);
  const double qx = cx + t * dx - px;
  const double qy = cy + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

void shuffle(std::vector<std::int64_t>& v, Rng& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }
}

}  // namespace

Tensor<float> ToyDataset::gather(std::span<const std::int64_t> idx) const {
  const std::int64_t per = images.numel() / size();
  Shape shape = images.shape();
  shape[0] = static_cast<std::int64_t>(idx.size());
  Tensor<float> out(shape);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto src = images.data().subspan(static_cast<std::size_t>(idx[b] * per), static_cast<std::size_t>(per));
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b) * per);
  }
  return out;
}

std::vector<std::int64_t> ToyDataset::gather_labels(std::span<const std::int64_t> idx) const {
  std::vector<std::int64_t> out;
  out.reserve(idx.size());
  for (std::int64_t i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

ToyDataset gen_synthetic(std::uint64_t seed, std::int64_t n, int classes, std::int64_t extent) {
  if (classes < 2 || classes > 8) fail(ErrorCode::kInvalidConfig, "classes must be in [2, 8]");
  if (n < 8 * classes) fail(ErrorCode::kInvalidConfig, "need at least 8 samples per class");
  if (extent < 8) fail(ErrorCode::kInvalidConfig, "image extent must be at least 8");
  Rng rng(seed);
  ToyDataset ds;
  ds.seed = seed;
  ds.classes = classes;
  ds.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ds.labels[static_cast<std::size_t>(i)] = i % classes;
  shuffle(ds.labels, rng);

  ds.images = Tensor<float>({n, 1, extent, extent});
  const double mid = 0.5 * static_cast<double>(extent - 1);
  const double jitter = static_cast<double>(extent) / 10.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<double>(ds.labels[static_cast<std::size_t>(i)]);
    const double angle = k * std::numbers::pi / classes + rng.uniform(-0.08, 0.08);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double cx = mid + rng.uniform(-jitter, jitter);
    const double cy = mid + rng.uniform(-jitter, jitter);
    const double half = 0.5 * static_cast<double>(extent) * rng.uniform(0.45, 0.7);
    const double thick = rng.uniform(1.0, 1.8);
    for (std::int64_t y = 0; y < extent; ++y) {
      for (std::int64_t x = 0; x < extent; ++x) {
        const double dist = segment_distance(static_cast<double>(x), static_cast<double>(y), cx, cy, dx, dy, half);
        const double v = std::clamp(thick + 0.5 - dist, 0.0, 1.0) + rng.normal(0.0, kNoiseSigma);
        ds.images.at(i, 0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return ds;
}

void SgdHyper::validate() const {
  if (!(lr > 0.0)) fail(ErrorCode::kInvalidConfig, "lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::kInvalidConfig, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kInvalidConfig, "weight decay must be non-negative");
}

template <typename T>
void sgd_update(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, const SgdHyper& hyper,
                SgdState<T>& state) {
  hyper.validate();
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = params.get(name);
    if (p.shape() != g.shape()) {
      fail(ErrorCode::kShapeMismatch, "gradient for " + name + " has shape " + shape_str(g.shape()) +
                                          ", parameter has " + shape_str(p.shape()));
    }
    const double wd = params.kind(name) == ParamKind::kBnAffine ? 0.0 : hyper.weight_decay;
    auto [it, fresh] = state.velocity.try_emplace(name, p.shape());
    Tensor<T>& v = it->second;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double vi = hyper.momentum * static_cast<double>(v[i]) + static_cast<double>(g[i]) +
                        wd * static_cast<double>(p[i]);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - hyper.lr * vi);
    }
  }
}

template void sgd_update<float>(ParamStore<float>&, const std::map<std::string, Tensor<float>>&, const SgdHyper&,
                                SgdState<float>&);
template void sgd_update<double>(ParamStore<double>&, const std::map<std::string, Tensor<double>>&,
                                 const SgdHyper&, SgdState<double>&);

double mean_loss(const std::vector<double>& curve, std::size_t begin, std::size_t end) {
  end = std::min(end, curve.size());
  if (begin >= end) fail(ErrorCode::kInvalidConfig, "empty loss window");
  return std::accumulate(curve.begin() + static_cast<std::ptrdiff_t>(begin),
                         curve.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

double toy_accuracy(const Model<float>& model, const ToyDataset& data) {
  constexpr std::int64_t kChunk = 128;
  std::int64_t correct = 0;
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < data.size(); start += kChunk) {
    idx.resize(static_cast<std::size_t>(std::min(kChunk, data.size() - start)));
    std::iota(idx.begin(), idx.end(), start);
    const auto pred = predict_labels(model, data.gather(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += pred[i] == data.labels[static_cast<std::size_t>(idx[i])] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ToyTrainResult train_toy(const ToyTrainCfg& cfg) {
  if (cfg.block != StageBlock::kConvFFN && cfg.block != StageBlock::kMult && cfg.block != StageBlock::kGatedFFN) {
    fail(ErrorCode::kInvalidConfig, "train-toy supports convffn, mult and gatedffn, got " +
                                        std::string(stage_block_name(cfg.block)));
  }
  if (cfg.steps < 0 || cfg.batch < 2) fail(ErrorCode::kInvalidConfig, "steps must be >= 0 and batch >= 2");
  cfg.hyper.validate();

  ToyTrainResult res;
  res.data = gen_synthetic(cfg.seed, cfg.dataset_size, cfg.classes);
  res.model = build_model<float>(toy_classifier_cfg(cfg.block, cfg.e, cfg.width, cfg.classes), cfg.seed + 1);
  Model<float>& model = res.model;
  SgdState<float> opt;
  Rng order_rng(cfg.seed + 2);

  std::vector<std::int64_t> order(static_cast<std::size_t>(res.data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto next_batch = [&]() {
    if (cursor + static_cast<std::size_t>(cfg.batch) > order.size()) {
      shuffle(order, order_rng);
      cursor = 0;
    }
    std::span<const std::int64_t> idx(order.data() + cursor, static_cast<std::size_t>(cfg.batch));
    cursor += static_cast<std::size_t>(cfg.batch);
    return idx;
  };

  // One forward/backward on a batch; updates running BN statistics and
  // returns the loss.
  const auto step = [&](std::span<const std::int64_t> idx, bool update) {
    Tape<float> tape;
    Graph<float> g(tape, model.params, BnMode::kBatchStats, update ? &model.params : nullptr);
    const auto labels = res.data.gather_labels(idx);
    const ModelVars vars = model_forward(g, model, tape.constant(res.data.gather(idx)));
    const Var loss = ad::cross_entropy(tape, *vars.logits, labels);
    const double value = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(value)) fail(ErrorCode::kDivergedLoss, "loss became non-finite");
    if (!update) return value;
    tape.backward(loss);
    const auto grads = g.param_grads();
    for (const auto& [name, grad] : grads) {
      if (std::any_of(grad.data().begin(), grad.data().end(), [](float v) { return v != 0.0f; })) {
        res.grads_seen.insert(name);
      }
    }
    sgd_update(model.params, grads, cfg.hyper, opt);
    return value;
  };

  if (cfg.steps == 0) {
    res.initial_loss = step(next_batch(), false);
    res.final_loss = res.initial_loss;
  }
  for (int s = 0; s < cfg.steps; ++s) {
    res.loss_curve.push_back(step(next_batch(), true));
    if (s == 0) res.initial_loss = res.loss_curve.front();
  }
  if (!res.loss_curve.empty()) {
    const std::size_t n = res.loss_curve.size();
    res.final_loss = mean_loss(res.loss_curve, n - std::min<std::size_t>(10, n), n);
  }
  res.final_train_acc = toy_accuracy(model, res.data);
  return res;
}

ToyTrainResult train_toy(StageBlock block, double e, int steps, std::uint64_t seed) {
  ToyTrainCfg cfg;
  cfg.block = block;
  cfg.e = e;
  cfg.steps = steps;
  cfg.seed = seed;
  return train_toy(cfg);
}

}  // namespace remdet
