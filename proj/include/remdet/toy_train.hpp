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

// Synthetic bar-orientation classification and a momentum-SGD trainer for
// the toy classifier (stem conv -> 2 blocks -> GAP -> linear).

#ifndef REMDET_TOY_TRAIN_HPP_
#define REMDET_TOY_TRAIN_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "remdet/model.hpp"

namespace remdet {

struct ToyDataset {
  Tensor<float> images;  // [n, 1, extent, extent], values in [0, 1]
  std::vector<std::int64_t> labels;
  std::uint64_t seed = 0;
  int classes = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  // Rows `idx` gathered into a batch.
  Tensor<float> gather(std::span<const std::int64_t> idx) const;
  std::vector<std::int64_t> gather_labels(std::span<const std::int64_t> idx) const;
};

// Class k is a bar at angle k*pi/classes with random centre jitter, length
// and thickness, plus N(0, 0.05) pixel noise; clamped to [0, 1]. Labels are
// balanced within one. Requires classes in [2, 8] and n >= 8*classes.
ToyDataset gen_synthetic(std::uint64_t seed, std::int64_t n, int classes, std::int64_t extent = 32);

struct SgdHyper {
  double lr = 0.05;
  double momentum = 0.937;
  double weight_decay = 5e-4;

  void validate() const;
};

template <typename T>
struct SgdState {
  std::map<std::string, Tensor<T>> velocity;
};

// v <- momentum*v + g + wd*p;  p <- p - lr*v. BN affine entries skip the
// weight-decay term. Entries without a gradient are left untouched.
template <typename T>
void sgd_update(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, const SgdHyper& hyper,
                SgdState<T>& state);

struct ToyTrainCfg {
  StageBlock block = StageBlock::kGatedFFN;
  double e = 3.0;
  int steps = 500;
  std::uint64_t seed = 42;
  int batch = 32;
  int classes = 4;
  std::int64_t dataset_size = 512;
  std::int64_t width = 16;
  SgdHyper hyper;
};

struct ToyTrainResult {
  std::vector<double> loss_curve;  // one entry per step
  double initial_loss = 0.0;       // first batch, before any update
  double final_loss = 0.0;         // mean of the last min(10, steps) losses
  double final_train_acc = 0.0;    // inference mode over the whole dataset
  std::set<std::string> grads_seen;  // trainable entries that received a nonzero gradient
  Model<float> model;
  ToyDataset data;
};

// Throws InvalidConfig for unsupported block kinds and DivergedLoss when a
// loss turns non-finite.
ToyTrainResult train_toy(const ToyTrainCfg& cfg);
ToyTrainResult train_toy(StageBlock block, double e, int steps, std::uint64_t seed);

// Mean of loss[begin, end).
double mean_loss(const std::vector<double>& curve, std::size_t begin, std::size_t end);

double toy_accuracy(const Model<float>& model, const ToyDataset& data);

}  // namespace remdet

#endif  // REMDET_TOY_TRAIN_HPP_
