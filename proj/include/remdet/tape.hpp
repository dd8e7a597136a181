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

// Reverse-mode differentiation over the pure ops in ops.hpp.
//
// A Tape records every executed op in execution order, so node ids are a
// topological order of the graph; backward() walks ids in descending order
// and runs each node's VJP at most once. With recording disabled the tape
// only holds forward values (the inference path).

#ifndef REMDET_TAPE_HPP_
#define REMDET_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "remdet/ops.hpp"
#include "remdet/tensor.hpp"

namespace remdet {

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
  bool operator==(const Var&) const = default;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kConv2d,
  kBatchNorm,
  kActivation,
  kMul,
  kAdd,
  kSplit,
  kConcat,
  kPatchMerge,
  kGlobalAvgPool,
  kLinear,
  kReduce,
  kCrossEntropy,
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return record_; }

  Var leaf(Tensor<T> value, bool requires_grad = false);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Records an op result. `backward` receives the accumulated output gradient
  // and must route it to parents through accumulate().
  Var push(OpKind kind, Tensor<T> value, std::vector<Var> parents, Backward backward);

  const Tensor<T>& value(Var v) const { return node(v).value; }
  OpKind kind(Var v) const { return node(v).kind; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor<T>& g);
  void accumulate(Var v, std::span<const T> g);

  // Seeds d(root)/d(root) = 1 (root must hold a single scalar).
  void backward(Var root);
  void backward(Var root, const Tensor<T>& seed);

  bool has_grad(Var v) const { return node(v).has_grad; }
  // Zero tensor of the right shape when no gradient reached `v`.
  Tensor<T> grad(Var v) const;

  // Number of VJP invocations performed by the last backward() call.
  std::size_t backward_visits() const { return visits_; }

  // Replays the VJP of a recorded conv2d node in isolation.
  ConvGrads<T> conv2d_vjp(Var conv_node, const Tensor<T>& grad_out) const;

  // Attached by ad::conv2d so that conv2d_vjp can be replayed.
  void set_conv_meta(Var v, const ConvSpec& spec, bool has_bias);

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    Tensor<T> value;
    std::vector<Var> parents;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor<T> grad;
    std::optional<ConvSpec> conv_spec;
    bool conv_has_bias = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  bool record_;
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Differentiable wrappers. Each computes its value with the pure op and
// records the matching VJP.
namespace ad {

// When `multiplies` is non-null the counting reference executor is used.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::optional<Var> bias, const ConvSpec& spec,
           std::uint64_t* multiplies = nullptr);

// Running statistics are treated as constants.
template <typename T>
Var batchnorm_infer(Tape<T>& tape, Var x, Var gamma, Var beta, Var mean, Var var, double eps);

// Batch statistics; when `running` is non-null its running stats are updated.
template <typename T>
Var batchnorm_train(Tape<T>& tape, Var x, Var gamma, Var beta, double eps, BatchNormParams<T>* running);

template <typename T>
Var activation(Tape<T>& tape, Var x, Act act);
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);
template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
std::vector<Var> split_channels(Tape<T>& tape, Var x, std::span<const std::int64_t> sizes);
template <typename T>
Var concat_channels(Tape<T>& tape, std::span<const Var> xs);
template <typename T>
Var patch_merge(Tape<T>& tape, Var x);
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b);
// sum_i x_i * weights_i as a [1] scalar; `weights` must match x's shape.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights);
// Mean softmax cross-entropy over the batch as a [1] scalar.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int64_t> labels);

}  // namespace ad

}  // namespace remdet

#endif  // REMDET_TAPE_HPP_
