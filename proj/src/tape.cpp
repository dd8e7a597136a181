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

#include "remdet/tape.hpp"

#include <memory>
#include <string>

namespace remdet {

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    fail(ErrorCode::kTapeCorrupt, "variable " + std::to_string(v.id) + " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::push(OpKind kind, Tensor<T> value, std::vector<Var> parents, Backward backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  if (record_) {
    for (Var p : parents) {
      if (node(p).requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) {
      n.parents = std::move(parents);
      n.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    fail(ErrorCode::kTapeCorrupt, "gradient shape " + shape_str(g.shape()) + " for value " +
                                      shape_str(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  for (std::int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

template <typename T>
void Tape<T>::accumulate(Var v, std::span<const T> g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  accumulate(v, Tensor<T>::from_data(n.value.shape(), std::vector<T>(g.begin(), g.end())));
}

template <typename T>
void Tape<T>::backward(Var root) {
  const Node& r = node(root);
  if (r.value.numel() != 1) {
    fail(ErrorCode::kShapeMismatch, "backward() without a seed needs a scalar root, got " +
                                        shape_str(r.value.shape()));
  }
  backward(root, Tensor<T>(r.value.shape(), T(1)));
}

template <typename T>
void Tape<T>::backward(Var root, const Tensor<T>& seed) {
  if (!record_) fail(ErrorCode::kTapeCorrupt, "backward() on a non-recording tape");
  node(root);
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
  }
  visits_ = 0;
  accumulate(root, seed);
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    for (Var p : n.parents) {
      if (p.id >= id) fail(ErrorCode::kTapeCorrupt, "parent recorded after child");
    }
    ++visits_;
    const Tensor<T> g = n.grad;
    n.backward(*this, g);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor<T>(n.value.shape());
}

template <typename T>
void Tape<T>::set_conv_meta(Var v, const ConvSpec& spec, bool has_bias) {
  Node& n = node(v);
  n.conv_spec = spec;
  n.conv_has_bias = has_bias;
}

template <typename T>
ConvGrads<T> Tape<T>::conv2d_vjp(Var conv_node, const Tensor<T>& grad_out) const {
  const Node& n = node(conv_node);
  if (n.kind != OpKind::kConv2d || !n.conv_spec || n.parents.size() < 2) {
    fail(ErrorCode::kTapeCorrupt, "node " + std::to_string(conv_node.id) + " is not a recorded conv2d");
  }
  return remdet::conv2d_vjp(value(n.parents[0]), value(n.parents[1]), n.conv_has_bias, *n.conv_spec, grad_out);
}

template class Tape<float>;
template class Tape<double>;

namespace ad {

namespace {

template <typename T>
std::span<const T> span_of(const Tape<T>& tape, std::optional<Var> v) {
  if (!v) return {};
  return tape.value(*v).data();
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::optional<Var> bias, const ConvSpec& spec,
           std::uint64_t* multiplies) {
  Tensor<T> y = multiplies != nullptr
                    ? conv2d_counting(tape.value(x), tape.value(w), span_of(tape, bias), spec, *multiplies)
                    : remdet::conv2d(tape.value(x), tape.value(w), span_of(tape, bias), spec);
  std::vector<Var> parents{x, w};
  if (bias) parents.push_back(*bias);
  Var out = tape.push(OpKind::kConv2d, std::move(y), parents, [x, w, bias, spec](Tape<T>& t, const Tensor<T>& g) {
    auto grads = remdet::conv2d_vjp(t.value(x), t.value(w), bias.has_value(), spec, g);
    t.accumulate(x, grads.grad_x);
    t.accumulate(w, grads.grad_w);
    if (bias) t.accumulate(*bias, std::span<const T>(grads.grad_b));
  });
  if (tape.recording()) tape.set_conv_meta(out, spec, bias.has_value());
  return out;
}

template <typename T>
Var batchnorm_infer(Tape<T>& tape, Var x, Var gamma, Var beta, Var mean, Var var, double eps) {
  const BnView<T> view{tape.value(gamma).data(), tape.value(beta).data(), tape.value(mean).data(),
                       tape.value(var).data(), eps};
  Tensor<T> y = remdet::batchnorm_infer(tape.value(x), view);
  return tape.push(OpKind::kBatchNorm, std::move(y), {x, gamma, beta},
                   [x, gamma, beta, mean, var, eps](Tape<T>& t, const Tensor<T>& g) {
                     const BnView<T> v{t.value(gamma).data(), t.value(beta).data(), t.value(mean).data(),
                                       t.value(var).data(), eps};
                     auto grads = batchnorm_infer_vjp(t.value(x), v, g);
                     t.accumulate(x, grads.grad_x);
                     t.accumulate(gamma, std::span<const T>(grads.grad_gamma));
                     t.accumulate(beta, std::span<const T>(grads.grad_beta));
                   });
}

template <typename T>
Var batchnorm_train(Tape<T>& tape, Var x, Var gamma, Var beta, double eps, BatchNormParams<T>* running) {
  auto stats = std::make_shared<BnBatchStats<T>>();
  Tensor<T> y =
      remdet::batchnorm_train(tape.value(x), tape.value(gamma).data(), tape.value(beta).data(), eps, *stats, running);
  return tape.push(OpKind::kBatchNorm, std::move(y), {x, gamma, beta}, [x, gamma, beta, stats](Tape<T>& t, const Tensor<T>& g) {
    auto grads = batchnorm_train_vjp(t.value(x), t.value(gamma).data(), *stats, g);
    t.accumulate(x, grads.grad_x);
    t.accumulate(gamma, std::span<const T>(grads.grad_gamma));
    t.accumulate(beta, std::span<const T>(grads.grad_beta));
  });
}

template <typename T>
Var activation(Tape<T>& tape, Var x, Act act) {
  if (act == Act::kNone) return x;
  Tensor<T> y = remdet::activation(tape.value(x), act);
  return tape.push(OpKind::kActivation, std::move(y), {x}, [x, act](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, activation_vjp(t.value(x), act, g));
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  Tensor<T> y = ew_mul(tape.value(a), tape.value(b));
  return tape.push(OpKind::kMul, std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, ew_mul(g, t.value(b)));
    t.accumulate(b, ew_mul(g, t.value(a)));
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  Tensor<T> y = ew_add(tape.value(a), tape.value(b));
  return tape.push(OpKind::kAdd, std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
std::vector<Var> split_channels(Tape<T>& tape, Var x, std::span<const std::int64_t> sizes) {
  auto parts = remdet::split_channels(tape.value(x), sizes);
  std::vector<Var> out;
  out.reserve(parts.size());
  std::int64_t offset = 0;
  for (auto& part : parts) {
    const std::int64_t lo = offset, width = part.dim(1);
    offset += width;
    out.push_back(tape.push(OpKind::kSplit, std::move(part), {x}, [x, lo, width](Tape<T>& t, const Tensor<T>& g) {
      const Tensor<T>& xv = t.value(x);
      Tensor<T> gx(xv.shape());
      const std::int64_t hw = xv.dim(2) * xv.dim(3);
      for (std::int64_t n = 0; n < xv.dim(0); ++n) {
        const T* src = &g.at(n, 0, 0, 0);
        std::copy(src, src + width * hw, &gx.at(n, lo, 0, 0));
      }
      t.accumulate(x, gx);
    }));
  }
  return out;
}

template <typename T>
Var concat_channels(Tape<T>& tape, std::span<const Var> xs) {
  std::vector<Tensor<T>> values;
  std::vector<std::int64_t> widths;
  values.reserve(xs.size());
  for (Var v : xs) {
    values.push_back(tape.value(v));
    widths.push_back(values.back().dim(1));
  }
  Tensor<T> y = remdet::concat_channels<T>(values);
  std::vector<Var> parents(xs.begin(), xs.end());
  return tape.push(OpKind::kConcat, std::move(y), parents, [parents, widths](Tape<T>& t, const Tensor<T>& g) {
    auto parts = remdet::split_channels(g, std::span<const std::int64_t>(widths));
    for (std::size_t i = 0; i < parents.size(); ++i) t.accumulate(parents[i], parts[i]);
  });
}

template <typename T>
Var patch_merge(Tape<T>& tape, Var x) {
  Tensor<T> y = remdet::patch_merge(tape.value(x));
  return tape.push(OpKind::kPatchMerge, std::move(y), {x},
                   [x](Tape<T>& t, const Tensor<T>& g) { t.accumulate(x, patch_split(g)); });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  Tensor<T> y = remdet::global_avg_pool(tape.value(x));
  return tape.push(OpKind::kGlobalAvgPool, std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, global_avg_pool_vjp(t.value(x).shape(), g));
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b) {
  Tensor<T> y = remdet::linear(tape.value(x), tape.value(w), span_of(tape, b));
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(*b);
  return tape.push(OpKind::kLinear, std::move(y), parents, [x, w, b](Tape<T>& t, const Tensor<T>& g) {
    auto grads = linear_vjp(t.value(x), t.value(w), b.has_value(), g);
    t.accumulate(x, grads.grad_x);
    t.accumulate(w, grads.grad_w);
    if (b) t.accumulate(*b, std::span<const T>(grads.grad_b));
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.shape() != weights.shape()) fail(ErrorCode::kShapeMismatch, "weighted_sum weight shape");
  double s = 0.0;
  for (std::int64_t i = 0; i < xv.numel(); ++i) s += static_cast<double>(xv[i]) * weights[i];
  Tensor<T> y({1}, static_cast<T>(s));
  return tape.push(OpKind::kReduce, std::move(y), {x}, [x, weights](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = weights;
    for (auto& v : gx.data()) v *= g[0];
    t.accumulate(x, gx);
  });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int64_t> labels) {
  auto r = softmax_cross_entropy(tape.value(logits), labels);
  Tensor<T> y({1}, static_cast<T>(r.loss));
  auto grad = std::make_shared<Tensor<T>>(std::move(r.grad));
  return tape.push(OpKind::kCrossEntropy, std::move(y), {logits}, [logits, grad](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = *grad;
    for (auto& v : gx.data()) v *= g[0];
    t.accumulate(logits, gx);
  });
}

#define REMDET_INSTANTIATE_AD(T)                                                                          \
  template Var conv2d<T>(Tape<T>&, Var, Var, std::optional<Var>, const ConvSpec&, std::uint64_t*);      \
  template Var batchnorm_infer<T>(Tape<T>&, Var, Var, Var, Var, Var, double);                           \
  template Var batchnorm_train<T>(Tape<T>&, Var, Var, Var, double, BatchNormParams<T>*);                \
  template Var activation<T>(Tape<T>&, Var, Act);                                                       \
  template Var mul<T>(Tape<T>&, Var, Var);                                                              \
  template Var add<T>(Tape<T>&, Var, Var);                                                              \
  template std::vector<Var> split_channels<T>(Tape<T>&, Var, std::span<const std::int64_t>);            \
  template Var concat_channels<T>(Tape<T>&, std::span<const Var>);                                      \
  template Var patch_merge<T>(Tape<T>&, Var);                                                           \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                                       \
  template Var linear<T>(Tape<T>&, Var, Var, std::optional<Var>);                                       \
  template Var weighted_sum<T>(Tape<T>&, Var, const Tensor<T>&);                                        \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const std::int64_t>);

REMDET_INSTANTIATE_AD(float)
REMDET_INSTANTIATE_AD(double)

}  // namespace ad

}  // namespace remdet
