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

// Pure tensor operations and their vector-Jacobian products. Nothing here
// broadcasts: elementwise operands must have identical shapes.

#ifndef REMDET_OPS_HPP_
#define REMDET_OPS_HPP_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "remdet/tensor.hpp"

namespace remdet {

struct ConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;

  static ConvSpec pointwise(std::int64_t cin, std::int64_t cout) { return {cin, cout, 1, 1, 1, 0, 1}; }
  static ConvSpec depthwise(std::int64_t c, std::int64_t k, std::int64_t stride = 1) {
    return {c, c, k, k, stride, k / 2, c};
  }

  void validate() const;
  bool is_depthwise() const { return groups == in_channels && groups == out_channels; }
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel_h, kernel_w}; }
  // floor((in + 2*pad - k) / stride) + 1. Throws NonIntegralOutputExtent when
  // the kernel does not fit the padded input at all.
  std::int64_t out_extent(std::int64_t in, std::int64_t k) const;

  bool operator==(const ConvSpec&) const = default;
};

// Non-owning view of batch-norm statistics; all spans have length C.
template <typename T>
struct BnView {
  std::span<const T> gamma;
  std::span<const T> beta;
  std::span<const T> mean;
  std::span<const T> var;
  double eps = 1e-3;
};

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double eps = 1e-3;
  double momentum = 0.03;

  static BatchNormParams identity(std::int64_t channels);
  std::int64_t channels() const { return static_cast<std::int64_t>(gamma.size()); }
  void validate() const;
  BnView<T> view() const { return {gamma, beta, running_mean, running_var, eps}; }
};

enum class Act : std::uint8_t { kNone, kSiLU, kGELU };
std::string_view act_name(Act act);

// ---- convolution ----------------------------------------------------------

// Fast path: direct kernel for depthwise, im2col + GEMM otherwise. Output
// channels are partitioned across worker threads. An empty `bias` means none.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, const ConvSpec& spec);

// Six-loop reference. Same accumulation order as the fast path.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias,
                           const ConvSpec& spec);

// Reference executor that materializes zero padding and counts every
// multiply it performs (bias adds are not multiplies).
template <typename T>
Tensor<T> conv2d_counting(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias,
                          const ConvSpec& spec, std::uint64_t& multiplies);

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  std::vector<T> grad_b;  // empty when the conv had no bias
};

template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& x, const Tensor<T>& w, bool has_bias, const ConvSpec& spec,
                        const Tensor<T>& grad_out);

// ---- batch norm -----------------------------------------------------------

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const BnView<T>& bn);

template <typename T>
struct BnGrads {
  Tensor<T> grad_x;
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;
};

template <typename T>
BnGrads<T> batchnorm_infer_vjp(const Tensor<T>& x, const BnView<T>& bn, const Tensor<T>& grad_out);

template <typename T>
struct BnBatchStats {
  std::vector<T> mean;
  std::vector<T> var;     // biased (divides by N*H*W)
  std::vector<T> invstd;  // 1 / sqrt(var + eps)
};

// Normalizes with batch statistics. When `running` is non-null its running
// mean/var are blended toward the batch stats with running->momentum
// (unbiased variance for the running estimate).
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, double eps,
                          BnBatchStats<T>& stats, BatchNormParams<T>* running = nullptr);

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, BatchNormParams<T>& bn);

template <typename T>
BnGrads<T> batchnorm_train_vjp(const Tensor<T>& x, std::span<const T> gamma, const BnBatchStats<T>& stats,
                               const Tensor<T>& grad_out);

// ---- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act act);
template <typename T>
Tensor<T> activation_vjp(const Tensor<T>& x, Act act, const Tensor<T>& grad_out);

double silu(double t);
double gelu(double t);  // exact erf form

template <typename T>
Tensor<T> ew_mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> ew_add(const Tensor<T>& a, const Tensor<T>& b);

// ---- channel bookkeeping --------------------------------------------------

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, std::span<const std::int64_t> sizes);
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs);

// Space-to-depth. [N,C,H,W] -> [N,4C,H/2,W/2]; channel 4c+k holds source
// channel c at spatial offset k in (0,0),(0,1),(1,0),(1,1) order.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x);
template <typename T>
Tensor<T> patch_split(const Tensor<T>& y);

// ---- classifier head ------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);  // [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool_vjp(const Shape& x_shape, const Tensor<T>& grad_out);

// x: [N,F], w: [K,F], b: K (or empty) -> [N,K]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> b);

template <typename T>
struct LinearGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  std::vector<T> grad_b;
};

template <typename T>
LinearGrads<T> linear_vjp(const Tensor<T>& x, const Tensor<T>& w, bool has_bias, const Tensor<T>& grad_out);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d logits = (softmax - onehot) / N
};

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels);

}  // namespace remdet

#endif  // REMDET_OPS_HPP_
