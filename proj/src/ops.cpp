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

#include "remdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "remdet/threading.hpp"

namespace remdet {

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel_h <= 0 || kernel_w <= 0 || stride <= 0 ||
      padding < 0 || groups <= 0) {
    fail(ErrorCode::kShapeMismatch, "conv spec fields must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    fail(ErrorCode::kShapeMismatch, "channels " + std::to_string(in_channels) + "->" +
                                        std::to_string(out_channels) + " not divisible by groups " +
                                        std::to_string(groups));
  }
}

std::int64_t ConvSpec::out_extent(std::int64_t in, std::int64_t k) const {
  const std::int64_t span = in + 2 * padding - k;
  if (span < 0) {
    fail(ErrorCode::kNonIntegralOutputExtent,
         "extent " + std::to_string(in) + " with kernel " + std::to_string(k) + ", pad " +
             std::to_string(padding) + ", stride " + std::to_string(stride));
  }
  return span / stride + 1;
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::int64_t channels) {
  BatchNormParams p;
  const auto c = static_cast<std::size_t>(channels);
  p.gamma.assign(c, T(1));
  p.beta.assign(c, T(0));
  p.running_mean.assign(c, T(0));
  p.running_var.assign(c, T(1));
  return p;
}

template <typename T>
void BatchNormParams<T>::validate() const {
  const auto c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    fail(ErrorCode::kShapeMismatch, "batch-norm vectors differ in length");
  }
  if (!(eps >= 0.0)) fail(ErrorCode::kInvalidConfig, "batch-norm eps must be non-negative");
  for (T v : running_var) {
    if (v < T(0)) fail(ErrorCode::kInvalidConfig, "negative running variance");
    if (!(static_cast<double>(v) + eps > 0.0)) fail(ErrorCode::kInvalidConfig, "zero variance with eps 0");
  }
}

template struct BatchNormParams<float>;
template struct BatchNormParams<double>;

std::string_view act_name(Act act) {
  switch (act) {
    case Act::kSiLU: return "silu";
    case Act::kGELU: return "gelu";
    case Act::kNone: break;
  }
  return "none";
}

namespace {

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo, cin_g, cout_g, groups, stride, pad;
};

template <typename T>
ConvGeom conv_geom(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, const ConvSpec& spec) {
  spec.validate();
  if (x.rank() != 4 || x.dim(1) != spec.in_channels) {
    fail(ErrorCode::kShapeMismatch, "conv input " + shape_str(x.shape()) + " expects " +
                                        std::to_string(spec.in_channels) + " channels");
  }
  if (w.shape() != spec.weight_shape()) {
    fail(ErrorCode::kShapeMismatch,
         "conv weight " + shape_str(w.shape()) + " expected " + shape_str(spec.weight_shape()));
  }
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != spec.out_channels) {
    fail(ErrorCode::kShapeMismatch, "conv bias length mismatch");
  }
  ConvGeom g{};
  g.n = x.dim(0);
  g.cin = spec.in_channels;
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = spec.out_channels;
  g.kh = spec.kernel_h;
  g.kw = spec.kernel_w;
  g.ho = spec.out_extent(g.h, g.kh);
  g.wo = spec.out_extent(g.w, g.kw);
  g.groups = spec.groups;
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  g.stride = spec.stride;
  g.pad = spec.padding;
  return g;
}

bool is_plain_pointwise(const ConvGeom& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

// col[(ci*kh + i)*kw + j][oh*wo + ow] for one (image, group).
template <typename T>
void im2col(const T* src, const ConvGeom& g, T* col) {
  const std::int64_t p_count = g.ho * g.wo;
  for (std::int64_t ci = 0; ci < g.cin_g; ++ci) {
    const T* plane = src + ci * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ci * g.kh + i) * g.kw + j) * p_count;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + i;
          T* out = row + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + j;
            out[ow] = (iw < 0 || iw >= g.w) ? T(0) : plane[ih * g.w + iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dst) {
  const std::int64_t p_count = g.ho * g.wo;
  for (std::int64_t ci = 0; ci < g.cin_g; ++ci) {
    T* plane = dst + ci * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ci * g.kh + i) * g.kw + j) * p_count;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + i;
          if (ih < 0 || ih >= g.h) continue;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + j;
            if (iw >= 0 && iw < g.w) plane[ih * g.w + iw] += row[oh * g.wo + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_forward(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, const ConvGeom& g,
                       Tensor<T>& y) {
  parallel_for(0, g.cout, [&](std::int64_t c_lo, std::int64_t c_hi) {
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t c = c_lo; c < c_hi; ++c) {
        const T* plane = &x.at(n, c, 0, 0);
        const T* k = &w[c * g.kh * g.kw];
        T* out = &y.at(n, c, 0, 0);
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            T acc = T(0);
            for (std::int64_t i = 0; i < g.kh; ++i) {
              const std::int64_t ih = oh * g.stride - g.pad + i;
              if (ih < 0 || ih >= g.h) continue;
              for (std::int64_t j = 0; j < g.kw; ++j) {
                const std::int64_t iw = ow * g.stride - g.pad + j;
                if (iw < 0 || iw >= g.w) continue;
                acc += plane[ih * g.w + iw] * k[i * g.kw + j];
              }
            }
            out[oh * g.wo + ow] = bias.empty() ? acc : acc + bias[static_cast<std::size_t>(c)];
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias, const ConvSpec& spec) {
  const ConvGeom g = conv_geom(x, w, bias, spec);
  Tensor<T> y({g.n, g.cout, g.ho, g.wo});
  if (spec.is_depthwise()) {
    depthwise_forward(x, w, bias, g, y);
    return y;
  }
  const std::int64_t k_count = g.cin_g * g.kh * g.kw;
  const std::int64_t p_count = g.ho * g.wo;
  const bool direct = is_plain_pointwise(g);
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(k_count * p_count));
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* src = &x.at(n, grp * g.cin_g, 0, 0);
      if (!direct) im2col(src, g, col.data());
      const T* cm = direct ? src : col.data();
      parallel_for(0, g.cout_g, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oc = lo; oc < hi; ++oc) {
          const std::int64_t co = grp * g.cout_g + oc;
          T* out = &y.at(n, co, 0, 0);
          const T* wrow = &w[co * k_count];
          for (std::int64_t k = 0; k < k_count; ++k) {
            const T wv = wrow[k];
            const T* crow = cm + k * p_count;
            for (std::int64_t p = 0; p < p_count; ++p) out[p] += wv * crow[p];
          }
          if (!bias.empty()) {
            const T b = bias[static_cast<std::size_t>(co)];
            for (std::int64_t p = 0; p < p_count; ++p) out[p] += b;
          }
        }
      });
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias,
                           const ConvSpec& spec) {
  const ConvGeom g = conv_geom(x, w, bias, spec);
  Tensor<T> y({g.n, g.cout, g.ho, g.wo});
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.cout; ++co) {
      const std::int64_t grp = co / g.cout_g;
      for (std::int64_t oh = 0; oh < g.ho; ++oh) {
        for (std::int64_t ow = 0; ow < g.wo; ++ow) {
          T acc = T(0);
          for (std::int64_t ci = 0; ci < g.cin_g; ++ci) {
            for (std::int64_t i = 0; i < g.kh; ++i) {
              for (std::int64_t j = 0; j < g.kw; ++j) {
                const std::int64_t ih = oh * g.stride - g.pad + i;
                const std::int64_t iw = ow * g.stride - g.pad + j;
                if (ih < 0 || ih >= g.h || iw < 0 || iw >= g.w) continue;
                acc += x.at(n, grp * g.cin_g + ci, ih, iw) * w.at(co, ci, i, j);
              }
            }
          }
          y.at(n, co, oh, ow) = bias.empty() ? acc : acc + bias[static_cast<std::size_t>(co)];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_counting(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias,
                          const ConvSpec& spec, std::uint64_t& multiplies) {
  const ConvGeom g = conv_geom(x, w, bias, spec);
  Tensor<T> y({g.n, g.cout, g.ho, g.wo});
  auto mul = [&multiplies](T a, T b) {
    ++multiplies;
    return a * b;
  };
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.cout; ++co) {
      const std::int64_t grp = co / g.cout_g;
      for (std::int64_t oh = 0; oh < g.ho; ++oh) {
        for (std::int64_t ow = 0; ow < g.wo; ++ow) {
          T acc = T(0);
          for (std::int64_t ci = 0; ci < g.cin_g; ++ci) {
            for (std::int64_t i = 0; i < g.kh; ++i) {
              for (std::int64_t j = 0; j < g.kw; ++j) {
                const std::int64_t ih = oh * g.stride - g.pad + i;
                const std::int64_t iw = ow * g.stride - g.pad + j;
                const bool inside = ih >= 0 && ih < g.h && iw >= 0 && iw < g.w;
                const T v = inside ? x.at(n, grp * g.cin_g + ci, ih, iw) : T(0);
                acc += mul(v, w.at(co, ci, i, j));
              }
            }
          }
          y.at(n, co, oh, ow) = bias.empty() ? acc : acc + bias[static_cast<std::size_t>(co)];
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_vjp(const Tensor<T>& x, const Tensor<T>& w, bool has_bias, const ConvSpec& spec,
                        const Tensor<T>& grad_out) {
  const ConvGeom g = conv_geom(x, w, std::span<const T>{}, spec);
  const Shape out_shape{g.n, g.cout, g.ho, g.wo};
  if (grad_out.shape() != out_shape) {
    fail(ErrorCode::kShapeMismatch,
         "conv grad_out " + shape_str(grad_out.shape()) + " expected " + shape_str(out_shape));
  }
  ConvGrads<T> r{Tensor<T>(x.shape()), Tensor<T>(w.shape()), {}};
  const std::int64_t p_count = g.ho * g.wo;
  if (has_bias) {
    r.grad_b.assign(static_cast<std::size_t>(g.cout), T(0));
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t co = 0; co < g.cout; ++co) {
        const T* go = &grad_out.at(n, co, 0, 0);
        T s = T(0);
        for (std::int64_t p = 0; p < p_count; ++p) s += go[p];
        r.grad_b[static_cast<std::size_t>(co)] += s;
      }
    }
  }

  if (spec.is_depthwise()) {
    parallel_for(0, g.cout, [&](std::int64_t c_lo, std::int64_t c_hi) {
      for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t c = c_lo; c < c_hi; ++c) {
          const T* plane = &x.at(n, c, 0, 0);
          T* gplane = &r.grad_x.at(n, c, 0, 0);
          const T* k = &w[c * g.kh * g.kw];
          T* gk = &r.grad_w[c * g.kh * g.kw];
          const T* go = &grad_out.at(n, c, 0, 0);
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const T gv = go[oh * g.wo + ow];
              for (std::int64_t i = 0; i < g.kh; ++i) {
                const std::int64_t ih = oh * g.stride - g.pad + i;
                if (ih < 0 || ih >= g.h) continue;
                for (std::int64_t j = 0; j < g.kw; ++j) {
                  const std::int64_t iw = ow * g.stride - g.pad + j;
                  if (iw < 0 || iw >= g.w) continue;
                  gk[i * g.kw + j] += gv * plane[ih * g.w + iw];
                  gplane[ih * g.w + iw] += gv * k[i * g.kw + j];
                }
              }
            }
          }
        }
      }
    });
    return r;
  }

  const std::int64_t k_count = g.cin_g * g.kh * g.kw;
  const bool direct = is_plain_pointwise(g);
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(k_count * p_count));
  std::vector<T> gcol(static_cast<std::size_t>(k_count * p_count));
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* src = &x.at(n, grp * g.cin_g, 0, 0);
      if (!direct) im2col(src, g, col.data());
      const T* cm = direct ? src : col.data();
      // grad_w[co, k] += sum_p grad_out[co, p] * col[k, p]
      parallel_for(0, g.cout_g, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oc = lo; oc < hi; ++oc) {
          const std::int64_t co = grp * g.cout_g + oc;
          const T* go = &grad_out.at(n, co, 0, 0);
          T* gw = &r.grad_w[co * k_count];
          for (std::int64_t k = 0; k < k_count; ++k) {
            const T* crow = cm + k * p_count;
            T s = T(0);
            for (std::int64_t p = 0; p < p_count; ++p) s += go[p] * crow[p];
            gw[k] += s;
          }
        }
      });
      // grad_col[k, p] = sum_co w[co, k] * grad_out[co, p]
      parallel_for(0, k_count, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t k = lo; k < hi; ++k) {
          T* grow = gcol.data() + k * p_count;
          std::fill(grow, grow + p_count, T(0));
          for (std::int64_t oc = 0; oc < g.cout_g; ++oc) {
            const std::int64_t co = grp * g.cout_g + oc;
            const T wv = w[co * k_count + k];
            const T* go = &grad_out.at(n, co, 0, 0);
            for (std::int64_t p = 0; p < p_count; ++p) grow[p] += wv * go[p];
          }
        }
      });
      T* dst = &r.grad_x.at(n, grp * g.cin_g, 0, 0);
      if (direct) {
        for (std::int64_t i = 0; i < k_count * p_count; ++i) dst[i] += gcol[static_cast<std::size_t>(i)];
      } else {
        col2im_add(gcol.data(), g, dst);
      }
    }
  }
  return r;
}

// ---- batch norm -----------------------------------------------------------

namespace {

template <typename T>
void check_bn_input(const Tensor<T>& x, std::size_t channels) {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::int64_t>(channels)) {
    fail(ErrorCode::kShapeMismatch,
         "batch-norm input " + shape_str(x.shape()) + " expects " + std::to_string(channels) + " channels");
  }
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const BnView<T>& bn) {
  const std::size_t c_count = bn.gamma.size();
  if (bn.beta.size() != c_count || bn.mean.size() != c_count || bn.var.size() != c_count) {
    fail(ErrorCode::kShapeMismatch, "batch-norm vectors differ in length");
  }
  check_bn_input(x, c_count);
  Tensor<T> y(x.shape());
  const std::int64_t hw = x.dim(2) * x.dim(3);
  const T eps = static_cast<T>(bn.eps);
  for (std::int64_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t c = 0; c < c_count; ++c) {
      const T gamma = bn.gamma[c], beta = bn.beta[c], mean = bn.mean[c];
      const T sd = std::sqrt(bn.var[c] + eps);
      const T* src = &x.at(n, static_cast<std::int64_t>(c), 0, 0);
      T* dst = &y.at(n, static_cast<std::int64_t>(c), 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) dst[i] = gamma * (src[i] - mean) / sd + beta;
    }
  }
  return y;
}

template <typename T>
BnGrads<T> batchnorm_infer_vjp(const Tensor<T>& x, const BnView<T>& bn, const Tensor<T>& grad_out) {
  const std::size_t c_count = bn.gamma.size();
  check_bn_input(x, c_count);
  if (grad_out.shape() != x.shape()) fail(ErrorCode::kShapeMismatch, "batch-norm grad_out shape");
  BnGrads<T> r{Tensor<T>(x.shape()), std::vector<T>(c_count, T(0)), std::vector<T>(c_count, T(0))};
  const std::int64_t hw = x.dim(2) * x.dim(3);
  const T eps = static_cast<T>(bn.eps);
  for (std::int64_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t c = 0; c < c_count; ++c) {
      const T sd = std::sqrt(bn.var[c] + eps);
      const T scale = bn.gamma[c] / sd;
      const auto ci = static_cast<std::int64_t>(c);
      const T* src = &x.at(n, ci, 0, 0);
      const T* go = &grad_out.at(n, ci, 0, 0);
      T* gx = &r.grad_x.at(n, ci, 0, 0);
      T sg = T(0), sb = T(0);
      for (std::int64_t i = 0; i < hw; ++i) {
        gx[i] = go[i] * scale;
        sg += go[i] * (src[i] - bn.mean[c]) / sd;
        sb += go[i];
      }
      r.grad_gamma[c] += sg;
      r.grad_beta[c] += sb;
    }
  }
  return r;
}

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, double eps,
                          BnBatchStats<T>& stats, BatchNormParams<T>* running) {
  const std::size_t c_count = gamma.size();
  if (beta.size() != c_count) fail(ErrorCode::kShapeMismatch, "batch-norm gamma/beta length");
  check_bn_input(x, c_count);
  const std::int64_t hw = x.dim(2) * x.dim(3);
  const std::int64_t m = x.dim(0) * hw;
  if (m < 2) fail(ErrorCode::kDegenerateBatch, "batch statistics need N*H*W >= 2");
  stats.mean.assign(c_count, T(0));
  stats.var.assign(c_count, T(0));
  stats.invstd.assign(c_count, T(0));
  Tensor<T> y(x.shape());
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto ci = static_cast<std::int64_t>(c);
    double sum = 0.0;
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const T* src = &x.at(n, ci, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) sum += src[i];
    }
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const T* src = &x.at(n, ci, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) sq += (src[i] - mean) * (src[i] - mean);
    }
    const double var = sq / static_cast<double>(m);
    const double invstd = 1.0 / std::sqrt(var + eps);
    stats.mean[c] = static_cast<T>(mean);
    stats.var[c] = static_cast<T>(var);
    stats.invstd[c] = static_cast<T>(invstd);
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const T* src = &x.at(n, ci, 0, 0);
      T* dst = &y.at(n, ci, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        dst[i] = static_cast<T>(gamma[c] * ((src[i] - mean) * invstd) + beta[c]);
      }
    }
    if (running != nullptr) {
      const double mom = running->momentum;
      const double unbiased = sq / static_cast<double>(m - 1);
      running->running_mean[c] = static_cast<T>((1.0 - mom) * running->running_mean[c] + mom * mean);
      running->running_var[c] = static_cast<T>((1.0 - mom) * running->running_var[c] + mom * unbiased);
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, BatchNormParams<T>& bn) {
  bn.validate();
  BnBatchStats<T> stats;
  return batchnorm_train<T>(x, bn.gamma, bn.beta, bn.eps, stats, &bn);
}

template <typename T>
BnGrads<T> batchnorm_train_vjp(const Tensor<T>& x, std::span<const T> gamma, const BnBatchStats<T>& stats,
                               const Tensor<T>& grad_out) {
  const std::size_t c_count = gamma.size();
  check_bn_input(x, c_count);
  if (grad_out.shape() != x.shape()) fail(ErrorCode::kShapeMismatch, "batch-norm grad_out shape");
  BnGrads<T> r{Tensor<T>(x.shape()), std::vector<T>(c_count, T(0)), std::vector<T>(c_count, T(0))};
  const std::int64_t hw = x.dim(2) * x.dim(3);
  const double m = static_cast<double>(x.dim(0) * hw);
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto ci = static_cast<std::int64_t>(c);
    const double mean = stats.mean[c], invstd = stats.invstd[c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const T* src = &x.at(n, ci, 0, 0);
      const T* go = &grad_out.at(n, ci, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        sum_g += go[i];
        sum_gx += go[i] * ((src[i] - mean) * invstd);
      }
    }
    r.grad_beta[c] = static_cast<T>(sum_g);
    r.grad_gamma[c] = static_cast<T>(sum_gx);
    const double k = gamma[c] * invstd / m;
    for (std::int64_t n = 0; n < x.dim(0); ++n) {
      const T* src = &x.at(n, ci, 0, 0);
      const T* go = &grad_out.at(n, ci, 0, 0);
      T* gx = &r.grad_x.at(n, ci, 0, 0);
      for (std::int64_t i = 0; i < hw; ++i) {
        const double xhat = (src[i] - mean) * invstd;
        gx[i] = static_cast<T>(k * (m * go[i] - sum_g - xhat * sum_gx));
      }
    }
  }
  return r;
}

// ---- elementwise ----------------------------------------------------------

double silu(double t) { return t / (1.0 + std::exp(-t)); }

double gelu(double t) { return 0.5 * t * (1.0 + std::erf(t / std::numbers::sqrt2)); }

namespace {

double silu_grad(double t) {
  const double s = 1.0 / (1.0 + std::exp(-t));
  return s * (1.0 + t * (1.0 - s));
}

double gelu_grad(double t) {
  const double cdf = 0.5 * (1.0 + std::erf(t / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * t * t) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + t * pdf;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShapeMismatch, std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act act) {
  if (act == Act::kNone) return x;
  Tensor<T> y(x.shape());
  const auto src = x.data();
  auto dst = y.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<T>(act == Act::kSiLU ? silu(src[i]) : gelu(src[i]));
  }
  return y;
}

template <typename T>
Tensor<T> activation_vjp(const Tensor<T>& x, Act act, const Tensor<T>& grad_out) {
  check_same_shape(x, grad_out, "activation_vjp");
  if (act == Act::kNone) return grad_out;
  Tensor<T> g(x.shape());
  const auto src = x.data();
  const auto go = grad_out.data();
  auto dst = g.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double d = act == Act::kSiLU ? silu_grad(src[i]) : gelu_grad(src[i]);
    dst[i] = static_cast<T>(go[i] * d);
  }
  return g;
}

template <typename T>
Tensor<T> ew_mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "ew_mul");
  Tensor<T> y(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <typename T>
Tensor<T> ew_add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "ew_add");
  Tensor<T> y(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

// ---- channel bookkeeping --------------------------------------------------

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, std::span<const std::int64_t> sizes) {
  if (x.rank() != 4) fail(ErrorCode::kShapeMismatch, "split_channels expects NCHW");
  std::int64_t total = 0;
  for (auto s : sizes) {
    if (s <= 0) fail(ErrorCode::kSizeSumMismatch, "split sizes must be positive");
    total += s;
  }
  if (total != x.dim(1)) {
    fail(ErrorCode::kSizeSumMismatch,
         "split sizes sum to " + std::to_string(total) + ", channel extent is " + std::to_string(x.dim(1)));
  }
  const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<Tensor<T>> out;
  out.reserve(sizes.size());
  std::int64_t offset = 0;
  for (auto s : sizes) {
    Tensor<T> part({n, s, x.dim(2), x.dim(3)});
    for (std::int64_t b = 0; b < n; ++b) {
      const T* src = &x.at(b, offset, 0, 0);
      std::copy(src, src + s * hw, &part.at(b, 0, 0, 0));
    }
    offset += s;
    out.push_back(std::move(part));
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
  if (xs.empty()) fail(ErrorCode::kSizeSumMismatch, "concat of zero tensors");
  const Tensor<T>& first = xs.front();
  if (first.rank() != 4) fail(ErrorCode::kShapeMismatch, "concat_channels expects NCHW");
  std::int64_t channels = 0;
  for (const auto& t : xs) {
    if (t.rank() != 4 || t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      fail(ErrorCode::kShapeMismatch, "concat operands disagree on N/H/W");
    }
    channels += t.dim(1);
  }
  const std::int64_t n = first.dim(0), hw = first.dim(2) * first.dim(3);
  Tensor<T> y({n, channels, first.dim(2), first.dim(3)});
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t offset = 0;
    for (const auto& t : xs) {
      const T* src = &t.at(b, 0, 0, 0);
      std::copy(src, src + t.dim(1) * hw, &y.at(b, offset, 0, 0));
      offset += t.dim(1);
    }
  }
  return y;
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x) {
  if (x.rank() != 4) fail(ErrorCode::kShapeMismatch, "patch_merge expects NCHW");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    fail(ErrorCode::kOddSpatialExtent, "patch_merge needs even H and W, got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), ho = x.dim(2) / 2, wo = x.dim(3) / 2;
  Tensor<T> y({n, 4 * c, ho, wo});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t k = 0; k < 4; ++k) {
        const std::int64_t dy = k / 2, dx = k % 2;
        for (std::int64_t i = 0; i < ho; ++i)
          for (std::int64_t j = 0; j < wo; ++j) y.at(b, 4 * ch + k, i, j) = x.at(b, ch, 2 * i + dy, 2 * j + dx);
      }
  return y;
}

template <typename T>
Tensor<T> patch_split(const Tensor<T>& y) {
  if (y.rank() != 4) fail(ErrorCode::kShapeMismatch, "patch_split expects NCHW");
  if (y.dim(1) % 4 != 0) {
    fail(ErrorCode::kChannelNotDivisibleBy4, "patch_split channel extent " + std::to_string(y.dim(1)));
  }
  const std::int64_t n = y.dim(0), c = y.dim(1) / 4, ho = y.dim(2), wo = y.dim(3);
  Tensor<T> x({n, c, 2 * ho, 2 * wo});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t k = 0; k < 4; ++k) {
        const std::int64_t dy = k / 2, dx = k % 2;
        for (std::int64_t i = 0; i < ho; ++i)
          for (std::int64_t j = 0; j < wo; ++j) x.at(b, ch, 2 * i + dy, 2 * j + dx) = y.at(b, 4 * ch + k, i, j);
      }
  return x;
}

// ---- classifier head ------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) fail(ErrorCode::kShapeMismatch, "global_avg_pool expects NCHW");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* src = &x.at(b, ch, 0, 0);
      T s = T(0);
      for (std::int64_t i = 0; i < hw; ++i) s += src[i];
      y[b * c + ch] = s / static_cast<T>(hw);
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_vjp(const Shape& x_shape, const Tensor<T>& grad_out) {
  Tensor<T> g(x_shape);
  const std::int64_t n = x_shape[0], c = x_shape[1], hw = x_shape[2] * x_shape[3];
  if (grad_out.shape() != Shape{n, c}) fail(ErrorCode::kShapeMismatch, "global_avg_pool grad_out shape");
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T v = grad_out[b * c + ch] / static_cast<T>(hw);
      T* dst = &g.at(b, ch, 0, 0);
      std::fill(dst, dst + hw, v);
    }
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    fail(ErrorCode::kShapeMismatch, "linear " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const std::int64_t n = x.dim(0), f = x.dim(1), k = w.dim(0);
  if (!b.empty() && static_cast<std::int64_t>(b.size()) != k) fail(ErrorCode::kShapeMismatch, "linear bias");
  Tensor<T> y({n, k});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < k; ++o) {
      T acc = T(0);
      for (std::int64_t j = 0; j < f; ++j) acc += x[i * f + j] * w[o * f + j];
      y[i * k + o] = b.empty() ? acc : acc + b[static_cast<std::size_t>(o)];
    }
  return y;
}

template <typename T>
LinearGrads<T> linear_vjp(const Tensor<T>& x, const Tensor<T>& w, bool has_bias, const Tensor<T>& grad_out) {
  const std::int64_t n = x.dim(0), f = x.dim(1), k = w.dim(0);
  if (grad_out.shape() != Shape{n, k}) fail(ErrorCode::kShapeMismatch, "linear grad_out shape");
  LinearGrads<T> r{Tensor<T>(x.shape()), Tensor<T>(w.shape()), {}};
  if (has_bias) r.grad_b.assign(static_cast<std::size_t>(k), T(0));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < k; ++o) {
      const T g = grad_out[i * k + o];
      if (has_bias) r.grad_b[static_cast<std::size_t>(o)] += g;
      for (std::int64_t j = 0; j < f; ++j) {
        r.grad_x[i * f + j] += g * w[o * f + j];
        r.grad_w[o * f + j] += g * x[i * f + j];
      }
    }
  return r;
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size())) {
    fail(ErrorCode::kShapeMismatch, "logits " + shape_str(logits.shape()) + " vs " +
                                        std::to_string(labels.size()) + " labels");
  }
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  LossAndGrad<T> r{0.0, Tensor<T>(logits.shape())};
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) fail(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    const T* row = &logits[i * k];
    double mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[y];
    for (std::int64_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - lse);
      r.grad[i * k + j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

#define REMDET_INSTANTIATE_OPS(T)                                                                            \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, const ConvSpec&);   \
  template Tensor<T> conv2d_reference<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,           \
                                         const ConvSpec&);                                                 \
  template Tensor<T> conv2d_counting<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,            \
                                        const ConvSpec&, std::uint64_t&);                                  \
  template ConvGrads<T> conv2d_vjp<T>(const Tensor<T>&, const Tensor<T>&, bool, const ConvSpec&,           \
                                      const Tensor<T>&);                                                   \
  template Tensor<T> batchnorm_infer<T>(const Tensor<T>&, const BnView<T>&);                               \
  template BnGrads<T> batchnorm_infer_vjp<T>(const Tensor<T>&, const BnView<T>&, const Tensor<T>&);        \
  template Tensor<T> batchnorm_train<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, double,  \
                                        BnBatchStats<T>&, BatchNormParams<T>*);                            \
  template Tensor<T> batchnorm_train<T>(const Tensor<T>&, BatchNormParams<T>&);                            \
  template BnGrads<T> batchnorm_train_vjp<T>(const Tensor<T>&, std::span<const T>, const BnBatchStats<T>&, \
                                             const Tensor<T>&);                                            \
  template Tensor<T> activation<T>(const Tensor<T>&, Act);                                                 \
  template Tensor<T> activation_vjp<T>(const Tensor<T>&, Act, const Tensor<T>&);                           \
  template Tensor<T> ew_mul<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> ew_add<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template std::vector<Tensor<T>> split_channels<T>(const Tensor<T>&, std::span<const std::int64_t>);      \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                                       \
  template Tensor<T> patch_merge<T>(const Tensor<T>&);                                                     \
  template Tensor<T> patch_split<T>(const Tensor<T>&);                                                     \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                                 \
  template Tensor<T> global_avg_pool_vjp<T>(const Shape&, const Tensor<T>&);                               \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>);                    \
  template LinearGrads<T> linear_vjp<T>(const Tensor<T>&, const Tensor<T>&, bool, const Tensor<T>&);       \
  template LossAndGrad<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const std::int64_t>);

REMDET_INSTANTIATE_OPS(float)
REMDET_INSTANTIATE_OPS(double)

}  // namespace remdet
