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

#ifndef REMDET_GRADCHECK_HPP_
#define REMDET_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>

#include "remdet/tensor.hpp"

namespace remdet {

template <typename T>
using ScalarFn = std::function<double(const Tensor<T>&)>;

// Central differences with a fixed step: (f(x+h e_i) - f(x-h e_i)) / 2h.
template <typename T>
Tensor<T> finite_diff(const ScalarFn<T>& f, const Tensor<T>& x, double h) {
  Tensor<T> g(x.shape());
  Tensor<T> probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = static_cast<T>(orig + h);
    const double up = f(probe);
    probe[i] = static_cast<T>(orig - h);
    const double down = f(probe);
    probe[i] = orig;
    g[i] = static_cast<T>((up - down) / (2.0 * h));
  }
  return g;
}

// Same, with the per-coordinate step h_i = rel_step * (1 + |x_i|).
template <typename T>
Tensor<T> finite_diff_scaled(const ScalarFn<T>& f, const Tensor<T>& x, double rel_step = 1e-6) {
  Tensor<T> g(x.shape());
  Tensor<T> probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    const double h = rel_step * (1.0 + std::abs(static_cast<double>(orig)));
    probe[i] = static_cast<T>(orig + h);
    const double up = f(probe);
    probe[i] = static_cast<T>(orig - h);
    const double down = f(probe);
    probe[i] = orig;
    g[i] = static_cast<T>((up - down) / (2.0 * h));
  }
  return g;
}

// Tensor-wise relative error max|a-b| / max(max|a|, max|b|). Two all-zero
// tensors compare as 0.
template <typename T>
double relative_error(const Tensor<T>& analytic, const Tensor<T>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::int64_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i], n = numeric[i];
    diff = std::max(diff, std::abs(a - n));
    scale = std::max({scale, std::abs(a), std::abs(n)});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

}  // namespace remdet

#endif  // REMDET_GRADCHECK_HPP_
