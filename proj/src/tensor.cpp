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

#include "remdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace remdet {

namespace {

constexpr std::string_view kErrorNames[] = {
    "ShapeMismatch",      "NonIntegralOutputExtent", "NonFinite",
    "TapeCorrupt",        "DegenerateBatch",         "SizeSumMismatch",
    "OddSpatialExtent",   "ChannelNotDivisibleBy4",  "LabelOutOfRange",
    "ModeMismatch",       "InvalidInputExtent",      "AlreadyFused",
    "InvalidConfig",      "InsufficientSamples",     "DivergedLoss",
    "SyntaxError",        "UnknownBlockKind",        "WidthMismatch",
    "BadMagic",           "VersionUnsupported",      "TruncatedFile",
    "IoError",
};

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  return kErrorNames[static_cast<int>(code)];
}

Error::Error(ErrorCode code, const std::string& message, std::string path)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message +
                         (path.empty() ? std::string() : " (at " + path + ")")),
      code_(code),
      path_(std::move(path)) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

std::string_view dtype_name(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    fail(ErrorCode::kShapeMismatch, "tensor rank must be 1..4, got " + shape_str(shape));
  }
  for (auto d : shape) {
    if (d <= 0) fail(ErrorCode::kShapeMismatch, "non-positive extent in " + shape_str(shape));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool strict) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    fail(ErrorCode::kShapeMismatch, "data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
  }
  if (strict) {
    for (T v : data) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "non-finite value in tensor data");
    }
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  check_shape(shape);
  if (shape_numel(shape) != numel()) {
    fail(ErrorCode::kShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return from_data(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

template <typename T>
Tensor<T> random_normal(const Shape& shape, Rng& rng, double stddev) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
Tensor<T> random_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShapeMismatch, "max_abs_diff " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    if (std::isnan(d)) return d;
    m = std::max(m, d);
  }
  return m;
}

template Tensor<float> random_normal<float>(const Shape&, Rng&, double);
template Tensor<double> random_normal<double>(const Shape&, Rng&, double);
template Tensor<float> random_uniform<float>(const Shape&, Rng&, double, double);
template Tensor<double> random_uniform<double>(const Shape&, Rng&, double, double);
template double max_abs_diff<float>(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace remdet
