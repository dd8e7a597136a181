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

// Cost accounting and the quadratic-term rank probe.
//
// MAC convention: one multiply-accumulate of a convolution (or the linear
// head) is one unit; BN, activations, elementwise ops, split/concat and
// patch merge are free. Parameter counts include conv weights/biases and BN
// affine terms but not BN running statistics.

#ifndef REMDET_ANALYSIS_HPP_
#define REMDET_ANALYSIS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "remdet/blocks.hpp"
#include "remdet/model.hpp"

namespace remdet {

struct MacReport {
  std::string name;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::vector<MacReport> children;

  bool is_leaf() const { return children.empty(); }
  // Leaves in depth-first order.
  std::vector<const MacReport*> leaves() const;
};

// Per-sample (N=1) counts. Throws InvalidConfig for non-positive extents or
// geometries the block cannot execute (e.g. odd extents into a CED).
MacReport count_macs_params(const BlockCfg& cfg, std::int64_t h, std::int64_t w, const std::string& prefix = "");
MacReport count_model_macs(const ModelCfg& cfg, std::int64_t h, std::int64_t w);

// Conv MACs (C_in/groups)·C_out·k_h·k_w·H_out·W_out.
std::uint64_t conv_macs(const ConvSpec& spec, std::int64_t h, std::int64_t w);

// Runs the block through the zero-padding reference executor with a
// multiply counter and returns the observed convolution multiplies.
std::uint64_t mac_oracle(const BlockCfg& cfg, std::int64_t h, std::int64_t w);
// Same over a model (stem, stages, no head).
std::uint64_t model_mac_oracle(const ModelCfg& cfg, std::int64_t h, std::int64_t w);

struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction&) const = default;
};

Fraction reduced(std::uint64_t num, std::uint64_t den);

struct SweepRow {
  double e = 0.0;
  std::uint64_t macs_convffn = 0;  // counted
  std::uint64_t macs_mult = 0;
  double closed_convffn = 0.0;  // 2e·c²·HW
  double closed_mult = 0.0;     // 1.5e·c²·HW
  std::uint64_t oracle_convffn = 0;  // measured; 0 when the oracle was skipped
  std::uint64_t oracle_mult = 0;
  double ratio = 0.0;  // macs_mult / macs_convffn
};

struct SweepResult {
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<SweepRow> rows;
};

// Throws InvalidConfig for e <= 0 or c, h, w <= 0.
SweepResult expansion_sweep(std::int64_t c, std::int64_t h, std::int64_t w, const std::vector<double>& e_values,
                            bool with_oracle = true);

// macs_mult(e_mult) / macs_convffn(e_convffn) as a reduced fraction of the
// counted integers.
Fraction cost_ratio(std::int64_t c, std::int64_t h, std::int64_t w, double e_mult, double e_convffn);

struct RankResult {
  int d = 0;
  int samples = 0;
  int estimated_rank = 0;
  int expected = 0;     // d(d+1)/2
  int monomials = 0;    // monomial_oracle(d)
  double sigma_max = 0.0;
  double sigma_cut = 0.0;  // largest singular value treated as zero (0 if none)
  bool pass = false;
};

// Stacks the vectorized symmetric coefficient matrices of
// x -> (w1·x)(w2·x) for `samples` random (w1, w2) pairs and measures the
// numerical rank (singular values above tol·sigma_max).
// Throws InsufficientSamples if samples < d(d+1)/2 + d.
RankResult rank_experiment(int d, int samples, double tol = 1e-8, std::uint64_t seed = 0);

// Number of distinct monomials x_i·x_j, counted by enumeration.
int monomial_oracle(int d);

}  // namespace remdet

#endif  // REMDET_ANALYSIS_HPP_
