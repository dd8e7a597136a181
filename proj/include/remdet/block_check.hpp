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

// Whole-block gradient checks: tape gradients of a random linear functional
// of the block output against central differences, for the input and every
// trainable parameter. Runs in f64.

#ifndef REMDET_BLOCK_CHECK_HPP_
#define REMDET_BLOCK_CHECK_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "remdet/blocks.hpp"

namespace remdet {

struct BlockShapeArgs {
  std::int64_t c1 = 8;
  std::int64_t c2 = 8;
  double e = 3.0;
  std::int64_t n = 2;  // c2f bottleneck count
  std::int64_t t = 1;  // ced expansion
};

// Kinds: conv, convffn, mult, mult-retain, repdw, gatedffn, ced, bottleneck,
// c2f, channelc2f. Blocks with a single width use c1.
std::optional<BlockCfg> block_from_name(std::string_view kind, const BlockShapeArgs& args);
const std::vector<std::string>& block_kind_names();

struct GradcheckEntry {
  std::string name;  // "input" or a parameter name
  std::int64_t numel = 0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double worst = 0.0;
  bool pass = false;
  double tol = 0.0;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::int64_t batch = 2;
  std::int64_t h = 8;
  std::int64_t w = 8;
  double tol = 1e-5;
  double rel_step = 1e-6;
  BnMode bn_mode = BnMode::kInference;
};

GradcheckReport gradcheck_block(const BlockCfg& cfg, const GradcheckOptions& opts);

}  // namespace remdet

#endif  // REMDET_BLOCK_CHECK_HPP_
