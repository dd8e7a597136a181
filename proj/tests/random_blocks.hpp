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

// Seeded random block configurations for the MAC-counter property checks.

#ifndef REMDET_TESTS_RANDOM_BLOCKS_HPP_
#define REMDET_TESTS_RANDOM_BLOCKS_HPP_

#include <cstdint>

#include "remdet/blocks.hpp"
#include "remdet/tensor.hpp"

namespace remdet::testing {

inline constexpr int kRandomBlockKinds = 12;

struct RandomBlockCase {
  BlockCfg cfg;
  std::int64_t h = 0;
  std::int64_t w = 0;
};

// Case `i` cycles through every block kind (and both RepDW modes), so any
// run of kRandomBlockKinds consecutive cases covers all of them.
inline RandomBlockCase random_block_case(int i, Rng& rng) {
  const auto pick = [&](std::int64_t lo, std::int64_t hi) { return rng.uniform_int(lo, hi); };
  const double es[] = {1.0, 1.5, 2.0, 2.5, 3.0, 4.0};
  const double e = es[pick(0, 5)];
  RandomBlockCase out{ConvModuleCfg{}, 2 * pick(1, 5), 2 * pick(1, 5)};
  const std::int64_t c1 = pick(1, 8), c2 = pick(1, 8);
  switch (i % kRandomBlockKinds) {
    case 0: {
      const std::int64_t g = pick(1, 2);
      const std::int64_t k = 2 * pick(0, 2) + 1;
      const ConvSpec spec{g * c1, g * c2, k, k, pick(1, 2), pick(0, k / 2), g};
      out.cfg = ConvModuleCfg{spec, pick(0, 1) == 1, Act::kSiLU};
      out.h = std::max(out.h, k);
      out.w = std::max(out.w, k);
      break;
    }
    case 1: out.cfg = ConvFFNCfg{c1, pick(0, 1) ? c1 : c2, e, true}; break;
    case 2: out.cfg = MultiplicationCfg{c1, c2, e, true, false, GateMerge::kConcat}; break;
    case 3: out.cfg = MultiplicationCfg{c1, c1, e, true, true, GateMerge::kConcat}; break;
    case 4: out.cfg = MultiplicationCfg{c1, c2, e, true, true, GateMerge::kAdd}; break;
    case 5: out.cfg = RepDWCfg{c1, RepMode::kTrain}; break;
    case 6: out.cfg = RepDWCfg{c1, RepMode::kDeploy}; break;
    case 7: out.cfg = GatedFFNCfg{c1, pick(0, 1) ? c1 : c2, e, true, pick(0, 1) ? RepMode::kTrain : RepMode::kDeploy}; break;
    case 8: out.cfg = CEDCfg{c1, c2, pick(1, 2)}; break;
    case 9: out.cfg = BottleneckCfg{c1, pick(0, 1) ? 0.5 : 1.0, pick(0, 1) == 1}; break;
    case 10: out.cfg = C2fCfg::baseline(c1, 2 * pick(1, 4), pick(0, 3), pick(0, 1) == 1); break;
    default: out.cfg = C2fCfg::channel(c1, 4 * pick(1, 2), pick(1, 3)); break;
  }
  return out;
}

}  // namespace remdet::testing

#endif  // REMDET_TESTS_RANDOM_BLOCKS_HPP_
