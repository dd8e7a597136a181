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

#ifndef REMDET_THREADING_HPP_
#define REMDET_THREADING_HPP_

#include <cstdint>
#include <functional>

namespace remdet {

// Process-wide worker count for the fast conv path. 1 (the default) runs
// everything on the calling thread. Work is partitioned so that results are
// bit-identical for any thread count.
void set_num_threads(int n);
int num_threads();

// Calls fn(lo, hi) over disjoint sub-ranges covering [begin, end).
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace remdet

#endif  // REMDET_THREADING_HPP_
