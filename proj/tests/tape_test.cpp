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

#include <gtest/gtest.h>

#include "remdet/tape.hpp"
#include "test_util.hpp"

namespace remdet {
namespace {

TensorD scalar(double v) { return TensorD::from_data({1}, {v}); }

TEST(Tape, EachNodeVisitedOnce) {
  Tape<double> tape;
  const Var x = tape.leaf(scalar(1.5), true);
  Var y = x;
  for (int i = 0; i < 5; ++i) y = ad::mul(tape, y, x);
  tape.backward(y);
  EXPECT_EQ(tape.backward_visits(), 5u);
  // d/dx x^6 = 6 x^5
  EXPECT_NEAR(tape.grad(x)[0], 6 * std::pow(1.5, 5), 1e-12);
}

TEST(Tape, DiamondAccumulatesBothPaths) {
  Tape<double> tape;
  const Var x = tape.leaf(scalar(3.0), true);
  const Var a = ad::mul(tape, x, x);
  const Var b = ad::add(tape, x, x);
  const Var y = ad::add(tape, a, b);
  tape.backward(y);
  EXPECT_EQ(tape.grad(x)[0], 2 * 3.0 + 2);
  EXPECT_EQ(tape.backward_visits(), 3u);
}

TEST(Tape, UnreachedLeafHasZeroGrad) {
  Tape<double> tape;
  const Var x = tape.leaf(TensorD({2, 2}, 1.0), true);
  const Var unused = tape.leaf(TensorD({3}, 1.0), true);
  tape.backward(ad::weighted_sum(tape, x, TensorD({2, 2}, 2.0)));
  EXPECT_FALSE(tape.has_grad(unused));
  EXPECT_EQ(tape.grad(unused), TensorD({3}));
  EXPECT_EQ(tape.grad(x), TensorD({2, 2}, 2.0));
}

TEST(Tape, ConstantsCarryNoGradient) {
  Tape<double> tape;
  const Var x = tape.leaf(scalar(2.0), true);
  const Var c = tape.constant(scalar(5.0));
  tape.backward(ad::mul(tape, x, c));
  EXPECT_EQ(tape.grad(x)[0], 5.0);
  EXPECT_FALSE(tape.has_grad(c));
}

TEST(Tape, NonRecordingTapeRefusesBackward) {
  Tape<double> tape(false);
  const Var x = tape.leaf(scalar(2.0), true);
  const Var y = ad::mul(tape, x, x);
  EXPECT_EQ(tape.value(y)[0], 4.0);
  EXPECT_REMDET_ERROR(tape.backward(y), ErrorCode::kTapeCorrupt);
}

TEST(Tape, ForeignVariableIsTapeCorrupt) {
  Tape<double> a, b;
  const Var x = a.leaf(scalar(1.0), true);
  a.leaf(scalar(1.0), true);
  EXPECT_REMDET_ERROR(b.value(x), ErrorCode::kTapeCorrupt);
  EXPECT_REMDET_ERROR(b.backward(Var{7}), ErrorCode::kTapeCorrupt);
}

TEST(Tape, WrongGradientShapeIsTapeCorrupt) {
  Tape<double> tape;
  const Var x = tape.leaf(TensorD({2}), true);
  EXPECT_REMDET_ERROR(tape.accumulate(x, TensorD({3})), ErrorCode::kTapeCorrupt);
}

TEST(Tape, NonScalarRootNeedsSeed) {
  Tape<double> tape;
  const Var x = tape.leaf(TensorD({2}, 1.0), true);
  EXPECT_REMDET_ERROR(tape.backward(x), ErrorCode::kShapeMismatch);
  const Var y = ad::mul(tape, x, x);
  tape.backward(y, TensorD::from_data({2}, {1.0, 10.0}));
  EXPECT_EQ(tape.grad(x).vec(), (std::vector<double>{2.0, 20.0}));
}

}  // namespace
}  // namespace remdet
