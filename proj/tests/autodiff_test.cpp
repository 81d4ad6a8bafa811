/*
 * Copyright 2026 The ICC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>

#include "icc/autodiff.hpp"
#include "icc/error.hpp"
#include "gradient_cases.hpp"
#include "test_support.hpp"

namespace icc {
namespace {

using testing::gradient_error;
using testing::random_tensor;

constexpr double kTol = 1e-4;

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  static const auto cases = testing::op_gradient_cases();
  const auto& c = cases.at(GetParam());
  EXPECT_LT(gradient_error(c.build, c.inputs, 7, c.mode), kTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Range<std::size_t>(0, testing::op_gradient_cases().size()),
    [](const ::testing::TestParamInfo<std::size_t>& info) {
      return testing::op_gradient_cases()[info.param].name;
    });

TEST(Graph, BackwardRequiresKeptActivations) {
  Graph<double> g;
  NodeId x = g.parameter("x", Tensor<double>({1, 1, 2, 2}, 1.0));
  NodeId s = g.sum(g.relu(x));
  EXPECT_THROW(g.backward(s), ConfigError);
  g.forward({ops::NormMode::kEval, false});
  EXPECT_THROW(g.backward(s), ConfigError);
  g.forward();
  EXPECT_NO_THROW(g.backward(s));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 1.0);
}

TEST(Graph, UnreachableParameterHasZeroGradient) {
  Graph<double> g;
  NodeId x = g.parameter("x", Tensor<double>({1, 1, 2, 2}, 1.0));
  NodeId unused = g.parameter("unused", Tensor<double>({3}, 2.0));
  NodeId s = g.sum(x);
  g.forward();
  g.backward(s);
  ASSERT_EQ(g.grad(unused).shape(), (Shape{3}));
  EXPECT_EQ(g.grad(unused).sum(), 0.0);
}

TEST(Graph, NonFiniteValuesRaiseNumericError) {
  Graph<double> g;
  NodeId x = g.parameter("x", Tensor<double>({1, 1, 1, 2}, {1.0, 0.0}));
  NodeId y = g.parameter("y", Tensor<double>({1, 1, 1, 2}, {0.0, 0.0}));
  g.div(x, y);
  EXPECT_THROW(g.forward(), NumericError);
}

TEST(Graph, ReleasesIntermediatesWithoutKeep) {
  Graph<double> g;
  NodeId in = g.input("in");
  NodeId r = g.relu(in);
  NodeId out = g.sum(r);
  g.set_input(in, Tensor<double>({1, 1, 2, 2}, 1.0));
  g.forward({ops::NormMode::kEval, false});
  EXPECT_TRUE(g.value(r).empty());
  EXPECT_DOUBLE_EQ(g.value(out)[0], 4.0);
  ASSERT_TRUE(g.find("in").has_value());
  EXPECT_EQ(*g.find("in"), in);
}

TEST(Graph, RejectsShapeMismatch) {
  Graph<double> g;
  NodeId a = g.parameter("a", Tensor<double>({1, 1, 2, 2}));
  NodeId b = g.parameter("b", Tensor<double>({1, 1, 3, 2}));
  g.add({a, b});
  EXPECT_THROW(g.forward(), ShapeError);
}

}  // namespace
}  // namespace icc
