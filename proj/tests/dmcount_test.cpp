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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "icc/dmcount.hpp"
#include "icc/error.hpp"
#include "test_support.hpp"
#include "transport_oracle.hpp"

namespace icc {
namespace {

DensityMap<double> map_of(std::size_t h, std::size_t w, std::vector<double> v,
                          bool gt = false) {
  DensityMap<double> m(h, w, 0.0, gt);
  m.values = std::move(v);
  return m;
}

DensityMap<double> random_map(std::size_t h, std::size_t w, std::mt19937_64& rng,
                              double lo = 0.05, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  DensityMap<double> m(h, w);
  for (double& v : m.values) v = u(rng);
  return m;
}

using testing::best_permutation;
using testing::exact_transport;
using testing::squared_distances;

TEST(LpOracle, FlowSolverAgreesWithPermutationEnumeration) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  for (std::size_t n = 2; n <= 7; ++n) {
    std::vector<std::pair<double, double>> a(n), b(n);
    for (auto& p : a) p = {coord(rng), coord(rng)};
    for (auto& p : b) p = {coord(rng), coord(rng)};
    auto c = squared_distances(a, b);
    const double flow = exact_transport(std::vector<long>(n, 1), std::vector<long>(n, 1), c) / n;
    EXPECT_NEAR(flow, best_permutation(n, c), 1e-9) << n;
  }
}

TEST(Sinkhorn, MatchesExactTransportOnRandomProblems) {
  std::mt19937_64 rng(1234);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    testing::TransportInstance inst = testing::random_transport_instance(rng);
    TransportProblem& prob = inst.problem;
    const std::size_t m = prob.p.size(), n = prob.q.size();
    prob.max_iters = 20000;
    prob.tolerance = 1e-9;
    TransportPlan plan = sinkhorn(prob);
    const double lp = inst.exact_cost();
    ASSERT_TRUE(plan.converged) << trial;
    EXPECT_GE(plan.cost, lp - 1e-9) << trial;
    EXPECT_LE(plan.cost, 1.05 * lp + 1e-12) << trial << " lp=" << lp;
    EXPECT_LE(plan.marginal_error, 1e-6) << trial;
    double row_err = 0.0, col_err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_GE(plan.plan[i * n + j], 0.0);
        r += plan.plan[i * n + j];
      }
      row_err += std::abs(r - prob.p[i]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double c = 0.0;
      for (std::size_t i = 0; i < m; ++i) c += plan.plan[i * n + j];
      col_err += std::abs(c - prob.q[j]);
    }
    EXPECT_LE(row_err, 1e-6);
    EXPECT_LE(col_err, 1e-6);
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(Sinkhorn, HandExamples) {
  TransportProblem same;
  same.p = same.q = {0.25, 0.25, 0.5};
  same.cost = grid_cost(1, 3);
  same.epsilon = 0.01;
  EXPECT_LT(sinkhorn(same).cost, 0.05);

  TransportProblem swap;
  swap.p = {1.0, 0.0};
  swap.q = {0.0, 1.0};
  swap.cost = {0.0, 1.0, 1.0, 0.0};
  swap.epsilon = 0.01;
  EXPECT_NEAR(sinkhorn(swap).cost, 1.0, 0.05);
}

TEST(Sinkhorn, ReportsNonConvergenceWithoutThrowing) {
  std::mt19937_64 rng(3);
  TransportProblem prob;
  prob.cost = grid_cost(3, 3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int i = 0; i < 9; ++i) { prob.p.push_back(u(rng)); prob.q.push_back(u(rng)); }
  const double sp = std::accumulate(prob.p.begin(), prob.p.end(), 0.0);
  const double sq = std::accumulate(prob.q.begin(), prob.q.end(), 0.0);
  for (double& x : prob.p) x /= sp;
  for (double& x : prob.q) x /= sq;
  prob.epsilon = 1e-3;
  prob.max_iters = 1;
  prob.tolerance = 1e-12;
  TransportPlan plan = sinkhorn(prob);
  EXPECT_FALSE(plan.converged);
  EXPECT_EQ(plan.iterations, 1u);
}

TEST(Sinkhorn, RejectsInvalidProblems) {
  TransportProblem prob;
  prob.p = prob.q = {0.5, 0.5};
  prob.cost = grid_cost(1, 2);
  prob.epsilon = 0.0;
  EXPECT_THROW(sinkhorn(prob), ConfigError);
  prob.epsilon = -1.0;
  EXPECT_THROW(sinkhorn(prob), ConfigError);
  prob.epsilon = 0.1;
  prob.q = {0.0, 0.0};
  EXPECT_THROW(sinkhorn(prob), DegenerateMassError);
  prob.q = {0.5, 0.5};
  prob.cost = {0.0};
  EXPECT_THROW(sinkhorn(prob), ShapeError);
}

TEST(GridCost, SymmetricWithZeroDiagonal) {
  auto c = grid_cost(2, 3);
  ASSERT_EQ(c.size(), 36u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(c[i * 6 + i], 0.0);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(c[i * 6 + j], c[j * 6 + i]);
  }
  EXPECT_EQ(c[0 * 6 + 5], 1.0 + 4.0);  // (0,0) to (1,2)
}

TEST(CountingLoss, Examples) {
  auto y = map_of(1, 2, {2.0, 3.0}), yh = map_of(1, 2, {1.0, 2.0});
  auto r = counting_loss(y, yh);
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_EQ(r.grad, (std::vector<double>{-1.0, -1.0}));
  auto same = counting_loss(y, y);
  EXPECT_EQ(same.value, 0.0);
  EXPECT_EQ(same.grad, (std::vector<double>{0.0, 0.0}));
}

TEST(TvLoss, Examples) {
  EXPECT_NEAR(tv_loss(map_of(1, 2, {1, 0}), map_of(1, 2, {1, 1})).value, 0.5, 1e-15);
  EXPECT_NEAR(tv_loss(map_of(1, 2, {1, 0}), map_of(1, 2, {0, 1})).value, 1.0, 1e-15);
  EXPECT_NEAR(tv_loss(map_of(1, 2, {1, 3}), map_of(1, 2, {2, 6})).value, 0.0, 1e-15);
}

TEST(OtLoss, ShiftAlongStripCostsOne) {
  for (std::size_t k : {4u, 8u, 16u}) {
    DensityMap<double> y(1, k), yh(1, k);
    for (std::size_t i = 0; i + 1 < k; ++i) {
      y.values[i] = 1.0;
      yh.values[i + 1] = 1.0;
    }
    SinkhornOptions opt;
    opt.max_iters = 5000;
    opt.tolerance = 1e-10;
    EXPECT_NEAR(ot_loss(y, yh, opt).value, 1.0, 0.01) << k;
  }
  DensityMap<double> a(1, 2), b(1, 2);
  a.values = {1, 0};
  b.values = {0, 1};
  EXPECT_NEAR(ot_loss(a, b).value, 1.0, 0.05);
}

TEST(OtLoss, NearZeroForIdenticalMaps) {
  std::mt19937_64 rng(4);
  auto y = random_map(6, 6, rng);
  EXPECT_LE(std::abs(ot_loss(y, y).value), 0.05);
}

TEST(DmCountLoss, Examples) {
  auto y = map_of(1, 2, {1, 0}), yh = map_of(1, 2, {0, 1});
  auto r = dm_count_loss(y, yh, {1.0, 1.0});
  EXPECT_EQ(r.counting, 0.0);
  EXPECT_NEAR(r.tv, 1.0, 1e-15);
  EXPECT_NEAR(r.ot, 1.0, 0.05);
  EXPECT_NEAR(r.value, 2.0, 0.05);

  std::mt19937_64 rng(5);
  auto a = random_map(4, 4, rng), b = random_map(4, 4, rng);
  auto plain = dm_count_loss(a, b, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(plain.value, counting_loss(a, b).value);
  EXPECT_LE(std::abs(dm_count_loss(a, a).value), 0.05);
}

// Finite differences on 6x6 maps. The transport terms need a converged
// solve for their gradients to be exact.
class LossGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng_{77};
  SinkhornOptions tight_{0.0, 5000, 1e-11};

  template <typename F>
  double error(F loss) {
    auto y = random_map(6, 6, rng_);
    auto yh = random_map(6, 6, rng_, 0.1, 2.0);
    auto f = [&](const std::vector<double>& v) {
      DensityMap<double> p = yh;
      p.values = v;
      return loss(y, p).value;
    };
    return testing::vector_gradient_error(f, yh.values, loss(y, yh).grad);
  }
};

TEST_F(LossGradient, Counting) {
  EXPECT_LT(error([](auto& y, auto& p) { return counting_loss(y, p); }), 1e-4);
}

TEST_F(LossGradient, TotalVariation) {
  EXPECT_LT(error([](auto& y, auto& p) { return tv_loss(y, p); }), 1e-4);
}

TEST_F(LossGradient, Transport) {
  EXPECT_LT(error([&](auto& y, auto& p) { return ot_loss(y, p, tight_); }), 1e-3);
}

TEST_F(LossGradient, Combined) {
  EXPECT_LT(error([&](auto& y, auto& p) { return dm_count_loss(y, p, {}, tight_); }), 1e-3);
}

TEST(LossProperties, TransportAndTvIgnoreScaleButCountingDoesNot) {
  std::mt19937_64 rng(8);
  auto y = random_map(5, 5, rng), yh = random_map(5, 5, rng);
  auto scaled = yh;
  for (double& v : scaled.values) v *= 3.7;
  SinkhornOptions opt{0.0, 5000, 1e-12};
  EXPECT_NEAR(ot_loss(y, yh, opt).value, ot_loss(y, scaled, opt).value, 1e-8);
  EXPECT_NEAR(tv_loss(y, yh).value, tv_loss(y, scaled).value, 1e-8);
  EXPECT_GT(std::abs(counting_loss(y, yh).value - counting_loss(y, scaled).value), 1.0);
}

TEST(LossProperties, ZeroMassIsATypedError) {
  DensityMap<double> zero(3, 3), one(3, 3, 1.0);
  EXPECT_THROW(ot_loss(one, zero), DegenerateMassError);
  EXPECT_THROW(tv_loss(zero, one), DegenerateMassError);
  EXPECT_THROW(dm_count_loss(one, zero), DegenerateMassError);
  EXPECT_NO_THROW(counting_loss(one, zero));
  EXPECT_THROW(counting_loss(one, DensityMap<double>(2, 2)), ShapeError);
}

TEST(LossProperties, FiniteOnPositiveInputsAndFloatAgreesWithDouble) {
  std::mt19937_64 rng(9);
  auto y = random_map(6, 6, rng), yh = random_map(6, 6, rng);
  auto d = dm_count_loss(y, yh);
  EXPECT_TRUE(std::isfinite(d.value));
  DensityMap<float> yf(6, 6), yhf(6, 6);
  for (std::size_t i = 0; i < 36; ++i) {
    yf.values[i] = static_cast<float>(y.values[i]);
    yhf.values[i] = static_cast<float>(yh.values[i]);
  }
  EXPECT_NEAR(dm_count_loss(yf, yhf).value, d.value, 1e-4);
}

TEST(DensityMapType, ValidatesValues) {
  auto m = map_of(1, 2, {1.0, -0.5});
  EXPECT_THROW(m.validate(), DataError);
  m.values = {1.0, std::nan("")};
  EXPECT_THROW(m.validate(), DataError);
  m.values = {1.0};
  EXPECT_THROW(m.validate(), DataError);
  m.values = {1.0, 2.0};
  EXPECT_NO_THROW(m.validate());
  EXPECT_DOUBLE_EQ(m.count(), 3.0);
  EXPECT_EQ(DensityMap<double>::from_tensor(m.to_tensor()).values, m.values);
}

}  // namespace
}  // namespace icc
