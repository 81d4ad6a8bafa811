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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "icc/checkpoint.hpp"
#include "icc/error.hpp"
#include "icc/optim.hpp"
#include "test_support.hpp"

namespace icc {
namespace {

// Scalar reference implementation of the decoupled-decay update.
struct ReferenceAdamW {
  double lr, b1, b2, eps, wd, decay;
  std::size_t interval;
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(std::vector<double>& p, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    const double rate = lr * std::pow(decay, static_cast<double>(t / interval));
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= 1.0 - rate * wd;
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      p[i] -= rate * mh / (std::sqrt(vh) + eps);
    }
  }
};

TEST(AdamW, FirstStepMovesByLearningRateTimesSign) {
  AdamWOptions o;
  o.learning_rate = 0.01;
  o.weight_decay = 0.0;
  AdamW<double> opt(o);
  Tensor<double> p({3}, {1.0, -2.0, 0.5});
  Tensor<double> g({3}, {0.3, -4.0, 1e-3});
  opt.step({&p}, {&g});
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(p[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-12);
}

TEST(AdamW, MatchesScalarReferenceWithDecayAndSchedule) {
  AdamWOptions o;
  o.learning_rate = 3e-3;
  o.weight_decay = 0.05;
  o.decay = 0.9;
  o.decay_interval = 3;
  AdamW<double> opt(o);
  ReferenceAdamW ref{3e-3, 0.9, 0.999, 1e-8, 0.05, 0.9, 3, {}, {}, 0};
  std::mt19937_64 rng(11);
  Tensor<double> p = testing::random_tensor({5}, rng);
  std::vector<double> rp(p.data().begin(), p.data().end());
  for (int step = 0; step < 10; ++step) {
    Tensor<double> g = testing::random_tensor({5}, rng);
    opt.step({&p}, {&g});
    ref.step(rp, std::vector<double>(g.data().begin(), g.data().end()));
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], rp[i], 1e-13);
  EXPECT_EQ(opt.steps(), 10u);
  EXPECT_NEAR(opt.learning_rate(), 3e-3 * std::pow(0.9, 3), 1e-18);
}

TEST(AdamW, NonFiniteGradientLeavesStateUntouched) {
  AdamW<double> opt(AdamWOptions{});
  Tensor<double> p({2}, {1.0, 2.0}), g({2}, {0.1, 0.1});
  opt.step({&p}, {&g});
  const Tensor<double> before = p;
  Tensor<double> bad({2}, {0.1, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(opt.step({&p}, {&bad}), NumericError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, RejectsBadOptionsAndShapes) {
  AdamWOptions o;
  o.learning_rate = 0.0;
  EXPECT_THROW(AdamW<double>{o}, ConfigError);
  o = {};
  o.decay = 1.5;
  EXPECT_THROW(AdamW<double>{o}, ConfigError);
  AdamW<double> opt(AdamWOptions{});
  Tensor<double> p({2}), g({3});
  EXPECT_THROW(opt.step({&p}, {&g}), ShapeError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir_ = std::filesystem::temp_directory_path() / "icc_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir_); }
  void TearDown() override { std::filesystem::remove_all(dir_); }
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  Tensor<double> a = testing::random_tensor({2, 3, 1, 4}, rng);
  Tensor<float> b = testing::random_tensor({5}, rng).cast<float>();
  std::vector<CheckpointRecord> recs{CheckpointRecord::from_tensor("layer.weight", a),
                                     CheckpointRecord::from_tensor("layer.bias", b)};
  save_checkpoint(dir_ / "x.ckpt", recs);
  auto back = load_checkpoint(dir_ / "x.ckpt");
  ASSERT_EQ(back, recs);
  EXPECT_EQ(back[0].to_tensor<double>(), a);
  EXPECT_EQ(back[1].to_tensor<float>(), b);
  EXPECT_EQ(back[1].dtype, DType::kFloat32);
  // Width conversion on load.
  EXPECT_EQ(back[1].to_tensor<double>(), b.cast<double>());
}

TEST_F(CheckpointTest, RejectsCorruptFiles) {
  auto write = [&](const std::string& bytes) {
    std::ofstream(dir_ / "bad.ckpt", std::ios::binary) << bytes;
  };
  write("NOPE");
  EXPECT_THROW(load_checkpoint(dir_ / "bad.ckpt"), DataError);
  write(std::string("ICCW\x02\x00\x00\x00", 8));
  EXPECT_THROW(load_checkpoint(dir_ / "bad.ckpt"), DataError);
  save_checkpoint(dir_ / "ok.ckpt",
                  {CheckpointRecord::from_tensor("w", Tensor<double>({4}, 1.0))});
  auto bytes = std::filesystem::file_size(dir_ / "ok.ckpt");
  std::filesystem::resize_file(dir_ / "ok.ckpt", bytes - 3);
  EXPECT_THROW(load_checkpoint(dir_ / "ok.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), DataError);
}

}  // namespace
}  // namespace icc
