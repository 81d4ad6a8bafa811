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

// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes. Tolerances are fixed here and nowhere else.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_cases.hpp"
#include "icc/data.hpp"
#include "icc/dmcount.hpp"
#include "icc/error.hpp"
#include "icc/flops.hpp"
#include "icc/model.hpp"
#include "icc/trainer.hpp"
#include "test_support.hpp"
#include "transport_oracle.hpp"

namespace {

using namespace icc;

constexpr double kSavingsTarget = 0.673;
constexpr double kSavingsTol = 0.005;
constexpr double kReportedOps = 125.53e9;
constexpr double kComplexityTol = 0.15;
constexpr int kTransportProblems = 60;
constexpr double kTransportRelTol = 0.05;
constexpr double kMarginalTol = 1e-6;
// Near-degenerate optima converge slowly; the worst seeded case needs ~54k.
constexpr std::size_t kSinkhornBudget = 200000;
constexpr double kOpGradTol = 1e-4;
constexpr double kOtGradTol = 1e-3;
constexpr int kConservationSets = 1000;
constexpr std::size_t kTrainImages = 64, kValImages = 16, kTestImages = 32;
constexpr std::size_t kTrainEpochs = 30;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome flop_golden() {
  const auto standard = count_conv(3, 64, 3, 3, 2, 2, false).total();
  const auto factorized = count_conv(3, 1, 1, 1, 4, 4, false).total() +
                          count_conv(1, 64, 3, 3, 2, 2, false).total();
  const double s = factorization_savings(3, 3, 64, 4, 4);
  return {standard == 13568 && factorized == 4432 && std::abs(s - kSavingsTarget) <= kSavingsTol,
          std::to_string(standard) + " / " + std::to_string(factorized) +
              " ops, savings " + fmt("%.4f", s) + " (target 0.673 +/- 0.005)"};
}

Outcome complexity() {
  const GraphDescription g = build_icc({});
  const auto mac = count_graph(g, {1, 3, 1080, 1920}, FlopConvention::kMultiplyAccumulate);
  const auto arith = count_graph(g, {1, 3, 1080, 1920}, FlopConvention::kArithmetic);
  const double rel = (static_cast<double>(mac.total) - kReportedOps) / kReportedOps;
  return {std::abs(rel) <= kComplexityTol && mac.layers.size() == g.layers.size(),
          format_giga(mac.total) + " multiply-accumulate (" + fmt("%+.1f%%", 100 * rel) +
              " vs 125.53 G, tol 15%), " + format_giga(arith.total) + " arithmetic, " +
              std::to_string(mac.layers.size()) + " layers enumerated"};
}

Outcome transport_oracle() {
  std::mt19937_64 rng(20260101);
  int ok = 0, converged = 0;
  double worst_rel = 0.0, worst_marg = 0.0;
  std::size_t most_iters = 0;
  for (int t = 0; t < kTransportProblems; ++t) {
    auto inst = testing::random_transport_instance(rng, 16);
    inst.problem.max_iters = kSinkhornBudget;
    inst.problem.tolerance = kMarginalTol;
    const TransportPlan plan = sinkhorn(inst.problem);
    most_iters = std::max(most_iters, plan.iterations);
    const double lp = inst.exact_cost();
    const double rel = (plan.cost - lp) / lp;
    worst_rel = std::max(worst_rel, rel);
    bool good = plan.cost >= lp - 1e-12 && rel <= kTransportRelTol;
    if (plan.converged) {
      ++converged;
      worst_marg = std::max(worst_marg, plan.marginal_error);
      good = good && plan.marginal_error <= kMarginalTol;
    }
    ok += good;
  }
  return {ok == kTransportProblems && converged == kTransportProblems,
          std::to_string(ok) + "/" + std::to_string(kTransportProblems) +
              " problems within bounds, " + std::to_string(converged) + " converged (at most " +
              std::to_string(most_iters) + " iterations), worst excess " +
              fmt("%.2f%%", 100 * worst_rel) + ", worst marginal error " + fmt("%.1e", worst_marg)};
}

Outcome gradients() {
  int failed = 0, total = 0;
  double worst_op = 0.0;
  std::string failures;
  for (const auto& c : testing::op_gradient_cases()) {
    const double e = testing::gradient_error(c.build, c.inputs, 7, c.mode);
    worst_op = std::max(worst_op, e);
    ++total;
    if (!(e < kOpGradTol)) {
      ++failed;
      failures += " " + c.name;
    }
  }
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> lo(0.05, 1.0), hi(0.1, 2.0);
  DensityMap<double> y(6, 6), yh(6, 6);
  for (double& v : y.values) v = lo(rng);
  for (double& v : yh.values) v = hi(rng);
  const SinkhornOptions tight{0.0, 5000, 1e-11};
  auto check = [&](const char* name, double tol, auto loss) {
    auto f = [&](const std::vector<double>& v) {
      DensityMap<double> p = yh;
      p.values = v;
      return static_cast<double>(loss(p).value);
    };
    const double e = testing::vector_gradient_error(f, yh.values, loss(yh).grad);
    ++total;
    if (!(e < tol)) {
      ++failed;
      failures += std::string(" ") + name;
    }
    return e;
  };
  const double ec = check("counting", kOpGradTol, [&](auto& p) { return counting_loss(y, p); });
  const double et = check("tv", kOpGradTol, [&](auto& p) { return tv_loss(y, p); });
  const double eo = check("ot", kOtGradTol, [&](auto& p) { return ot_loss(y, p, tight); });
  const double ea = check("total", kOtGradTol,
                          [&](auto& p) { return dm_count_loss(y, p, {}, tight); });
  std::ostringstream d;
  d << (total - failed) << "/" << total << " checks; worst op " << fmt("%.1e", worst_op)
    << ", counting " << fmt("%.1e", ec) << ", tv " << fmt("%.1e", et) << ", ot "
    << fmt("%.1e", eo) << ", total " << fmt("%.1e", ea) << failures;
  return {failed == 0, d.str()};
}

Outcome conservation() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> ext(1, 400), cnt(0, 500);
  int exact = 0;
  for (int t = 0; t < kConservationSets; ++t) {
    const std::size_t h = ext(rng), w = ext(rng), n = cnt(rng);
    std::uniform_int_distribution<std::size_t> ry(0, h - 1), rx(0, w - 1);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::vector<Point> pts(n);
    for (Point& p : pts) {
      p.x = static_cast<double>(rx(rng)) + 0.999 * frac(rng);
      p.y = static_cast<double>(ry(rng)) + 0.999 * frac(rng);
    }
    const auto d = downsample_by_8(rasterize(pts, h, w));
    exact += d.count() == static_cast<float>(n);
  }
  return {exact == kConservationSets,
          std::to_string(exact) + "/" + std::to_string(kConservationSets) + " sets conserved exactly"};
}

Outcome shapes() {
  ModelConfig no_context, no_inception;
  no_context.use_contextual_module = false;
  no_inception.use_inception_blocks = false;
  int ok = 0, total = 0;
  std::string seen;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{256, 256}, {512, 512}, {1080, 1920}}) {
    for (const ModelConfig& cfg : {ModelConfig{}, no_context, no_inception}) {
      const Shape out = infer_shapes(build_icc(cfg), {1, 3, h, w}).back();
      ++total;
      ok += out == Shape{1, 1, (h + 7) / 8, (w + 7) / 8};
    }
    seen += " " + std::to_string(h) + "x" + std::to_string(w) + "->" +
            shape_to_string(infer_shapes(build_icc({}), {1, 3, h, w}).back());
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " variant/size pairs;" + seen};
}

struct TrainingEvidence {
  std::vector<EvalResult> evals;
};

Outcome desk_training(TrainingEvidence& evidence) {
  SyntheticOptions so;
  so.n_images = kTrainImages;
  so.seed = 1;
  so.id_prefix = "train";
  const auto train_set = generate_synthetic(so);
  so.n_images = kValImages;
  so.seed = 2;
  so.id_prefix = "val";
  const auto val_set = generate_synthetic(so);
  so.n_images = kTestImages;
  so.seed = 3;
  so.id_prefix = "test";
  const auto test_set = generate_synthetic(so);

  const auto dir = std::filesystem::temp_directory_path() / "icc_acceptance";
  std::filesystem::create_directories(dir);
  TrainConfig c;
  c.epochs = kTrainEpochs;
  c.crop_h = c.crop_w = 128;
  c.model.width_multiplier = 0.25;
  c.freeze_batchnorm = true;
  c.seed = 1;
  c.checkpoint = (dir / "acceptance.ckpt").string();

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train<float>(c, train_set, val_set);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Network<float> net(build_icc(c.model));
  net.load(c.checkpoint);
  const EvalResult test = evaluate(net, test_set);
  evidence.evals.push_back(test);

  // Baseline: predict the mean training count for every test image.
  double mean = 0.0;
  for (const auto& img : train_set) mean += static_cast<double>(img.count());
  mean /= static_cast<double>(train_set.size());
  std::vector<ImageResult> constant;
  for (const auto& img : test_set) constant.push_back({img.id, static_cast<double>(img.count()), mean, 0.0});
  const EvalResult baseline = summarize(constant);
  evidence.evals.push_back(baseline);

  bool decreasing = r.epochs.size() >= 5;
  for (std::size_t e = 1; e < 5 && decreasing; ++e) decreasing = r.epochs[e].loss < r.epochs[e - 1].loss;
  const bool learned = test.mae < baseline.mae;
  std::ostringstream d;
  d << "held-out MAE " << fmt("%.3f", test.mae) << " vs constant-mean " << fmt("%.3f", baseline.mae)
    << " (best epoch " << r.best_epoch << ", val MAE " << fmt("%.3f", r.best_val_mae) << "); loss";
  for (std::size_t e = 0; e < std::min<std::size_t>(5, r.epochs.size()); ++e) d << " " << fmt("%.3f", r.epochs[e].loss);
  d << (decreasing ? " strictly decreasing" : " NOT strictly decreasing") << ", final "
    << fmt("%.3f", r.epochs.back().loss) << "; width 0.25, crop 128, " << fmt("%.0f s", seconds);
  std::filesystem::remove_all(dir);
  return {decreasing && learned, d.str()};
}

Outcome non_reproducibility() {
  // Structural check only: both ablations must build; their errors are not claimed.
  ModelConfig no_context, no_inception, neither;
  no_context.use_contextual_module = false;
  no_inception.use_inception_blocks = false;
  neither.use_contextual_module = neither.use_inception_blocks = false;
  bool constructible = true;
  for (const ModelConfig& cfg : {no_context, no_inception}) {
    try {
      cfg.validate();
      infer_shapes(build_icc(cfg), {1, 3, 256, 256});
    } catch (const Error&) {
      constructible = false;
    }
  }
  bool rejects_neither = false;
  try {
    neither.validate();
  } catch (const ConfigError&) {
    rejects_neither = true;
  }
  return {constructible && rejects_neither,
          "published benchmark MAE/RMSE (ShanghaiTech A 76.97/130.16, B 8.46/15.20, "
          "Mall 2.16/2.74) are NOT reproduced: no GPU training and no dataset "
          "redistribution here. Ablation variants are constructible; their errors are not claimed"};
}

Outcome metrics(const TrainingEvidence& evidence) {
  const EvalResult r = summarize({{"a", 10, 12, 0}, {"b", 20, 16, 0}});
  bool ok = std::abs(r.mae - 3.0) < 1e-12 && std::abs(r.rmse - std::sqrt(10.0)) < 1e-12;
  std::size_t runs = 1;
  ok = ok && r.mae <= r.rmse;
  for (const EvalResult& e : evidence.evals) {
    ok = ok && e.mae <= e.rmse;
    ++runs;
  }
  return {ok, "MAE " + fmt("%.4f", r.mae) + ", RMSE " + fmt("%.4f", r.rmse) +
                  "; MAE <= RMSE on " + std::to_string(runs) + " evaluations"};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number; default is all of them.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  TrainingEvidence evidence;
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "FLOP golden cases", flop_golden},
      {2, "ICC complexity at 1080x1920", complexity},
      {3, "OT exact-LP oracle suite", transport_oracle},
      {4, "gradient suite (64-bit finite differences)", gradients},
      {5, "count conservation", conservation},
      {6, "shape contract", shapes},
      {7, "desk-scale learning check", [&] { return desk_training(evidence); }},
      {8, "benchmark non-reproducibility", non_reproducibility},
      {9, "metric arithmetic", [&] { return metrics(evidence); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %s: %s -- %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
