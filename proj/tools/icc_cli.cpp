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

// icc: command-line front end for training, evaluation, inference,
// operation counting and synthetic data generation.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "icc/data.hpp"
#include "icc/dmcount.hpp"
#include "icc/error.hpp"
#include "icc/flops.hpp"
#include "icc/io.hpp"
#include "icc/model.hpp"
#include "icc/network.hpp"
#include "icc/trainer.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string ablation = "none";
  int precision = 32;
  double width_multiplier = 1.0;
};

icc::ModelConfig model_config(const Globals& g) {
  icc::ModelConfig m;
  icc::apply_ablation(m, g.ablation);
  m.width_multiplier = g.width_multiplier;
  return m;
}

template <typename T>
icc::Network<T> load_network(const icc::ModelConfig& model,
                             const std::string& checkpoint) {
  icc::Network<T> net(icc::build_icc(model));
  net.load(checkpoint);
  return net;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  bool per_image = false;
};

template <typename T>
int run_eval(const Globals& g, const EvalArgs& a) {
  auto net = load_network<T>(model_config(g), a.checkpoint);
  const auto images = icc::load_dataset(a.data);
  const icc::EvalResult r = icc::evaluate(net, images);
  std::cout << std::setprecision(6);
  if (a.per_image) {
    for (const auto& im : r.images) {
      std::cout << "image id=" << im.id << " true=" << im.true_count
                << " predicted=" << im.predicted_count
                << " seconds=" << im.seconds << "\n";
    }
  }
  std::cout << "mae=" << r.mae << " rmse=" << r.rmse
            << " images=" << r.images.size() << "\n";
  return 0;
}

// --- infer ----------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string image;
  std::string output;
  std::string csv;
  bool upsample = false;
  std::string points;
  std::string dump_transport;
};

void dump_transport(const icc::DensityMap<float>& predicted,
                    const std::string& points_path, std::size_t image_h,
                    std::size_t image_w, const std::filesystem::path& dir) {
  const auto points = icc::read_points(points_path);
  const auto truth =
      icc::downsample_by_8(icc::rasterize(points, image_h, image_w, points_path));
  icc::TransportProblem problem;
  double mp = 0.0, mq = 0.0;
  for (float v : truth.values) mp += v;
  for (float v : predicted.values) mq += v;
  if (mp <= 0.0 || mq <= 0.0) {
    throw icc::DegenerateMassError("transport dump needs positive masses");
  }
  for (float v : truth.values) problem.p.push_back(v / mp);
  for (float v : predicted.values) problem.q.push_back(v / mq);
  problem.cost = icc::grid_cost(truth.height, truth.width);
  problem.epsilon = icc::default_grid_epsilon(truth.height, truth.width);
  const icc::TransportPlan plan = icc::sinkhorn(problem);
  std::filesystem::create_directories(dir);
  const std::size_t n = truth.size();
  icc::DensityMap<float> pi(n, n), u(truth.height, truth.width),
      v(truth.height, truth.width);
  for (std::size_t i = 0; i < n * n; ++i) pi.values[i] = static_cast<float>(plan.plan[i]);
  for (std::size_t i = 0; i < n; ++i) {
    u.values[i] = static_cast<float>(plan.u[i]);
    v.values[i] = static_cast<float>(plan.v[i]);
  }
  icc::write_density(dir / "plan.iccd", pi);
  icc::write_density(dir / "dual_u.iccd", u);
  icc::write_density(dir / "dual_v.iccd", v);
  std::cerr << "transport cost=" << plan.cost << " iterations=" << plan.iterations
            << " converged=" << (plan.converged ? 1 : 0) << "\n";
}

template <typename T>
int run_infer(const Globals& g, const InferArgs& a) {
  auto net = load_network<T>(model_config(g), a.checkpoint);
  const icc::Tensor<float> image = icc::read_ppm(a.image);
  icc::DensityMap<float> map = icc::predict(net, image);
  double count = 0.0;
  for (float v : map.values) count += v;
  if (!a.dump_transport.empty()) {
    if (a.points.empty()) throw icc::ConfigError("--dump-transport needs --points");
    dump_transport(map, a.points, image.dim(1), image.dim(2), a.dump_transport);
  }
  if (a.upsample) map = icc::upsample_density(map, image.dim(1), image.dim(2));
  icc::write_density(a.output, map);
  if (!a.csv.empty()) icc::write_density_csv(a.csv, map);
  std::cout << std::setprecision(6) << "count=" << count << "\n";
  return 0;
}

// --- train ----------------------------------------------------------------

template <typename T>
int run_train(const icc::TrainConfig& config) {
  if (config.train_dir.empty()) throw icc::ConfigError("train_dir is not set");
  const auto train_set = icc::load_dataset(config.train_dir);
  std::vector<icc::AnnotatedImage> val_set;
  if (!config.val_dir.empty()) val_set = icc::load_dataset(config.val_dir);
  const icc::TrainResult r = icc::train<T>(config, train_set, val_set, &std::cout);
  std::cout << "best_epoch=" << r.best_epoch << " best_val_mae=" << r.best_val_mae
            << " checkpoint=" << config.checkpoint << "\n";
  return 0;
}

int dispatch_error(const icc::Error& e) {
  std::cerr << "icc: " << e.what() << "\n";
  switch (e.kind()) {
    case icc::ErrorKind::kConfig: return kExitConfig;
    case icc::ErrorKind::kData: return kExitData;
    case icc::ErrorKind::kNumeric: return kExitNumeric;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inception-based crowd counting: train, eval, infer, flops, synth"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--ablation", g.ablation, "none, no-context or no-inception")
      ->check(CLI::IsMember({"none", "no-context", "no-inception"}));
  app.add_option("--precision", g.precision, "Floating point width: 32 or 64")
      ->check(CLI::IsMember({32, 64}));
  app.add_option("--width-multiplier", g.width_multiplier,
                 "Scale every channel count (1.0 = reference widths)")
      ->check(CLI::PositiveNumber);

  // train
  auto* train = app.add_subcommand("train", "Train with validation-based checkpointing");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string train_dir, val_dir, checkpoint = "icc.ckpt", log_path;
  std::optional<std::size_t> epochs, batch, crop;
  std::optional<double> lr;
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--set", overrides, "Extra key=value settings (repeatable)");
  train->add_option("--train-dir", train_dir, "Training dataset directory");
  train->add_option("--val-dir", val_dir, "Validation dataset directory");
  train->add_option("--checkpoint", checkpoint, "Best checkpoint output path");
  train->add_option("--log", log_path, "Epoch log file");
  train->add_option("--epochs", epochs);
  train->add_option("--batch-size", batch);
  train->add_option("--crop", crop, "Square crop size (multiple of 8)");
  train->add_option("--lr", lr, "Initial learning rate");

  // eval
  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "MAE/RMSE of a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval->add_flag("--per-image", eval_args.per_image, "Print one line per image");

  // infer
  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Density map and count for one image");
  infer->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer->add_option("--image", infer_args.image, "PPM (P6) image")->required();
  infer->add_option("--output", infer_args.output, "ICCD density map output")->required();
  infer->add_option("--csv", infer_args.csv, "Also write the map as CSV");
  infer->add_flag("--upsample", infer_args.upsample,
                  "Write a full-resolution, count-preserving map");
  infer->add_option("--points", infer_args.points, "Ground-truth annotation file");
  infer->add_option("--dump-transport", infer_args.dump_transport,
                    "Directory for the transport plan and duals (needs --points)");

  // flops
  std::size_t flops_h = 1080, flops_w = 1920;
  std::string format = "table", convention = "arithmetic";
  auto* flops = app.add_subcommand("flops", "Per-layer operation counts");
  flops->add_option("--height", flops_h)->check(CLI::PositiveNumber);
  flops->add_option("--width", flops_w)->check(CLI::PositiveNumber);
  flops->add_option("--format", format, "table or lines")
      ->check(CLI::IsMember({"table", "lines"}));
  flops->add_option("--convention", convention, "arithmetic or mac")
      ->check(CLI::IsMember({"arithmetic", "mac"}));
  bool dump_graph = false;
  flops->add_flag("--graph", dump_graph, "Print the graph description instead");

  // synth
  icc::SyntheticOptions synth_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic PPM + ICCPTS dataset");
  synth->add_option("-n,--count", synth_opts.n_images, "Number of images")->required();
  synth->add_option("--min-people", synth_opts.min_count);
  synth->add_option("--max-people", synth_opts.max_count);
  synth->add_option("--height", synth_opts.height)->check(CLI::PositiveNumber);
  synth->add_option("--width", synth_opts.width)->check(CLI::PositiveNumber);
  synth->add_option("--prefix", synth_opts.id_prefix, "Image id prefix");
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) {
      icc::TrainConfig config;
      if (!config_path.empty()) config = icc::load_train_config(config_path);
      for (const std::string& kv : overrides) {
        config = icc::parse_train_config(kv, config);
      }
      if (!train_dir.empty()) config.train_dir = train_dir;
      if (!val_dir.empty()) config.val_dir = val_dir;
      if (train->count("--checkpoint")) config.checkpoint = checkpoint;
      if (!log_path.empty()) config.log = log_path;
      if (epochs) config.epochs = *epochs;
      if (batch) config.batch_size = *batch;
      if (crop) config.crop_h = config.crop_w = *crop;
      if (lr) config.learning_rate = *lr;
      if (g.seed) config.seed = *g.seed;
      if (app.count("--ablation")) icc::apply_ablation(config.model, g.ablation);
      if (app.count("--precision")) config.precision = g.precision;
      if (app.count("--width-multiplier")) {
        config.model.width_multiplier = g.width_multiplier;
      }
      return config.precision == 64 ? run_train<double>(config)
                                     : run_train<float>(config);
    }
    if (*eval) {
      return g.precision == 64 ? run_eval<double>(g, eval_args)
                               : run_eval<float>(g, eval_args);
    }
    if (*infer) {
      return g.precision == 64 ? run_infer<double>(g, infer_args)
                               : run_infer<float>(g, infer_args);
    }
    if (*flops) {
      const icc::GraphDescription graph = icc::build_icc(model_config(g));
      if (dump_graph) {
        std::cout << icc::graph_to_text(graph);
        return 0;
      }
      const icc::Shape input{1, 3, flops_h, flops_w};
      const auto conv = convention == "mac" ? icc::FlopConvention::kMultiplyAccumulate
                                            : icc::FlopConvention::kArithmetic;
      const icc::FlopReport report = icc::count_graph(graph, input, conv);
      std::cout << (format == "table" ? icc::report_table(report)
                                      : icc::report_lines(report));
      return 0;
    }
    if (*synth) {
      if (g.seed) synth_opts.seed = *g.seed;
      const auto images = icc::generate_synthetic(synth_opts);
      icc::save_dataset(synth_out, images);
      std::cout << "wrote " << images.size() << " images to " << synth_out << "\n";
      return 0;
    }
  } catch (const icc::Error& e) {
    return dispatch_error(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "icc: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
