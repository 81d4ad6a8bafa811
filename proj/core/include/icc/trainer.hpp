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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "icc/data.hpp"
#include "icc/dmcount.hpp"
#include "icc/model.hpp"
#include "icc/network.hpp"

namespace icc {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 1;
  std::size_t crop_h = 256, crop_w = 256;
  double learning_rate = 1e-4;
  double decay = 0.995;  // per epoch
  double weight_decay = 1e-2;
  double lambda_ot = 0.1;
  double lambda_tv = 0.01;
  double epsilon = 0.0;  // <= 0: 1% of the mean grid cost
  std::size_t sinkhorn_iters = 200;
  double sinkhorn_tolerance = 1e-6;
  double prediction_floor = 1e-8;
  std::uint64_t seed = 0;
  std::string train_dir;
  std::string val_dir;
  std::string checkpoint = "icc.ckpt";
  std::string log;  // optional epoch log file
  int precision = 32;
  bool freeze_batchnorm = false;
  bool prefetch = true;
  ModelConfig model;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Applies one key=value setting (the config-file vocabulary).
void apply_setting(TrainConfig& config, const std::string& key,
                   const std::string& value);
/// Parses "key = value" lines; '#' starts a comment.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path,
                              TrainConfig base = {});
/// "none", "no-context" or "no-inception".
void apply_ablation(ModelConfig& model, const std::string& ablation);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double counting = 0.0;
  double ot = 0.0;
  double tv = 0.0;
  double val_mae = 0.0;  // NaN without a validation set
  double learning_rate = 0.0;
  bool improved = false;
};
/// "epoch=3 loss=... counting=... ot=... tv=... val_mae=... lr=... best=1"
std::string format_epoch_record(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double best_val_mae = 0.0;
  std::size_t best_epoch = 0;
};

struct ImageResult {
  std::string id;
  double true_count = 0.0;
  double predicted_count = 0.0;
  double seconds = 0.0;
};

struct EvalResult {
  std::vector<ImageResult> images;
  double mae = 0.0;
  double rmse = 0.0;
};

/// Aggregates MAE and RMSE; an empty list is rejected with DataError.
EvalResult summarize(std::vector<ImageResult> images);

/// Trains on random crops, validates on full images after every epoch and
/// saves the checkpoint whenever validation MAE improves (every epoch when
/// there is no validation set). A non-finite loss raises NumericError and
/// leaves the last saved checkpoint untouched.
template <typename T>
TrainResult train(const TrainConfig& config,
                  const std::vector<AnnotatedImage>& train_set,
                  const std::vector<AnnotatedImage>& val_set,
                  std::ostream* log = nullptr);

/// Predicted density of one [3,H,W] image (values in [0,1]).
template <typename T>
DensityMap<float> predict(Network<T>& network, const Tensor<float>& image);

/// Per-image counts over full (padded) images.
template <typename T>
EvalResult evaluate(Network<T>& network,
                    const std::vector<AnnotatedImage>& images);

/// Bilinear resize of a density map to height x width, rescaled so the
/// total count is unchanged.
DensityMap<float> upsample_density(const DensityMap<float>& map,
                                   std::size_t height, std::size_t width);

}  // namespace icc
