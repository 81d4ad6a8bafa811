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

#include "icc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "icc/error.hpp"
#include "icc/optim.hpp"

namespace icc {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (crop_h == 0 || crop_w == 0 || crop_h % 8 || crop_w % 8) {
    throw ConfigError("crop extents must be positive multiples of 8");
  }
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("decay must lie in (0, 1]");
  if (!(weight_decay >= 0)) throw ConfigError("weight decay must be >= 0");
  if (!(lambda_ot >= 0) || !(lambda_tv >= 0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (sinkhorn_iters < 1) throw ConfigError("sinkhorn iterations must be >= 1");
  if (!(prediction_floor >= 0)) throw ConfigError("prediction floor must be >= 0");
  if (precision != 32 && precision != 64) {
    throw ConfigError("precision must be 32 or 64");
  }
  model.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  V v{};
  std::string rest;
  if (!(in >> v) || (in >> rest)) {
    throw ConfigError("setting '" + key + "': cannot parse '" + value + "'");
  }
  if constexpr (std::is_unsigned_v<V>) {
    if (!value.empty() && value[0] == '-') {
      throw ConfigError("setting '" + key + "' must be non-negative");
    }
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("setting '" + key + "': expected a boolean, got '" + value +
                    "'");
}

std::vector<std::size_t> parse_list(const std::string& key,
                                    const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(parse_number<std::size_t>(key, trim(item)));
  }
  return out;
}

}  // namespace

void apply_ablation(ModelConfig& model, const std::string& ablation) {
  if (ablation == "none") {
    model.use_contextual_module = true;
    model.use_inception_blocks = true;
  } else if (ablation == "no-context") {
    model.use_contextual_module = false;
    model.use_inception_blocks = true;
  } else if (ablation == "no-inception") {
    model.use_contextual_module = true;
    model.use_inception_blocks = false;
  } else {
    throw ConfigError("unknown ablation '" + ablation +
                      "' (expected none, no-context or no-inception)");
  }
}

void apply_setting(TrainConfig& c, const std::string& key,
                   const std::string& value) {
  if (key == "epochs") {
    c.epochs = parse_number<std::size_t>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "crop_size") {
    c.crop_h = c.crop_w = parse_number<std::size_t>(key, value);
  } else if (key == "crop_h") {
    c.crop_h = parse_number<std::size_t>(key, value);
  } else if (key == "crop_w") {
    c.crop_w = parse_number<std::size_t>(key, value);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_number<double>(key, value);
  } else if (key == "decay") {
    c.decay = parse_number<double>(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_number<double>(key, value);
  } else if (key == "lambda_ot") {
    c.lambda_ot = parse_number<double>(key, value);
  } else if (key == "lambda_tv") {
    c.lambda_tv = parse_number<double>(key, value);
  } else if (key == "epsilon") {
    c.epsilon = parse_number<double>(key, value);
  } else if (key == "sinkhorn_iters") {
    c.sinkhorn_iters = parse_number<std::size_t>(key, value);
  } else if (key == "sinkhorn_tolerance") {
    c.sinkhorn_tolerance = parse_number<double>(key, value);
  } else if (key == "prediction_floor") {
    c.prediction_floor = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "train_dir") {
    c.train_dir = value;
  } else if (key == "val_dir") {
    c.val_dir = value;
  } else if (key == "checkpoint") {
    c.checkpoint = value;
  } else if (key == "log") {
    c.log = value;
  } else if (key == "precision") {
    c.precision = parse_number<int>(key, value);
  } else if (key == "freeze_batchnorm") {
    c.freeze_batchnorm = parse_bool(key, value);
  } else if (key == "prefetch") {
    c.prefetch = parse_bool(key, value);
  } else if (key == "ablation") {
    apply_ablation(c.model, value);
  } else if (key == "width") {
    c.model.width_multiplier = parse_number<double>(key, value);
  } else if (key == "context_scales") {
    c.model.contextual_scales = parse_list(key, value);
  } else if (key == "decoder_channels") {
    c.model.decoder_channels = parse_list(key, value);
  } else if (key == "feature3_upsample") {
    if (value == "bilinear") {
      c.model.feature3_upsample = ops::Interpolation::kBilinear;
    } else if (value == "nearest") {
      c.model.feature3_upsample = ops::Interpolation::kNearest;
    } else {
      throw ConfigError("feature3_upsample must be bilinear or nearest");
    }
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path,
                              TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str(), std::move(base));
}

std::string format_epoch_record(const EpochRecord& r) {
  std::ostringstream out;
  out << std::setprecision(6) << "epoch=" << r.epoch << " loss=" << r.loss
      << " counting=" << r.counting << " ot=" << r.ot << " tv=" << r.tv
      << " val_mae=" << r.val_mae << " lr=" << r.learning_rate
      << " best=" << (r.improved ? 1 : 0);
  return out.str();
}

EvalResult summarize(std::vector<ImageResult> images) {
  if (images.empty()) throw DataError("evaluation set is empty");
  EvalResult r;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const ImageResult& im : images) {
    const double e = im.predicted_count - im.true_count;
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(images.size());
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.images = std::move(images);
  return r;
}

namespace {

template <typename T>
Tensor<T> to_batch(const std::vector<const Tensor<float>*>& images) {
  const Shape& s = images.front()->shape();
  Tensor<T> out({images.size(), s[0], s[1], s[2]});
  T* d = out.raw();
  for (const Tensor<float>* img : images) {
    const Tensor<float> norm = normalize(*img);
    for (float v : norm.data()) *d++ = static_cast<T>(v);
  }
  return out;
}

// DM-Count loss of batch element k of `out` against `target`.
template <typename T>
DmCountResult<T> sample_loss(const Tensor<T>& out, std::size_t k,
                             const DensityMap<float>& target,
                             const TrainConfig& config,
                             const SinkhornOptions& sinkhorn) {
  const std::size_t h = out.dim(2), w = out.dim(3);
  if (target.height != h || target.width != w) {
    throw ShapeError("target map " + std::to_string(target.height) + "x" +
                     std::to_string(target.width) +
                     " does not match prediction " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  DensityMap<T> y(h, w, T(0), true), yhat(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    y.values[i] = static_cast<T>(target.values[i]);
    yhat.values[i] = out.raw()[k * h * w + i] +
                     static_cast<T>(config.prediction_floor);
  }
  // Crops without people carry no distribution to match: count only.
  DmCountWeights weights{config.lambda_ot, config.lambda_tv};
  if (target.count() == 0.0f) weights = {0.0, 0.0};
  return dm_count_loss(y, yhat, weights, sinkhorn);
}

}  // namespace

template <typename T>
DensityMap<float> predict(Network<T>& network, const Tensor<float>& image) {
  const Tensor<T> out =
      network.forward(to_batch<T>({&image}), ops::NormMode::kEval, false);
  DensityMap<float> map(out.dim(2), out.dim(3));
  for (std::size_t i = 0; i < map.size(); ++i) {
    map.values[i] = static_cast<float>(out.raw()[i]);
  }
  return map;
}

template <typename T>
EvalResult evaluate(Network<T>& network,
                    const std::vector<AnnotatedImage>& images) {
  if (images.empty()) throw DataError("evaluation set is empty");
  std::vector<ImageResult> results;
  results.reserve(images.size());
  for (const AnnotatedImage& img : images) {
    const auto t0 = std::chrono::steady_clock::now();
    const DensityMap<float> map = predict(network, img.image);
    double count = 0.0;
    for (float v : map.values) count += v;
    const auto t1 = std::chrono::steady_clock::now();
    results.push_back({img.id, static_cast<double>(img.count()), count,
                       std::chrono::duration<double>(t1 - t0).count()});
  }
  return summarize(std::move(results));
}

template <typename T>
TrainResult train(const TrainConfig& config,
                  const std::vector<AnnotatedImage>& train_set,
                  const std::vector<AnnotatedImage>& val_set,
                  std::ostream* log) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  Network<T> net(build_icc(config.model));
  net.init_parameters(config.seed);

  const std::size_t steps_per_epoch =
      (train_set.size() + config.batch_size - 1) / config.batch_size;
  AdamWOptions opt_options;
  opt_options.learning_rate = config.learning_rate;
  opt_options.weight_decay = config.weight_decay;
  opt_options.decay = config.decay;
  opt_options.decay_interval = steps_per_epoch;
  AdamW<T> optimizer(opt_options);

  CropLoader loader(train_set, config.crop_h, config.crop_w, config.seed,
                    config.prefetch);
  const SinkhornOptions sinkhorn{config.epsilon, config.sinkhorn_iters,
                                 config.sinkhorn_tolerance};
  const ops::NormMode train_mode =
      config.freeze_batchnorm ? ops::NormMode::kEval : ops::NormMode::kTrain;

  std::ofstream log_file;
  if (!config.log.empty()) {
    log_file.open(config.log, std::ios::trunc);
    if (!log_file) throw DataError("cannot write log file " + config.log);
  }

  TrainResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = optimizer.learning_rate();
    const std::vector<Sample> samples = loader.epoch(epoch);
    for (std::size_t start = 0; start < samples.size();
         start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, samples.size() - start);
      std::vector<const Tensor<float>*> batch_images;
      for (std::size_t k = 0; k < n; ++k) {
        batch_images.push_back(&samples[start + k].image);
      }
      const Tensor<T> out =
          net.forward(to_batch<T>(batch_images), train_mode, true);
      const std::size_t h = out.dim(2), w = out.dim(3);
      Tensor<T> seed(out.shape());
      for (std::size_t k = 0; k < n; ++k) {
        const DmCountResult<T> loss =
            sample_loss(out, k, samples[start + k].target, config, sinkhorn);
        if (!std::isfinite(static_cast<double>(loss.value))) {
          throw NumericError("non-finite loss at epoch " +
                             std::to_string(epoch) + "; last checkpoint kept");
        }
        rec.loss += static_cast<double>(loss.value);
        rec.counting += static_cast<double>(loss.counting);
        rec.ot += static_cast<double>(loss.ot);
        rec.tv += static_cast<double>(loss.tv);
        for (std::size_t i = 0; i < h * w; ++i) {
          seed.raw()[k * h * w + i] = loss.grad[i] / static_cast<T>(n);
        }
      }
      net.backward(seed);
      optimizer.step(net.trainable_parameters(), net.trainable_gradients());
    }
    const double m = static_cast<double>(samples.size());
    rec.loss /= m;
    rec.counting /= m;
    rec.ot /= m;
    rec.tv /= m;
    if (val_set.empty()) {
      rec.val_mae = std::numeric_limits<double>::quiet_NaN();
      rec.improved = true;
    } else {
      rec.val_mae = evaluate(net, val_set).mae;
      rec.improved = rec.val_mae < result.best_val_mae;
    }
    if (rec.improved) {
      if (!val_set.empty()) result.best_val_mae = rec.val_mae;
      result.best_epoch = epoch;
      net.save(config.checkpoint);
    }
    const std::string line = format_epoch_record(rec);
    if (log) *log << line << std::endl;
    if (log_file) log_file << line << std::endl;
    result.epochs.push_back(rec);
  }
  return result;
}

DensityMap<float> upsample_density(const DensityMap<float>& map,
                                   std::size_t height, std::size_t width) {
  const Tensor<float> up = ops::resize_bilinear(map.to_tensor(), height, width);
  DensityMap<float> out = DensityMap<float>::from_tensor(up);
  double before = 0.0, after = 0.0;
  for (float v : map.values) before += v;
  for (float v : out.values) after += v;
  if (after > 0.0) {
    const double scale = before / after;
    for (float& v : out.values) v = static_cast<float>(v * scale);
  }
  return out;
}

#define ICC_INSTANTIATE(T)                                                   \
  template TrainResult train<T>(const TrainConfig&,                          \
                                const std::vector<AnnotatedImage>&,          \
                                const std::vector<AnnotatedImage>&,          \
                                std::ostream*);                              \
  template DensityMap<float> predict<T>(Network<T>&, const Tensor<float>&);  \
  template EvalResult evaluate<T>(Network<T>&,                               \
                                  const std::vector<AnnotatedImage>&);
ICC_INSTANTIATE(float)
ICC_INSTANTIATE(double)
#undef ICC_INSTANTIATE

}  // namespace icc
