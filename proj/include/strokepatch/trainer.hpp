#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "strokepatch/adam.hpp"
#include "strokepatch/checkpoint.hpp"
#include "strokepatch/common.hpp"
#include "strokepatch/imageops.hpp"
#include "strokepatch/patchset.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/unet.hpp"

namespace strokepatch {

/// Knobs of the denoising-regression objective: corruption, optimizer and
/// schedule.
struct TrainConfig {
  int epochs = 10;
  double learning_rate = 0.001;
  int batch_size = 4;
  float blur_radius = 5.0f;
  NoiseSpec noise;
  float noise_probability = 0.f;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string checkpoint_path;   // empty: skip writing
  std::string metrics_csv_path;  // empty: skip writing
  std::string style_name;        // checkpoint metadata
  long max_steps = 0;            // 0 = no cap; >0 stops after that many optimizer steps
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ValueError("train: epochs must be >= 1");
  if (c.batch_size < 1) throw ValueError("train: batch_size must be >= 1");
  if (c.learning_rate < 0.0) throw ValueError("train: learning_rate must be >= 0");
  if (c.blur_radius < 0.f) throw ValueError("train: blur_radius must be >= 0");
  if (c.noise_probability < 0.f || c.noise_probability > 1.f)
    throw ValueError("train: noise_probability must lie in [0,1]");
}

/// The corruption operator applied to each training sample: with
/// probability noise_probability add the spec's noise, then always blur.
/// Noise is freshly drawn on every visit.
inline Image corrupt(const Image& patch, const TrainConfig& cfg, Rng& rng) {
  if (cfg.noise_probability > 0.f) {
    const double u = rng.uniform();
    if (u < static_cast<double>(cfg.noise_probability)) {
      Image noised = add_noise(patch, cfg.noise, rng);
      return gaussian_blur(noised, cfg.blur_radius);
    }
  }
  return gaussian_blur(patch, cfg.blur_radius);
}

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double final_loss = 0.0;
  long steps = 0;
};

namespace detail {

inline void append_metrics_csv(const std::string& path, const EpochMetrics& row) {
  if (path.empty()) return;
  const bool fresh = [&] {
    std::ifstream probe(path);
    return !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }();
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write metrics CSV '" + path + "'");
  if (fresh) out << "epoch,mean_loss,seconds\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d,%.8g,%.3f\n", row.epoch, row.mean_loss, row.seconds);
  out << buf;
}

}  // namespace detail

/// Denoising-regression training: per epoch, shuffle the patch order,
/// corrupt each batch sample, regress the model output to the clean patch
/// under MSE and update with Adam. Deterministic given (source, cfg.seed,
/// initial model).
inline TrainResult train(const PatchSource& source, ModelState<float>& model,
                         const TrainConfig& cfg) {
  validate(cfg);
  const std::size_t n = source.size();
  if (n == 0) throw ValueError("train: empty patch source");
  {
    const Image probe = source.patch(0);
    const std::size_t div = std::size_t{1} << model.config.depth;
    if (probe.channels() != static_cast<std::size_t>(model.config.in_channels))
      throw ValueError("train: patch channels " + std::to_string(probe.channels()) +
                       " do not match model in_channels " +
                       std::to_string(model.config.in_channels));
    if (probe.height() % div != 0 || probe.width() % div != 0)
      throw ValueError("train: patch dims " + probe.shape_str() +
                       " must be divisible by 2^depth=" + std::to_string(div));
  }

  AdamState<float> adam = make_adam_state(model);
  TrainResult result;
  std::vector<std::size_t> order(n);
  bool stopped = false;

  for (int epoch = 1; epoch <= cfg.epochs && !stopped; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng(cfg.seed, stream::kShuffle).split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      model.zero_grads();
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const Image clean = source.patch(idx);
        Rng rng = Rng(cfg.seed, stream::kCorrupt)
                      .split(static_cast<std::uint64_t>(epoch))
                      .split(static_cast<std::uint64_t>(idx));
        const Image corrupted = corrupt(clean, cfg, rng);
        ForwardRecord<float> rec;
        const Image y = forward(model, corrupted, rec);
        const double sample_loss = mse_loss(y, clean);
        if (!std::isfinite(sample_loss))
          throw ValueError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", patch " + std::to_string(idx) + " (loss=" +
                           std::to_string(sample_loss) + ")");
        loss_sum += sample_loss;
        ++seen;
        backward(model, rec, mse_loss_grad(y, clean, inv_batch));
      }
      adam_step(model, adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        stopped = true;
        break;
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochMetrics row{epoch, loss_sum / static_cast<double>(seen), secs};
    result.epochs.push_back(row);
    detail::append_metrics_csv(cfg.metrics_csv_path, row);
  }

  result.final_loss = result.epochs.empty() ? 0.0 : result.epochs.back().mean_loss;
  if (!cfg.checkpoint_path.empty()) {
    CheckpointMeta meta;
    meta.style = cfg.style_name;
    meta.seed = cfg.seed;
    meta.epochs_completed = result.epochs.empty() ? 0 : result.epochs.back().epoch;
    meta.final_loss = result.final_loss;
    save_checkpoint(model, meta, cfg.checkpoint_path);
  }
  return result;
}

}  // namespace strokepatch
