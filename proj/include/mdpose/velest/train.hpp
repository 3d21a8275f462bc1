#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>

#include "mdpose/denoise/denoise.hpp"
#include "mdpose/nn/optim.hpp"
#include "mdpose/velest/model.hpp"

namespace mdpose::velest {

struct VelSample {
  Spectrogram spec;
  VelocitySequence vel;
};

struct TrainConfig {
  double lr{1e-3};
  std::size_t batch_size{64};
  std::size_t epochs{30};
  std::uint64_t seed{1};
  double val_fraction{0.15};
  std::size_t crop_frames{32};
  std::size_t batches_per_epoch{0};  // 0: about one pass over the training frames
  double clip_norm{5.0};             // 0 disables
  double lr_final_fraction{1.0};     // cosine decay down to lr * this; 1 keeps lr constant
  // Robustness augmentation: with probability noise_prob a crop gets a
  // Rayleigh noise floor of scale U(0, noise_max) relative to its peak and
  // is then passed through augment_denoise. noise_max = 0 disables.
  double noise_max{0.0};
  double noise_prob{0.5};
  denoise::DenoiseParams augment_denoise{};

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be at least 1");
    require(lr >= 0.0, "train: lr must be non-negative");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "train: val_fraction must lie in [0, 1)");
    require(crop_frames >= 1, "train: crop_frames must be at least 1");
    require(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0, "train: lr_final_fraction must lie in [0, 1]");
    require(noise_max >= 0.0 && std::isfinite(noise_max), "train: noise_max must be >= 0");
    require(noise_prob >= 0.0 && noise_prob <= 1.0, "train: noise_prob must lie in [0, 1]");
    augment_denoise.validate();
  }
};

struct EpochRecord {
  std::size_t epoch{0};
  double train_loss{0.0};  // inference-mode loss over the training split
  double val_loss{0.0};    // same over the validation split (NaN if empty)
  double batch_loss{0.0};  // mean mini-batch loss while training (NaN at epoch 0)
  double wall_seconds{0.0};
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<std::size_t> train_index, val_index;

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,wall_seconds,batch_loss\n";
    out.precision(9);
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.wall_seconds << ',' << e.batch_loss
          << '\n';
  }
};

inline double mean_loss(VelModel& m, const std::vector<VelSample>& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0, frames = 0.0;
  for (std::size_t i : idx) {
    const auto pred = vel_forward(m, data[i].spec);
    acc += vel_loss(pred, data[i].vel) * static_cast<double>(pred.size());
    frames += static_cast<double>(pred.size());
  }
  return acc / frames;
}

inline void check_dataset(const VelModel& m, const std::vector<VelSample>& data) {
  require(!data.empty(), "train: empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].spec.validate();
    m.check_width(data[i].spec);
    if (data[i].spec.frames() != data[i].vel.size())
      throw InvalidInput("train: sample " + std::to_string(i) + " has " + std::to_string(data[i].spec.frames()) +
                         " spectrogram frames but " + std::to_string(data[i].vel.size()) + " velocity frames");
    require(data[i].vel.size() >= 1, "train: empty sample");
  }
}

// Copy of frames [start, start + frames) with a random noise floor, denoised.
inline Spectrogram noisy_crop(const Spectrogram& s, std::size_t start, std::size_t frames, double scale,
                              const denoise::DenoiseParams& dp, Rng& rng) {
  Spectrogram c = caf::slice_frames(s, start, frames);
  const double peak = std::max(1e-12, *std::max_element(c.values.begin(), c.values.end()));
  for (double& v : c.values) {
    const double a = rng.normal(), b = rng.normal();
    v += scale * peak * std::sqrt(0.5 * (a * a + b * b));
  }
  normalize_max(c);
  return denoise::denoise(c, dp);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on random crops. Deterministic for a given seed.
inline TrainHistory vel_train(VelModel& m, const std::vector<VelSample>& data, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_dataset(m, data);
  Rng rng(cfg.seed);
  TrainHistory hist;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(data.size())));
  if (cfg.val_fraction > 0.0 && n_val == 0 && data.size() >= 2) n_val = 1;
  n_val = std::min(n_val, data.size() - 1);
  hist.val_index.assign(order.begin(), order.begin() + static_cast<long>(n_val));
  hist.train_index.assign(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(hist.val_index.begin(), hist.val_index.end());
  std::sort(hist.train_index.begin(), hist.train_index.end());

  std::size_t crop = cfg.crop_frames, train_frames = 0;
  for (std::size_t i : hist.train_index) {
    crop = std::min(crop, data[i].vel.size());
    train_frames += data[i].vel.size();
  }
  const std::size_t batches =
      cfg.batches_per_epoch ? cfg.batches_per_epoch
                            : std::max<std::size_t>(1, (train_frames + cfg.batch_size * crop - 1) / (cfg.batch_size * crop));

  std::vector<nn::Tensor<float>> calib;
  for (std::size_t i : hist.train_index) calib.push_back(m.sequence_input(data[i].spec));

  const auto t0 = std::chrono::steady_clock::now();
  auto record = [&](std::size_t epoch, double batch_loss) {
    m.net().calibrate_batchnorm(calib);
    EpochRecord r{epoch, mean_loss(m, data, hist.train_index), mean_loss(m, data, hist.val_index), batch_loss,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    hist.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
  };
  record(0, std::numeric_limits<double>::quiet_NaN());

  auto params = m.parameters();
  nn::AdamState<float> adam;
  const std::size_t total_steps = cfg.epochs * batches;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      std::vector<Crop> crops;
      std::vector<Spectrogram> noisy;
      noisy.reserve(cfg.batch_size);
      std::vector<const VelocitySequence*> seqs;
      std::vector<std::size_t> starts;
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const std::size_t i = hist.train_index[rng.index(hist.train_index.size())];
        const std::size_t start = rng.index(data[i].vel.size() - crop + 1);
        if (cfg.noise_max > 0.0 && rng.uniform() < cfg.noise_prob) {
          noisy.push_back(noisy_crop(data[i].spec, start, crop, rng.uniform(0.0, cfg.noise_max), cfg.augment_denoise, rng));
          crops.push_back({&noisy.back(), 0, crop});
        } else {
          crops.push_back({&data[i].spec, start, crop});
        }
        seqs.push_back(&data[i].vel);
        starts.push_back(start);
      }
      const std::size_t B = crops.size();
      auto pred = m.forward(m.batch_input(crops), crop, B, true);
      auto loss = nn::l1_loss(pred, velocity_target(seqs, starts, crop), static_cast<float>(crop * B * kNumJoints));
      nn::zero_grad(params);
      nn::backward(loss);
      if (cfg.clip_norm > 0.0) nn::clip_grad_norm(params, cfg.clip_norm);
      const double progress = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 0.0;
      const double floor = cfg.lr_final_fraction;
      adam.lr = cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      nn::adam_step(adam, params);
      acc += loss->value[0];
    }
    record(epoch, acc / static_cast<double>(batches));
  }
  return hist;
}

}  // namespace mdpose::velest
