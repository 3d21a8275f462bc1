#pragma once

// Experiment-level steps shared by the CLI, the demos and the acceptance run.

#include "mdpose/denoise/denoise.hpp"
#include "mdpose/harness/config.hpp"
#include "mdpose/harness/evaluate.hpp"
#include "mdpose/poseopt/train.hpp"
#include "mdpose/velest/train.hpp"

namespace mdpose::harness {

// Builds S/M/D for every sequence and writes them under the dataset dir.
inline std::vector<Sample> build_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = cfg.resolve(cfg.dataset_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  auto samples = build_samples(cfg.dataset, cfg.radar);
  save_dataset(dir, samples, {{"config", to_json(cfg)}, {"train_count", cfg.train_count(samples.size())}});
  return samples;
}

inline std::vector<Sample> load_experiment_dataset(const ExperimentConfig& cfg) {
  const auto dir = cfg.resolve(cfg.dataset_dir);
  if (!std::filesystem::exists(dir / "manifest.bin"))
    throw IoError("no dataset at " + dir.string() + " (run build-dataset first)");
  return load_dataset(dir);
}

struct Split {
  std::vector<const Sample*> train, test;
};

// The first train_count samples train; the rest are held out. Activities
// cycle with the index, so both halves cover every activity.
inline Split split_samples(const std::vector<Sample>& all, const ExperimentConfig& cfg) {
  Split s;
  const std::size_t k = cfg.train_count(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) (i < k ? s.train : s.test).push_back(&all[i]);
  return s;
}

inline std::vector<Sample> copy_of(const std::vector<const Sample*>& v) {
  std::vector<Sample> out;
  for (const auto* p : v) out.push_back(*p);
  return out;
}

// Velocity network trained on the train split. Inputs are the clean S passed
// through the same denoiser used at test time, so train and test maps share
// the clipped floor.
inline velest::TrainHistory train_velocity(velest::VelModel& m, const std::vector<Sample>& all,
                                           const ExperimentConfig& cfg, const velest::EpochCallback& cb = {}) {
  std::vector<velest::VelSample> data;
  for (const auto* s : split_samples(all, cfg).train) data.push_back({denoise::denoise(s->S, cfg.radar.denoise), s->vel});
  return velest::vel_train(m, data, cfg.vel_train, cb);
}

inline std::size_t doppler_bins(const std::vector<Sample>& all) {
  require(!all.empty(), "empty dataset");
  return all.front().S.bins();
}

// Optimization network trained on the train-split poses.
inline poseopt::OptTrainHistory train_optimizer(poseopt::OptModel& m, const std::vector<Sample>& all,
                                               const ExperimentConfig& cfg,
                                               const std::function<void(const poseopt::OptEpochRecord&)>& cb = {}) {
  std::vector<motion::PoseSequence> mocap;
  for (const auto* s : split_samples(all, cfg).train) mocap.push_back(s->pose);
  return poseopt::opt_train(m, mocap, cfg.opt_train, cb);
}

}  // namespace mdpose::harness
