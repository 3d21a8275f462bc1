// Whole pipeline at toy scale, in memory: simulate a few sequences, train
// both networks briefly, then evaluate on the held-out ones.

#include <cstdio>
#include <iostream>

#include "mdpose/harness/pipeline.hpp"

using namespace mdpose;
using namespace mdpose::harness;

int main() {
  ExperimentConfig cfg;
  cfg.dataset.count = 18;
  cfg.dataset.duration_s = 4.0;
  cfg.train_fraction = 0.5;
  cfg.vel_train.epochs = 8;
  cfg.vel_train.batch_size = 8;
  cfg.opt_train.epochs = 4;
  cfg.optimize.max_epochs = 20;
  cfg.validate();

  std::printf("simulating %zu sequences...\n", cfg.dataset.count);
  const auto all = build_samples(cfg.dataset, cfg.radar);

  velest::VelModel vel(doppler_bins(all), cfg.vel_train.seed);
  train_velocity(vel, all, cfg, [](const velest::EpochRecord& r) {
    std::printf("  velocity epoch %zu  val %.4f\n", r.epoch, r.val_loss);
  });
  poseopt::OptModel opt(cfg.opt_train.seed);
  train_optimizer(opt, all, cfg, [](const poseopt::OptEpochRecord& r) {
    std::printf("  optimizer epoch %zu  val cos %.3f\n", r.epoch, r.val_cosine);
  });

  const auto test = copy_of(split_samples(all, cfg).test);
  EvalOptions eo;
  eo.optimize = cfg.optimize;
  const auto rep = evaluate(test, {network_predictor(vel), poseopt::model_predictor(opt)}, eo);
  std::cout << format_table(rep);
}
