#pragma once

#include <chrono>
#include <fstream>
#include <numeric>

#include "mdpose/nn/optim.hpp"
#include "mdpose/poseopt/model.hpp"

namespace mdpose::poseopt {

struct OptTrainConfig {
  double lr{1e-3};
  std::size_t batch_size{128};
  std::size_t epochs{20};
  std::size_t batches_per_epoch{8};
  std::uint64_t seed{1};
  double val_fraction{0.15};
  std::size_t val_pairs{128};
  std::size_t window{50};
  // Guesses are lerp(truth, wrong pose, a), a uniform in [mix_min, 1], so
  // the network also sees guesses close to the answer.
  double mix_min{0.05};
  // Chance that the wrong pose is the T-pose, the fixed start of inference.
  double tpose_prob{0.25};
  // Per-joint Gaussian jitter on the guess (root excluded), sigma drawn from
  // U(0, joint_noise) per pair: the optimizer visits distorted skeletons.
  double joint_noise{0.0};
  // Gaussian noise (m/s) on the velocity input, standing in for estimated
  // velocities at inference time.
  double velocity_noise{0.0};
  double clip_norm{5.0};
  double lr_final_fraction{1.0};  // cosine decay to lr * this; 1 keeps lr constant

  void validate() const {
    require(batch_size >= 1, "train-opt: batch_size must be at least 1");
    require(lr >= 0.0, "train-opt: lr must be >= 0");
    require(window >= 2, "train-opt: window must be at least 2");
    require(mix_min >= 0.0 && mix_min <= 1.0, "train-opt: mix_min must lie in [0, 1]");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "train-opt: val_fraction must lie in [0, 1)");
    require(velocity_noise >= 0.0, "train-opt: velocity_noise must be >= 0");
    require(tpose_prob >= 0.0 && tpose_prob <= 1.0, "train-opt: tpose_prob must lie in [0, 1]");
    require(joint_noise >= 0.0, "train-opt: joint_noise must be >= 0");
    require(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0, "train-opt: lr_final_fraction must lie in [0, 1]");
  }
};

struct OptPair {
  PoseSequence poses;  // integrated from the guess
  VelocitySequence vel;
  SkeletonFrame guess, truth;
  OptVector label;
};

// A wrong initial pose: another frame (any sequence), moved so its root
// sits on the true root, blended toward the truth by `mix`.
inline SkeletonFrame make_guess(const SkeletonFrame& truth, const SkeletonFrame& other, double mix) {
  const auto o = motion::translated(other, truth.root() - other.root());
  SkeletonFrame g;
  for (std::size_t j = 0; j < kNumJoints; ++j) g.joints[j] = truth[j] + (o[j] - truth[j]) * mix;
  return g;
}

inline OptPair make_pair(const std::vector<PoseSequence>& mocap, const std::vector<std::size_t>& pool,
                         std::size_t window, double mix_min, double vel_noise, Rng& rng, double tpose_prob = 0.0,
                         double joint_noise = 0.0) {
  const auto& seq = mocap[pool[rng.index(pool.size())]];
  const std::size_t W = std::min(window, seq.size());
  const std::size_t start = rng.index(seq.size() - W + 1);
  PoseSequence crop;
  crop.dt = seq.dt;
  crop.frames.assign(seq.frames.begin() + static_cast<long>(start), seq.frames.begin() + static_cast<long>(start + W));
  OptPair p;
  p.truth = crop[0];
  p.vel = motion::differentiate(crop);
  const auto& donor = mocap[pool[rng.index(pool.size())]];
  const auto& other = donor[rng.index(donor.size())];
  const double mix = rng.uniform(mix_min, 1.0);
  const bool tpose = tpose_prob > 0.0 && rng.uniform() < tpose_prob;
  p.guess = make_guess(p.truth, tpose ? motion::t_pose() : other, mix);
  if (joint_noise > 0.0) {
    const double sigma = rng.uniform(0.0, joint_noise);
    for (std::size_t j = 1; j < kNumJoints; ++j) p.guess.joints[j] += Vec3{rng.normal(), rng.normal(), rng.normal()} * sigma;
  }
  if (vel_noise > 0.0)
    for (std::size_t t = 1; t < p.vel.size(); ++t)
      for (auto& j : p.vel.values[t]) j += Vec3{rng.normal(), rng.normal(), rng.normal()} * vel_noise;
  p.poses = motion::integrate(p.guess, p.vel);
  p.label = opt_vector_truth(p.guess, p.truth);
  return p;
}

inline nn::Tensor<float> pair_input(const std::vector<OptPair>& pairs) {
  const std::size_t T = pairs[0].poses.size(), B = pairs.size();
  nn::Tensor<float> x({T * B, kInputWidth});
  for (std::size_t b = 0; b < B; ++b) {
    require(pairs[b].poses.size() == T, "train-opt: pairs in a batch must share length");
    fill_input(x, b, B, pairs[b].poses, pairs[b].vel, T);
  }
  return x;
}

inline nn::Tensor<float> pair_labels(const std::vector<OptPair>& pairs) {
  nn::Tensor<float> y({pairs.size(), kFrameWidth});
  for (std::size_t b = 0; b < pairs.size(); ++b)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) y.at(b, 3 * j + a) = static_cast<float>(pairs[b].label[j][a]);
  return y;
}

struct OptEpochRecord {
  std::size_t epoch{0};
  double train_loss{0.0};  // mean mini-batch loss (NaN at epoch 0)
  double val_loss{0.0};
  double val_cosine{0.0};  // mean cosine to the label over non-root, non-zero joints
  double wall_seconds{0.0};
};

struct OptTrainHistory {
  std::vector<OptEpochRecord> epochs;
  std::vector<std::size_t> train_index, val_index;

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,wall_seconds,val_cosine\n";
    out.precision(9);
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.wall_seconds << ',' << e.val_cosine
          << '\n';
  }
};

inline double mean_cosine(const std::vector<OptVector>& pred, const std::vector<OptVector>& truth) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double pn = norm(pred[i][j]), tn = norm(truth[i][j]);
      if (j == motion::Pelvis || tn == 0.0) continue;
      acc += pn < 1e-12 ? 0.0 : dot(pred[i][j], truth[i][j]) / (pn * tn);
      ++n;
    }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// Predictions for a list of pairs, in one batched pass.
inline std::vector<OptVector> predict_pairs(const OptModel& m, const std::vector<OptPair>& pairs) {
  nn::NoGradGuard ng;
  const auto y = m.forward(pair_input(pairs), pairs[0].poses.size(), pairs.size())->value;
  std::vector<OptVector> out;
  for (std::size_t b = 0; b < pairs.size(); ++b) out.push_back(to_opt_vector(y, b));
  return out;
}

// One Adam step on a batch; returns the batch loss.
inline double opt_train_step(OptModel& m, nn::AdamState<float>& adam, const std::vector<OptPair>& batch,
                             double clip_norm) {
  auto params = m.parameters();
  auto pred = m.forward(pair_input(batch), batch[0].poses.size(), batch.size());
  auto loss = nn::direction_loss(pred, pair_labels(batch));
  nn::zero_grad(params);
  nn::backward(loss);
  if (clip_norm > 0.0) nn::clip_grad_norm(params, clip_norm);
  nn::adam_step(adam, params);
  return loss->value[0];
}

inline OptTrainHistory opt_train(OptModel& m, const std::vector<PoseSequence>& mocap, const OptTrainConfig& cfg,
                                 const std::function<void(const OptEpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  require(!mocap.empty(), "train-opt: empty motion corpus");
  for (const auto& s : mocap) {
    s.validate();
    require(s.size() >= 2, "train-opt: sequences need at least two frames");
  }
  Rng rng(cfg.seed);
  OptTrainHistory hist;
  std::vector<std::size_t> order(mocap.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(mocap.size())));
  if (cfg.val_fraction > 0.0 && n_val == 0 && mocap.size() >= 2) n_val = 1;
  n_val = std::min(n_val, mocap.size() - 1);
  hist.val_index.assign(order.begin(), order.begin() + static_cast<long>(n_val));
  hist.train_index.assign(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(hist.val_index.begin(), hist.val_index.end());
  std::sort(hist.train_index.begin(), hist.train_index.end());

  std::size_t window = cfg.window;
  for (const auto& s : mocap) window = std::min(window, s.size());

  std::vector<OptPair> val;
  {
    Rng vr(Rng::mix(cfg.seed ^ 0x7a1ULL));
    const auto& pool = hist.val_index.empty() ? hist.train_index : hist.val_index;
    for (std::size_t i = 0; i < cfg.val_pairs; ++i)
      val.push_back(make_pair(mocap, pool, window, cfg.mix_min, cfg.velocity_noise, vr, cfg.tpose_prob, cfg.joint_noise));
  }
  std::vector<OptVector> val_labels;
  for (const auto& p : val) val_labels.push_back(p.label);

  const auto t0 = std::chrono::steady_clock::now();
  auto record = [&](std::size_t epoch, double train_loss) {
    const auto pred = predict_pairs(m, val);
    double loss = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) loss += opt_loss(pred[i], val_labels[i]);
    OptEpochRecord r{epoch, train_loss, val.empty() ? 0.0 : loss / static_cast<double>(val.size()),
                     mean_cosine(pred, val_labels),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    hist.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
  };
  record(0, std::numeric_limits<double>::quiet_NaN());

  nn::AdamState<float> adam;
  const std::size_t total_steps = cfg.epochs * cfg.batches_per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double acc = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b, ++step) {
      const double progress = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 0.0;
      const double floor = cfg.lr_final_fraction;
      adam.lr = cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      std::vector<OptPair> batch;
      for (std::size_t k = 0; k < cfg.batch_size; ++k)
        batch.push_back(make_pair(mocap, hist.train_index, window, cfg.mix_min, cfg.velocity_noise, rng, cfg.tpose_prob, cfg.joint_noise));
      acc += opt_train_step(m, adam, batch, cfg.clip_norm);
    }
    record(epoch, acc / static_cast<double>(std::max<std::size_t>(1, cfg.batches_per_epoch)));
  }
  return hist;
}

}  // namespace mdpose::poseopt
