#pragma once

#include <fstream>
#include <functional>
#include <optional>

#include "mdpose/poseopt/model.hpp"

namespace mdpose::poseopt {

struct OptConfig {
  double optr{0.01};
  std::size_t max_epochs{50};
  double tolerance{1e-4};  // stop when the mean joint move falls below this (m)
  std::size_t period{50};  // long-term correction interval (frames)
  std::size_t window{50};  // velocity frames fed to the network; 0 = all
  // The root position is unobservable from velocities; leave it where it is.
  bool anchor_root{true};

  void validate() const {
    require(optr >= 0.0 && std::isfinite(optr), "optr must be >= 0");
    require(period >= 1, "period must be at least 1");
    require(window == 0 || window >= 2, "window must be 0 or at least 2 frames");
  }
};

// Anything that maps (integrated poses, velocities) to an optimization vector.
using OptPredictor = std::function<OptVector(const PoseSequence&, const VelocitySequence&)>;

inline OptPredictor model_predictor(const OptModel& m) {
  return [&m](const PoseSequence& p, const VelocitySequence& v) { return opt_forward(m, p, v); };
}

struct OptResult {
  SkeletonFrame pose;
  std::size_t epochs{0};
  std::vector<double> trace;                      // root-relative mean error per epoch, epoch 0 first
  std::vector<std::array<double, kNumJoints>> joint_trace;  // per-joint distance, same epochs
};

inline VelocitySequence velocity_window(const VelocitySequence& v, std::size_t first, std::size_t window) {
  VelocitySequence w;
  w.dt = v.dt;
  const std::size_t last = window == 0 ? v.size() : std::min(v.size(), first + window);
  w.values.assign(v.values.begin() + static_cast<long>(first), v.values.begin() + static_cast<long>(last));
  return w;
}

// Integrate from the guess, ask for a direction, step by optr; repeat.
inline OptResult optimize_initial_pose(const OptPredictor& predict, const SkeletonFrame& p0_init,
                                       const VelocitySequence& v, const OptConfig& cfg,
                                       const std::optional<SkeletonFrame>& truth = std::nullopt) {
  cfg.validate();
  const auto w = velocity_window(v, 0, cfg.window);
  require(w.size() >= 2, "optimize_initial_pose: need at least two velocity frames");
  OptResult r;
  r.pose = p0_init;
  auto log = [&] {
    if (!truth) return;
    r.trace.push_back(motion::root_relative_error(r.pose, *truth));
    std::array<double, kNumJoints> d{};
    for (std::size_t j = 0; j < kNumJoints; ++j) d[j] = distance(r.pose[j], (*truth)[j]);
    r.joint_trace.push_back(d);
  };
  log();
  for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
    const auto ov = predict(motion::integrate(r.pose, w), w);
    double moved = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (cfg.anchor_root && j == motion::Pelvis) continue;
      const Vec3 step = ov[j] * cfg.optr;
      r.pose.joints[j] += step;
      moved += norm(step);
    }
    r.epochs = e;
    log();
    if (moved / static_cast<double>(kNumJoints) < cfg.tolerance) break;
  }
  return r;
}

struct Correction {
  std::size_t frame{0};
  double error_before{0.0};  // root-relative mean error (m), NaN without truth
  double error_after{0.0};
  std::size_t epochs{0};
};

struct LongTermResult {
  PoseSequence poses;
  std::vector<Correction> corrections;
};

// Plain integration, re-optimizing the current pose every `period` frames
// against the next `window` velocities.
inline LongTermResult reconstruct_long_term(const OptPredictor& predict, const SkeletonFrame& p0,
                                            const VelocitySequence& v, const OptConfig& cfg,
                                            const PoseSequence* truth = nullptr) {
  cfg.validate();
  require(v.size() >= 1, "reconstruct_long_term: empty velocity sequence");
  require(!truth || truth->size() == v.size(), "reconstruct_long_term: truth length differs");
  LongTermResult out;
  out.poses.dt = v.dt;
  out.poses.frames.resize(v.size());
  out.poses.frames[0] = p0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t t = 1; t < v.size(); ++t) {
    auto& cur = out.poses.frames[t];
    cur = out.poses.frames[t - 1];
    for (std::size_t j = 0; j < kNumJoints; ++j) cur.joints[j] += v[t][j] * v.dt;
    if (t % cfg.period != 0 || t + 1 >= v.size()) continue;
    const auto w = velocity_window(v, t, cfg.window);
    std::optional<SkeletonFrame> ref;
    if (truth) ref = (*truth)[t];
    OptConfig inner = cfg;
    inner.window = 0;
    const auto r = optimize_initial_pose(predict, cur, w, inner, ref);
    Correction c{t, truth ? motion::root_relative_error(cur, (*truth)[t]) : nan, nan, r.epochs};
    cur = r.pose;
    if (truth) c.error_after = motion::root_relative_error(cur, (*truth)[t]);
    out.corrections.push_back(c);
  }
  return out;
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<double>& trace) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,mean_error_m\n";
  out.precision(9);
  for (std::size_t e = 0; e < trace.size(); ++e) out << e << ',' << trace[e] << '\n';
}

}  // namespace mdpose::poseopt
