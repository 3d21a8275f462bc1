#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdpose/harness/config.hpp"
#include "mdpose/poseopt/model.hpp"
#include "mdpose/poseopt/optimize.hpp"
#include "mdpose/velest/model.hpp"

namespace mdpose::harness {

using motion::kNumJoints;
using JointRow = std::array<double, kNumJoints>;

inline double mm_per_frame(double mps, double dt) { return mps * dt * 1000.0; }

inline double joint_mean(const JointRow& r) {
  double s = 0.0;
  for (double v : r) s += v;
  return s / static_cast<double>(kNumJoints);
}

// Per-joint sums over frames; L1 (x+y+z) for velocities in mm/frame.
inline JointRow velocity_error_sum(const motion::VelocitySequence& pred, const motion::VelocitySequence& truth,
                                   bool root_relative) {
  require(pred.size() == truth.size(), "evaluate: predicted and true velocity lengths differ");
  JointRow s{};
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const Vec3 pr = root_relative ? pred[t][0] : Vec3{}, tr = root_relative ? truth[t][0] : Vec3{};
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const Vec3 d = (pred[t][j] - pr) - (truth[t][j] - tr);
      s[j] += mm_per_frame(std::abs(d.x) + std::abs(d.y) + std::abs(d.z), truth.dt);
    }
  }
  return s;
}

// Euclidean joint distance in mm, summed over frames.
inline JointRow position_error_sum(const motion::PoseSequence& pred, const motion::PoseSequence& truth,
                                   bool root_relative) {
  require(pred.size() == truth.size(), "evaluate: predicted and true pose lengths differ");
  JointRow s{};
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const Vec3 pr = root_relative ? pred[t].root() : Vec3{}, tr = root_relative ? truth[t].root() : Vec3{};
    for (std::size_t j = 0; j < kNumJoints; ++j)
      s[j] += 1000.0 * norm((pred[t].joints[j] - pr) - (truth[t].joints[j] - tr));
  }
  return s;
}

enum class InitMode { truth, optimize };

struct EvalOptions {
  // truth: start integration from the true first frame. optimize: start from a
  // T-pose at the true root and run the optimizer first.
  InitMode init{InitMode::optimize};
  poseopt::OptConfig optimize{};
  bool positions{true};
  std::size_t threads{1};
};

// A velocity predictor sees the sample (for stubs) and the spectrogram to use.
using VelPredictor = std::function<motion::VelocitySequence(const Sample&, const caf::Spectrogram&)>;

inline VelPredictor network_predictor(velest::VelModel& m) {
  return [&m](const Sample&, const caf::Spectrogram& s) { return velest::vel_forward(m, s); };
}

struct EvalModels {
  VelPredictor vel;
  poseopt::OptPredictor opt;  // may be empty: plain integration, truth init only
};

enum Channel : std::size_t { kM = 0, kD = 1 };
inline constexpr const char* kChannelNames[2] = {"M", "D"};

struct SequenceResult {
  std::size_t index{0};
  ActivityKind activity{};
  std::size_t frames{0};
  JointRow vel_rr[2]{}, vel_abs[2]{}, pos_rr[2]{}, pos_abs[2]{};
  std::vector<double> drift[2];  // per-frame root-relative mean joint error, mm
  std::vector<double> opt_trace;  // D pipeline initial optimization, mm per epoch
  double network_s{0.0}, optimize_s{0.0};
};

struct GroupMetrics {
  std::string name;
  std::size_t sequences{0}, frames{0};
  JointRow vel_rr[2]{}, vel_abs[2]{}, pos_rr[2]{}, pos_abs[2]{};  // means
};

struct MetricsReport {
  std::vector<GroupMetrics> activities;  // in first-seen order
  GroupMetrics overall;
  bool has_positions{false};
  std::vector<std::vector<double>> opt_traces;
  std::vector<double> drift[2];  // mean over sequences, frames where all are present
  double network_s{0.0}, optimize_s{0.0};
};

inline SequenceResult evaluate_sequence(const Sample& s, const EvalModels& models, const EvalOptions& opt) {
  using clock = std::chrono::steady_clock;
  SequenceResult r;
  r.index = s.index;
  r.activity = s.activity;
  r.frames = s.vel.size();
  const caf::Spectrogram* inputs[2] = {&s.M, &s.D};
  for (std::size_t c = 0; c < 2; ++c) {
    auto t0 = clock::now();
    const auto v = models.vel(s, *inputs[c]);
    r.network_s += std::chrono::duration<double>(clock::now() - t0).count();
    if (v.size() != s.vel.size()) throw InvalidInput("evaluate: velocity predictor returned the wrong length");
    r.vel_rr[c] = velocity_error_sum(v, s.vel, true);
    r.vel_abs[c] = velocity_error_sum(v, s.vel, false);
    if (!opt.positions) continue;

    t0 = clock::now();
    motion::SkeletonFrame p0 = s.pose[0];
    if (opt.init == InitMode::optimize) {
      require(static_cast<bool>(models.opt), "evaluate: optimize init needs an optimization model");
      const auto guess = motion::translated(motion::t_pose(), s.pose[0].root());
      auto res = poseopt::optimize_initial_pose(models.opt, guess, v, opt.optimize, s.pose[0]);
      p0 = res.pose;
      if (c == kD)
        for (double e : res.trace) r.opt_trace.push_back(1000.0 * e);
    }
    motion::PoseSequence rec;
    if (models.opt) rec = poseopt::reconstruct_long_term(models.opt, p0, v, opt.optimize).poses;
    else rec = motion::integrate(p0, v);
    r.optimize_s += std::chrono::duration<double>(clock::now() - t0).count();

    r.pos_rr[c] = position_error_sum(rec, s.pose, true);
    r.pos_abs[c] = position_error_sum(rec, s.pose, false);
    r.drift[c].resize(rec.size());
    for (std::size_t t = 0; t < rec.size(); ++t) r.drift[c][t] = 1000.0 * motion::root_relative_error(rec[t], s.pose[t]);
  }
  return r;
}

inline void accumulate(GroupMetrics& g, const SequenceResult& r) {
  g.sequences += 1;
  g.frames += r.frames;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      g.vel_rr[c][j] += r.vel_rr[c][j];
      g.vel_abs[c][j] += r.vel_abs[c][j];
      g.pos_rr[c][j] += r.pos_rr[c][j];
      g.pos_abs[c][j] += r.pos_abs[c][j];
    }
}

inline void finalize(GroupMetrics& g) {
  const double n = std::max<double>(1.0, static_cast<double>(g.frames));
  for (std::size_t c = 0; c < 2; ++c)
    for (auto* row : {&g.vel_rr[c], &g.vel_abs[c], &g.pos_rr[c], &g.pos_abs[c]})
      for (double& v : *row) v /= n;
}

// Frame-weighted means per activity and overall. Results are reduced in
// sample order, so the report does not depend on the thread count.
inline MetricsReport evaluate(const std::vector<Sample>& samples, const EvalModels& models,
                              const EvalOptions& opt = {}) {
  require(!samples.empty(), "evaluate: no samples");
  require(static_cast<bool>(models.vel), "evaluate: missing velocity predictor");
  opt.optimize.validate();
  std::vector<SequenceResult> res(samples.size());
  parallel_for(samples.size(), std::max<std::size_t>(1, opt.threads),
               [&](std::size_t i) { res[i] = evaluate_sequence(samples[i], models, opt); });

  MetricsReport rep;
  rep.has_positions = opt.positions;
  rep.overall.name = "all";
  std::vector<ActivityKind> order;
  for (const auto& r : res) {
    auto it = std::find(order.begin(), order.end(), r.activity);
    std::size_t k = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(r.activity);
      rep.activities.push_back({});
      rep.activities.back().name = motion::to_string(r.activity);
    }
    accumulate(rep.activities[k], r);
    accumulate(rep.overall, r);
    rep.network_s += r.network_s;
    rep.optimize_s += r.optimize_s;
    if (!r.opt_trace.empty()) rep.opt_traces.push_back(r.opt_trace);
  }
  for (auto& g : rep.activities) finalize(g);
  finalize(rep.overall);

  if (opt.positions) {
    std::size_t T = res.front().frames;
    for (const auto& r : res) T = std::min(T, r.frames);
    for (std::size_t c = 0; c < 2; ++c) {
      rep.drift[c].assign(T, 0.0);
      for (const auto& r : res)
        for (std::size_t t = 0; t < T; ++t) rep.drift[c][t] += r.drift[c][t] / static_cast<double>(res.size());
    }
  }
  return rep;
}

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
inline void metrics_row(std::ostream& out, const MetricsReport& rep, const GroupMetrics& g, const std::string& joint,
                        std::size_t j) {
  auto pick = [&](const JointRow& r) { return j < kNumJoints ? r[j] : joint_mean(r); };
  out << g.name << ',' << joint << ',' << g.sequences << ',' << num(pick(g.vel_rr[kD])) << ','
      << num(pick(g.vel_rr[kM])) << ',' << num(pick(g.vel_abs[kD])) << ',' << num(pick(g.vel_abs[kM]));
  for (const auto* r : {&g.pos_rr[kD], &g.pos_rr[kM], &g.pos_abs[kD], &g.pos_abs[kM]}) {
    out << ',';
    if (rep.has_positions) out << num(pick(*r));
  }
  out << '\n';
}
}  // namespace detail

inline constexpr const char* kMetricsCsvHeader =
    "activity,joint,sequences,vel_D_mm_per_frame,vel_M_mm_per_frame,vel_D_abs_mm_per_frame,vel_M_abs_mm_per_frame,"
    "pos_D_mm,pos_M_mm,pos_D_abs_mm,pos_M_abs_mm";

// One row per (activity, joint 1..17) plus a "mean" row per activity, then
// the same 18 rows for activity "all". Position columns stay empty when
// positions were not evaluated.
inline void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& rep) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetricsCsvHeader << '\n';
  auto group = [&](const GroupMetrics& g) {
    for (std::size_t j = 0; j < kNumJoints; ++j) detail::metrics_row(out, rep, g, std::to_string(j + 1), j);
    detail::metrics_row(out, rep, g, "mean", kNumJoints);
  };
  for (const auto& g : rep.activities) group(g);
  group(rep.overall);
}

inline std::size_t metrics_csv_rows(std::size_t activities) { return (activities + 1) * (kNumJoints + 1); }

// Per-joint velocity table (D vs M) followed by a per-activity summary.
inline std::string format_table(const MetricsReport& rep) {
  std::ostringstream o;
  char buf[160];
  o << "Velocity error per joint (mm/frame, root-relative)\n";
  std::snprintf(buf, sizeof buf, "%-8s %10s %10s\n", "joint", "D", "M");
  o << buf;
  const auto& g = rep.overall;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    std::snprintf(buf, sizeof buf, "%-8zu %10.2f %10.2f\n", j + 1, g.vel_rr[kD][j], g.vel_rr[kM][j]);
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "%-8s %10.2f %10.2f\n\n", "overall", joint_mean(g.vel_rr[kD]), joint_mean(g.vel_rr[kM]));
  o << buf;
  o << "Per activity (velocity mm/frame" << (rep.has_positions ? ", position mm" : "") << ", root-relative)\n";
  if (rep.has_positions)
    std::snprintf(buf, sizeof buf, "%-8s %5s %9s %9s %9s %9s\n", "activity", "n", "vel D", "vel M", "pos D", "pos M");
  else
    std::snprintf(buf, sizeof buf, "%-8s %5s %9s %9s\n", "activity", "n", "vel D", "vel M");
  o << buf;
  auto line = [&](const GroupMetrics& a) {
    if (rep.has_positions)
      std::snprintf(buf, sizeof buf, "%-8s %5zu %9.2f %9.2f %9.2f %9.2f\n", a.name.c_str(), a.sequences,
                    joint_mean(a.vel_rr[kD]), joint_mean(a.vel_rr[kM]), joint_mean(a.pos_rr[kD]),
                    joint_mean(a.pos_rr[kM]));
    else
      std::snprintf(buf, sizeof buf, "%-8s %5zu %9.2f %9.2f\n", a.name.c_str(), a.sequences, joint_mean(a.vel_rr[kD]),
                    joint_mean(a.vel_rr[kM]));
    o << buf;
  };
  for (const auto& a : rep.activities) line(a);
  line(g);
  std::snprintf(buf, sizeof buf, "\nabsolute frame: vel D %.2f  M %.2f mm/frame", joint_mean(g.vel_abs[kD]),
                joint_mean(g.vel_abs[kM]));
  o << buf;
  if (rep.has_positions) {
    std::snprintf(buf, sizeof buf, ", pos D %.1f  M %.1f mm", joint_mean(g.pos_abs[kD]), joint_mean(g.pos_abs[kM]));
    o << buf;
  }
  o << '\n';
  return o.str();
}

inline void write_drift_csv(const std::filesystem::path& path, const std::vector<double>& d_mm,
                            const std::vector<double>& m_mm = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame,error_D_mm" << (m_mm.empty() ? "" : ",error_M_mm") << '\n';
  for (std::size_t t = 0; t < d_mm.size(); ++t) {
    out << t << ',' << detail::num(d_mm[t]);
    if (!m_mm.empty()) out << ',' << detail::num(t < m_mm.size() ? m_mm[t] : std::nan(""));
    out << '\n';
  }
}

// Long format: sequence,epoch,error_mm.
inline void write_traces_csv(const std::filesystem::path& path, const std::vector<std::vector<double>>& traces) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sequence,epoch,error_mm\n";
  for (std::size_t s = 0; s < traces.size(); ++s)
    for (std::size_t e = 0; e < traces[s].size(); ++e) out << s << ',' << e << ',' << detail::num(traces[s][e]) << '\n';
}

inline void require_checkpoint(const std::filesystem::path& p, const char* what, const char* how) {
  if (!std::filesystem::exists(p))
    throw IoError(std::string("missing ") + what + " checkpoint " + p.string() + " (run " + how + " first)");
}

}  // namespace mdpose::harness
