#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mdpose/denoise/denoise.hpp"
#include "mdpose/poseopt/optimize.hpp"
#include "mdpose/velest/model.hpp"

namespace mdpose::harness {

struct StageTimes {
  double denoise{0.0}, network{0.0}, optimize{0.0}, total{0.0};
  double stage_sum() const { return denoise + network + optimize; }
};

struct ProfileResult {
  std::vector<StageTimes> runs;
  StageTimes median;
  double total_cv{0.0};  // stddev / mean of the total over runs
  std::size_t frames{0};
  std::size_t opt_epochs{0};  // optimizer epochs in the last run
};

namespace detail {
inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Wall clock of denoise -> velocity network -> initial-pose optimization on
// one window `m` (noisy spectrogram). One warm-up run is discarded.
inline ProfileResult profile_runtime(const caf::Spectrogram& m, const denoise::DenoiseParams& dp,
                                     velest::VelModel& vel, const poseopt::OptPredictor& opt,
                                     const motion::SkeletonFrame& guess, const poseopt::OptConfig& oc,
                                     std::size_t repeats = 10) {
  require(repeats >= 1, "profile: repeats must be at least 1");
  require(m.frames() >= 2, "profile: window needs at least 2 frames");
  using clock = std::chrono::steady_clock;
  auto secs = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  ProfileResult out;
  out.frames = m.frames();
  for (std::size_t r = 0; r <= repeats; ++r) {
    StageTimes st;
    const auto t0 = clock::now();
    const auto d = denoise::denoise(m, dp);
    const auto t1 = clock::now();
    const auto v = velest::vel_forward(vel, d);
    const auto t2 = clock::now();
    std::size_t epochs = 0;
    if (opt) epochs = poseopt::optimize_initial_pose(opt, guess, v, oc).epochs;
    const auto t3 = clock::now();
    st.denoise = secs(t0, t1);
    st.network = secs(t1, t2);
    st.optimize = secs(t2, t3);
    st.total = secs(t0, t3);
    out.opt_epochs = epochs;
    if (r > 0) out.runs.push_back(st);
  }
  auto column = [&](double StageTimes::*f) {
    std::vector<double> v;
    for (const auto& s : out.runs) v.push_back(s.*f);
    return v;
  };
  out.median = {detail::median_of(column(&StageTimes::denoise)), detail::median_of(column(&StageTimes::network)),
                detail::median_of(column(&StageTimes::optimize)), detail::median_of(column(&StageTimes::total))};
  const auto tot = column(&StageTimes::total);
  double mean = 0.0, var = 0.0;
  for (double t : tot) mean += t / static_cast<double>(tot.size());
  for (double t : tot) var += (t - mean) * (t - mean) / static_cast<double>(tot.size());
  out.total_cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
  return out;
}

inline void write_profile_csv(const std::filesystem::path& path, const ProfileResult& p) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "run,denoise_s,network_s,optimize_s,total_s\n";
  out.precision(9);
  for (std::size_t i = 0; i < p.runs.size(); ++i) {
    const auto& s = p.runs[i];
    out << i << ',' << s.denoise << ',' << s.network << ',' << s.optimize << ',' << s.total << '\n';
  }
  const auto& s = p.median;
  out << "median," << s.denoise << ',' << s.network << ',' << s.optimize << ',' << s.total << '\n';
}

}  // namespace mdpose::harness
