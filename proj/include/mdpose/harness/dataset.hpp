#pragma once

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "mdpose/caf/spectrogram.hpp"
#include "mdpose/core/parallel.hpp"
#include "mdpose/denoise/denoise.hpp"
#include "mdpose/motion/activity.hpp"
#include "mdpose/motion/io.hpp"
#include "mdpose/motion/kinematics.hpp"
#include "mdpose/wavesim/synth.hpp"
#include "mdpose/wavesim/waveform.hpp"

namespace mdpose::harness {

using motion::ActivityKind;

struct RadarConfig {
  wavesim::Geometry geometry{};
  double bandwidth_hz{16e3};
  double sample_rate_hz{20e3};
  wavesim::WaveformParams waveform{};
  wavesim::ScattererModel scatterers{};
  wavesim::InterferenceConfig interference{wavesim::default_interference()};
  caf::SpectrogramParams spectrogram{};
  // sharper knee than the module default: keeps denoise(S) closer to D
  denoise::DenoiseParams denoise{.softness = 0.005};
};

struct DatasetConfig {
  std::size_t count{200};
  double duration_s{10.0};
  std::vector<ActivityKind> activities{motion::kAllActivities.begin(), motion::kAllActivities.end()};
  std::uint64_t seed{1};
  std::size_t threads{1};
};

struct Sample {
  std::size_t index{0};
  ActivityKind activity{ActivityKind::Wplus};
  std::uint64_t seed{0};
  motion::PoseSequence pose;
  motion::VelocitySequence vel;
  caf::Spectrogram S, M, D;  // clean, interference-laden, denoised M
};

inline std::uint64_t sample_seed(std::uint64_t base, std::size_t index) {
  return Rng::mix(base * 0x100000001b3ULL + static_cast<std::uint64_t>(index) + 1);
}

// Column t of the spectrogram carries the motion from frame t-1 to t.
inline motion::PoseSequence radar_track(const motion::PoseSequence& p) {
  motion::PoseSequence q = p;
  q.frames.insert(q.frames.begin(), p.frames.front());
  return q;
}

struct SpectrogramPair {
  caf::Spectrogram S, M;
};

inline SpectrogramPair simulate_spectrograms(const motion::PoseSequence& pose, const RadarConfig& rc,
                                             std::uint64_t seed) {
  const auto track = radar_track(pose);
  const double dur = static_cast<double>(pose.size()) * pose.dt;
  Rng rng(seed);
  const auto u = wavesim::generate_waveform(rc.bandwidth_hz, dur, rc.sample_rate_hz, rng.next_u64(), rc.waveform);
  const auto ref = wavesim::synthesize_reference(u, rc.geometry);
  auto ic = rc.interference;
  ic.noise_seed = rng.next_u64();

  // S and M share the receiver chain; they differ only in what reaches
  // the surveillance antenna. CLEAN runs only when there is DSI to remove.
  caf::SpectrogramParams sp = rc.spectrogram;
  if (ic.dsi_amplitude == 0.0) sp.clean_iterations = 0;

  SpectrogramPair out;
  out.S = caf::compute_spectrogram(
      wavesim::synthesize_surveillance(u, track, rc.scatterers, rc.geometry, wavesim::InterferenceConfig{}), ref, sp);
  out.M = caf::compute_spectrogram(wavesim::synthesize_surveillance(u, track, rc.scatterers, rc.geometry, ic), ref, sp);
  return out;
}

inline Sample build_sample(const DatasetConfig& dc, const RadarConfig& rc, std::size_t index) {
  require(!dc.activities.empty(), "dataset: no activities configured");
  Sample s;
  s.index = index;
  s.activity = dc.activities[index % dc.activities.size()];
  s.seed = sample_seed(dc.seed, index);
  s.pose = motion::generate_activity(s.activity, dc.duration_s, s.seed);
  s.vel = motion::differentiate(s.pose);
  auto sm = simulate_spectrograms(s.pose, rc, Rng::mix(s.seed ^ 0x5eedULL));
  s.S = std::move(sm.S);
  s.M = std::move(sm.M);
  s.D = denoise::denoise(s.M, rc.denoise);
  require(s.S.frames() == s.vel.size(), "dataset: spectrogram frames do not match the pose sequence");
  return s;
}

inline std::vector<Sample> build_samples(const DatasetConfig& dc, const RadarConfig& rc) {
  require(dc.count >= 1, "dataset: count must be at least 1");
  std::vector<Sample> out(dc.count);
  parallel_for(dc.count, dc.threads, [&](std::size_t i) { out[i] = build_sample(dc, rc, i); });
  return out;
}

inline std::string sample_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04zu", index);
  return buf;
}

// dir/manifest.bin indexes dir/samples/sample_NNNN_{pose,vel,S,M,D}.bin.
inline void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                         const Json& meta = Json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "samples", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  Json entries = Json::array();
  for (const auto& s : samples) {
    const std::string stem = sample_stem(s.index);
    Json files;
    for (const char* part : {"pose", "vel", "S", "M", "D"}) files[part] = "samples/" + stem + "_" + part + ".bin";
    motion::save_pose(dir / files["pose"].get<std::string>(), s.pose);
    motion::save_velocity(dir / files["vel"].get<std::string>(), s.vel);
    caf::save_spectrogram(dir / files["S"].get<std::string>(), s.S);
    caf::save_spectrogram(dir / files["M"].get<std::string>(), s.M);
    caf::save_spectrogram(dir / files["D"].get<std::string>(), s.D);
    entries.push_back({{"index", s.index},
                       {"activity", motion::to_string(s.activity)},
                       {"seed", s.seed},
                       {"T", s.vel.size()},
                       {"doppler_bins", s.S.bins()},
                       {"files", files}});
  }
  Container c;
  c.header = {{"version", kContainerVersion}, {"kind", "manifest"}, {"dtype", "none"},
              {"count", samples.size()},      {"samples", entries}, {"meta", meta}};
  save_container(dir / "manifest.bin", c);
}

inline Container load_manifest(const std::filesystem::path& dir) {
  const auto c = load_container(dir / "manifest.bin");
  if (c.header.value("kind", "") != "manifest") throw IoError(dir.string() + " does not hold a dataset manifest");
  return c;
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const auto man = load_manifest(dir);
  std::vector<Sample> out;
  for (const auto& e : man.header.at("samples")) {
    Sample s;
    s.index = e.at("index").get<std::size_t>();
    s.activity = motion::parse_activity(e.at("activity").get<std::string>());
    s.seed = e.at("seed").get<std::uint64_t>();
    const auto& f = e.at("files");
    s.pose = motion::load_pose(dir / f.at("pose").get<std::string>());
    s.vel = motion::load_velocity(dir / f.at("vel").get<std::string>());
    s.S = caf::load_spectrogram(dir / f.at("S").get<std::string>());
    s.M = caf::load_spectrogram(dir / f.at("M").get<std::string>());
    s.D = caf::load_spectrogram(dir / f.at("D").get<std::string>());
    const std::size_t T = e.at("T").get<std::size_t>();
    if (s.vel.size() != T || s.S.frames() != T || s.M.frames() != T || s.D.frames() != T)
      throw IoError("dataset sample " + std::to_string(s.index) + " has inconsistent frame counts");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mdpose::harness
