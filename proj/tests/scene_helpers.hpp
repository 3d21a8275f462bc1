#pragma once

// Small scene builders shared by the signal-chain tests.

#include <vector>

#include "mdpose/caf/spectrogram.hpp"
#include "mdpose/motion/skeleton.hpp"
#include "mdpose/wavesim/synth.hpp"
#include "mdpose/wavesim/waveform.hpp"

namespace mdpose::testing {

// Every joint follows x0 + v t; pair it with a one-hot scatterer model.
inline motion::PoseSequence point_track(Vec3 x0, Vec3 v, double duration, double dt = 0.1) {
  motion::PoseSequence p;
  p.dt = dt;
  const auto frames = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9)) + 1;
  for (std::size_t t = 0; t < frames; ++t) {
    motion::SkeletonFrame f;
    for (auto& j : f.joints) j = x0 + v * (static_cast<double>(t) * dt);
    p.frames.push_back(f);
  }
  return p;
}

inline wavesim::ScattererModel single_joint(double weight = 1.0, std::size_t joint = 0) {
  wavesim::ScattererModel sc;
  sc.weights.fill(0.0);
  sc.weights[joint] = weight;
  return sc;
}

struct PeakCell {
  std::size_t delay;
  std::size_t doppler;
  double magnitude;
};

inline PeakCell peak_of(const caf::CafMap& m) {
  PeakCell best{0, 0, -1.0};
  for (std::size_t d = 0; d < m.delay_bins(); ++d)
    for (std::size_t k = 0; k < m.doppler_bins(); ++k)
      if (std::abs(m.at(d, k)) > best.magnitude) best = {d, k, std::abs(m.at(d, k))};
  return best;
}

inline std::size_t nearest_bin(const std::vector<double>& axis, double f) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < axis.size(); ++k)
    if (std::abs(axis[k] - f) < std::abs(axis[best] - f)) best = k;
  return best;
}

inline long bin_gap(std::size_t a, std::size_t b) { return std::labs(static_cast<long>(a) - static_cast<long>(b)); }

}  // namespace mdpose::testing
