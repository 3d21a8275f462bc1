#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mdpose/core/parallel.hpp"
#include "mdpose/core/rng.hpp"
#include "mdpose/motion/skeleton.hpp"
#include "mdpose/wavesim/geometry.hpp"
#include "mdpose/wavesim/signal.hpp"

namespace mdpose::wavesim {

// Which parts of the surveillance model to include. Every term is added
// independently, so the sum of single-term runs equals the all-terms run.
struct SurveillanceTerms {
  bool targets{true};
  bool multipath{true};
  bool dsi{true};
  bool clutter{true};
  bool noise{true};

  static SurveillanceTerms none() { return {false, false, false, false, false}; }
};

struct SynthOptions {
  std::size_t knot_spacing{32};  // samples between exact delay evaluations
  std::size_t threads{1};
};

namespace detail {

// u evaluated at fractional sample position m; zero outside the record.
inline Complex sample_at(const std::vector<Complex>& u, double m) {
  if (m < 0.0) {
    if (m <= -1.0) return {};
    return u.empty() ? Complex{} : u[0] * (1.0 + m);
  }
  const auto i0 = static_cast<std::size_t>(m);
  const double frac = m - static_cast<double>(i0);
  if (i0 >= u.size()) return {};
  const Complex a = u[i0];
  const Complex b = (i0 + 1 < u.size()) ? u[i0 + 1] : Complex{};
  return a + (b - a) * frac;
}

inline void add_static(std::vector<Complex>& out, const std::vector<Complex>& u, double amplitude,
                       double delay_s, double fs, std::size_t first, std::size_t last) {
  if (amplitude == 0.0) return;
  const double d = delay_s * fs;
  for (std::size_t n = first; n < last; ++n) out[n] += amplitude * sample_at(u, static_cast<double>(n) - d);
}

// Joint position at absolute time t, linear between frames.
inline Vec3 joint_at(const motion::PoseSequence& p, std::size_t j, double t) {
  const std::size_t T = p.frames.size();
  if (T == 1) return p.frames[0].joints[j];
  double s = std::clamp(t / p.dt, 0.0, static_cast<double>(T - 1));
  auto i = static_cast<std::size_t>(s);
  if (i >= T - 1) i = T - 2;
  const double frac = s - static_cast<double>(i);
  return lerp(p.frames[i].joints[j], p.frames[i + 1].joints[j], frac);
}

struct PathSample {
  double range;
  double amplitude;
};

// Moving return with carrier phase exp(-j 2 pi fc tau(t)). Range, amplitude
// and phase are exact at knots and linear in between.
template <class PathFn>
void add_moving(std::vector<Complex>& out, const BasebandSignal& u, double carrier_hz, PathFn&& path,
                std::size_t first, std::size_t last, std::size_t knot) {
  const double fs = u.sample_rate_hz;
  const double k_phase = -2.0 * std::numbers::pi * carrier_hz / kSpeedOfLight;
  for (std::size_t n0 = first; n0 < last; n0 += knot) {
    const std::size_t n1 = std::min(n0 + knot, last);
    const PathSample a = path(u.time_of(n0));
    const PathSample b = path(u.time_of(n1));
    const double span = static_cast<double>(n1 - n0);
    const double dr = (b.range - a.range) / span;
    const double da = (b.amplitude - a.amplitude) / span;
    const double phase0 = std::fmod(k_phase * a.range, 2.0 * std::numbers::pi);
    Complex rot = std::polar(1.0, phase0);
    const Complex step = std::polar(1.0, k_phase * dr);
    for (std::size_t n = n0; n < n1; ++n) {
      const double k = static_cast<double>(n - n0);
      const double range = a.range + dr * k;
      const double amp = a.amplitude + da * k;
      const double m = static_cast<double>(n) - range / kSpeedOfLight * fs;
      out[n] += amp * rot * sample_at(u.samples, m);
      rot *= step;
    }
  }
}

}  // namespace detail

// S_ref = A_ref u(t - tau_ref), free-space amplitude with a 1 m reference.
inline double reference_amplitude(const Geometry& g) { return 1.0 / std::max(distance(g.tx, g.rx_ref), 1.0); }

inline BasebandSignal synthesize_reference(const BasebandSignal& u, const Geometry& g) {
  g.validate();
  u.validate();
  BasebandSignal out;
  out.sample_rate_hz = u.sample_rate_hz;
  out.start_time_s = u.start_time_s;
  out.samples.assign(u.size(), Complex{});
  detail::add_static(out.samples, u.samples, reference_amplitude(g), reference_delay(g), u.sample_rate_hz, 0,
                     u.size());
  return out;
}

inline BasebandSignal synthesize_surveillance(const BasebandSignal& u, const motion::PoseSequence& p,
                                              const ScattererModel& sc, const Geometry& g,
                                              const InterferenceConfig& ic, const SurveillanceTerms& terms = {},
                                              const SynthOptions& opt = {}) {
  g.validate();
  sc.validate();
  ic.validate();
  p.validate();
  require(opt.knot_spacing >= 1, "knot_spacing must be >= 1");
  const std::size_t N = u.size();
  const double pose_end = static_cast<double>(p.frames.size() - 1) * p.dt;
  if (N > 0) {
    require(u.start_time_s >= -1e-9, "signal starts before the pose sequence");
    require(u.time_of(N - 1) <= pose_end + 1e-9, "pose sequence is shorter than the signal");
  }

  BasebandSignal out;
  out.sample_rate_hz = u.sample_rate_hz;
  out.start_time_s = u.start_time_s;
  out.samples.assign(N, Complex{});
  const double fs = u.sample_rate_hz;

  // Blocks are knot-aligned so results do not depend on the thread count.
  const std::size_t block = opt.knot_spacing * 1024;
  const std::size_t nblocks = (N + block - 1) / block;
  parallel_for(nblocks, opt.threads, [&](std::size_t b) {
    const std::size_t first = b * block;
    const std::size_t last = std::min(N, first + block);
    if (terms.targets) {
      for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
        const double w = sc.weights[j];
        if (w == 0.0) continue;
        auto path = [&](double t) {
          const Vec3 x = detail::joint_at(p, j, t);
          return detail::PathSample{bistatic_range(g, x), sc.amplitude(w, g, x)};
        };
        detail::add_moving(out.samples, u, g.carrier_hz, path, first, last, opt.knot_spacing);
      }
    }
    if (terms.multipath) {
      for (const auto& mirror : ic.multipath) {
        if (mirror.amplitude == 0.0) continue;
        for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
          const double w = sc.weights[j];
          if (w == 0.0) continue;
          auto path = [&](double t) {
            const Vec3 x = mirror.image(detail::joint_at(p, j, t));
            return detail::PathSample{bistatic_range(g, x), mirror.amplitude * sc.amplitude(w, g, x)};
          };
          detail::add_moving(out.samples, u, g.carrier_hz, path, first, last, opt.knot_spacing);
        }
      }
    }
    if (terms.dsi) detail::add_static(out.samples, u.samples, ic.dsi_amplitude, dsi_delay(g), fs, first, last);
    if (terms.clutter) {
      for (const auto& c : ic.clutter) {
        detail::add_static(out.samples, u.samples, c.amplitude * sc.amplitude(1.0, g, c.position),
                           bistatic_delay(g, c.position), fs, first, last);
      }
    }
  });

  if (terms.noise && ic.noise_std > 0.0) {
    Rng rng(ic.noise_seed);
    const double s = ic.noise_std / std::sqrt(2.0);
    for (auto& v : out.samples) {
      const double re = rng.normal();
      const double im = rng.normal();
      v += Complex(s * re, s * im);
    }
  }
  return out;
}

}  // namespace mdpose::wavesim
