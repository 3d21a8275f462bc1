#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mdpose/core/error.hpp"
#include "mdpose/core/vec3.hpp"
#include "mdpose/motion/skeleton.hpp"

namespace mdpose::wavesim {

inline constexpr double kSpeedOfLight = 299792458.0;

// Positions in meters. The person walks along +y towards the surveillance
// receiver; transmitter and reference antenna sit off to the side.
struct Geometry {
  Vec3 tx{-3.0, 2.0, 2.0};
  Vec3 rx_sur{0.0, 6.0, 1.0};
  Vec3 rx_ref{-2.7, 2.0, 2.0};
  double carrier_hz{5.8e9};

  void validate() const {
    require(is_finite(tx) && is_finite(rx_sur) && is_finite(rx_ref), "geometry positions must be finite");
    require(carrier_hz > 0.0 && std::isfinite(carrier_hz), "carrier_hz must be positive");
  }

  double wavelength() const { return kSpeedOfLight / carrier_hz; }
};

inline double reference_delay(const Geometry& g) { return distance(g.tx, g.rx_ref) / kSpeedOfLight; }

inline double dsi_delay(const Geometry& g) { return distance(g.tx, g.rx_sur) / kSpeedOfLight; }

// Transmitter -> point -> surveillance receiver path length.
inline double bistatic_range(const Geometry& g, const Vec3& x) {
  return distance(g.tx, x) + distance(x, g.rx_sur);
}

inline double bistatic_delay(const Geometry& g, const Vec3& x) { return bistatic_range(g, x) / kSpeedOfLight; }

// f = -(carrier / c) * d/dt (|tx - x| + |x - rx_sur|). Positive when the
// bistatic path shrinks.
inline double bistatic_doppler(const Geometry& g, const Vec3& x, const Vec3& v) {
  const Vec3 a = x - g.tx;
  const Vec3 b = x - g.rx_sur;
  const double ra = norm(a), rb = norm(b);
  require(ra > 1e-9 && rb > 1e-9, "bistatic_doppler: point coincides with an antenna");
  const double rate = dot(v, a) / ra + dot(v, b) / rb;
  return -g.carrier_hz / kSpeedOfLight * rate;
}

struct ScattererModel {
  // Per-joint reflectivity; torso-heavy.
  std::array<double, motion::kNumJoints> weights{
      1.0,  1.0, 0.4, 0.5,  0.5, 0.3,  0.25, 0.5, 0.3,
      0.25, 0.6, 0.4, 0.3,  0.6, 0.4,  0.3,  1.0};
  double path_loss_exponent{2.0};
  double min_range{0.05};

  void validate() const {
    for (double w : weights) require(w >= 0.0 && std::isfinite(w), "scatterer weights must be >= 0");
    require(path_loss_exponent >= 0.0, "path-loss exponent must be >= 0");
  }

  // weight / (R_tx * R_rx)^(n/2)
  double amplitude(double weight, const Geometry& g, const Vec3& x) const {
    const double r1 = std::max(distance(g.tx, x), min_range);
    const double r2 = std::max(distance(x, g.rx_sur), min_range);
    return weight / std::pow(r1 * r2, 0.5 * path_loss_exponent);
  }
};

struct ClutterPoint {
  Vec3 position;
  double amplitude{1.0};
};

// Single-bounce reflector: the plane dot(normal, x) = offset.
struct MirrorPlane {
  Vec3 normal{1, 0, 0};
  double offset{0.0};
  double amplitude{0.5};

  Vec3 image(const Vec3& x) const {
    const Vec3 n = normal / norm(normal);
    return x - n * (2.0 * (dot(n, x) - offset));
  }
};

struct InterferenceConfig {
  double dsi_amplitude{0.0};
  std::vector<ClutterPoint> clutter;
  std::vector<MirrorPlane> multipath;
  double noise_std{0.0};  // complex white noise, per sample
  std::uint64_t noise_seed{0};

  void validate() const {
    require(dsi_amplitude >= 0.0, "dsi_amplitude must be >= 0");
    require(noise_std >= 0.0, "noise_std must be >= 0");
    for (const auto& c : clutter) require(c.amplitude >= 0.0, "clutter amplitude must be >= 0");
    for (const auto& m : multipath) {
      require(m.amplitude >= 0.0, "multipath amplitude must be >= 0");
      require(norm(m.normal) > 0.0, "multipath plane normal must be non-zero");
    }
  }

  bool empty() const {
    return dsi_amplitude == 0.0 && clutter.empty() && multipath.empty() && noise_std == 0.0;
  }
};

// A furnished room: strong DSI, a few static reflectors, a side wall and the
// floor as multipath mirrors, and receiver noise.
inline InterferenceConfig default_interference() {
  InterferenceConfig ic;
  ic.dsi_amplitude = 2.0;
  ic.clutter = {{{2.5, 3.0, 0.8}, 3.0}, {{-1.5, 4.5, 1.2}, 2.0}, {{1.0, -2.0, 0.5}, 2.5}};
  ic.multipath = {{{1, 0, 0}, 3.0, 0.6}, {{0, 0, 1}, 0.0, 0.4}};
  ic.noise_std = 0.05;
  return ic;
}

}  // namespace mdpose::wavesim
