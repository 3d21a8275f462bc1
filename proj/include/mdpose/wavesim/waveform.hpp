#pragma once

#include <cmath>
#include <numbers>

#include "mdpose/core/fft.hpp"
#include "mdpose/core/rng.hpp"
#include "mdpose/wavesim/signal.hpp"

namespace mdpose::wavesim {

struct WaveformParams {
  double taper{0.9};  // Tukey fraction of the in-band spectral window
  // Extra band-limit / constant-modulus alternations. Each one tightens the
  // spectrum but sharpens its edges, which raises the delay sidelobes.
  int projections{0};
};

// Spectral window over normalized in-band position x in [-1, 1].
inline double tukey(double x, double alpha) {
  const double a = std::abs(x);
  if (a > 1.0) return 0.0;
  const double flat = 1.0 - alpha;
  if (a <= flat || alpha <= 0.0) return 1.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (a - flat) / alpha));
}

// Pseudorandom unit-modulus noise whose spectrum is mostly confined to
// +-bandwidth/2: the phase of a random-phase, Tukey-shaped band-limited
// spectrum. The smooth spectral shape keeps the self-ambiguity sidelobes low.
inline BasebandSignal generate_waveform(double bandwidth_hz, double duration_s, double sample_rate_hz,
                                        std::uint64_t seed, const WaveformParams& wp = {}) {
  require(sample_rate_hz > 0.0, "sample_rate_hz must be positive");
  require(bandwidth_hz > 0.0, "bandwidth_hz must be positive");
  require(bandwidth_hz <= sample_rate_hz, "bandwidth_hz exceeds sample_rate_hz");
  require(duration_s > 0.0, "duration_s must be positive");
  require(wp.taper >= 0.0 && wp.taper <= 1.0, "taper must lie in [0, 1]");
  require(wp.projections >= 0, "projections must be >= 0");

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  require(n >= 1, "waveform would have no samples");

  std::vector<double> window(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Frequency of bin k in the usual FFT order.
    const double kk = (k <= n / 2) ? double(k) : double(k) - double(n);
    const double f = kk * sample_rate_hz / double(n);
    window[k] = tukey(f / (0.5 * bandwidth_hz), wp.taper);
  }

  Rng rng(seed);
  std::vector<Complex> x(n);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = window[k] * std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  fft::inverse(x);

  auto to_unit = [&] {
    for (auto& v : x) {
      const double m = std::abs(v);
      v = m > 0.0 ? v / m : Complex(1.0, 0.0);
    }
  };
  to_unit();
  for (int it = 0; it < wp.projections; ++it) {
    fft::forward(x);
    for (std::size_t k = 0; k < n; ++k) x[k] *= window[k];
    fft::inverse(x);
    to_unit();
  }

  BasebandSignal s;
  s.samples = std::move(x);
  s.sample_rate_hz = sample_rate_hz;
  return s;
}

}  // namespace mdpose::wavesim
