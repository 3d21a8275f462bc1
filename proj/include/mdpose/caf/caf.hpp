#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mdpose/core/error.hpp"
#include "mdpose/core/fft.hpp"
#include "mdpose/core/parallel.hpp"
#include "mdpose/wavesim/signal.hpp"

namespace mdpose::caf {

using Complex = std::complex<double>;
using wavesim::BasebandSignal;

enum class Taper { rectangular, hann };

struct CafParams {
  std::size_t delay_bins{4};     // lags 0 .. delay_bins-1 samples
  double max_doppler_hz{70.0};   // keep |f| <= max
  std::size_t oversample{2};     // zero-padding factor of the Doppler FFT
  Taper taper{Taper::rectangular};  // time window on the lag product
  std::size_t threads{1};

  void validate() const {
    require(delay_bins >= 1, "delay_bins must be >= 1");
    require(max_doppler_hz >= 0.0 && std::isfinite(max_doppler_hz), "max_doppler_hz must be >= 0");
    require(oversample >= 1, "oversample must be >= 1");
  }
};

// grid is delay-major: at(d, k) = grid[d * doppler_bins + k].
struct CafMap {
  std::vector<Complex> grid;
  std::vector<double> delay_axis;    // s
  std::vector<double> doppler_axis;  // Hz
  double cpi{0.0};

  std::size_t delay_bins() const { return delay_axis.size(); }
  std::size_t doppler_bins() const { return doppler_axis.size(); }
  Complex& at(std::size_t d, std::size_t k) { return grid[d * doppler_bins() + k]; }
  const Complex& at(std::size_t d, std::size_t k) const { return grid[d * doppler_bins() + k]; }

  std::size_t zero_doppler_index() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < doppler_axis.size(); ++k)
      if (std::abs(doppler_axis[k]) < std::abs(doppler_axis[best])) best = k;
    return best;
  }

  void validate() const {
    require(grid.size() == delay_bins() * doppler_bins(), "CAF grid does not match its axes");
    for (std::size_t i = 1; i < delay_axis.size(); ++i)
      require(delay_axis[i] > delay_axis[i - 1], "CAF delay axis must be increasing");
    for (std::size_t i = 1; i < doppler_axis.size(); ++i)
      require(doppler_axis[i] > doppler_axis[i - 1], "CAF Doppler axis must be increasing");
  }
};

inline bool same_axes(const CafMap& a, const CafMap& b) {
  return a.delay_axis == b.delay_axis && a.doppler_axis == b.doppler_axis;
}

inline std::size_t doppler_half_width(std::size_t n, double fs, const CafParams& p) {
  const double L = static_cast<double>(n * p.oversample);
  return static_cast<std::size_t>(std::floor(p.max_doppler_hz * L / fs + 1e-9));
}

namespace detail {

inline void check_pair(const BasebandSignal& sur, const BasebandSignal& ref) {
  require(sur.sample_rate_hz == ref.sample_rate_hz, "CAF inputs have different sample rates");
  require(sur.size() == ref.size(), "CAF inputs have different lengths");
  require(sur.size() >= 1, "CAF inputs are empty");
}

inline std::vector<double> taper_weights(std::size_t n, Taper taper) {
  std::vector<double> w(n, 1.0);
  if (taper == Taper::hann)
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline CafMap empty_map(std::size_t n, double fs, const CafParams& p) {
  const std::size_t L = n * p.oversample;
  const auto K = static_cast<long>(doppler_half_width(n, fs, p));
  CafMap m;
  m.cpi = static_cast<double>(n) / fs;
  for (std::size_t d = 0; d < p.delay_bins; ++d) m.delay_axis.push_back(static_cast<double>(d) / fs);
  for (long k = -K; k <= K; ++k) m.doppler_axis.push_back(static_cast<double>(k) * fs / static_cast<double>(L));
  m.grid.assign(m.delay_bins() * m.doppler_bins(), Complex{});
  return m;
}

}  // namespace detail

// CAF(d, f) = sum_n w[n] sur[n] conj(ref[n - d]) exp(-j 2 pi f n / fs); n
// counts from the start of the record, ref is zero before it and w is 1
// unless a taper is requested. Computed as one zero-padded FFT of the lag
// product per delay bin.
inline CafMap compute_caf(const BasebandSignal& sur, const BasebandSignal& ref, const CafParams& p) {
  p.validate();
  detail::check_pair(sur, ref);
  const std::size_t n = sur.size();
  const std::size_t L = n * p.oversample;
  CafMap m = detail::empty_map(n, sur.sample_rate_hz, p);
  const auto K = static_cast<long>((m.doppler_bins() - 1) / 2);
  const auto w = detail::taper_weights(n, p.taper);
  parallel_for(p.delay_bins, p.threads, [&](std::size_t d) {
    std::vector<Complex> x(L, Complex{});
    for (std::size_t i = d; i < n; ++i) x[i] = w[i] * sur.samples[i] * std::conj(ref.samples[i - d]);
    fft::forward(x);
    for (long k = -K; k <= K; ++k) {
      const std::size_t src = k >= 0 ? static_cast<std::size_t>(k) : L - static_cast<std::size_t>(-k);
      m.at(d, static_cast<std::size_t>(k + K)) = x[src];
    }
  });
  return m;
}

// Reference implementation of the same sum, O(N * delays * dopplers).
inline CafMap compute_caf_direct(const BasebandSignal& sur, const BasebandSignal& ref, const CafParams& p) {
  p.validate();
  detail::check_pair(sur, ref);
  const std::size_t n = sur.size();
  const double fs = sur.sample_rate_hz;
  CafMap m = detail::empty_map(n, fs, p);
  const auto taper = detail::taper_weights(n, p.taper);
  for (std::size_t d = 0; d < m.delay_bins(); ++d) {
    for (std::size_t k = 0; k < m.doppler_bins(); ++k) {
      const double w = -2.0 * std::numbers::pi * m.doppler_axis[k] / fs;
      Complex acc{};
      for (std::size_t i = d; i < n; ++i)
        acc += taper[i] * sur.samples[i] * std::conj(ref.samples[i - d]) * std::polar(1.0, w * static_cast<double>(i));
      m.at(d, k) = acc;
    }
  }
  return m;
}

inline CafMap self_caf(const BasebandSignal& ref, const CafParams& p) { return compute_caf(ref, ref, p); }

// Subtract scaled copies of the unit-peak self-ambiguity. The first pass sits
// at zero delay; later passes go after the strongest remaining zero-Doppler
// cell, shifting the template along delay.
inline CafMap clean_dsi(const CafMap& caf, const CafMap& self, std::size_t iterations = 1) {
  caf.validate();
  self.validate();
  require(same_axes(caf, self), "clean_dsi: CAF and self-CAF axes differ");
  const std::size_t k0 = self.zero_doppler_index();
  const Complex peak = self.at(0, k0);
  CafMap out = caf;
  if (std::abs(peak) == 0.0) return out;
  const std::size_t D = out.delay_bins(), F = out.doppler_bins();
  for (std::size_t it = 0; it < iterations; ++it) {
    std::size_t shift = 0;
    if (it > 0) {
      for (std::size_t d = 1; d < D; ++d)
        if (std::abs(out.at(d, k0)) > std::abs(out.at(shift, k0))) shift = d;
    }
    const Complex alpha = out.at(shift, k0) / peak;
    for (std::size_t d = shift; d < D; ++d)
      for (std::size_t k = 0; k < F; ++k) out.at(d, k) -= alpha * self.at(d - shift, k);
  }
  return out;
}

}  // namespace mdpose::caf
