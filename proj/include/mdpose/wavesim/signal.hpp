#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "mdpose/core/error.hpp"

namespace mdpose::wavesim {

using Complex = std::complex<double>;

struct BasebandSignal {
  std::vector<Complex> samples;
  double sample_rate_hz{1.0};
  double start_time_s{0.0};

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  double time_of(std::size_t n) const { return start_time_s + static_cast<double>(n) / sample_rate_hz; }

  void validate() const {
    require(sample_rate_hz > 0.0 && std::isfinite(sample_rate_hz), "sample_rate_hz must be positive");
    require(std::isfinite(start_time_s), "start_time_s must be finite");
    for (const auto& s : samples)
      require(std::isfinite(s.real()) && std::isfinite(s.imag()), "signal samples must be finite");
  }

  // Contiguous slice [first, first + count) keeping the time base.
  BasebandSignal slice(std::size_t first, std::size_t count) const {
    require(first + count <= samples.size(), "signal slice out of range");
    BasebandSignal out;
    out.samples.assign(samples.begin() + first, samples.begin() + first + count);
    out.sample_rate_hz = sample_rate_hz;
    out.start_time_s = time_of(first);
    return out;
  }
};

inline double energy(const BasebandSignal& s) {
  double e = 0.0;
  for (const auto& v : s.samples) e += std::norm(v);
  return e;
}

}  // namespace mdpose::wavesim
