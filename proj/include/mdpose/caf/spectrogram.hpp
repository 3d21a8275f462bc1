#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mdpose/caf/caf.hpp"
#include "mdpose/core/container.hpp"

namespace mdpose::caf {

// values[t * doppler_bins + k]: column t is contiguous.
struct Spectrogram {
  std::vector<double> values;
  std::vector<double> doppler_axis;
  double dt{0.1};

  std::size_t bins() const { return doppler_axis.size(); }
  std::size_t frames() const { return bins() == 0 ? 0 : values.size() / bins(); }
  double& at(std::size_t k, std::size_t t) { return values[t * bins() + k]; }
  double at(std::size_t k, std::size_t t) const { return values[t * bins() + k]; }

  void validate() const {
    require(bins() >= 1, "spectrogram has no Doppler bins");
    require(values.size() % bins() == 0, "spectrogram values do not fill whole columns");
    require(dt > 0.0, "spectrogram dt must be positive");
    for (double v : values) require(std::isfinite(v) && v >= 0.0, "spectrogram values must be finite and >= 0");
  }
};

inline bool same_shape(const Spectrogram& a, const Spectrogram& b) {
  return a.doppler_axis == b.doppler_axis && a.values.size() == b.values.size() && a.dt == b.dt;
}

// Scale so the largest value is 1; an all-zero spectrogram stays zero.
inline void normalize_max(Spectrogram& s) {
  double peak = 0.0;
  for (double v : s.values) peak = std::max(peak, v);
  if (peak > 0.0)
    for (double& v : s.values) v /= peak;
}

// Frames [start, start + count).
inline Spectrogram slice_frames(const Spectrogram& s, std::size_t start, std::size_t count) {
  require(start + count <= s.frames(), "slice_frames: range exceeds the spectrogram");
  Spectrogram out;
  out.doppler_axis = s.doppler_axis;
  out.dt = s.dt;
  const auto K = static_cast<long>(s.bins());
  out.values.assign(s.values.begin() + static_cast<long>(start) * K,
                    s.values.begin() + static_cast<long>(start + count) * K);
  return out;
}

struct DelayWindow {
  std::size_t first{0};
  std::size_t count{0};  // 0 = every computed bin
};

// One column per map: sum of |CAF| over the delay window.
inline Spectrogram assemble_spectrogram(const std::vector<CafMap>& cafs, DelayWindow window = {},
                                        bool normalize = true) {
  require(!cafs.empty(), "assemble_spectrogram: no CAF maps");
  const CafMap& first = cafs.front();
  first.validate();
  const std::size_t D = first.delay_bins();
  const std::size_t d0 = window.first;
  const std::size_t d1 = window.count == 0 ? D : d0 + window.count;
  require(d0 < D && d1 <= D, "assemble_spectrogram: delay window outside the map");
  Spectrogram s;
  s.doppler_axis = first.doppler_axis;
  s.dt = first.cpi;
  const std::size_t F = s.bins();
  s.values.assign(cafs.size() * F, 0.0);
  for (std::size_t t = 0; t < cafs.size(); ++t) {
    const CafMap& m = cafs[t];
    require(same_axes(m, first), "assemble_spectrogram: maps have different axes");
    for (std::size_t d = d0; d < d1; ++d)
      for (std::size_t k = 0; k < F; ++k) s.at(k, t) += std::abs(m.at(d, k));
  }
  if (normalize) normalize_max(s);
  return s;
}

struct SpectrogramParams {
  double cpi_s{0.1};
  // Hann-tapered CPIs keep leakage out of the Doppler profile.
  CafParams caf{.taper = Taper::hann};
  std::size_t clean_iterations{1};  // 0 disables CLEAN
  DelayWindow window{};
};

// Split both channels into consecutive CPIs, CAF each one, optionally CLEAN
// it against the reference self-ambiguity, and stack the Doppler columns.
inline Spectrogram compute_spectrogram(const BasebandSignal& sur, const BasebandSignal& ref,
                                       const SpectrogramParams& sp) {
  detail::check_pair(sur, ref);
  const auto n = static_cast<std::size_t>(std::llround(sp.cpi_s * sur.sample_rate_hz));
  require(n >= 1, "CPI is shorter than one sample");
  const std::size_t T = sur.size() / n;
  require(T >= 1, "signal is shorter than one CPI");
  std::vector<CafMap> maps(T);
  CafParams inner = sp.caf;
  inner.threads = 1;
  parallel_for(T, sp.caf.threads, [&](std::size_t t) {
    const auto s = sur.slice(t * n, n);
    const auto r = ref.slice(t * n, n);
    CafMap m = compute_caf(s, r, inner);
    if (sp.clean_iterations > 0) m = clean_dsi(m, self_caf(r, inner), sp.clean_iterations);
    maps[t] = std::move(m);
  });
  return assemble_spectrogram(maps, sp.window);
}

inline Container to_container(const Spectrogram& s) {
  Container c;
  c.header = {{"version", kContainerVersion},
              {"kind", "spectrogram"},
              {"dtype", "f32le"},
              {"layout", "T×doppler_bins"},
              {"doppler_bins", s.bins()},
              {"T", s.frames()},
              {"dt", s.dt},
              {"doppler_min", s.doppler_axis.empty() ? 0.0 : s.doppler_axis.front()},
              {"doppler_max", s.doppler_axis.empty() ? 0.0 : s.doppler_axis.back()},
              {"doppler_axis", s.doppler_axis}};
  std::vector<float> flat(s.values.begin(), s.values.end());
  c.payload = encode_f32le(flat);
  return c;
}

inline Spectrogram spectrogram_from_container(const Container& c) {
  expect_kind(c, "spectrogram", "f32le");
  Spectrogram s;
  try {
    const auto bins = c.header.at("doppler_bins").get<std::size_t>();
    const auto T = c.header.at("T").get<std::size_t>();
    s.dt = c.header.at("dt").get<double>();
    s.doppler_axis = c.header.at("doppler_axis").get<std::vector<double>>();
    if (s.doppler_axis.size() != bins) throw IoError("spectrogram doppler_axis length differs from doppler_bins");
    const auto flat = decode_f32le(c.payload);
    if (flat.size() != bins * T) throw IoError("spectrogram payload does not match T×doppler_bins");
    s.values.assign(flat.begin(), flat.end());
  } catch (const Json::exception& e) {
    throw IoError(std::string("bad spectrogram header: ") + e.what());
  }
  return s;
}

inline void save_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  save_container(path, to_container(s));
}

inline Spectrogram load_spectrogram(const std::filesystem::path& path) {
  return spectrogram_from_container(load_container(path));
}

}  // namespace mdpose::caf
