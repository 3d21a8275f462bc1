#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mdpose/caf/spectrogram.hpp"

namespace mdpose::denoise {

using caf::Spectrogram;

enum class Method { passthrough, threshold };

inline std::string to_string(Method m) { return m == Method::passthrough ? "passthrough" : "threshold"; }

inline Method parse_method(const std::string& s) {
  if (s == "passthrough") return Method::passthrough;
  if (s == "threshold") return Method::threshold;
  throw InvalidInput("unknown denoise method '" + s + "'");
}

struct DenoiseParams {
  Method method{Method::threshold};
  double quantile{0.6};   // per-column noise floor estimate
  double softness{0.05};  // knee width of the soft clip; 0 gives a hard clip
  bool renormalize{true};
  // Use this floor for every column instead of the column quantile. With
  // renormalize off the map is then elementwise monotone.
  std::optional<double> fixed_floor;

  void validate() const {
    require(quantile >= 0.0 && quantile < 1.0, "denoise quantile must lie in [0, 1)");
    require(softness >= 0.0 && std::isfinite(softness), "denoise softness must be >= 0");
    if (fixed_floor) require(*fixed_floor >= 0.0 && std::isfinite(*fixed_floor), "fixed_floor must be >= 0");
  }
};

// Linear-interpolated sample quantile.
inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), "quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (v[i + 1] - v[i]) * (pos - static_cast<double>(i));
}

// Softplus knee around the floor, shifted so that x = 0 maps to 0:
//   s log(1 + e^{(x - floor)/s}) - s log(1 + e^{-floor/s})
// Tends to max(x - floor, 0) as s -> 0 and is increasing in x.
inline double soft_clip(double x, double floor, double softness) {
  if (softness <= 0.0) return std::max(x - floor, 0.0);
  auto softplus = [softness](double r) {
    const double z = r / softness;
    return z > 30.0 ? r : softness * std::log1p(std::exp(z));
  };
  return std::max(softplus(x - floor) - softplus(-floor), 0.0);
}

inline Spectrogram denoise(const Spectrogram& s, const DenoiseParams& p) {
  p.validate();
  s.validate();
  if (p.method == Method::passthrough) return s;
  Spectrogram out = s;
  const std::size_t F = s.bins();
  std::vector<double> column(F);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    for (std::size_t k = 0; k < F; ++k) column[k] = s.at(k, t);
    const double floor = p.fixed_floor ? *p.fixed_floor : quantile(column, p.quantile);
    for (std::size_t k = 0; k < F; ++k) out.at(k, t) = soft_clip(column[k], floor, p.softness);
  }
  if (p.renormalize) caf::normalize_max(out);
  return out;
}

// Slot for other denoisers (a learned one, say) behind the same signature.
using Denoiser = std::function<Spectrogram(const Spectrogram&)>;

inline Denoiser make_denoiser(DenoiseParams p) {
  p.validate();
  return [p](const Spectrogram& s) { return denoise(s, p); };
}

}  // namespace mdpose::denoise
