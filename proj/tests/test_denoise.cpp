#include <gtest/gtest.h>

#include "mdpose/denoise/denoise.hpp"
#include "mdpose/motion/activity.hpp"
#include "scene_helpers.hpp"

using namespace mdpose;
using mdpose::denoise::DenoiseParams;
using mdpose::denoise::Method;
using mdpose::denoise::quantile;
using mdpose::denoise::soft_clip;
using mdpose::denoise::parse_method;
using mdpose::caf::Spectrogram;


namespace {

Spectrogram random_spec(std::size_t bins, std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  Spectrogram s;
  for (std::size_t k = 0; k < bins; ++k) s.doppler_axis.push_back(5.0 * (double(k) - double(bins / 2)));
  for (std::size_t i = 0; i < bins * frames; ++i) s.values.push_back(rng.uniform());
  return s;
}

// Clean spectrogram of a short walking scene.
Spectrogram walking_spec() {
  auto p = motion::generate_activity(motion::ActivityKind::Wplus, 3.0, 11);
  p.frames.insert(p.frames.begin(), p.frames.front());
  const wavesim::Geometry g;
  const auto u = wavesim::generate_waveform(16e3, double(p.frames.size() - 1) * p.dt, 20e3, 2);
  return caf::compute_spectrogram(wavesim::synthesize_surveillance(u, p, {}, g, {}),
                                  wavesim::synthesize_reference(u, g), {.clean_iterations = 0});
}

double mad(const Spectrogram& a, const Spectrogram& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) e += std::abs(a.values[i] - b.values[i]);
  return e / double(a.values.size());
}

}  // namespace

TEST(Denoise, PassthroughIsIdentity) {
  const auto s = random_spec(29, 10, 1);
  const auto out = denoise::denoise(s, {.method = Method::passthrough});
  EXPECT_EQ(out.values, s.values);
  EXPECT_EQ(out.doppler_axis, s.doppler_axis);
}

TEST(Denoise, ZeroStaysZero) {
  auto s = random_spec(29, 6, 1);
  std::fill(s.values.begin(), s.values.end(), 0.0);
  for (double v : denoise::denoise(s, {}).values) EXPECT_EQ(v, 0.0);
}

TEST(Denoise, ShapeAxesAndRangePreserved) {
  auto s = random_spec(29, 12, 3);
  s.dt = 0.05;
  const auto out = denoise::denoise(s, {});
  EXPECT_EQ(out.doppler_axis, s.doppler_axis);
  EXPECT_EQ(out.values.size(), s.values.size());
  EXPECT_EQ(out.dt, 0.05);
  double peak = 0;
  for (double v : out.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    peak = std::max(peak, v);
  }
  EXPECT_DOUBLE_EQ(peak, 1.0);
}

TEST(Denoise, RejectsBadParams) {
  const auto s = random_spec(5, 2, 1);
  EXPECT_THROW(denoise::denoise(s, {.quantile = 1.0}), InvalidInput);
  EXPECT_THROW(denoise::denoise(s, {.quantile = -0.1}), InvalidInput);
  EXPECT_THROW(denoise::denoise(s, {.softness = -1.0}), InvalidInput);
  EXPECT_THROW(parse_method("fmnet"), InvalidInput);
}

TEST(Denoise, QuantileMatchesSortedOracle) {
  std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.6), 3.4);
}

TEST(Denoise, SoftClipShape) {
  EXPECT_EQ(soft_clip(0.0, 0.3, 0.05), 0.0);
  EXPECT_EQ(soft_clip(0.0, 0.0, 0.05), 0.0);
  EXPECT_EQ(soft_clip(0.2, 0.3, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(soft_clip(0.5, 0.3, 0.0), 0.2);
  // far above the floor the knee is just a shift
  EXPECT_NEAR(soft_clip(2.3, 0.3, 0.05), 2.0, 1e-3);
  double prev = 0;
  for (double x = 0.0; x < 0.8; x += 1e-3) {
    const double y = soft_clip(x, 0.3, 0.05);
    EXPECT_GE(y, prev);
    EXPECT_LE(y - prev, 1.001e-3);
    prev = y;
  }
}

TEST(Denoise, MonotoneInFixedFloorMode) {
  const DenoiseParams p{.method = Method::threshold, .renormalize = false, .fixed_floor = 0.3};
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_spec(29, 8, 100 + trial);
    auto a = b;
    for (auto& v : a.values) v += rng.uniform(0.0, 0.5);
    const auto da = denoise::denoise(a, p), db = denoise::denoise(b, p);
    for (std::size_t i = 0; i < da.values.size(); ++i) EXPECT_GE(da.values[i], db.values[i]);
  }
}

TEST(Denoise, ReducesUniformNoiseOnCleanScene) {
  const auto clean = walking_spec();
  Rng rng(9);
  auto noisy = clean;
  for (auto& v : noisy.values) v += rng.uniform(0.0, 0.1);
  caf::normalize_max(noisy);
  const auto out = denoise::denoise(noisy, {});
  EXPECT_LT(mad(out, clean), mad(noisy, clean));
}
