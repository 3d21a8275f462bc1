#include <gtest/gtest.h>

#include <filesystem>

#include "mdpose/wavesim/io.hpp"
#include "scene_helpers.hpp"

using namespace mdpose;
using namespace mdpose::wavesim;
using mdpose::testing::point_track;
using mdpose::testing::single_joint;

TEST(Waveform, DeterministicPerSeed) {
  const auto a = generate_waveform(20e3, 0.05, 50e3, 1);
  const auto b = generate_waveform(20e3, 0.05, 50e3, 1);
  const auto c = generate_waveform(20e3, 0.05, 50e3, 2);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Waveform, UnitModulus) {
  const auto u = generate_waveform(16e3, 0.1, 20e3, 5);
  ASSERT_EQ(u.size(), 2000u);
  for (const auto& s : u.samples) EXPECT_NEAR(std::abs(s), 1.0, 1e-12);
}

TEST(Waveform, PowerConcentratedInBandAtWifiRates) {
  const double fs = 50e6, bw = 20e6;
  auto u = generate_waveform(bw, 0.1, fs, 1);
  ASSERT_EQ(u.size(), 5000000u);
  std::vector<Complex> spec = u.samples;
  fft::forward(spec);
  const std::size_t n = spec.size();
  double in = 0.0, total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = k <= n / 2 ? double(k) : double(k) - double(n);
    const double f = kk * fs / double(n);
    const double p = std::norm(spec[k]);
    total += p;
    if (std::abs(f) <= bw / 2) in += p;
  }
  EXPECT_GE(in / total, 0.90);
}

TEST(Waveform, RejectsBandwidthAboveSampleRate) {
  EXPECT_THROW(generate_waveform(60e6, 0.01, 50e6, 1), InvalidInput);
  EXPECT_THROW(generate_waveform(1e3, 0.0, 2e3, 1), InvalidInput);
}

TEST(Reference, CoLocatedAntennaIsScaledCopy) {
  Geometry g;
  g.rx_ref = g.tx;
  const auto u = generate_waveform(8e3, 0.01, 10e3, 3);
  const auto r = synthesize_reference(u, g);
  EXPECT_DOUBLE_EQ(reference_delay(g), 0.0);
  const double a = reference_amplitude(g);
  ASSERT_EQ(r.size(), u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_EQ(r.samples[i].real(), a * u.samples[i].real());
    EXPECT_EQ(r.samples[i].imag(), a * u.samples[i].imag());
  }
}

TEST(Reference, OneMicrosecondAtLightMicrosecond) {
  Geometry g;
  g.tx = {0, 0, 0};
  g.rx_ref = {299.792458, 0, 0};
  EXPECT_NEAR(reference_delay(g), 1e-6, 1e-20);
}

TEST(Reference, CorrelationPeakAtDelay) {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    Geometry g;
    g.tx = {0, 0, 0};
    g.rx_ref = {rng.uniform(100, 1500), rng.uniform(-300, 300), 0};
    const double fs = 1e6;
    const auto u = generate_waveform(0.8e6, 2e-3, fs, 10 + trial);
    const auto r = synthesize_reference(u, g);
    const double lag_true = reference_delay(g) * fs;
    std::size_t best = 0;
    double best_mag = -1;
    for (std::size_t lag = 0; lag < 16; ++lag) {
      Complex acc{};
      for (std::size_t i = lag; i < u.size(); ++i) acc += r.samples[i] * std::conj(u.samples[i - lag]);
      if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = lag;
    }
    EXPECT_EQ(best, static_cast<std::size_t>(std::llround(lag_true))) << "trial " << trial;
  }
}

TEST(Surveillance, DsiOnlyIsDelayedScaledCopy) {
  const double fs = 1e6;
  Geometry g;
  g.tx = {0, 0, 0};
  g.rx_sur = {3.0 * kSpeedOfLight / fs, 0, 0};  // exactly 3 samples
  InterferenceConfig ic;
  ic.dsi_amplitude = 0.7;
  const auto u = generate_waveform(0.5e6, 1e-3, fs, 4);
  const auto pose = point_track({0, 50, 0}, {0, 0, 0}, 0.1);
  const auto s = synthesize_surveillance(u, pose, single_joint(0.0), g, ic);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Complex want = i >= 3 ? 0.7 * u.samples[i - 3] : Complex{};
    EXPECT_NEAR(std::abs(s.samples[i] - want), 0.0, 1e-9) << i;
  }
}

TEST(Surveillance, RejectsPoseShorterThanSignal) {
  const auto u = generate_waveform(8e3, 0.5, 10e3, 1);
  const auto pose = point_track({0, 3, 1}, {0, 0, 0}, 0.2);
  EXPECT_THROW(synthesize_surveillance(u, pose, {}, Geometry{}, {}), InvalidInput);
}

TEST(Surveillance, AdditiveOverTerms) {
  const auto u = generate_waveform(16e3, 0.3, 20e3, 9);
  auto pose = point_track({0.3, 3.0, 1.0}, {0.1, 0.9, 0.05}, 0.3);
  for (std::size_t t = 0; t < pose.frames.size(); ++t)
    for (std::size_t j = 0; j < motion::kNumJoints; ++j) pose.frames[t].joints[j].z += 0.08 * double(j);
  Geometry g;
  InterferenceConfig ic = default_interference();
  ic.noise_seed = 12;
  ScattererModel sc;
  const auto all = synthesize_surveillance(u, pose, sc, g, ic);
  std::vector<Complex> sum(u.size());
  for (int term = 0; term < 5; ++term) {
    auto t = SurveillanceTerms::none();
    (term == 0 ? t.targets : term == 1 ? t.multipath : term == 2 ? t.dsi : term == 3 ? t.clutter : t.noise) = true;
    const auto part = synthesize_surveillance(u, pose, sc, g, ic, t);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += part.samples[i];
  }
  double err = 0, ref = 0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    err += std::norm(sum[i] - all.samples[i]);
    ref += std::norm(all.samples[i]);
  }
  EXPECT_LE(std::sqrt(err / ref), 1e-9);
}

TEST(Surveillance, ThreadCountDoesNotChangeOutput) {
  const auto u = generate_waveform(16e3, 0.2, 20e3, 9);
  const auto pose = point_track({0.3, 3.0, 1.0}, {0.1, 0.9, 0.05}, 0.2);
  SynthOptions one, four;
  four.threads = 4;
  const auto a = synthesize_surveillance(u, pose, {}, Geometry{}, default_interference(), {}, one);
  const auto b = synthesize_surveillance(u, pose, {}, Geometry{}, default_interference(), {}, four);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(BistaticDoppler, ZeroVelocity) {
  Geometry g;
  EXPECT_EQ(bistatic_doppler(g, {1, 2, 3}, {0, 0, 0}), 0.0);
}

TEST(BistaticDoppler, MotionAlongBaselineIsZero) {
  Geometry g;
  g.tx = {0, 0, 0};
  g.rx_sur = {10, 0, 0};
  EXPECT_NEAR(bistatic_doppler(g, {4, 0, 0}, {1.3, 0, 0}), 0.0, 1e-9);
}

TEST(BistaticDoppler, RejectsCoincidentPoint) {
  Geometry g;
  EXPECT_THROW(bistatic_doppler(g, g.tx, {1, 0, 0}), InvalidInput);
  EXPECT_THROW(bistatic_doppler(g, g.rx_sur, {1, 0, 0}), InvalidInput);
}

TEST(BistaticDoppler, MatchesFiniteDifferenceOfPathLength) {
  Rng rng(2024);
  for (int i = 0; i < 200; ++i) {
    Geometry g;
    g.tx = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)};
    g.rx_sur = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)};
    const Vec3 x{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2)};
    const Vec3 v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)};
    if (distance(x, g.tx) < 0.2 || distance(x, g.rx_sur) < 0.2) continue;
    const double h = 1e-3;
    const double rate = (bistatic_range(g, x + v * h) - bistatic_range(g, x - v * h)) / (2 * h);
    const double fd = -g.carrier_hz / kSpeedOfLight * rate;
    EXPECT_NEAR(bistatic_doppler(g, x, v), fd, 0.1);
  }
}

TEST(SignalFile, RoundTripAndHeader) {
  auto u = generate_waveform(8e3, 0.01, 10e3, 3);
  u.start_time_s = 0.25;
  const auto c = to_container(u);
  EXPECT_EQ(c.header["dtype"], "c64le");
  EXPECT_EQ(c.header["samples"], u.size());
  EXPECT_EQ(c.payload.size(), u.size() * 8);
  const auto path = std::filesystem::temp_directory_path() / "mdpose_signal_rt.bin";
  save_signal(path.string(), u);
  const auto back = load_signal(path.string());
  EXPECT_EQ(back.sample_rate_hz, u.sample_rate_hz);
  EXPECT_EQ(back.start_time_s, 0.25);
  ASSERT_EQ(back.size(), u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_EQ(back.samples[i].real(), double(float(u.samples[i].real())));
    EXPECT_EQ(back.samples[i].imag(), double(float(u.samples[i].imag())));
  }
  // float-valued signals survive unchanged
  const auto again = to_container(back);
  EXPECT_EQ(again.payload, c.payload);
  std::filesystem::remove(path);
}
