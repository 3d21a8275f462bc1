#include <gtest/gtest.h>

#include <cmath>

#include "mdpose/core/rng.hpp"
#include "mdpose/motion/activity.hpp"
#include "mdpose/motion/io.hpp"
#include "mdpose/motion/kinematics.hpp"

using namespace mdpose;
using namespace mdpose::motion;

namespace {

PoseSequence random_sequence(std::size_t frames, std::uint64_t seed, double dt = 0.1) {
  Rng rng(seed);
  PoseSequence p;
  p.dt = dt;
  p.frames.resize(frames);
  for (auto& f : p.frames)
    for (auto& j : f.joints) j = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 2)};
  return p;
}

double max_speed(const PoseSequence& p) {
  double m = 0;
  for (std::size_t t = 1; t < p.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j) m = std::max(m, distance(p[t][j], p[t - 1][j]) / p.dt);
  return m;
}

}  // namespace

TEST(Differentiate, ConstantPoseGivesZero) {
  PoseSequence p;
  p.frames.assign(5, rest_pose());
  const auto v = differentiate(p);
  ASSERT_EQ(v.size(), 5u);
  for (const auto& row : v.values)
    for (const auto& x : row) EXPECT_EQ(x, Vec3{});
}

TEST(Differentiate, RootTranslationGivesUnitVelocity) {
  PoseSequence p;
  p.dt = 0.1;
  for (int t = 0; t <= 10; ++t) p.frames.push_back(translated(rest_pose(), {0, 0.1 * t, 0}));
  const auto v = differentiate(p);
  EXPECT_EQ(v[0][Pelvis], Vec3{});
  for (std::size_t t = 1; t < v.size(); ++t) {
    EXPECT_NEAR(v[t][Pelvis].x, 0.0, 1e-12);
    EXPECT_NEAR(v[t][Pelvis].y, 1.0, 1e-12);
    EXPECT_NEAR(v[t][Pelvis].z, 0.0, 1e-12);
  }
}

TEST(Differentiate, RejectsSingleFrame) {
  PoseSequence p;
  p.frames.push_back(rest_pose());
  EXPECT_THROW(differentiate(p), InvalidInput);
}

TEST(Integrate, ConstantVelocityMovesRoot) {
  VelocitySequence v;
  v.dt = 0.1;
  v.values.resize(11);
  for (auto& row : v.values) row[Pelvis] = {1, 0, 0};
  const auto p = integrate(SkeletonFrame{}, v);
  EXPECT_NEAR(p[10][Pelvis].x, 1.0, 1e-12);
  EXPECT_NEAR(p[10][Pelvis].y, 0.0, 1e-12);
}

TEST(Integrate, ZeroVelocityRepeatsInitialPose) {
  VelocitySequence v;
  v.values.resize(7);
  const auto p0 = rest_pose();
  const auto p = integrate(p0, v);
  for (const auto& f : p.frames) EXPECT_EQ(f, p0);
}

TEST(Integrate, MatchesCumulativeSumOracle) {
  Rng rng(3);
  VelocitySequence v;
  v.dt = 0.05;
  v.values.resize(200);
  for (auto& row : v.values)
    for (auto& x : row) x = {rng.normal(), rng.normal(), rng.normal()};
  SkeletonFrame p0;
  for (auto& j : p0.joints) j = {rng.normal(), rng.normal(), rng.normal()};
  const auto p = integrate(p0, v);
  for (std::size_t j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) {
      double acc = p0[j][a];
      for (std::size_t t = 1; t < v.size(); ++t) {
        acc += v[t][j][a] * v.dt;
        ASSERT_NEAR(p[t][j][a], acc, 1e-12);
      }
    }
}

TEST(Integrate, RejectsNonFinite) {
  VelocitySequence v;
  v.values.resize(3);
  v.values[1][2].x = std::nan("");
  EXPECT_THROW(integrate(SkeletonFrame{}, v), InvalidInput);
  SkeletonFrame bad;
  bad[0].y = INFINITY;
  VelocitySequence ok;
  ok.values.resize(3);
  EXPECT_THROW(integrate(bad, ok), InvalidInput);
}

TEST(Kinematics, RoundTripBothDirections) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = random_sequence(1000, seed);
    const auto back = integrate(p[0], differentiate(p));
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t j = 0; j < kNumJoints; ++j) ASSERT_LT(distance(back[t][j], p[t][j]), 1e-9);

    auto v = differentiate(random_sequence(1000, seed + 10));
    const auto v2 = differentiate(integrate(SkeletonFrame{}, v));
    for (std::size_t t = 1; t < v.size(); ++t)
      for (std::size_t j = 0; j < kNumJoints; ++j) ASSERT_LT(distance(v2[t][j], v[t][j]), 1e-9);
  }
}

TEST(Kinematics, ConstantTranslationLeavesVelocityUnchanged) {
  const auto p = random_sequence(20, 5);
  PoseSequence q = p;
  for (auto& f : q.frames) f = translated(f, {1.5, -2.0, 0.25});
  const auto a = differentiate(p), b = differentiate(q);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j) EXPECT_LT(distance(a[t][j], b[t][j]), 1e-12);
}

TEST(BoneLengths, DegenerateAndRigid) {
  for (double l : bone_lengths(SkeletonFrame{})) EXPECT_EQ(l, 0.0);
  const auto f = rest_pose();
  const auto a = bone_lengths(f), b = bone_lengths(translated(f, {1, 2, 3}));
  for (std::size_t i = 0; i < kNumBones; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Activity, DeterministicPerSeed) {
  const auto a = generate_activity(ActivityKind::Wplus, 5.0, 7);
  const auto b = generate_activity(ActivityKind::Wplus, 5.0, 7);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t], b[t]);
  const auto c = generate_activity(ActivityKind::Wplus, 5.0, 8);
  EXPECT_NE(a[10], c[10]);
}

TEST(Activity, StandUpRaisesRoot) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = generate_activity(ActivityKind::SU, 5.0, seed);
    EXPECT_GT(p.frames.back().root().z, p.frames.front().root().z);
  }
}

TEST(Activity, WalkingSpeedFromFiniteDifferences) {
  for (auto kind : {ActivityKind::Wplus, ActivityKind::Wminus}) {
    const auto p = generate_activity(kind, 5.0, 7);
    double sum = 0;
    for (std::size_t t = 1; t < p.size(); ++t) sum += (p[t].root().y - p[t - 1].root().y) / p.dt;
    const double mean = sum / static_cast<double>(p.size() - 1);
    const double sign = kind == ActivityKind::Wplus ? 1.0 : -1.0;
    EXPECT_GE(sign * mean, 0.5);
    EXPECT_LE(sign * mean, 1.5);
  }
}

TEST(Activity, BoundedSpeedAndRigidBones) {
  for (auto kind : kAllActivities) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      for (double duration : {2.0, 5.0, 12.0}) {
        const auto p = generate_activity(kind, duration, seed);
        SCOPED_TRACE(to_string(kind) + " seed " + std::to_string(seed));
        EXPECT_LE(max_speed(p), 3.0);
        const auto first = bone_lengths(p.frames.front());
        for (const auto& f : p.frames) {
          const auto l = bone_lengths(f);
          for (std::size_t b = 0; b < kNumBones; ++b) ASSERT_NEAR(l[b], first[b], 1e-6);
        }
      }
    }
  }
}

TEST(Activity, CompositeSeamsAreContinuous) {
  const auto chain = parse_chain("SU>W+>PU>BR>W->SD>SU", 5.0);
  const auto p = generate_composite(chain, 11);
  ASSERT_EQ(p.size(), 350u);
  EXPECT_LE(max_speed(p), 3.0);
  const auto first = bone_lengths(p.frames.front());
  for (const auto& f : p.frames) {
    const auto l = bone_lengths(f);
    for (std::size_t b = 0; b < kNumBones; ++b) ASSERT_NEAR(l[b], first[b], 1e-6);
  }
}

TEST(Activity, RejectsBadInput) {
  EXPECT_THROW(parse_activity("JUMP"), InvalidInput);
  EXPECT_THROW(generate_activity(ActivityKind::HT, 1.0, 0), InvalidInput);
  EXPECT_THROW(generate_activity(ActivityKind::HT, 61.0, 0), InvalidInput);
  EXPECT_THROW(generate_activity(static_cast<ActivityKind>(42), 5.0, 0), InvalidInput);
}

TEST(PoseFile, BitExactRoundTrip) {
  const auto p = generate_activity(ActivityKind::BR, 3.0, 2);
  const auto bytes = serialize(to_container(p));
  const auto back = pose_from_container(deserialize(bytes));
  EXPECT_EQ(serialize(to_container(back)), bytes);
  ASSERT_EQ(back.size(), p.size());
  EXPECT_EQ(back.dt, p.dt);
  for (std::size_t t = 0; t < p.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) EXPECT_EQ(back[t][j][a], static_cast<double>(static_cast<float>(p[t][j][a])));

  auto header = deserialize(bytes).header;
  EXPECT_EQ(header["layout"], "T×J×3");
  EXPECT_EQ(header["dtype"], "f32le");
  EXPECT_EQ(header["joints"], 17);

  const auto v = differentiate(p);
  const auto vbytes = serialize(to_container(v));
  EXPECT_EQ(serialize(to_container(velocity_from_container(deserialize(vbytes)))), vbytes);
  EXPECT_THROW(pose_from_container(deserialize(vbytes)), IoError);
}

TEST(PoseFile, RejectsTruncatedPayload) {
  auto bytes = serialize(to_container(generate_activity(ActivityKind::CV, 2.0, 1)));
  bytes.pop_back();
  EXPECT_THROW(deserialize(bytes), IoError);
}
