#pragma once

#include <array>

#include "mdpose/motion/skeleton.hpp"

namespace mdpose::motion {

// values[t] = (p[t] - p[t-1]) / dt, values[0] = 0.
inline VelocitySequence differentiate(const PoseSequence& p) {
  p.validate();
  require(p.size() >= 2, "differentiate requires at least two frames");
  VelocitySequence v;
  v.dt = p.dt;
  v.values.resize(p.size());
  for (std::size_t t = 1; t < p.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      v.values[t][j] = (p[t][j] - p[t - 1][j]) / p.dt;
  return v;
}

// p[0] = p0, p[t] = p[t-1] + v[t] * dt. v[0] is not consumed.
inline PoseSequence integrate(const SkeletonFrame& p0, const VelocitySequence& v) {
  require(is_finite(p0), "integrate: initial pose is not finite");
  v.validate();
  require(v.size() >= 1, "integrate: empty velocity sequence");
  PoseSequence p;
  p.dt = v.dt;
  p.frames.resize(v.size());
  p.frames[0] = p0;
  for (std::size_t t = 1; t < v.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      p.frames[t][j] = p.frames[t - 1][j] + v[t][j] * v.dt;
  return p;
}

inline std::array<double, kNumBones> bone_lengths(const SkeletonFrame& f) {
  std::array<double, kNumBones> out{};
  for (std::size_t b = 0; b < kNumBones; ++b) out[b] = distance(f[kBones[b].parent], f[kBones[b].child]);
  return out;
}

// Mean Euclidean joint distance between two frames (meters).
inline double mean_joint_error(const SkeletonFrame& a, const SkeletonFrame& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < kNumJoints; ++j) s += distance(a[j], b[j]);
  return s / static_cast<double>(kNumJoints);
}

// Same, after translating a so its root coincides with b's root.
inline double root_relative_error(const SkeletonFrame& a, const SkeletonFrame& b) {
  return mean_joint_error(translated(a, b.root() - a.root()), b);
}

}  // namespace mdpose::motion
