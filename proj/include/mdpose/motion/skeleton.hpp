#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "mdpose/core/error.hpp"
#include "mdpose/core/vec3.hpp"

namespace mdpose::motion {

inline constexpr std::size_t kNumJoints = 17;
inline constexpr std::size_t kNumBones = 16;
inline constexpr double kDefaultDt = 0.1;

// Zero-based joint indices. Documentation and reports use one-based
// numbering (Pelvis is joint 1, Chest is joint 17).
enum Joint : std::size_t {
  Pelvis = 0,
  Spine,
  Neck,
  Head,
  LeftShoulder,
  LeftElbow,
  LeftWrist,
  RightShoulder,
  RightElbow,
  RightWrist,
  LeftHip,
  LeftKnee,
  LeftAnkle,
  RightHip,
  RightKnee,
  RightAnkle,
  Chest,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis",    "spine",      "neck",        "head",       "l_shoulder", "l_elbow",
    "l_wrist",   "r_shoulder", "r_elbow",     "r_wrist",    "l_hip",      "l_knee",
    "l_ankle",   "r_hip",      "r_knee",      "r_ankle",    "chest"};

struct Bone {
  std::size_t parent;
  std::size_t child;
};

inline constexpr std::array<Bone, kNumBones> kBones = {{
    {Pelvis, Spine},
    {Spine, Chest},
    {Chest, Neck},
    {Neck, Head},
    {Chest, LeftShoulder},
    {LeftShoulder, LeftElbow},
    {LeftElbow, LeftWrist},
    {Chest, RightShoulder},
    {RightShoulder, RightElbow},
    {RightElbow, RightWrist},
    {Pelvis, LeftHip},
    {LeftHip, LeftKnee},
    {LeftKnee, LeftAnkle},
    {Pelvis, RightHip},
    {RightHip, RightKnee},
    {RightKnee, RightAnkle},
}};

using JointArray = std::array<Vec3, kNumJoints>;

struct SkeletonFrame {
  JointArray joints{};

  const Vec3& root() const { return joints[Pelvis]; }
  Vec3& operator[](std::size_t j) { return joints[j]; }
  const Vec3& operator[](std::size_t j) const { return joints[j]; }
  friend bool operator==(const SkeletonFrame&, const SkeletonFrame&) = default;
};

inline bool is_finite(const SkeletonFrame& f) {
  for (const auto& j : f.joints)
    if (!is_finite(j)) return false;
  return true;
}

inline SkeletonFrame translated(SkeletonFrame f, const Vec3& offset) {
  for (auto& j : f.joints) j += offset;
  return f;
}

struct PoseSequence {
  std::vector<SkeletonFrame> frames;
  double dt{kDefaultDt};

  std::size_t size() const { return frames.size(); }
  const SkeletonFrame& operator[](std::size_t t) const { return frames[t]; }
  SkeletonFrame& operator[](std::size_t t) { return frames[t]; }

  void validate() const {
    require(dt > 0.0, "pose sequence dt must be positive");
    require(!frames.empty(), "pose sequence must have at least one frame");
    for (const auto& f : frames) require(is_finite(f), "pose sequence contains non-finite coordinates");
  }
};

struct VelocitySequence {
  std::vector<JointArray> values;  // m/s
  double dt{kDefaultDt};

  std::size_t size() const { return values.size(); }
  const JointArray& operator[](std::size_t t) const { return values[t]; }
  JointArray& operator[](std::size_t t) { return values[t]; }

  void validate() const {
    require(dt > 0.0, "velocity sequence dt must be positive");
    for (const auto& row : values)
      for (const auto& v : row) require(is_finite(v), "velocity sequence contains non-finite values");
  }
};

}  // namespace mdpose::motion
