#pragma once

#include <filesystem>
#include <vector>

#include "mdpose/core/container.hpp"
#include "mdpose/motion/skeleton.hpp"

namespace mdpose::motion {

namespace detail {

inline Json joint_header(const char* kind, std::size_t frames, double dt) {
  return Json{{"version", kContainerVersion}, {"kind", kind},       {"T", frames},
              {"joints", kNumJoints},         {"dt", dt},           {"layout", "T×J×3"},
              {"dtype", "f32le"},             {"units", std::string(kind) == "pose" ? "m" : "m/s"}};
}

template <typename Rows, typename Get>
std::vector<float> flatten_joints(const Rows& rows, Get&& get) {
  std::vector<float> flat;
  flat.reserve(rows.size() * kNumJoints * 3);
  for (const auto& row : rows)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) flat.push_back(static_cast<float>(get(row)[j][a]));
  return flat;
}

inline std::vector<float> checked_joint_payload(const Container& c, std::size_t& frames, double& dt) {
  frames = c.header.at("T").get<std::size_t>();
  dt = c.header.at("dt").get<double>();
  if (c.header.at("joints").get<std::size_t>() != kNumJoints) throw IoError("joint count must be 17");
  if (c.header.at("layout").get<std::string>() != "T×J×3") throw IoError("unsupported layout");
  auto flat = decode_f32le(c.payload);
  if (flat.size() != frames * kNumJoints * 3) throw IoError("payload length does not match T×J×3");
  return flat;
}

}  // namespace detail

inline Container to_container(const PoseSequence& p) {
  Container c;
  c.header = detail::joint_header("pose", p.size(), p.dt);
  c.payload = encode_f32le(detail::flatten_joints(p.frames, [](const SkeletonFrame& f) -> const JointArray& {
    return f.joints;
  }));
  return c;
}

inline Container to_container(const VelocitySequence& v) {
  Container c;
  c.header = detail::joint_header("velocity", v.size(), v.dt);
  c.payload = encode_f32le(detail::flatten_joints(v.values, [](const JointArray& r) -> const JointArray& {
    return r;
  }));
  return c;
}

inline PoseSequence pose_from_container(const Container& c) {
  expect_kind(c, "pose", "f32le");
  std::size_t frames = 0;
  PoseSequence p;
  const auto flat = detail::checked_joint_payload(c, frames, p.dt);
  p.frames.resize(frames);
  std::size_t k = 0;
  for (auto& f : p.frames)
    for (auto& j : f.joints)
      for (int a = 0; a < 3; ++a) j[a] = flat[k++];
  return p;
}

inline VelocitySequence velocity_from_container(const Container& c) {
  expect_kind(c, "velocity", "f32le");
  std::size_t frames = 0;
  VelocitySequence v;
  const auto flat = detail::checked_joint_payload(c, frames, v.dt);
  v.values.resize(frames);
  std::size_t k = 0;
  for (auto& row : v.values)
    for (auto& j : row)
      for (int a = 0; a < 3; ++a) j[a] = flat[k++];
  return v;
}

inline void save_pose(const std::filesystem::path& path, const PoseSequence& p) {
  save_container(path, to_container(p));
}
inline PoseSequence load_pose(const std::filesystem::path& path) {
  return pose_from_container(load_container(path));
}
inline void save_velocity(const std::filesystem::path& path, const VelocitySequence& v) {
  save_container(path, to_container(v));
}
inline VelocitySequence load_velocity(const std::filesystem::path& path) {
  return velocity_from_container(load_container(path));
}

}  // namespace mdpose::motion
