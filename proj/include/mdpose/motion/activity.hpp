#pragma once

// Synthetic skeletal motion: parametric templates for the nine primitive
// activities, driven through a fixed-length forward-kinematic skeleton so
// bone lengths never change. Composite sequences chain primitives and blend
// each segment in from the previous segment's final state.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdpose/core/error.hpp"
#include "mdpose/core/rng.hpp"
#include "mdpose/motion/skeleton.hpp"

namespace mdpose::motion {

enum class ActivityKind { Wplus, Wminus, TR, SD, SU, HT, CV, PU, BR };

inline constexpr std::array<ActivityKind, 9> kAllActivities = {
    ActivityKind::Wplus, ActivityKind::Wminus, ActivityKind::TR, ActivityKind::SD, ActivityKind::SU,
    ActivityKind::HT,    ActivityKind::CV,     ActivityKind::PU, ActivityKind::BR};

inline std::string to_string(ActivityKind k) {
  switch (k) {
    case ActivityKind::Wplus: return "W+";
    case ActivityKind::Wminus: return "W-";
    case ActivityKind::TR: return "TR";
    case ActivityKind::SD: return "SD";
    case ActivityKind::SU: return "SU";
    case ActivityKind::HT: return "HT";
    case ActivityKind::CV: return "CV";
    case ActivityKind::PU: return "PU";
    case ActivityKind::BR: return "BR";
  }
  throw InvalidInput("unknown activity kind");
}

inline ActivityKind parse_activity(std::string_view s) {
  if (s == "W+" || s == "Wplus") return ActivityKind::Wplus;
  if (s == "W-" || s == "Wminus") return ActivityKind::Wminus;
  for (auto k : kAllActivities)
    if (to_string(k) == s) return k;
  throw InvalidInput("unknown activity kind '" + std::string(s) + "'");
}

struct ActivitySegment {
  ActivityKind kind;
  double duration;  // seconds
};

// Parse "SU>W+>PU" style chains; every segment gets the same duration.
inline std::vector<ActivitySegment> parse_chain(std::string_view chain, double segment_duration) {
  std::vector<ActivitySegment> out;
  std::size_t start = 0;
  while (start <= chain.size()) {
    const auto end = chain.find('>', start);
    const auto token = chain.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    out.push_back({parse_activity(token), segment_duration});
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

// Joint-angle state of the kinematic body. heading 0 faces +y; positive
// lean bends the trunk forward; positive flexion raises a limb forward.
struct BodyState {
  Vec3 root{};
  double heading{0.0};
  double lean{0.0};
  double side{0.0};
  double twist{0.0};
  double neck{0.0};
  std::array<double, 2> hip_flex{};
  std::array<double, 2> hip_abd{};
  std::array<double, 2> knee{};
  std::array<double, 2> sh_flex{};
  std::array<double, 2> sh_abd{};
  std::array<double, 2> elbow{};

  template <typename F>
  void for_each_angle(const BodyState& o, F&& f) {
    f(lean, o.lean);
    f(side, o.side);
    f(twist, o.twist);
    f(neck, o.neck);
    for (int s = 0; s < 2; ++s) {
      f(hip_flex[s], o.hip_flex[s]);
      f(hip_abd[s], o.hip_abd[s]);
      f(knee[s], o.knee[s]);
      f(sh_flex[s], o.sh_flex[s]);
      f(sh_abd[s], o.sh_abd[s]);
      f(elbow[s], o.elbow[s]);
    }
  }
};

// Segment lengths in meters for a body of relative size `scale`.
struct BodyDims {
  double scale{1.0};
  double pelvis_spine() const { return 0.10 * scale; }
  double spine_chest() const { return 0.18 * scale; }
  double chest_neck() const { return 0.16 * scale; }
  double neck_head() const { return 0.14 * scale; }
  double shoulder_half() const { return 0.18 * scale; }
  double upper_arm() const { return 0.29 * scale; }
  double forearm() const { return 0.26 * scale; }
  double hip_half() const { return 0.09 * scale; }
  double thigh() const { return 0.42 * scale; }
  double shank() const { return 0.41 * scale; }
  double stand_height() const { return thigh() + shank() + 0.08; }
  double sit_height() const { return 0.50 * scale + 0.02; }
};

inline SkeletonFrame forward_kinematics(const BodyState& s, const BodyDims& d) {
  const Vec3 up{0, 0, 1};
  const Vec3 fwd0{-std::sin(s.heading), std::cos(s.heading), 0};
  const Vec3 right0{std::cos(s.heading), std::sin(s.heading), 0};

  // Trunk frame: twist about vertical, then forward lean, then side bend.
  Vec3 r = rotate(right0, up, s.twist);
  Vec3 f = rotate(fwd0, up, s.twist);
  Vec3 u = up;
  f = rotate(f, r, -s.lean);
  u = rotate(u, r, -s.lean);
  r = rotate(r, f, s.side);
  u = rotate(u, f, s.side);

  // Pelvis frame follows part of the twist and none of the lean.
  const Vec3 rp = rotate(right0, up, 0.3 * s.twist);
  const Vec3 fp = rotate(fwd0, up, 0.3 * s.twist);

  SkeletonFrame out;
  out[Pelvis] = s.root;
  out[Spine] = out[Pelvis] + u * d.pelvis_spine();
  out[Chest] = out[Spine] + u * d.spine_chest();
  out[Neck] = out[Chest] + u * d.chest_neck();
  out[Head] = out[Neck] + rotate(u, r, -s.neck) * d.neck_head();

  // side 0 = left (towards -r), side 1 = right.
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    const std::size_t sh = side == 0 ? LeftShoulder : RightShoulder;
    const std::size_t el = side == 0 ? LeftElbow : RightElbow;
    const std::size_t wr = side == 0 ? LeftWrist : RightWrist;
    out[sh] = out[Chest] + r * (sign * d.shoulder_half());
    // Abduct about the forward axis (outwards), then flex about the lateral axis.
    Vec3 upper = rotate(-u, f, -sign * s.sh_abd[side]);
    Vec3 lat = rotate(r, f, -sign * s.sh_abd[side]);
    upper = rotate(upper, lat, s.sh_flex[side]);
    const Vec3 fore = rotate(upper, lat, s.elbow[side]);
    out[el] = out[sh] + upper * d.upper_arm();
    out[wr] = out[el] + fore * d.forearm();

    const std::size_t hp = side == 0 ? LeftHip : RightHip;
    const std::size_t kn = side == 0 ? LeftKnee : RightKnee;
    const std::size_t an = side == 0 ? LeftAnkle : RightAnkle;
    out[hp] = out[Pelvis] + rp * (sign * d.hip_half());
    Vec3 thigh = rotate(-up, fp, -sign * s.hip_abd[side]);
    const Vec3 hlat = rotate(rp, fp, -sign * s.hip_abd[side]);
    thigh = rotate(thigh, hlat, s.hip_flex[side]);
    const Vec3 shank = rotate(thigh, hlat, -s.knee[side]);
    out[kn] = out[hp] + thigh * d.thigh();
    out[an] = out[kn] + shank * d.shank();
  }
  return out;
}

namespace detail {

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// C2 ramp from 0 to 1 on [0, 1].
inline double smoother(double x) {
  x = clamp01(x);
  return x * x * x * (x * (x * 6.0 - 15.0) + 10.0);
}

inline double wrap_pi(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

// Running integral of a scalar envelope, sampled on a fine grid.
class Integral {
 public:
  Integral(const std::function<double(double)>& f, double duration, double step = 1e-3)
      : step_(step) {
    const auto n = static_cast<std::size_t>(std::ceil(duration / step)) + 2;
    cum_.resize(n);
    cum_[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const double a = (i - 1) * step, b = i * step;
      cum_[i] = cum_[i - 1] + 0.5 * step * (f(a) + f(b));
    }
  }
  double operator()(double t) const {
    const double x = std::max(0.0, t) / step_;
    const auto i = std::min(static_cast<std::size_t>(x), cum_.size() - 2);
    const double frac = x - static_cast<double>(i);
    return cum_[i] + (cum_[i + 1] - cum_[i]) * frac;
  }

 private:
  double step_;
  std::vector<double> cum_;
};

struct Template {
  std::function<BodyState(double)> at;  // local time -> state, root.xy is a displacement
  bool relative_heading{true};          // authored facing +y, rotated by the start heading
};

inline BodyState neutral(const BodyDims& d) {
  BodyState s;
  s.root = {0, 0, d.stand_height()};
  s.elbow = {0.12, 0.12};
  s.sh_abd = {0.10, 0.10};
  return s;
}

inline Template make_walk(double duration, double direction, Rng& rng, const BodyDims& d) {
  const double speed = rng.uniform(0.65, 1.2);
  const double cadence = 0.5 + 0.3 * speed;  // gait cycles per second
  const double hip_amp = rng.uniform(0.26, 0.34);
  const double knee_amp = rng.uniform(0.35, 0.5);
  const double arm_amp = rng.uniform(0.22, 0.35);
  const double ramp_time = std::min(0.6, duration / 4.0);
  auto ramp = [=](double t) {
    return smoother(t / ramp_time) * smoother((duration - t) / ramp_time);
  };
  auto integral = std::make_shared<Integral>(ramp, duration);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.relative_heading = false;
  tpl.at = [=](double t) {
    const double r = ramp(t);
    const double travelled = (*integral)(t);
    const double phase = 2.0 * std::numbers::pi * cadence * travelled;
    BodyState s = base;
    s.heading = direction > 0 ? 0.0 : std::numbers::pi;
    s.root.y = direction * speed * travelled;
    s.root.z = base.root.z - 0.02 * r * 0.5 * (1.0 - std::cos(2.0 * phase));
    s.lean = 0.06 * r;
    s.twist = 0.08 * r * std::sin(phase);
    for (int side = 0; side < 2; ++side) {
      const double ph = phase + (side == 0 ? 0.0 : std::numbers::pi);
      s.hip_flex[side] = hip_amp * r * std::sin(ph);
      const double swing = 0.5 * (1.0 + std::cos(ph));
      s.knee[side] = r * (0.05 + knee_amp * swing * swing);
      s.sh_flex[side] = -arm_amp * r * std::sin(ph);
      s.elbow[side] = 0.12 + 0.2 * r;
    }
    return s;
  };
  return tpl;
}

inline Template make_turn(double duration, Rng& rng, const BodyDims& d) {
  const double t0 = rng.uniform(0.15, 0.3) * duration;
  const double span = rng.uniform(0.4, 0.55) * duration;
  const double turn = std::numbers::pi * (rng.uniform() < 0.5 ? 1.0 : -1.0);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    const double s = smoother((t - t0) / span);
    const double step = 4.0 * s * (1.0 - s);
    const double phase = 2.0 * std::numbers::pi * 0.9 * t;
    BodyState st = base;
    st.heading = turn * s;
    for (int side = 0; side < 2; ++side) {
      const double ph = phase + (side == 0 ? 0.0 : std::numbers::pi);
      st.hip_flex[side] = 0.15 * step * std::max(0.0, std::sin(ph));
      st.knee[side] = 0.3 * step * std::max(0.0, std::sin(ph));
    }
    st.root.z = base.root.z - 0.015 * step;
    return st;
  };
  return tpl;
}

// Sit-down when `reverse` is false, stand-up otherwise.
inline Template make_sit(double duration, bool reverse, Rng& rng, const BodyDims& d) {
  const double span = std::min(rng.uniform(1.6, 2.4), 0.6 * duration);
  const double t0 = std::min(rng.uniform(0.8, 1.5), std::max(0.0, duration - span - 0.5));
  const double back = rng.uniform(0.30, 0.40);
  const double hip_target = rng.uniform(1.35, 1.5);
  const double knee_target = rng.uniform(1.4, 1.55);
  const double sit_z = d.sit_height() + rng.uniform(-0.03, 0.03);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    double s = smoother((t - t0) / span);
    if (reverse) s = 1.0 - s;
    BodyState st = base;
    st.root.z = base.root.z + (sit_z - base.root.z) * s;
    // Displacement starts at zero in both directions.
    st.root.y = reverse ? back * (1.0 - s) : -back * s;
    st.hip_flex = {hip_target * s, hip_target * s};
    st.knee = {knee_target * s, knee_target * s};
    st.lean = 0.55 * std::sin(std::numbers::pi * s) * (1.0 - s) * 2.0 + 0.12 * s;
    st.sh_flex = {0.35 * std::sin(std::numbers::pi * s) + 0.15 * s, 0.35 * std::sin(std::numbers::pi * s) + 0.15 * s};
    st.elbow = {0.12 + 0.6 * s, 0.12 + 0.6 * s};
    return st;
  };
  return tpl;
}

inline Template make_hit(double duration, Rng& rng, const BodyDims& d) {
  const double freq = rng.uniform(0.6, 0.85);
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double reach = rng.uniform(0.35, 0.5);
  const double extend = rng.uniform(0.9, 1.2);
  const double ramp_time = std::min(0.6, duration / 4.0);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    const double g = smoother(t / ramp_time) * smoother((duration - t) / ramp_time);
    BodyState st = base;
    std::array<double, 2> pulse{};
    for (int side = 0; side < 2; ++side) {
      const double p = std::max(0.0, std::sin(2.0 * std::numbers::pi * freq * t + phase0 +
                                              (side == 0 ? 0.0 : std::numbers::pi)));
      pulse[side] = g * p * p;
      st.sh_flex[side] = 0.5 * g + reach * pulse[side];
      st.sh_abd[side] = 0.1 + 0.05 * g;
      st.elbow[side] = 0.12 + 1.6 * g - extend * pulse[side];
    }
    st.twist = 0.25 * (pulse[1] - pulse[0]);
    st.lean = 0.1 * g;
    st.knee = {0.15 * g, 0.15 * g};
    st.hip_flex = {0.1 * g, 0.1 * g};
    st.root.z = base.root.z - 0.03 * g;
    return st;
  };
  return tpl;
}

inline Template make_cover(double duration, Rng& rng, const BodyDims& d) {
  const double t0 = rng.uniform(0.6, 1.2) * std::min(1.0, duration / 5.0);
  const double rise = 0.7, fall = 0.9;
  const double hold = std::max(0.3, rng.uniform(0.35, 0.5) * duration);
  const double t1 = std::min(t0 + rise + hold, duration - fall - 0.2);
  const double crouch = rng.uniform(0.3, 0.5);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    const double c = smoother((t - t0) / rise) - smoother((t - t1) / fall);
    BodyState st = base;
    st.sh_flex = {1.35 * c, 1.35 * c};
    st.sh_abd = {0.1 + 0.25 * c, 0.1 + 0.25 * c};
    st.elbow = {0.12 + 1.9 * c, 0.12 + 1.9 * c};
    st.lean = 0.25 * c;
    st.knee = {crouch * c, crouch * c};
    st.hip_flex = {0.8 * crouch * c, 0.8 * crouch * c};
    st.root.z = base.root.z - 0.06 * c;
    st.neck = 0.3 * c;
    return st;
  };
  return tpl;
}

inline Template make_pick(double duration, Rng& rng, const BodyDims& d) {
  const double down = 1.2, up = 1.2;
  const double t0 = rng.uniform(0.5, 1.2) * std::min(1.0, duration / 5.0);
  const double t1 = std::min(t0 + down + rng.uniform(0.3, 0.8), duration - up - 0.2);
  const double depth = rng.uniform(0.9, 1.15);
  const int hand = rng.uniform() < 0.5 ? 0 : 1;
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    const double b = smoother((t - t0) / down) - smoother((t - t1) / up);
    BodyState st = base;
    st.lean = depth * b;
    st.hip_flex = {0.35 * b, 0.35 * b};
    st.knee = {0.7 * b, 0.7 * b};
    st.root.z = base.root.z - 0.18 * b;
    st.root.y = -0.12 * b;
    st.sh_flex[hand] = 1.0 * b;
    st.sh_flex[1 - hand] = 0.6 * b;
    st.neck = -0.2 * b;
    return st;
  };
  return tpl;
}

inline Template make_rotate(double duration, Rng& rng, const BodyDims& d) {
  const double amp = rng.uniform(0.5, 0.85);
  const double freq = rng.uniform(0.3, 0.5);
  const double phase0 = rng.uniform() < 0.5 ? 0.0 : std::numbers::pi;
  const double ramp_time = std::min(0.8, duration / 4.0);
  const BodyState base = neutral(d);
  Template tpl;
  tpl.at = [=](double t) {
    const double g = smoother(t / ramp_time) * smoother((duration - t) / ramp_time);
    const double w = std::sin(2.0 * std::numbers::pi * freq * t + phase0);
    BodyState st = base;
    st.twist = g * amp * w;
    st.side = 0.05 * g * w;
    st.sh_abd = {0.1 + 0.4 * g, 0.1 + 0.4 * g};
    st.elbow = {0.12 + 0.3 * g, 0.12 + 0.3 * g};
    return st;
  };
  return tpl;
}

inline Template make_template(ActivityKind kind, double duration, Rng& rng, const BodyDims& d) {
  switch (kind) {
    case ActivityKind::Wplus: return make_walk(duration, +1.0, rng, d);
    case ActivityKind::Wminus: return make_walk(duration, -1.0, rng, d);
    case ActivityKind::TR: return make_turn(duration, rng, d);
    case ActivityKind::SD: return make_sit(duration, false, rng, d);
    case ActivityKind::SU: return make_sit(duration, true, rng, d);
    case ActivityKind::HT: return make_hit(duration, rng, d);
    case ActivityKind::CV: return make_cover(duration, rng, d);
    case ActivityKind::PU: return make_pick(duration, rng, d);
    case ActivityKind::BR: return make_rotate(duration, rng, d);
  }
  throw InvalidInput("unknown activity kind");
}

// Starting location of a standalone activity, relative to the receiver at +y.
inline BodyState initial_state(ActivityKind kind, const Template& tpl, Rng& rng) {
  BodyState s = tpl.at(0.0);
  s.root.x = rng.uniform(-0.5, 0.5);
  switch (kind) {
    case ActivityKind::Wplus: s.root.y = rng.uniform(-1.5, -0.8); break;
    case ActivityKind::Wminus: s.root.y = rng.uniform(3.0, 3.8); break;
    default: s.root.y = rng.uniform(0.8, 2.0); break;
  }
  if (tpl.relative_heading) s.heading = rng.uniform(-0.15, 0.15);
  return s;
}

// State of segment `tpl` at local time t, given the state it starts from.
inline BodyState blend_segment(const Template& tpl, const BodyState& start, double t, double blend_time) {
  const BodyState t0 = tpl.at(0.0);
  BodyState s = tpl.at(t);
  const double w = 1.0 - smoother(t / blend_time);
  if (tpl.relative_heading) {
    const Vec3 disp{s.root.x - t0.root.x, s.root.y - t0.root.y, 0.0};
    const Vec3 world = rotate(disp, Vec3{0, 0, 1}, start.heading);
    s.heading = start.heading + (s.heading - t0.heading);
    s.root.x = start.root.x + world.x;
    s.root.y = start.root.y + world.y;
  } else {
    s.heading += wrap_pi(start.heading - t0.heading) * w;
    s.root.x = start.root.x + (s.root.x - t0.root.x);
    s.root.y = start.root.y + (s.root.y - t0.root.y);
  }
  s.root.z += (start.root.z - t0.root.z) * w;
  BodyState offset = start;
  offset.for_each_angle(t0, [](double& v, double v0) { v -= v0; });
  s.for_each_angle(offset, [&](double& v, double off) { v += off * w; });
  return s;
}

}  // namespace detail

inline std::size_t frame_count(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

// Chain of primitives with continuous poses at every seam.
inline PoseSequence generate_composite(std::span<const ActivitySegment> segments, std::uint64_t seed,
                                       double dt = kDefaultDt) {
  require(!segments.empty(), "composite activity needs at least one segment");
  require(dt > 0.0, "dt must be positive");
  for (const auto& seg : segments)
    require(seg.duration >= 2.0 && seg.duration <= 60.0, "activity duration must lie in [2, 60] s");

  Rng rng(seed);
  const BodyDims dims{rng.uniform(0.92, 1.08)};

  std::vector<detail::Template> templates;
  std::vector<double> starts;
  double total = 0.0;
  for (const auto& seg : segments) {
    templates.push_back(detail::make_template(seg.kind, seg.duration, rng, dims));
    starts.push_back(total);
    total += seg.duration;
  }

  std::vector<BodyState> seg_start(segments.size());
  seg_start[0] = detail::initial_state(segments[0].kind, templates[0], rng);
  const double blend_time = 1.0;
  for (std::size_t k = 1; k < segments.size(); ++k)
    seg_start[k] = detail::blend_segment(templates[k - 1], seg_start[k - 1], segments[k - 1].duration,
                                         std::min(blend_time, segments[k - 1].duration / 2.0));

  PoseSequence out;
  out.dt = dt;
  const std::size_t frames = frame_count(total, dt);
  out.frames.reserve(frames);
  std::size_t k = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) * dt;
    while (k + 1 < segments.size() && t >= starts[k + 1] - 1e-9) ++k;
    const double local = t - starts[k];
    const auto state = detail::blend_segment(templates[k], seg_start[k], local,
                                             std::min(blend_time, segments[k].duration / 2.0));
    out.frames.push_back(forward_kinematics(state, dims));
  }
  return out;
}

inline PoseSequence generate_activity(ActivityKind kind, double duration, std::uint64_t seed,
                                      double dt = kDefaultDt) {
  const ActivitySegment seg{kind, duration};
  return generate_composite(std::span<const ActivitySegment>(&seg, 1), seed, dt);
}

// Arms straight out to the sides, legs straight, facing +y, root at the origin.
inline SkeletonFrame t_pose(double scale = 1.0) {
  BodyState s = detail::neutral(BodyDims{scale});
  s.root = {0, 0, 0};
  s.sh_abd = {std::numbers::pi / 2.0, std::numbers::pi / 2.0};
  s.elbow = {0.0, 0.0};
  return forward_kinematics(s, BodyDims{scale});
}

// Relaxed standing pose, facing +y, root at the origin.
inline SkeletonFrame rest_pose(double scale = 1.0) {
  BodyState s = detail::neutral(BodyDims{scale});
  s.root = {0, 0, 0};
  return forward_kinematics(s, BodyDims{scale});
}

}  // namespace mdpose::motion
