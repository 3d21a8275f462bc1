#pragma once

#include <filesystem>

#include "mdpose/motion/kinematics.hpp"
#include "mdpose/nn/checkpoint.hpp"
#include "mdpose/nn/layers.hpp"

namespace mdpose::poseopt {

using motion::JointArray;
using motion::kNumJoints;
using motion::PoseSequence;
using motion::SkeletonFrame;
using motion::VelocitySequence;

inline constexpr std::size_t kFrameWidth = 3 * kNumJoints;   // 51
inline constexpr std::size_t kInputWidth = 2 * kFrameWidth;  // velocity | pose
inline constexpr const char* kOptModelName = "OptModel";
inline constexpr double kZeroGap = 1e-9;

// Per joint, the unit vector from guess toward truth; zero when they meet.
using OptVector = JointArray;

inline OptVector opt_vector_truth(const SkeletonFrame& guess, const SkeletonFrame& truth) {
  OptVector out{};
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Vec3 d = truth[j] - guess[j];
    const double n = norm(d);
    out[j] = n < kZeroGap ? Vec3{} : d / n;
  }
  return out;
}

// Mean angular term plus mean squared length deviation. Zero-label joints
// only see the length term.
inline double opt_loss(const OptVector& pred, const OptVector& truth) {
  double acc = 0.0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double pn = norm(pred[j]), tn = norm(truth[j]);
    if (tn > 0.0) acc += pn < 1e-12 ? 1.0 : 1.0 - dot(pred[j], truth[j]) / (pn * tn);
    acc += (1.0 - pn) * (1.0 - pn);
  }
  return acc / static_cast<double>(kNumJoints);
}

struct OptArch {
  std::size_t lstm_hidden{51}, lstm_layers{2};
  bool bidirectional{true};
  std::size_t fc_hidden{256};
};

inline Json to_json(const OptArch& a) {
  return {{"lstm_hidden", a.lstm_hidden},
          {"lstm_layers", a.lstm_layers},
          {"bidirectional", a.bidirectional},
          {"fc_hidden", a.fc_hidden}};
}

inline OptArch opt_arch_from_json(const Json& j) {
  OptArch a;
  a.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  a.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  a.bidirectional = j.at("bidirectional").get<bool>();
  a.fc_hidden = j.at("fc_hidden").get<std::size_t>();
  return a;
}

// Per-frame [velocity | pose] rows, time-major. Each pose is taken relative
// to its own root: a global offset is not observable from velocities, and a
// walk would otherwise feed metres of translation into the pose half.
inline void fill_input(nn::Tensor<float>& x, std::size_t b, std::size_t batch, const PoseSequence& p,
                       const VelocitySequence& v, std::size_t steps) {
  for (std::size_t t = 0; t < steps; ++t) {
    const Vec3 origin = p[t].root();
    float* row = x.data.data() + (t * batch + b) * kInputWidth;
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) {
        row[3 * j + a] = static_cast<float>(v[t][j][a]);
        row[kFrameWidth + 3 * j + a] = static_cast<float>(p[t][j][a] - origin[a]);
      }
  }
}

class OptModel {
 public:
  explicit OptModel(std::uint64_t seed, const OptArch& arch = {}) : arch_(arch) {
    Rng rng(seed);
    lstm_ = nn::Lstm<float>({arch.lstm_hidden, arch.lstm_layers, arch.bidirectional}, kInputWidth, rng);
    fc1_ = nn::Linear<float>({lstm_.output_size(), arch.fc_hidden, true}, rng);
    fc2_ = nn::Linear<float>({arch.fc_hidden, kFrameWidth, true}, rng);
  }

  const OptArch& arch() const { return arch_; }

  // x: [T*B, 102] -> [B, 51], each component in (-1, 1).
  nn::Var<float> forward(const nn::Tensor<float>& x, std::size_t steps, std::size_t batch) const {
    require(steps >= 1 && x.rows() == steps * batch && x.cols() == kInputWidth, "OptModel: input shape mismatch");
    const auto h = lstm_.forward(nn::constant(x), steps, batch);
    const auto last = nn::slice_rows(h, (steps - 1) * batch, steps * batch);
    nn::Var<float> state = last;
    if (arch_.bidirectional) {
      // Final state of each direction: forward at T-1, backward at 0.
      const std::size_t H = arch_.lstm_hidden;
      const auto first = nn::slice_rows(h, 0, batch);
      state = nn::concat_cols<float>({nn::slice_cols(last, 0, H), nn::slice_cols(first, H, 2 * H)});
    }
    return nn::tanh(fc2_.forward(nn::relu(fc1_.forward(state))));
  }

  std::vector<nn::NamedTensor<float>> named() {
    std::vector<nn::NamedTensor<float>> out;
    lstm_.collect("lstm", out);
    fc1_.collect("fc1", out);
    fc2_.collect("fc2", out);
    return out;
  }
  std::vector<nn::Var<float>> parameters() { return nn::trainable_vars(named()); }

  Container to_container(const Json& extra = Json::object()) {
    Json meta = extra;
    meta["arch"] = to_json(arch_);
    return nn::checkpoint_container<float>(kOptModelName, named(), meta);
  }
  static OptModel from_container(const Container& c) {
    if (!c.header.contains("arch")) throw IoError("optimizer checkpoint is missing its architecture");
    OptModel m(0, opt_arch_from_json(c.header["arch"]));
    nn::restore_tensors<float>(c, kOptModelName, m.named());
    return m;
  }
  void save(const std::filesystem::path& path, const Json& extra = Json::object()) {
    save_container(path, to_container(extra));
  }
  static OptModel load(const std::filesystem::path& path) { return from_container(load_container(path)); }

 private:
  OptArch arch_;
  nn::Lstm<float> lstm_;
  nn::Linear<float> fc1_, fc2_;
};

inline OptVector to_opt_vector(const nn::Tensor<float>& y, std::size_t b) {
  OptVector out{};
  const float* row = y.data.data() + b * kFrameWidth;
  for (std::size_t j = 0; j < kNumJoints; ++j) out[j] = Vec3{row[3 * j], row[3 * j + 1], row[3 * j + 2]};
  return out;
}

inline OptVector opt_forward(const OptModel& m, const PoseSequence& p, const VelocitySequence& v) {
  require(p.size() == v.size(), "opt_forward: pose and velocity lengths differ");
  require(p.size() >= 2, "opt_forward: need at least two frames");
  nn::NoGradGuard ng;
  nn::Tensor<float> x({p.size(), kInputWidth});
  fill_input(x, 0, 1, p, v, p.size());
  return to_opt_vector(m.forward(x, p.size(), 1)->value, 0);
}

}  // namespace mdpose::poseopt
