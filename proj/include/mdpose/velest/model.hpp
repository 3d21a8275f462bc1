#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdpose/caf/spectrogram.hpp"
#include "mdpose/motion/skeleton.hpp"
#include "mdpose/nn/checkpoint.hpp"
#include "mdpose/nn/sequential.hpp"

namespace mdpose::velest {

using caf::Spectrogram;
using motion::kNumJoints;
using motion::VelocitySequence;

inline constexpr std::size_t kVelocityWidth = 3 * kNumJoints;  // 51
inline constexpr const char* kVelModelName = "VelModel";

struct VelArch {
  std::size_t conv1{32}, conv2{64}, conv3{64};
  std::size_t kernel{5}, stride{2};
  std::size_t lstm_hidden{64}, lstm_layers{2};
  bool bidirectional{true};
  std::size_t fc_hidden{128};
};

// Conv stack along Doppler (per frame), recurrent stage along time, then
// the regression head. The head ends in two plain linear maps: velocities
// are signed and a ReLU on the 51-wide stage would clip half of them.
inline std::vector<nn::LayerSpec> vel_layer_specs(const VelArch& a = {}) {
  using namespace nn;
  const std::size_t lstm_out = a.lstm_hidden * (a.bidirectional ? 2 : 1);
  std::vector<LayerSpec> s;
  for (std::size_t f : {a.conv1, a.conv2, a.conv3}) {
    s.push_back(Conv1dSpec{f, a.kernel, a.stride, 0});
    s.push_back(BatchNormSpec{f});
    s.push_back(ActivationSpec{ActivationKind::relu});
  }
  s.push_back(LstmSpec{a.lstm_hidden, a.lstm_layers, a.bidirectional});
  s.push_back(LinearSpec{lstm_out, a.fc_hidden, true});
  s.push_back(BatchNormSpec{a.fc_hidden});
  s.push_back(ActivationSpec{ActivationKind::relu});
  s.push_back(LinearSpec{a.fc_hidden, kVelocityWidth, true});
  s.push_back(LinearSpec{kVelocityWidth, kVelocityWidth, true});
  return s;
}

// A window of one spectrogram used as a training example.
struct Crop {
  const Spectrogram* spec{nullptr};
  std::size_t start{0};
  std::size_t frames{0};
};

class VelModel {
 public:
  VelModel(std::size_t doppler_bins, std::uint64_t seed, const VelArch& arch = {})
      : VelModel(vel_layer_specs(arch), doppler_bins, seed) {}

  VelModel(std::vector<nn::LayerSpec> specs, std::size_t doppler_bins, std::uint64_t seed) : bins_(doppler_bins) {
    require(doppler_bins >= 1, "VelModel: doppler bin count must be positive");
    Rng rng(seed);
    net_ = nn::Sequential<float>(std::move(specs), 1, doppler_bins, rng);
    require(net_.output_features() == kVelocityWidth,
            "VelModel: network must output " + std::to_string(kVelocityWidth) + " values per frame");
  }

  std::size_t doppler_bins() const { return bins_; }
  nn::Sequential<float>& net() { return net_; }
  const nn::Sequential<float>& net() const { return net_; }
  std::vector<nn::NamedTensor<float>> named() { return net_.named(); }
  std::vector<nn::Var<float>> parameters() { return nn::trainable_vars(named()); }

  // Rows ordered (t, b, doppler bin), one channel.
  nn::Tensor<float> batch_input(const std::vector<Crop>& crops) const {
    require(!crops.empty(), "VelModel: empty batch");
    const std::size_t T = crops[0].frames, B = crops.size();
    nn::Tensor<float> x({T * B * bins_, 1});
    for (std::size_t b = 0; b < B; ++b) {
      const auto& c = crops[b];
      require(c.frames == T, "VelModel: crops in a batch must share length");
      check_width(*c.spec);
      require(c.start + T <= c.spec->frames(), "VelModel: crop exceeds spectrogram");
      for (std::size_t t = 0; t < T; ++t) {
        const double* col = c.spec->values.data() + (c.start + t) * bins_;
        float* dst = x.data.data() + (t * B + b) * bins_;
        for (std::size_t k = 0; k < bins_; ++k) dst[k] = static_cast<float>(col[k]);
      }
    }
    return x;
  }

  nn::Tensor<float> sequence_input(const Spectrogram& s) const {
    return batch_input({Crop{&s, 0, s.frames()}});
  }

  // [T*B, 51] in m/s.
  nn::Var<float> forward(const nn::Tensor<float>& x, std::size_t steps, std::size_t batch, bool training) {
    require(x.rows() == steps * batch * bins_ && x.cols() == 1, "VelModel: input shape does not match");
    nn::ForwardContext ctx{.width = bins_, .steps = steps, .batch = batch, .training = training};
    return net_.forward(nn::constant(x), ctx);
  }

  // Output of the conv stage for one sequence: [T, features].
  nn::Tensor<float> conv_features(const Spectrogram& s) {
    nn::NoGradGuard ng;
    nn::ForwardContext ctx{.width = bins_, .steps = s.frames(), .batch = 1, .training = false};
    auto y = net_.forward(nn::constant(sequence_input(s)), ctx, 0, net_.conv_stage_end());
    if (ctx.width > 1) y = nn::reshape(y, {s.frames(), ctx.width * y->value.cols()});
    return y->value;
  }

  void check_width(const Spectrogram& s) const {
    if (s.bins() != bins_)
      throw InvalidInput("VelModel: spectrogram has " + std::to_string(s.bins()) + " Doppler bins, model expects " +
                         std::to_string(bins_));
  }

  Container to_container(const Json& extra = Json::object()) {
    Json meta = extra;
    meta["layers"] = net_.specs_json();
    meta["doppler_bins"] = bins_;
    return nn::checkpoint_container<float>(kVelModelName, named(), meta);
  }

  static VelModel from_container(const Container& c) {
    if (!c.header.contains("layers") || !c.header.contains("doppler_bins"))
      throw IoError("velocity checkpoint is missing its layer list");
    std::vector<nn::LayerSpec> specs;
    for (const auto& j : c.header["layers"]) specs.push_back(nn::layer_spec_from_json(j));
    VelModel m(std::move(specs), c.header["doppler_bins"].get<std::size_t>(), 0);
    nn::restore_tensors<float>(c, kVelModelName, m.named());
    return m;
  }

  void save(const std::filesystem::path& path, const Json& extra = Json::object()) {
    save_container(path, to_container(extra));
  }
  static VelModel load(const std::filesystem::path& path) { return from_container(load_container(path)); }

 private:
  std::size_t bins_{1};
  nn::Sequential<float> net_;
};

inline VelocitySequence to_velocity(const nn::Tensor<float>& y, std::size_t steps, std::size_t batch, std::size_t b,
                                    double dt) {
  VelocitySequence v;
  v.dt = dt;
  v.values.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const float* row = y.data.data() + (t * batch + b) * kVelocityWidth;
    for (std::size_t j = 0; j < kNumJoints; ++j)
      v.values[t][j] = Vec3{row[3 * j], row[3 * j + 1], row[3 * j + 2]};
  }
  return v;
}

inline nn::Tensor<float> velocity_target(const std::vector<const VelocitySequence*>& seqs,
                                         const std::vector<std::size_t>& starts, std::size_t steps) {
  const std::size_t B = seqs.size();
  nn::Tensor<float> t({steps * B, kVelocityWidth});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < steps; ++s) {
      const auto& row = (*seqs[b])[starts[b] + s];
      float* dst = t.data.data() + (s * B + b) * kVelocityWidth;
      for (std::size_t j = 0; j < kNumJoints; ++j)
        for (int a = 0; a < 3; ++a) dst[3 * j + a] = static_cast<float>(row[j][a]);
    }
  return t;
}

// Inference on one spectrogram: T frames of 17x3 m/s.
inline VelocitySequence vel_forward(VelModel& m, const Spectrogram& s) {
  s.validate();
  m.check_width(s);
  nn::NoGradGuard ng;
  const auto y = m.forward(m.sequence_input(s), s.frames(), 1, false);
  return to_velocity(y->value, s.frames(), 1, 0, s.dt);
}

// (1/T)(1/17) sum_t sum_j |v' - v|_1
inline double vel_loss(const VelocitySequence& pred, const VelocitySequence& truth) {
  require(pred.size() == truth.size(), "vel_loss: sequence lengths differ");
  require(!pred.values.empty(), "vel_loss: empty sequences");
  double acc = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) acc += std::abs(pred[t][j][a] - truth[t][j][a]);
  return acc / static_cast<double>(pred.size() * kNumJoints);
}

}  // namespace mdpose::velest
