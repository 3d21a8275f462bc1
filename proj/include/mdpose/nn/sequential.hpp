#pragma once

#include <string>
#include <vector>

#include "mdpose/nn/layers.hpp"

namespace mdpose::nn {

// A stack of spec-driven layers. Conv layers see [rows*width, channels];
// once a non-conv layer follows, the remaining width is folded into the
// feature axis (the row-major layout makes that a plain reshape).
template <class S>
class Sequential {
 public:
  Sequential() = default;
  // input_features: channels when the stack opens with Conv1d, else row width.
  Sequential(std::vector<LayerSpec> specs, std::size_t input_features, std::size_t input_width, Rng& rng)
      : specs_(std::move(specs)), input_features_(input_features), input_width_(input_width) {
    require(!specs_.empty(), "network needs at least one layer");
    require(input_width >= 1, "network input width must be positive");
    conv_end_ = specs_.size();
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (!std::holds_alternative<Conv1dSpec>(specs_[i]) && !(per_position(specs_[i]) && conv_before(i))) {
        conv_end_ = i;
        break;
      }
    std::size_t features = input_features, width = input_width;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      require(!std::holds_alternative<Conv1dSpec>(s) || i < conv_end_,
              "layer " + std::to_string(i) + ": Conv1d after a non-conv layer");
      if (i == conv_end_) {
        features *= width;
        width = 1;
      }
      try {
        layers_.push_back(make_layer<S>(s, features, rng));
      } catch (const InvalidInput& e) {
        throw InvalidInput("layer " + std::to_string(i) + ": " + e.what());
      }
      if (auto* c = std::get_if<Conv1d<S>>(&layers_.back())) {
        require(width + 2 * c->spec.padding >= c->spec.kernel,
                "layer " + std::to_string(i) + ": Conv1d kernel wider than its input");
        width = c->out_width(width);
      }
      features = std::visit(
          [&](const auto& l) -> std::size_t {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv1dSpec>) return l.filters;
            if constexpr (std::is_same_v<T, LinearSpec>) return l.out;
            if constexpr (std::is_same_v<T, LstmSpec>) return l.hidden * (l.bidirectional ? 2 : 1);
            return features;
          },
          s);
    }
    if (conv_end_ == specs_.size()) features *= width;
    output_features_ = features;
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t input_features() const { return input_features_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t output_features() const { return output_features_; }
  std::size_t size() const { return layers_.size(); }
  Layer<S>& layer(std::size_t i) { return layers_.at(i); }
  const Layer<S>& layer(std::size_t i) const { return layers_.at(i); }

  // x: [steps*batch*width, channels], rows ordered (t, b, w); ctx.width
  // must start at input_width(). Runs layers [first, last); the conv stage
  // output is folded to [steps*batch, width*channels] on leaving it.
  Var<S> forward(Var<S> x, ForwardContext& ctx, std::size_t first = 0, std::size_t last = SIZE_MAX) {
    last = std::min(last, layers_.size());
    for (std::size_t i = first; i < last; ++i) {
      if (i == conv_end_) x = fold(x, ctx);
      x = forward_layer(layers_[i], x, ctx);
    }
    if (last == layers_.size() && conv_end_ == layers_.size()) x = fold(x, ctx);
    return x;
  }

  std::size_t conv_stage_end() const { return conv_end_; }

  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& out) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = prefix + "." + std::to_string(i);
      std::visit(
          [&](auto& l) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, ActivationSpec>) l.collect(p, out);
          },
          layers_[i]);
    }
  }

  std::vector<NamedTensor<S>> named() {
    std::vector<NamedTensor<S>> out;
    collect("net", out);
    return out;
  }

  // Replace every BatchNorm's running statistics by exact population
  // statistics over `inputs` (each a [steps*width, channels] tensor of one
  // sequence), layer by layer in inference mode.
  void calibrate_batchnorm(const std::vector<Tensor<S>>& inputs) {
    require(!inputs.empty(), "batchnorm calibration needs data");
    NoGradGuard ng;
    std::vector<Var<S>> acts;
    std::vector<ForwardContext> ctxs;
    for (const auto& x : inputs) {
      acts.push_back(constant(x));
      ctxs.push_back({.width = input_width_, .steps = x.rows() / input_width_, .batch = 1, .training = false});
    }
    std::size_t done = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto* bn = std::get_if<BatchNorm<S>>(&layers_[i]);
      if (!bn) continue;
      for (std::size_t k = 0; k < acts.size(); ++k) acts[k] = forward(acts[k], ctxs[k], done, i);
      done = i;
      const std::size_t C = bn->spec.features;
      std::vector<double> sum(C, 0.0), sq(C, 0.0);
      double n = 0;
      for (const auto& a : acts) {
        const auto& t = a->value;
        require(t.cols() == C, "batchnorm calibration: width mismatch");
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t c = 0; c < C; ++c) sum[c] += t.at(r, c);
        n += static_cast<double>(t.rows());
      }
      for (std::size_t c = 0; c < C; ++c) sum[c] /= n;
      for (const auto& a : acts) {
        const auto& t = a->value;
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const double d = t.at(r, c) - sum[c];
            sq[c] += d * d;
          }
      }
      for (std::size_t c = 0; c < C; ++c) {
        bn->stats.running_mean[c] = static_cast<S>(sum[c]);
        bn->stats.running_var[c] = static_cast<S>(n > 1 ? sq[c] / (n - 1) : 1.0);
      }
    }
  }

  Json specs_json() const {
    Json j = Json::array();
    for (const auto& s : specs_) j.push_back(to_json(s));
    return j;
  }

 private:
  static bool per_position(const LayerSpec& s) {
    return std::holds_alternative<BatchNormSpec>(s) || std::holds_alternative<ActivationSpec>(s);
  }

  // BatchNorm/activation directly after a conv (possibly via other BN/act)
  // keep operating per position.
  bool conv_before(std::size_t i) const {
    while (i > 0) {
      --i;
      if (std::holds_alternative<Conv1dSpec>(specs_[i])) return true;
      if (!std::holds_alternative<BatchNormSpec>(specs_[i]) && !std::holds_alternative<ActivationSpec>(specs_[i]))
        return false;
    }
    return false;
  }

  static Var<S> fold(const Var<S>& x, ForwardContext& ctx) {
    if (ctx.width == 1) return x;
    const std::size_t rows = x->value.rows() / ctx.width;
    auto y = reshape(x, {rows, ctx.width * x->value.cols()});
    ctx.width = 1;
    return y;
  }

  std::vector<LayerSpec> specs_;
  std::vector<Layer<S>> layers_;
  std::size_t input_features_{1};
  std::size_t input_width_{1};
  std::size_t output_features_{1};
  std::size_t conv_end_{0};
};

}  // namespace mdpose::nn
