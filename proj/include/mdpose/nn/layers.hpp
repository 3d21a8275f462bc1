#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "mdpose/core/container.hpp"
#include "mdpose/core/rng.hpp"
#include "mdpose/nn/autograd.hpp"

namespace mdpose::nn {

struct Conv1dSpec {
  std::size_t filters{1};
  std::size_t kernel{1};
  std::size_t stride{1};
  std::size_t padding{0};
};
struct LinearSpec {
  std::size_t in{1};
  std::size_t out{1};
  bool bias{true};
};
struct BatchNormSpec {
  std::size_t features{1};
};
enum class ActivationKind { relu, tanh };
struct ActivationSpec {
  ActivationKind kind{ActivationKind::relu};
};
struct LstmSpec {
  std::size_t hidden{1};
  std::size_t layers{1};
  bool bidirectional{false};
};

using LayerSpec = std::variant<Conv1dSpec, LinearSpec, BatchNormSpec, ActivationSpec, LstmSpec>;

inline void validate(const LayerSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv1dSpec>)
          require(s.filters > 0 && s.kernel > 0 && s.stride > 0, "Conv1d dimensions must be positive");
        else if constexpr (std::is_same_v<T, LinearSpec>)
          require(s.in > 0 && s.out > 0, "Linear dimensions must be positive");
        else if constexpr (std::is_same_v<T, BatchNormSpec>)
          require(s.features > 0, "BatchNorm features must be positive");
        else if constexpr (std::is_same_v<T, LstmSpec>)
          require(s.hidden > 0 && s.layers > 0, "LSTM dimensions must be positive");
      },
      spec);
}

inline Json to_json(const LayerSpec& spec) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv1dSpec>)
          return {{"type", "Conv1d"}, {"filters", s.filters}, {"kernel", s.kernel}, {"stride", s.stride},
                  {"padding", s.padding}};
        else if constexpr (std::is_same_v<T, LinearSpec>)
          return {{"type", "Linear"}, {"in", s.in}, {"out", s.out}, {"bias", s.bias}};
        else if constexpr (std::is_same_v<T, BatchNormSpec>)
          return {{"type", "BatchNorm"}, {"features", s.features}};
        else if constexpr (std::is_same_v<T, ActivationSpec>)
          return {{"type", "Activation"}, {"kind", s.kind == ActivationKind::relu ? "ReLU" : "Tanh"}};
        else
          return {{"type", "LSTM"}, {"hidden", s.hidden}, {"layers", s.layers}, {"bidirectional", s.bidirectional}};
      },
      spec);
}

inline LayerSpec layer_spec_from_json(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  LayerSpec spec;
  if (type == "Conv1d")
    spec = Conv1dSpec{j.at("filters"), j.at("kernel"), j.at("stride"), j.at("padding")};
  else if (type == "Linear")
    spec = LinearSpec{j.at("in"), j.at("out"), j.at("bias")};
  else if (type == "BatchNorm")
    spec = BatchNormSpec{j.at("features")};
  else if (type == "Activation")
    spec = ActivationSpec{j.at("kind").get<std::string>() == "Tanh" ? ActivationKind::tanh : ActivationKind::relu};
  else if (type == "LSTM")
    spec = LstmSpec{j.at("hidden"), j.at("layers"), j.at("bidirectional")};
  else
    throw InvalidInput("unknown layer type '" + type + "'");
  validate(spec);
  return spec;
}

// A tensor owned by a module, as listed in checkpoints.
template <class S>
struct NamedTensor {
  std::string name;
  Tensor<S>* tensor;
  Var<S> var;  // null for buffers such as running statistics

  bool trainable() const { return static_cast<bool>(var); }
};

template <class S>
std::vector<Var<S>> trainable_vars(const std::vector<NamedTensor<S>>& named) {
  std::vector<Var<S>> out;
  for (const auto& n : named)
    if (n.var) out.push_back(n.var);
  return out;
}

namespace detail {

template <class S>
Tensor<S> uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

template <class S>
struct Linear {
  LinearSpec spec;
  Var<S> w, b;

  Linear() = default;
  Linear(LinearSpec s, Rng& rng) : spec(s) {
    validate(s);
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    w = parameter(detail::uniform_tensor<S>({s.in, s.out}, bound, rng));
    if (s.bias) b = parameter(detail::uniform_tensor<S>({s.out}, bound, rng));
  }
  Var<S> forward(const Var<S>& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& out) {
    out.push_back({prefix + ".weight", &w->value, w});
    if (b) out.push_back({prefix + ".bias", &b->value, b});
  }
};

template <class S>
struct Conv1d {
  Conv1dSpec spec;
  std::size_t in_channels{1};
  Var<S> w, b;

  Conv1d() = default;
  Conv1d(Conv1dSpec s, std::size_t channels, Rng& rng) : spec(s), in_channels(channels) {
    validate(s);
    require(channels > 0, "Conv1d input channels must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.kernel * channels));
    w = parameter(detail::uniform_tensor<S>({s.kernel * channels, s.filters}, bound, rng));
    b = parameter(detail::uniform_tensor<S>({s.filters}, bound, rng));
  }
  std::size_t out_width(std::size_t width) const {
    require(width + 2 * spec.padding >= spec.kernel, "Conv1d input narrower than its kernel");
    return (width + 2 * spec.padding - spec.kernel) / spec.stride + 1;
  }
  Var<S> forward(const Var<S>& x, std::size_t width) const {
    require(x->value.cols() == in_channels, "Conv1d: channel count mismatch");
    return conv1d(x, w, b, width, spec.kernel, spec.stride, spec.padding);
  }
  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& out) {
    out.push_back({prefix + ".weight", &w->value, w});
    out.push_back({prefix + ".bias", &b->value, b});
  }
};

template <class S>
struct BatchNorm {
  BatchNormSpec spec;
  Var<S> gamma, beta;
  BatchNormStats<S> stats;

  BatchNorm() = default;
  explicit BatchNorm(BatchNormSpec s) : spec(s) {
    validate(s);
    gamma = parameter(Tensor<S>({s.features}, S(1)));
    beta = parameter(Tensor<S>({s.features}, S(0)));
    stats.running_mean = Tensor<S>({s.features}, S(0));
    stats.running_var = Tensor<S>({s.features}, S(1));
  }
  Var<S> forward(const Var<S>& x, bool training) { return batchnorm(x, gamma, beta, stats, training); }
  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& out) {
    out.push_back({prefix + ".gamma", &gamma->value, gamma});
    out.push_back({prefix + ".beta", &beta->value, beta});
    out.push_back({prefix + ".running_mean", &stats.running_mean, nullptr});
    out.push_back({prefix + ".running_var", &stats.running_var, nullptr});
  }
};

template <class S>
Var<S> activate(ActivationKind k, const Var<S>& x) {
  return k == ActivationKind::relu ? relu(x) : nn::tanh(x);
}

// Stacked, optionally bidirectional LSTM over time-major input: row t*B + b
// is step t of sequence b. Output rows follow the same order with
// [forward | backward] hidden states.
template <class S>
struct Lstm {
  struct Cell {
    Var<S> wx, wh, b;
  };
  LstmSpec spec;
  std::size_t input{1};
  std::vector<Cell> cells;  // layer-major, then direction

  Lstm() = default;
  Lstm(LstmSpec s, std::size_t input_size, Rng& rng) : spec(s), input(input_size) {
    validate(s);
    require(input_size > 0, "LSTM input size must be positive");
    const std::size_t H = s.hidden, D = directions();
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    for (std::size_t l = 0; l < s.layers; ++l) {
      const std::size_t in = l == 0 ? input_size : D * H;
      for (std::size_t d = 0; d < D; ++d)
        cells.push_back({parameter(detail::uniform_tensor<S>({in, 4 * H}, bound, rng)),
                         parameter(detail::uniform_tensor<S>({H, 4 * H}, bound, rng)),
                         parameter(detail::uniform_tensor<S>({4 * H}, bound, rng))});
    }
  }
  std::size_t directions() const { return spec.bidirectional ? 2 : 1; }
  std::size_t output_size() const { return directions() * spec.hidden; }

  Var<S> forward(const Var<S>& x, std::size_t steps, std::size_t batch) const {
    require(steps >= 1 && batch >= 1 && x->value.rows() == steps * batch, "LSTM: rows must equal steps*batch");
    require(x->value.cols() == input, "LSTM: input width mismatch");
    const std::size_t H = spec.hidden, D = directions();
    Var<S> layer_in = x;
    for (std::size_t l = 0; l < spec.layers; ++l) {
      std::vector<Var<S>> dir_out;
      for (std::size_t d = 0; d < D; ++d) {
        const Cell& cell = cells[l * D + d];
        const Var<S> proj = linear(layer_in, cell.wx, cell.b);
        Var<S> hc;
        std::vector<Var<S>> outs(steps);
        for (std::size_t s = 0; s < steps; ++s) {
          const std::size_t t = d == 0 ? s : steps - 1 - s;
          hc = lstm_step(proj, t, batch, hc, cell.wh);
          outs[t] = hc;
        }
        dir_out.push_back(concat_rows_of_cols(outs, 0, H));
      }
      layer_in = D == 1 ? dir_out[0] : concat_cols(dir_out);
    }
    return layer_in;
  }
  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& out) {
    const std::size_t D = directions();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string p = prefix + ".l" + std::to_string(i / D) + (i % D ? "_rev" : "");
      out.push_back({p + ".wx", &cells[i].wx->value, cells[i].wx});
      out.push_back({p + ".wh", &cells[i].wh->value, cells[i].wh});
      out.push_back({p + ".bias", &cells[i].b->value, cells[i].b});
    }
  }
};

// Spec-driven layer, for stacks described in configs and checkpoints.
template <class S>
using Layer = std::variant<Conv1d<S>, Linear<S>, BatchNorm<S>, ActivationSpec, Lstm<S>>;

// Input feature count: channels for Conv1d, row width otherwise.
template <class S>
Layer<S> make_layer(const LayerSpec& spec, std::size_t input_features, Rng& rng) {
  return std::visit(
      [&](const auto& s) -> Layer<S> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv1dSpec>)
          return Conv1d<S>(s, input_features, rng);
        else if constexpr (std::is_same_v<T, LinearSpec>) {
          require(s.in == input_features, "Linear input size does not match the incoming width");
          return Linear<S>(s, rng);
        } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
          require(s.features == input_features, "BatchNorm features do not match the incoming width");
          return BatchNorm<S>(s);
        } else if constexpr (std::is_same_v<T, ActivationSpec>)
          return s;
        else
          return Lstm<S>(s, input_features, rng);
      },
      spec);
}

struct ForwardContext {
  std::size_t width{1};  // Conv1d: positions per signal (updated on return)
  std::size_t steps{1};  // LSTM: time steps
  std::size_t batch{1};  // LSTM: sequences
  bool training{false};
};

template <class S>
Var<S> forward_layer(Layer<S>& layer, const Var<S>& x, ForwardContext& ctx) {
  return std::visit(
      [&](auto& l) -> Var<S> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv1d<S>>) {
          auto y = l.forward(x, ctx.width);
          ctx.width = l.out_width(ctx.width);
          return y;
        } else if constexpr (std::is_same_v<T, Linear<S>>)
          return l.forward(x);
        else if constexpr (std::is_same_v<T, BatchNorm<S>>)
          return l.forward(x, ctx.training);
        else if constexpr (std::is_same_v<T, ActivationSpec>)
          return activate(l.kind, x);
        else
          return l.forward(x, ctx.steps, ctx.batch);
      },
      layer);
}

}  // namespace mdpose::nn
