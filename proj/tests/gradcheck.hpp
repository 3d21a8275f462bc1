#pragma once

// Central finite-difference checks for the nn ops, in double precision.

#include <functional>
#include <string>
#include <vector>

#include "mdpose/core/rng.hpp"
#include "mdpose/nn/layers.hpp"

namespace mdpose::testing {

using nn::Tensor;
using nn::Var;
using D = double;

struct GradCheckResult {
  double worst_tensor_rel{0.0};
  double worst_element_excess{0.0};  // max |a-n| / max(1,|a|,|n|)
  bool ok(double tol = 1e-4) const { return worst_tensor_rel <= tol && worst_element_excess <= tol; }
};

inline Tensor<D> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values in [-hi, -gap] U [gap, hi], keeping kinks out of the stencil.
inline Tensor<D> random_away_from_zero(std::vector<std::size_t> shape, Rng& rng, double gap = 0.05, double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(gap, hi);
  return t;
}

// Scalar probe of an arbitrary output: sum(y * R) for fixed random R.
inline Var<D> probe(const Var<D>& y, std::uint64_t seed) {
  Rng rng(seed);
  return nn::sum(nn::mul(y, nn::constant(random_tensor(y->value.shape, rng))));
}

// loss_fn rebuilds the graph from the current values of `inputs`.
inline GradCheckResult grad_check(const std::function<Var<D>()>& loss_fn, const std::vector<Var<D>>& inputs,
                                  double h = 1e-5) {
  for (const auto& v : inputs) {
    v->requires_grad = true;
    v->grad = Tensor<D>();
  }
  nn::backward(loss_fn());
  GradCheckResult r;
  for (const auto& v : inputs) {
    const Tensor<D> analytic = v->grad.data.empty() ? Tensor<D>(v->value.shape, 0.0) : v->grad;
    double diff2 = 0, an2 = 0, nu2 = 0;
    for (std::size_t i = 0; i < v->value.numel(); ++i) {
      const double saved = v->value[i];
      v->value[i] = saved + h;
      double up, down;
      {
        nn::NoGradGuard ng;
        up = loss_fn()->value[0];
        v->value[i] = saved - h;
        down = loss_fn()->value[0];
      }
      v->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i];
      diff2 += (a - numeric) * (a - numeric);
      an2 += a * a;
      nu2 += numeric * numeric;
      r.worst_element_excess =
          std::max(r.worst_element_excess, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
    const double scale = std::max({std::sqrt(an2), std::sqrt(nu2), 1e-12});
    r.worst_tensor_rel = std::max(r.worst_tensor_rel, std::sqrt(diff2) / scale);
  }
  return r;
}

// One gradient check per layer type, with shapes modeled on the two networks.
struct LayerCheck {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

inline std::vector<LayerCheck> layer_checks() {
  std::vector<LayerCheck> checks;
  checks.push_back({"Conv1d_k5_s2", [](std::uint64_t seed) {
                      Rng rng(seed);
                      const std::size_t R = 3, W = 13, C = 4;
                      nn::Conv1d<D> conv({6, 5, 2, 0}, C, rng);
                      auto x = nn::parameter(random_tensor({R * W, C}, rng));
                      return grad_check([&] { return probe(conv.forward(x, W), seed); }, {x, conv.w, conv.b});
                    }});
  checks.push_back({"Conv1d_padded", [](std::uint64_t seed) {
                      Rng rng(seed);
                      const std::size_t R = 2, W = 9, C = 1;
                      nn::Conv1d<D> conv({3, 5, 1, 2}, C, rng);
                      auto x = nn::parameter(random_tensor({R * W, C}, rng));
                      return grad_check([&] { return probe(conv.forward(x, W), seed); }, {x, conv.w, conv.b});
                    }});
  checks.push_back({"Linear", [](std::uint64_t seed) {
                      Rng rng(seed);
                      nn::Linear<D> lin({7, 5, true}, rng);
                      auto x = nn::parameter(random_tensor({4, 7}, rng));
                      return grad_check([&] { return probe(lin.forward(x), seed); }, {x, lin.w, lin.b});
                    }});
  checks.push_back({"BatchNorm_train", [](std::uint64_t seed) {
                      Rng rng(seed);
                      nn::BatchNorm<D> bn({5});
                      bn.gamma->value = random_tensor({5}, rng, 0.5, 1.5);
                      bn.beta->value = random_tensor({5}, rng);
                      auto x = nn::parameter(random_tensor({6, 5}, rng, -2, 2));
                      return grad_check([&] { return probe(bn.forward(x, true), seed); }, {x, bn.gamma, bn.beta});
                    }});
  checks.push_back({"BatchNorm_eval", [](std::uint64_t seed) {
                      Rng rng(seed);
                      nn::BatchNorm<D> bn({5});
                      bn.stats.running_mean = random_tensor({5}, rng);
                      bn.stats.running_var = random_tensor({5}, rng, 0.5, 2.0);
                      auto x = nn::parameter(random_tensor({6, 5}, rng));
                      return grad_check([&] { return probe(bn.forward(x, false), seed); }, {x, bn.gamma, bn.beta});
                    }});
  checks.push_back({"ReLU", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto x = nn::parameter(random_away_from_zero({5, 6}, rng));
                      return grad_check([&] { return probe(nn::relu(x), seed); }, {x});
                    }});
  checks.push_back({"Tanh", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto x = nn::parameter(random_tensor({5, 6}, rng, -2, 2));
                      return grad_check([&] { return probe(nn::tanh(x), seed); }, {x});
                    }});
  checks.push_back({"Sigmoid", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto x = nn::parameter(random_tensor({5, 6}, rng, -3, 3));
                      return grad_check([&] { return probe(nn::sigmoid(x), seed); }, {x});
                    }});
  checks.push_back({"LSTM_cell", [](std::uint64_t seed) {
                      Rng rng(seed);
                      const std::size_t B = 3, H = 4;
                      auto g = nn::parameter(random_tensor({B, 4 * H}, rng, -2, 2));
                      auto c = nn::parameter(random_tensor({B, H}, rng));
                      return grad_check([&] { return probe(nn::lstm_cell(g, c), seed); }, {g, c}, 1e-3);
                    }});
  checks.push_back({"LSTM_step", [](std::uint64_t seed) {
                      Rng rng(seed);
                      const std::size_t T = 3, B = 2, H = 3;
                      auto proj = nn::parameter(random_tensor({T * B, 4 * H}, rng, -2, 2));
                      auto prev = nn::parameter(random_tensor({B, 2 * H}, rng));
                      auto wh = nn::parameter(random_tensor({H, 4 * H}, rng));
                      return grad_check([&] { return probe(nn::lstm_step(proj, 1, B, prev, wh), seed); },
                                        {proj, prev, wh}, 1e-3);
                    }});
  checks.push_back({"LSTM_bidirectional_2layer", [](std::uint64_t seed) {
                      Rng rng(seed);
                      const std::size_t T = 4, B = 2, F = 3;
                      nn::Lstm<D> lstm({3, 2, true}, F, rng);
                      auto x = nn::parameter(random_tensor({T * B, F}, rng));
                      std::vector<Var<D>> in{x};
                      for (auto& c : lstm.cells) in.insert(in.end(), {c.wx, c.wh, c.b});
                      return grad_check([&] { return probe(lstm.forward(x, T, B), seed); }, in);
                    }});
  checks.push_back({"L1_loss", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto x = nn::parameter(random_tensor({4, 6}, rng));
                      Tensor<D> t = x->value;
                      for (auto& v : t.data) v += (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 1.0);
                      return grad_check([&] { return nn::l1_loss(x, t, 7.0); }, {x});
                    }});
  checks.push_back({"Direction_loss", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto x = nn::parameter(random_away_from_zero({3, 9}, rng, 0.2));
                      Tensor<D> t = random_tensor({3, 9}, rng);
                      for (std::size_t v = 0; v < 9; ++v) {
                        double* p = t.data.data() + 3 * v;
                        const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                        for (int a = 0; a < 3; ++a) p[a] = v % 4 == 0 ? 0.0 : p[a] / n;
                      }
                      return grad_check([&] { return nn::direction_loss(x, t); }, {x});
                    }});
  checks.push_back({"Slice_concat", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto a = nn::parameter(random_tensor({4, 5}, rng));
                      auto b = nn::parameter(random_tensor({4, 3}, rng));
                      return grad_check(
                          [&] {
                            auto y = nn::concat_cols<D>({nn::slice_cols(a, 1, 4), b});
                            auto z = nn::concat_rows<D>({nn::slice_rows(y, 2, 4), y});
                            return probe(nn::tanh(z), seed);
                          },
                          {a, b});
                    }});
  checks.push_back({"Matmul_elementwise", [](std::uint64_t seed) {
                      Rng rng(seed);
                      auto a = nn::parameter(random_tensor({3, 4}, rng));
                      auto b = nn::parameter(random_tensor({4, 2}, rng));
                      auto c = nn::parameter(random_tensor({3, 2}, rng));
                      return grad_check(
                          [&] {
                            auto y = nn::matmul(a, b);
                            return nn::mean(nn::abs(nn::sub(nn::mul(y, c), nn::scale(nn::add(y, c), 0.3))));
                          },
                          {a, b, c});
                    }});
  return checks;
}

}  // namespace mdpose::testing
