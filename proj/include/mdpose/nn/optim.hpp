#pragma once

#include <cmath>
#include <vector>

#include "mdpose/nn/autograd.hpp"

namespace mdpose::nn {

template <class S>
void zero_grad(const std::vector<Var<S>>& params) {
  for (const auto& p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), S(0));
}

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before scaling.
template <class S>
double clip_grad_norm(const std::vector<Var<S>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (S g : p->grad.data) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto k = static_cast<S>(max_norm / norm);
    for (const auto& p : params)
      for (S& g : p->grad.data) g *= k;
  }
  return norm;
}

template <class S>
struct AdamState {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
  std::vector<Tensor<S>> m, v;
  long step{0};
};

// Bias-corrected Adam. Missing gradients count as zero.
template <class S>
void adam_step(AdamState<S>& st, const std::vector<Var<S>>& params) {
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p->value.shape, S(0));
      st.v.emplace_back(p->value.shape, S(0));
    }
  }
  require(st.m.size() == params.size(), "adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(st.m[i].shape == params[i]->value.shape, "adam_step: moment shape differs from parameter");
    const auto& g = params[i]->grad;
    require(g.data.empty() || g.shape == params[i]->value.shape, "adam_step: gradient shape differs from parameter");
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.data;
    const auto& g = params[i]->grad.data;
    auto& m = st.m[i].data;
    auto& v = st.v[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : double(g[k]);
      m[k] = static_cast<S>(st.beta1 * double(m[k]) + (1.0 - st.beta1) * gk);
      v[k] = static_cast<S>(st.beta2 * double(v[k]) + (1.0 - st.beta2) * gk * gk);
      const double mh = double(m[k]) / c1, vh = double(v[k]) / c2;
      w[k] = static_cast<S>(double(w[k]) - st.lr * mh / (std::sqrt(vh) + st.eps));
    }
  }
}

}  // namespace mdpose::nn
