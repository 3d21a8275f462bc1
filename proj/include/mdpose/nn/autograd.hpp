#pragma once

// Reverse-mode differentiation over a dynamically built graph. Each op
// returns a node holding its value and, while gradients are enabled, its
// parents and a closure that pushes the output gradient back to them.

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mdpose/nn/tensor.hpp"

namespace mdpose::nn {

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad{false};

  Tensor<S>& ensure_grad() {
    if (grad.data.size() != value.data.size()) grad = Tensor<S>(value.shape, S(0));
    return grad;
  }
};

template <class S>
using Var = std::shared_ptr<Node<S>>;

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : saved_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

template <class S>
Var<S> constant(Tensor<S> t) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(t);
  return n;
}

template <class S>
Var<S> parameter(Tensor<S> t) {
  auto n = constant(std::move(t));
  n->requires_grad = true;
  return n;
}

namespace detail {

template <class S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapR = Eigen::Map<MatR<S>>;
template <class S>
using CMapR = Eigen::Map<const MatR<S>>;

template <class S>
MapR<S> mat(Tensor<S>& t, std::size_t rows, std::size_t cols) {
  return MapR<S>(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class S>
CMapR<S> mat(const Tensor<S>& t, std::size_t rows, std::size_t cols) {
  return CMapR<S>(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class S>
MapR<S> mat(Tensor<S>& t) {
  return mat(t, t.rows(), t.cols());
}
template <class S>
CMapR<S> mat(const Tensor<S>& t) {
  return mat(t, t.rows(), t.cols());
}

// Wraps an op result; keeps the graph edge only when someone needs it.
template <class S>
Var<S> result(Tensor<S> value, std::vector<Var<S>> parents, std::function<void(Node<S>&)> fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (grad_mode()) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(fn);
    }
  }
  return n;
}

template <class S>
void same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  require(a->value.shape == b->value.shape, std::string(op) + ": shape mismatch " + shape_string(a->value.shape) +
                                                " vs " + shape_string(b->value.shape));
}

}  // namespace detail

// Accumulates d(root)/d(node) into every reachable node that requires it.
template <class S>
void backward(const Var<S>& root) {
  require(root && root->value.numel() == 1, "backward: root must be a scalar");
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad().data[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
  }
}

// ---- dense algebra ---------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  const auto R = a->value.rows(), K = a->value.cols(), N = b->value.cols();
  require(b->value.rows() == K, "matmul: inner dimensions differ");
  Tensor<S> y({R, N});
  detail::mat(y).noalias() = detail::mat(a->value) * detail::mat(b->value);
  return detail::result<S>(std::move(y), {a, b}, [a, b, R, K, N](Node<S>& self) {
    const auto g = detail::mat(self.grad, R, N);
    if (a->requires_grad) detail::mat(a->ensure_grad(), R, K).noalias() += g * detail::mat(b->value, K, N).transpose();
    if (b->requires_grad) detail::mat(b->ensure_grad(), K, N).noalias() += detail::mat(a->value, R, K).transpose() * g;
  });
}

// y = x W + b with W [in, out] and b [out] (b may be null).
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const auto R = x->value.rows(), I = x->value.cols(), O = w->value.cols();
  require(w->value.rows() == I, "linear: input width " + std::to_string(I) + " does not match weight rows " +
                                    std::to_string(w->value.rows()));
  require(!b || b->value.numel() == O, "linear: bias length mismatch");
  Tensor<S> y({R, O});
  auto Y = detail::mat(y);
  Y.noalias() = detail::mat(x->value) * detail::mat(w->value);
  if (b) Y.rowwise() += detail::mat(b->value, 1, O).row(0);
  std::vector<Var<S>> parents{x, w};
  if (b) parents.push_back(b);
  return detail::result<S>(std::move(y), parents, [x, w, b, R, I, O](Node<S>& self) {
    const auto g = detail::mat(self.grad, R, O);
    if (x->requires_grad) detail::mat(x->ensure_grad(), R, I).noalias() += g * detail::mat(w->value, I, O).transpose();
    if (w->requires_grad) detail::mat(w->ensure_grad(), I, O).noalias() += detail::mat(x->value, R, I).transpose() * g;
    if (b && b->requires_grad) detail::mat(b->ensure_grad(), 1, O) += g.colwise().sum();
  });
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::same_shape(a, b, "add");
  Tensor<S> y = a->value;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b->value[i];
  return detail::result<S>(std::move(y), {a, b}, [a, b](Node<S>& self) {
    for (auto* p : {&a, &b})
      if ((*p)->requires_grad) {
        auto& g = (*p)->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      }
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::same_shape(a, b, "sub");
  Tensor<S> y = a->value;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b->value[i];
  return detail::result<S>(std::move(y), {a, b}, [a, b](Node<S>& self) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::same_shape(a, b, "mul");
  Tensor<S> y = a->value;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b->value[i];
  return detail::result<S>(std::move(y), {a, b}, [a, b](Node<S>& self) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S k) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v *= k;
  return detail::result<S>(std::move(y), {a}, [a, k](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += k * self.grad[i];
  });
}

// ---- elementwise nonlinearities ---------------------------------------------

namespace detail {

template <class S, class F, class D>
Var<S> unary(const Var<S>& a, F f, D dfdy_x) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v = f(v);
  return result<S>(std::move(y), {a}, [a, dfdy_x](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * dfdy_x(self.value[i], a->value[i]);
  });
}

template <class S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

}  // namespace detail

template <class S>
Var<S> relu(const Var<S>& a) {
  return detail::unary(a, [](S x) { return x > S(0) ? x : S(0); }, [](S, S x) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
Var<S> tanh(const Var<S>& a) {
  return detail::unary(a, [](S x) { return std::tanh(x); }, [](S y, S) { return S(1) - y * y; });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  return detail::unary(a, [](S x) { return detail::sigmoid(x); }, [](S y, S) { return y * (S(1) - y); });
}

template <class S>
Var<S> abs(const Var<S>& a) {
  return detail::unary(
      a, [](S x) { return std::abs(x); }, [](S, S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

// ---- reductions ------------------------------------------------------------------

template <class S>
Var<S> sum(const Var<S>& a) {
  S acc = 0;
  for (S v : a->value.data) acc += v;
  return detail::result<S>(Tensor<S>({1}, std::vector<S>{acc}), {a}, [a](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (auto& v : g.data) v += self.grad[0];
  });
}

template <class S>
Var<S> mean(const Var<S>& a) {
  require(a->value.numel() > 0, "mean of an empty tensor");
  return scale(sum(a), S(1) / static_cast<S>(a->value.numel()));
}

// ---- shape ------------------------------------------------------------------------

template <class S>
Var<S> reshape(const Var<S>& a, std::vector<std::size_t> shape) {
  require(shape_numel(shape) == a->value.numel(), "reshape: element count changes");
  Tensor<S> y(std::move(shape), a->value.data);
  return detail::result<S>(std::move(y), {a}, [a](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

template <class S>
Var<S> slice_rows(const Var<S>& a, std::size_t r0, std::size_t r1) {
  const auto C = a->value.cols();
  require(r0 <= r1 && r1 <= a->value.rows(), "slice_rows: range outside tensor");
  Tensor<S> y({r1 - r0, C});
  std::copy(a->value.data.begin() + r0 * C, a->value.data.begin() + r1 * C, y.data.begin());
  return detail::result<S>(std::move(y), {a}, [a, r0, C](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[r0 * C + i] += self.grad[i];
  });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat_rows: nothing to join");
  const auto C = parts[0]->value.cols();
  std::size_t R = 0;
  for (const auto& p : parts) {
    require(p->value.cols() == C, "concat_rows: column counts differ");
    R += p->value.rows();
  }
  Tensor<S> y({R, C});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), y.data.begin() + off);
    off += p->value.numel();
  }
  return detail::result<S>(std::move(y), parts, [parts](Node<S>& self) {
    std::size_t o = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[o + i];
      }
      o += p->value.numel();
    }
  });
}

template <class S>
Var<S> slice_cols(const Var<S>& a, std::size_t c0, std::size_t c1) {
  const auto R = a->value.rows(), C = a->value.cols();
  require(c0 <= c1 && c1 <= C, "slice_cols: range outside tensor");
  const auto W = c1 - c0;
  Tensor<S> y({R, W});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < W; ++c) y[r * W + c] = a->value[r * C + c0 + c];
  return detail::result<S>(std::move(y), {a}, [a, R, C, W, c0](Node<S>& self) {
    auto& g = a->ensure_grad();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < W; ++c) g[r * C + c0 + c] += self.grad[r * W + c];
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat_cols: nothing to join");
  const auto R = parts[0]->value.rows();
  std::size_t C = 0;
  for (const auto& p : parts) {
    require(p->value.rows() == R, "concat_cols: row counts differ");
    C += p->value.cols();
  }
  Tensor<S> y({R, C});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const auto w = p->value.cols();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < w; ++c) y[r * C + c0 + c] = p->value[r * w + c];
    c0 += w;
  }
  return detail::result<S>(std::move(y), parts, [parts, R, C](Node<S>& self) {
    std::size_t o = 0;
    for (const auto& p : parts) {
      const auto w = p->value.cols();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * C + o + c];
      }
      o += w;
    }
  });
}

// ---- layers -----------------------------------------------------------------------------

// Cross-correlation along the width axis, channels last. x holds R*W_in rows
// of C_in values (R independent signals); w is [K*C_in, C_out] with row
// index k*C_in + ci. Result: R*W_out rows of C_out values.
template <class S>
Var<S> conv1d(const Var<S>& x, const Var<S>& w, const Var<S>& b, std::size_t width, std::size_t kernel,
              std::size_t stride, std::size_t padding) {
  const auto Cin = x->value.cols();
  require(width >= 1 && x->value.rows() % width == 0, "conv1d: rows are not a multiple of the input width");
  require(kernel >= 1 && stride >= 1, "conv1d: kernel and stride must be positive");
  require(width + 2 * padding >= kernel, "conv1d: input narrower than the kernel");
  require(w->value.rows() == kernel * Cin, "conv1d: weight rows must be kernel*channels");
  const auto Cout = w->value.cols();
  require(!b || b->value.numel() == Cout, "conv1d: bias length mismatch");
  const auto R = x->value.rows() / width;
  const auto Wout = (width + 2 * padding - kernel) / stride + 1;
  const auto KC = kernel * Cin;

  auto cols = std::make_shared<Tensor<S>>(std::vector<std::size_t>{R * Wout, KC});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t o = 0; o < Wout; ++o) {
      S* dst = cols->data.data() + (r * Wout + o) * KC;
      for (std::size_t k = 0; k < kernel; ++k) {
        const long pos = static_cast<long>(o * stride + k) - static_cast<long>(padding);
        if (pos < 0 || pos >= static_cast<long>(width)) continue;
        const S* src = x->value.data.data() + (r * width + static_cast<std::size_t>(pos)) * Cin;
        std::copy(src, src + Cin, dst + k * Cin);
      }
    }
  Tensor<S> y({R * Wout, Cout});
  auto Y = detail::mat(y);
  Y.noalias() = detail::mat(*cols) * detail::mat(w->value);
  if (b) Y.rowwise() += detail::mat(b->value, 1, Cout).row(0);
  std::vector<Var<S>> parents{x, w};
  if (b) parents.push_back(b);
  return detail::result<S>(
      std::move(y), parents, [x, w, b, cols, R, Wout, KC, Cin, Cout, width, kernel, stride, padding](Node<S>& self) {
        const auto g = detail::mat(self.grad, R * Wout, Cout);
        if (w->requires_grad) detail::mat(w->ensure_grad(), KC, Cout).noalias() += detail::mat(*cols).transpose() * g;
        if (b && b->requires_grad) detail::mat(b->ensure_grad(), 1, Cout) += g.colwise().sum();
        if (x->requires_grad) {
          detail::MatR<S> gcols = g * detail::mat(w->value, KC, Cout).transpose();
          auto& gx = x->ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t o = 0; o < Wout; ++o) {
              const S* src = gcols.data() + (r * Wout + o) * KC;
              for (std::size_t k = 0; k < kernel; ++k) {
                const long pos = static_cast<long>(o * stride + k) - static_cast<long>(padding);
                if (pos < 0 || pos >= static_cast<long>(width)) continue;
                S* dst = gx.data.data() + (r * width + static_cast<std::size_t>(pos)) * Cin;
                for (std::size_t c = 0; c < Cin; ++c) dst[c] += src[k * Cin + c];
              }
            }
        }
      });
}

template <class S>
struct BatchNormStats {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  S momentum{S(0.1)};
  S eps{S(1e-5)};
};

// Normalizes each column over the rows. Training uses batch statistics and
// updates the running ones; inference is the affine map of the running ones.
template <class S>
Var<S> batchnorm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, BatchNormStats<S>& st, bool training) {
  const auto N = x->value.rows(), C = x->value.cols();
  require(gamma->value.numel() == C && beta->value.numel() == C, "batchnorm: feature count mismatch");
  require(st.running_mean.numel() == C && st.running_var.numel() == C, "batchnorm: running stats mismatch");
  Tensor<S> y({N, C});
  if (!training) {
    std::vector<S> a(C), c(C);
    for (std::size_t j = 0; j < C; ++j) {
      a[j] = gamma->value[j] / std::sqrt(st.running_var[j] + st.eps);
      c[j] = beta->value[j] - a[j] * st.running_mean[j];
    }
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < C; ++j) y[i * C + j] = a[j] * x->value[i * C + j] + c[j];
    std::vector<S> rm = st.running_mean.data, rs(C);
    for (std::size_t j = 0; j < C; ++j) rs[j] = std::sqrt(st.running_var[j] + st.eps);
    return detail::result<S>(std::move(y), {x, gamma, beta}, [x, gamma, beta, a, rm, rs, N, C](Node<S>& self) {
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < C; ++j) {
          const S g = self.grad[i * C + j];
          const S xhat = (x->value[i * C + j] - rm[j]) / rs[j];
          if (x->requires_grad) x->ensure_grad()[i * C + j] += g * a[j];
          if (gamma->requires_grad) gamma->ensure_grad()[j] += g * xhat;
          if (beta->requires_grad) beta->ensure_grad()[j] += g;
        }
    });
  }
  require(N >= 1, "batchnorm: empty batch");
  std::vector<S> mu(C, S(0)), var(C, S(0));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < C; ++j) mu[j] += x->value[i * C + j];
  for (auto& m : mu) m /= static_cast<S>(N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      const S d = x->value[i * C + j] - mu[j];
      var[j] += d * d;
    }
  for (auto& v : var) v /= static_cast<S>(N);
  auto xhat = std::make_shared<std::vector<S>>(N * C);
  std::vector<S> inv(C);
  for (std::size_t j = 0; j < C; ++j) inv[j] = S(1) / std::sqrt(var[j] + st.eps);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      const S h = (x->value[i * C + j] - mu[j]) * inv[j];
      (*xhat)[i * C + j] = h;
      y[i * C + j] = gamma->value[j] * h + beta->value[j];
    }
  const S unbias = N > 1 ? static_cast<S>(N) / static_cast<S>(N - 1) : S(1);
  for (std::size_t j = 0; j < C; ++j) {
    st.running_mean[j] = (S(1) - st.momentum) * st.running_mean[j] + st.momentum * mu[j];
    st.running_var[j] = (S(1) - st.momentum) * st.running_var[j] + st.momentum * var[j] * unbias;
  }
  return detail::result<S>(std::move(y), {x, gamma, beta}, [x, gamma, beta, xhat, inv, N, C](Node<S>& self) {
    std::vector<S> gsum(C, S(0)), gxh(C, S(0));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const S g = self.grad[i * C + j];
        gsum[j] += g;
        gxh[j] += g * (*xhat)[i * C + j];
      }
    if (gamma->requires_grad) {
      auto& gg = gamma->ensure_grad();
      for (std::size_t j = 0; j < C; ++j) gg[j] += gxh[j];
    }
    if (beta->requires_grad) {
      auto& gb = beta->ensure_grad();
      for (std::size_t j = 0; j < C; ++j) gb[j] += gsum[j];
    }
    if (x->requires_grad) {
      auto& gx = x->ensure_grad();
      const S n = static_cast<S>(N);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < C; ++j) {
          const S g = self.grad[i * C + j];
          gx[i * C + j] += gamma->value[j] * inv[j] * (g - gsum[j] / n - (*xhat)[i * C + j] * gxh[j] / n);
        }
    }
  });
}

// One LSTM step. gates = x Wx + h Wh + b, laid out [i | f | g | o] per row.
// Returns [h | c].
template <class S>
Var<S> lstm_cell(const Var<S>& gates, const Var<S>& c_prev) {
  const auto B = gates->value.rows(), H = c_prev->value.cols();
  require(gates->value.cols() == 4 * H && c_prev->value.rows() == B, "lstm_cell: gate/state shape mismatch");
  Tensor<S> y({B, 2 * H});
  auto act = std::make_shared<std::vector<S>>(B * 5 * H);  // i f g o tanh(c)
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t k = 0; k < H; ++k) {
      const S* a = gates->value.data.data() + r * 4 * H;
      const S i = detail::sigmoid(a[k]);
      const S f = detail::sigmoid(a[H + k]);
      const S g = std::tanh(a[2 * H + k]);
      const S o = detail::sigmoid(a[3 * H + k]);
      const S c = f * c_prev->value[r * H + k] + i * g;
      const S tc = std::tanh(c);
      S* s = act->data() + r * 5 * H;
      s[k] = i, s[H + k] = f, s[2 * H + k] = g, s[3 * H + k] = o, s[4 * H + k] = tc;
      y[r * 2 * H + k] = o * tc;
      y[r * 2 * H + H + k] = c;
    }
  return detail::result<S>(std::move(y), {gates, c_prev}, [gates, c_prev, act, B, H](Node<S>& self) {
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t k = 0; k < H; ++k) {
        const S* s = act->data() + r * 5 * H;
        const S i = s[k], f = s[H + k], g = s[2 * H + k], o = s[3 * H + k], tc = s[4 * H + k];
        const S gh = self.grad[r * 2 * H + k];
        const S dc = self.grad[r * 2 * H + H + k] + gh * o * (S(1) - tc * tc);
        if (gates->requires_grad) {
          S* ga = gates->ensure_grad().data.data() + r * 4 * H;
          ga[k] += dc * g * i * (S(1) - i);
          ga[H + k] += dc * c_prev->value[r * H + k] * f * (S(1) - f);
          ga[2 * H + k] += dc * i * (S(1) - g * g);
          ga[3 * H + k] += gh * tc * o * (S(1) - o);
        }
        if (c_prev->requires_grad) c_prev->ensure_grad()[r * H + k] += dc * f;
      }
  });
}

// Fused recurrent step: gates = proj[rows t*B .. (t+1)*B) + h_prev Wh, then
// the cell above. prev is the previous step's [h | c] (null at the first
// step, meaning h = c = 0). Same math as slice_rows + matmul + add +
// lstm_cell, one graph node instead of four or more.
template <class S>
Var<S> lstm_step(const Var<S>& proj, std::size_t t, std::size_t B, const Var<S>& prev, const Var<S>& wh) {
  const auto H = wh->value.rows();
  require(wh->value.cols() == 4 * H, "lstm_step: Wh must be [H, 4H]");
  require(proj->value.cols() == 4 * H && (t + 1) * B <= proj->value.rows(), "lstm_step: projection shape mismatch");
  require(!prev || (prev->value.rows() == B && prev->value.cols() == 2 * H), "lstm_step: state shape mismatch");
  using Strided = Eigen::Map<const detail::MatR<S>, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<detail::MatR<S>, 0, Eigen::OuterStride<>>;
  const auto Bi = static_cast<Eigen::Index>(B), Hi = static_cast<Eigen::Index>(H);
  detail::MatR<S> gates = detail::mat(proj->value).middleRows(static_cast<Eigen::Index>(t * B), Bi);
  if (prev) gates.noalias() += Strided(prev->value.data.data(), Bi, Hi, Eigen::OuterStride<>(2 * Hi)) * detail::mat(wh->value);

  Tensor<S> y({B, 2 * H});
  auto act = std::make_shared<std::vector<S>>(B * 5 * H);  // i f g o tanh(c)
  for (std::size_t r = 0; r < B; ++r) {
    const S* a = gates.data() + r * 4 * H;
    S* st = act->data() + r * 5 * H;
    for (std::size_t k = 0; k < H; ++k) {
      const S i = detail::sigmoid(a[k]);
      const S f = detail::sigmoid(a[H + k]);
      const S g = std::tanh(a[2 * H + k]);
      const S o = detail::sigmoid(a[3 * H + k]);
      const S cp = prev ? prev->value[r * 2 * H + H + k] : S(0);
      const S c = f * cp + i * g;
      const S tc = std::tanh(c);
      st[k] = i, st[H + k] = f, st[2 * H + k] = g, st[3 * H + k] = o, st[4 * H + k] = tc;
      y[r * 2 * H + k] = o * tc;
      y[r * 2 * H + H + k] = c;
    }
  }
  std::vector<Var<S>> parents{proj, wh};
  if (prev) parents.push_back(prev);
  return detail::result<S>(std::move(y), parents, [proj, prev, wh, act, t, B, H, Bi, Hi](Node<S>& self) {
    detail::MatR<S> dg(Bi, 4 * Hi);
    for (std::size_t r = 0; r < B; ++r) {
      const S* st = act->data() + r * 5 * H;
      S* ga = dg.data() + r * 4 * H;
      for (std::size_t k = 0; k < H; ++k) {
        const S i = st[k], f = st[H + k], g = st[2 * H + k], o = st[3 * H + k], tc = st[4 * H + k];
        const S gh = self.grad[r * 2 * H + k];
        const S dc = self.grad[r * 2 * H + H + k] + gh * o * (S(1) - tc * tc);
        const S cp = prev ? prev->value[r * 2 * H + H + k] : S(0);
        ga[k] = dc * g * i * (S(1) - i);
        ga[H + k] = dc * cp * f * (S(1) - f);
        ga[2 * H + k] = dc * i * (S(1) - g * g);
        ga[3 * H + k] = gh * tc * o * (S(1) - o);
        if (prev && prev->requires_grad) prev->ensure_grad()[r * 2 * H + H + k] += dc * f;
      }
    }
    if (proj->requires_grad) detail::mat(proj->ensure_grad()).middleRows(static_cast<Eigen::Index>(t * B), Bi) += dg;
    if (!prev) return;
    const Strided h(prev->value.data.data(), Bi, Hi, Eigen::OuterStride<>(2 * Hi));
    if (wh->requires_grad) detail::mat(wh->ensure_grad()).noalias() += h.transpose() * dg;
    if (prev->requires_grad) {
      StridedMut gh(prev->ensure_grad().data.data(), Bi, Hi, Eigen::OuterStride<>(2 * Hi));
      gh.noalias() += dg * detail::mat(wh->value).transpose();
    }
  });
}

// Stacks columns [c0, c1) of every part by rows: the hidden halves of a run
// of lstm_step outputs.
template <class S>
Var<S> concat_rows_of_cols(const std::vector<Var<S>>& parts, std::size_t c0, std::size_t c1) {
  require(!parts.empty(), "concat_rows_of_cols: nothing to join");
  const auto C = parts[0]->value.cols();
  require(c0 <= c1 && c1 <= C, "concat_rows_of_cols: range outside tensor");
  const auto W = c1 - c0;
  std::size_t R = 0;
  for (const auto& p : parts) {
    require(p->value.cols() == C, "concat_rows_of_cols: column counts differ");
    R += p->value.rows();
  }
  Tensor<S> y({R, W});
  std::size_t row = 0;
  for (const auto& p : parts)
    for (std::size_t r = 0; r < p->value.rows(); ++r, ++row)
      std::copy_n(p->value.data.begin() + r * C + c0, W, y.data.begin() + row * W);
  return detail::result<S>(std::move(y), parts, [parts, C, W, c0](Node<S>& self) {
    std::size_t row = 0;
    for (const auto& p : parts) {
      const auto rows = p->value.rows();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < W; ++c) g[r * C + c0 + c] += self.grad[(row + r) * W + c];
      }
      row += rows;
    }
  });
}

// ---- losses ----------------------------------------------------------------------------

// sum |pred - target| / divisor
template <class S>
Var<S> l1_loss(const Var<S>& pred, const Tensor<S>& target, S divisor) {
  require(pred->value.shape == target.shape, "l1_loss: shape mismatch");
  require(divisor > S(0), "l1_loss: divisor must be positive");
  S acc = 0;
  for (std::size_t i = 0; i < target.numel(); ++i) acc += std::abs(pred->value[i] - target[i]);
  auto t = std::make_shared<Tensor<S>>(target);
  return detail::result<S>(Tensor<S>({1}, std::vector<S>{acc / divisor}), {pred}, [pred, t, divisor](Node<S>& self) {
    auto& g = pred->ensure_grad();
    const S k = self.grad[0] / divisor;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const S d = pred->value[i] - (*t)[i];
      g[i] += d > S(0) ? k : (d < S(0) ? -k : S(0));
    }
  });
}

// Mean over rows and 3-vector groups of (1 - cos(p, t)) + (1 - |p|)^2. The
// cosine term is dropped where t is zero and counts as 1 where |p| ~ 0.
template <class S>
Var<S> direction_loss(const Var<S>& pred, const Tensor<S>& truth) {
  require(pred->value.shape == truth.shape, "direction_loss: shape mismatch");
  require(truth.cols() % 3 == 0, "direction_loss: width must be a multiple of 3");
  const auto R = truth.rows(), J = truth.cols() / 3;
  const S denom = static_cast<S>(R * J);
  S acc = 0;
  for (std::size_t v = 0; v < R * J; ++v) {
    const S* p = pred->value.data.data() + 3 * v;
    const S* t = truth.data.data() + 3 * v;
    const S pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    const S tn = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
    acc += (S(1) - pn) * (S(1) - pn);
    if (tn > S(0)) acc += pn < S(1e-12) ? S(1) : S(1) - (p[0] * t[0] + p[1] * t[1] + p[2] * t[2]) / (pn * tn);
  }
  auto tt = std::make_shared<Tensor<S>>(truth);
  return detail::result<S>(Tensor<S>({1}, std::vector<S>{acc / denom}), {pred}, [pred, tt, R, J, denom](Node<S>& self) {
    auto& g = pred->ensure_grad();
    const S k = self.grad[0] / denom;
    for (std::size_t v = 0; v < R * J; ++v) {
      const S* p = pred->value.data.data() + 3 * v;
      const S* t = tt->data.data() + 3 * v;
      const S pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      const S tn = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
      if (pn < S(1e-12)) continue;
      const S dot = p[0] * t[0] + p[1] * t[1] + p[2] * t[2];
      for (int a = 0; a < 3; ++a) {
        S d = S(-2) * (S(1) - pn) * p[a] / pn;
        if (tn > S(0)) d -= t[a] / (pn * tn) - dot * p[a] / (pn * pn * pn * tn);
        g[3 * v + a] += k * d;
      }
    }
  });
}

}  // namespace mdpose::nn
