#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mdpose/core/error.hpp"

namespace mdpose::nn {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

// Dense row-major tensor. Most ops read it as a matrix whose columns are the
// last dimension.
template <class S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, S fill = S(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == shape_numel(shape), "tensor data does not match shape " + shape_string(shape));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }
  S& operator[](std::size_t i) { return data[i]; }
  const S& operator[](std::size_t i) const { return data[i]; }
  S& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const S& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const {
    for (const S& v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <class S>
Tensor<S> matrix(std::size_t rows, std::size_t cols, std::vector<S> values) {
  return Tensor<S>({rows, cols}, std::move(values));
}

}  // namespace mdpose::nn
