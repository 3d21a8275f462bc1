#pragma once

// In-place complex FFTs of arbitrary length, backed by FFTW. Only plan
// creation touches FFTW's global planner state, so it is serialized; the
// new-array execute calls are safe to run concurrently.

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <span>
#include <utility>

#include "mdpose/core/error.hpp"

namespace mdpose::fft {

using Complex = std::complex<double>;

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE);
    fftw_free(buf);
    if (!plan) throw InvalidInput("FFTW could not create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

inline void transform(std::span<Complex> data, int sign) {
  const std::size_t n = data.size();
  if (n == 0) return;
  fftw_plan plan = PlanCache::instance().get(n, sign);
  // Plans assume SIMD-aligned storage, so run on an fftw_malloc buffer.
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  std::memcpy(buf, data.data(), sizeof(fftw_complex) * n);
  fftw_execute_dft(plan, buf, buf);
  std::memcpy(data.data(), buf, sizeof(fftw_complex) * n);
  fftw_free(buf);
}

}  // namespace detail

// X[k] = sum_n x[n] exp(-j 2 pi k n / N)
inline void forward(std::span<Complex> data) { detail::transform(data, FFTW_FORWARD); }

// x[n] = (1/N) sum_k X[k] exp(+j 2 pi k n / N)
inline void inverse(std::span<Complex> data) {
  detail::transform(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

}  // namespace mdpose::fft
