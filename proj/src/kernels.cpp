// SPDX-License-Identifier: Apache-2.0
#include "deqflow/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace deqflow::kernels {

namespace {

constexpr Table kScalar{scalar::dot, scalar::axpy, scalar::sum_sq_diff, scalar::sum};
#if defined(DEQFLOW_HAVE_AVX2)
constexpr Table kAvx2{avx2::dot, avx2::axpy, avx2::sum_sq_diff, avx2::sum};
#endif
#if defined(DEQFLOW_HAVE_NEON)
constexpr Table kNeon{neon::dot, neon::axpy, neon::sum_sq_diff, neon::sum};
#endif

bool supported(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(DEQFLOW_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(DEQFLOW_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("DEQFLOW_SIMD"); env && std::strcmp(env, "scalar") == 0) {
    return Backend::Scalar;
  }
  return detect();
}

std::atomic<const Table*>& current() noexcept {
  static std::atomic<const Table*> t{table(initial_backend())};
  return t;
}

}  // namespace

const char* to_string(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

Backend detect() noexcept {
  if (supported(Backend::Avx2)) return Backend::Avx2;
  if (supported(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

const Table* table(Backend b) noexcept {
  if (!supported(b)) return nullptr;
  switch (b) {
    case Backend::Scalar: return &kScalar;
#if defined(DEQFLOW_HAVE_AVX2)
    case Backend::Avx2: return &kAvx2;
#endif
#if defined(DEQFLOW_HAVE_NEON)
    case Backend::Neon: return &kNeon;
#endif
    default: return nullptr;
  }
}

Backend active() noexcept {
  const Table* t = current().load(std::memory_order_relaxed);
#if defined(DEQFLOW_HAVE_AVX2)
  if (t == &kAvx2) return Backend::Avx2;
#endif
#if defined(DEQFLOW_HAVE_NEON)
  if (t == &kNeon) return Backend::Neon;
#endif
  (void)t;
  return Backend::Scalar;
}

bool select(Backend b) noexcept {
  const Table* t = table(b);
  if (!t) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

double dot(const double* x, const double* y, std::size_t n) noexcept {
  return current().load(std::memory_order_relaxed)->dot(x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) noexcept {
  current().load(std::memory_order_relaxed)->axpy(a, x, y, n);
}

double sum_sq_diff(const double* x, const double* y, std::size_t n) noexcept {
  return current().load(std::memory_order_relaxed)->sum_sq_diff(x, y, n);
}

double sum(const double* x, std::size_t n) noexcept {
  return current().load(std::memory_order_relaxed)->sum(x, n);
}

}  // namespace deqflow::kernels
