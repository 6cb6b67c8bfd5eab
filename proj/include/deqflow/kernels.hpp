// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Data-parallel inner loops used by convolutions, spectral code and metrics.
// A portable scalar reference is always compiled; wider variants are picked
// once at startup from the CPU's feature bits. All variants must agree with
// the scalar path: axpy/scale bit-for-bit, reductions to rounding.

namespace deqflow::kernels {

enum class Backend { Scalar, Avx2, Neon };

const char* to_string(Backend b) noexcept;

/// Best backend the running CPU supports.
Backend detect() noexcept;

/// Backend currently used by the dispatching entry points below.
Backend active() noexcept;

/// Override dispatch (tests, DEQFLOW_SIMD=scalar). Returns false and leaves
/// the active backend unchanged if `b` is unavailable on this CPU.
bool select(Backend b) noexcept;

/// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n) noexcept;

/// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n) noexcept;

/// sum_i (x[i] - y[i])^2
double sum_sq_diff(const double* x, const double* y, std::size_t n) noexcept;

/// sum_i x[i]
double sum(const double* x, std::size_t n) noexcept;

struct Table {
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
  double (*sum_sq_diff)(const double*, const double*, std::size_t) noexcept;
  double (*sum)(const double*, std::size_t) noexcept;
};

/// Direct access to one backend's table, for equivalence testing.
/// Returns nullptr when that backend was not compiled in or is unsupported.
const Table* table(Backend b) noexcept;

}  // namespace deqflow::kernels
