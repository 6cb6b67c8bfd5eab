// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace deqflow::kernels {

namespace scalar {
double dot(const double* x, const double* y, std::size_t n) noexcept;
void axpy(double a, const double* x, double* y, std::size_t n) noexcept;
double sum_sq_diff(const double* x, const double* y, std::size_t n) noexcept;
double sum(const double* x, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
double dot(const double* x, const double* y, std::size_t n) noexcept;
void axpy(double a, const double* x, double* y, std::size_t n) noexcept;
double sum_sq_diff(const double* x, const double* y, std::size_t n) noexcept;
double sum(const double* x, std::size_t n) noexcept;
}  // namespace avx2

namespace neon {
double dot(const double* x, const double* y, std::size_t n) noexcept;
void axpy(double a, const double* x, double* y, std::size_t n) noexcept;
double sum_sq_diff(const double* x, const double* y, std::size_t n) noexcept;
double sum(const double* x, std::size_t n) noexcept;
}  // namespace neon

}  // namespace deqflow::kernels
