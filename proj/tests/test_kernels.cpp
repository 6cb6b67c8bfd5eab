// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <vector>

#include "deqflow/kernels.hpp"
#include "doctest.h"

using namespace deqflow::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return v;
}

// Long-double references, independent of any backend.
long double ref_dot(const std::vector<double>& x, const std::vector<double>& y) {
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<long double>(x[i]) * y[i];
  return s;
}

}  // namespace

TEST_SUITE("kernels") {
TEST_CASE("scalar table is always available") {
  REQUIRE(table(Backend::Scalar) != nullptr);
  CHECK(table(detect()) != nullptr);
  CHECK(select(Backend::Scalar));
  CHECK(active() == Backend::Scalar);
  CHECK(select(detect()));
}

TEST_CASE("every compiled backend agrees with the scalar reference") {
  const Table* ref = table(Backend::Scalar);
  for (Backend b : {Backend::Avx2, Backend::Neon}) {
    const Table* t = table(b);
    if (!t) continue;
    CAPTURE(to_string(b));
    // Odd lengths exercise the vector tails.
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 1000u, 1023u}) {
      CAPTURE(n);
      const auto x = random_vec(n, 11 + n);
      const auto y = random_vec(n, 97 + n);

      std::vector<double> y1 = y, y2 = y;
      ref->axpy(0.37, x.data(), y1.data(), n);
      t->axpy(0.37, x.data(), y2.data(), n);
      CHECK(y1 == y2);  // bit-for-bit

      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
      const double tol = 1e-14 * (mag + 1.0);
      CHECK(std::abs(t->dot(x.data(), y.data(), n) - ref->dot(x.data(), y.data(), n)) <= tol);
      CHECK(std::abs(t->dot(x.data(), y.data(), n) - static_cast<double>(ref_dot(x, y))) <= tol);

      double ssd_mag = 0.0, sum_mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ssd_mag += (x[i] - y[i]) * (x[i] - y[i]);
        sum_mag += std::abs(x[i]);
      }
      CHECK(std::abs(t->sum_sq_diff(x.data(), y.data(), n) - ref->sum_sq_diff(x.data(), y.data(), n)) <=
            1e-14 * (ssd_mag + 1.0));
      CHECK(std::abs(t->sum(x.data(), n) - ref->sum(x.data(), n)) <= 1e-14 * (sum_mag + 1.0));
    }
  }
}

TEST_CASE("dispatching entry points follow select()") {
  const auto x = random_vec(37, 5);
  const auto y = random_vec(37, 6);
  REQUIRE(select(Backend::Scalar));
  const double a = dot(x.data(), y.data(), x.size());
  CHECK(a == table(Backend::Scalar)->dot(x.data(), y.data(), x.size()));
  REQUIRE(select(detect()));
  CHECK(dot(x.data(), y.data(), x.size()) == table(detect())->dot(x.data(), y.data(), x.size()));
}
}
