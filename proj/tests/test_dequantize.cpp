// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>

#include "deqflow/dequantize.hpp"
#include "deqflow/error.hpp"
#include "doctest.h"

using namespace deqflow;

namespace {

CodeChunk constant_codes(int code, std::size_t n) {
  CodeChunk c;
  c.codes.assign(n, code);
  return c;
}

std::vector<Tensor> levels(const std::vector<CodeChunk>& cs) {
  std::vector<Tensor> out;
  for (const auto& c : cs) {
    Tensor t(1, static_cast<int>(c.codes.size()));
    for (std::size_t i = 0; i < c.codes.size(); ++i) t.data[i] = code_to_level(c.codes[i], c.bits);
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_SUITE("dequantize") {
TEST_CASE("scheme validation and names") {
  DequantScheme s;
  s.K = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.K = 1;
  s.var_floor = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  for (auto k : {SchemeKind::None, SchemeKind::Uniform, SchemeKind::Gaussian, SchemeKind::Variational}) {
    CHECK(scheme_kind_from_string(to_string(k)) == k);
  }
  CHECK(squash_from_string("sigmoid") == Squash::Sigmoid);
  CHECK_THROWS_AS(scheme_kind_from_string("bogus"), Error);
}

TEST_CASE("uniform: every sample stays inside its own bin") {
  std::vector<CodeChunk> cs = {constant_codes(3, 500), constant_codes(200, 500)};
  for (int K : {1, 3, 10}) {
    const DequantOutput o = dequant_uniform_iw(cs, K, CounterRng(5, 0));
    for (std::size_t e = 0; e < cs.size(); ++e) {
      for (std::size_t i = 0; i < cs[e].codes.size(); ++i) {
        const double y_code = (o.y[e].data[i] + 1.0) * 128.0;
        CHECK(y_code >= cs[e].codes[i]);
        CHECK(y_code < cs[e].codes[i] + 1);
      }
      CHECK(o.noise_logq[e] == 0.0);
    }
  }
}

TEST_CASE("uniform: moments of the averaged noise") {
  const CodeChunk c = constant_codes(0, 100000);
  for (int K : {1, 10}) {
    const DequantOutput o = dequant_uniform_iw({c}, K, CounterRng(17, 1));
    double m = 0.0, v = 0.0;
    for (double y : o.y[0].data) m += (y + 1.0) * 128.0;
    m /= 1e5;
    for (double y : o.y[0].data) v += std::pow((y + 1.0) * 128.0 - m, 2);
    v /= 1e5;
    CAPTURE(K);
    CHECK(std::abs(m - 0.5) < 0.01);
    CHECK(std::abs(v - 1.0 / (12.0 * K)) < 0.1 / (12.0 * K));
  }
}

TEST_CASE("uniform: same seed, same noise") {
  std::vector<CodeChunk> cs = {constant_codes(7, 64)};
  CHECK(dequant_uniform_iw(cs, 4, CounterRng(1, 2)).y[0].data == dequant_uniform_iw(cs, 4, CounterRng(1, 2)).y[0].data);
  CHECK(dequant_uniform_iw(cs, 4, CounterRng(1, 2)).y[0].data != dequant_uniform_iw(cs, 4, CounterRng(1, 3)).y[0].data);
}

TEST_CASE("gaussian: batch moments and squash ranges") {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int> code(0, 255);
  std::vector<CodeChunk> cs(4);
  for (auto& c : cs) {
    for (int i = 0; i < 256; ++i) c.codes.push_back(code(g));
  }
  const auto x = levels(cs);

  // Independent two-pass moments over the whole batch.
  double s = 0.0, n = 0.0;
  for (const auto& t : x) {
    for (double v : t.data) s += v, n += 1;
  }
  const double mean = s / n;
  double ss = 0.0;
  for (const auto& t : x) {
    for (double v : t.data) ss += (v - mean) * (v - mean);
  }
  const BatchMoments m = batch_moments(x);
  CHECK(m.mean == doctest::Approx(mean).epsilon(1e-14));
  CHECK(m.variance == doctest::Approx(ss / n).epsilon(1e-14));

  const auto tanh_out = dequant_gaussian(x, Squash::Tanh, 1e-5, CounterRng(4, 4));
  const auto sig_out = dequant_gaussian(x, Squash::Sigmoid, 1e-5, CounterRng(4, 4));
  for (std::size_t e = 0; e < x.size(); ++e) {
    for (std::size_t i = 0; i < x[e].data.size(); ++i) {
      const double dt = tanh_out.y[e].data[i] - x[e].data[i];
      const double ds = sig_out.y[e].data[i] - x[e].data[i];
      CHECK(std::abs(dt) < 1.0);
      CHECK(ds > 0.0);
      CHECK(ds < 1.0);
    }
  }
}

TEST_CASE("gaussian: all-zero batch uses the variance floor") {
  std::vector<Tensor> x(8, Tensor(1, 1000, 0.0));
  const BatchMoments m = batch_moments(x);
  CHECK(m.mean == 0.0);
  CHECK(m.variance == 0.0);
  const auto o = dequant_gaussian(x, Squash::Tanh, 1e-5, CounterRng(9, 9));
  std::size_t close = 0, total = 0;
  for (const auto& t : o.y) {
    for (double v : t.data) {
      close += std::abs(v) < 0.05;
      ++total;
    }
  }
  CHECK(static_cast<double>(close) >= 0.99 * total);
  CHECK_THROWS_AS(batch_moments({}), Error);
}

TEST_CASE("variational: identity dequantizer gives tanh of a standard normal") {
  FlowConfig fc;
  fc.n_mels = 0;
  fc.n_blocks = 1;
  fc.n_flows = 2;
  fc.width = 4;
  fc.variational = true;
  fc.deq_n_blocks = 2;
  fc.deq_n_flows = 4;  // two per block, so the swaps cancel
  fc.deq_width = 4;
  FlowModel model(fc, 3);
  CHECK_THROWS_AS(draw_variational(model, Tensor(1, 16), CounterRng(1, 1), false), Error);
  model.set_initialized(true);  // actnorm stays at scale 1, bias 0

  Tensor x(1, 64);
  for (int i = 0; i < 64; ++i) x.data[i] = code_to_level((i * 7) % 256, 8);
  const VariationalDraw d = draw_variational(model, x, CounterRng(11, 0), false);
  double closed = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double eps = d.eps.data[i];
    CHECK(d.u.data[i] == doctest::Approx(std::tanh(eps)).epsilon(1e-12));
    CHECK(std::abs(d.u.data[i]) < 1.0);
    // Density of u = tanh(eps): N(atanh u) / (1 - u^2).
    const double u = std::tanh(eps);
    closed += -0.5 * eps * eps - 0.5 * std::log(2.0 * std::numbers::pi) - std::log1p(-u * u);
  }
  CHECK(std::abs(d.logq - closed) < 1e-9);
  CHECK(d.flow_logdet == 0.0);

  const DequantOutput o = dequant_variational({x, x}, model, CounterRng(2, 2));
  REQUIRE(o.y.size() == 2);
  CHECK(o.y[0].data != o.y[1].data);  // separate substreams per example
  for (double q : o.noise_logq) CHECK(std::isfinite(q));
}

TEST_CASE("variational: random dequantizer keeps |u| < 1 and finite log q") {
  FlowConfig fc;
  fc.n_mels = 0;
  fc.n_blocks = 1;
  fc.n_flows = 2;
  fc.width = 4;
  fc.variational = true;
  fc.deq_n_blocks = 1;
  fc.deq_n_flows = 3;
  fc.deq_width = 5;
  FlowModel model(fc, 3);
  model.randomize(8, 0.5);
  model.set_initialized(true);
  Tensor x(1, 32, 0.25);
  for (int s = 0; s < 20; ++s) {
    const VariationalDraw d = draw_variational(model, x, CounterRng(s, 0), false);
    for (double u : d.u.data) CHECK(std::abs(u) < 1.0);
    CHECK(std::isfinite(d.logq));
  }
}

TEST_CASE("jensen bound") {
  SUBCASE("bin-uniform density gives equality") {
    DiscreteDistribution p{{0, 1, 2}, {0.2, 0.5, 0.3}};
    const auto logp = [](double y) { return std::log(y < 1 ? 0.1 : y < 2 ? 0.7 : 0.2); };
    const JensenResult r = jensen_bound_check(p, logp);
    CHECK(std::abs(r.lhs - r.rhs) < 1e-9);
  }
  SUBCASE("point mass still satisfies the bound") {
    DiscreteDistribution p{{3}, {1.0}};
    const auto logp = [](double y) { return -0.5 * (y - 3.2) * (y - 3.2) / 0.04; };
    const JensenResult r = jensen_bound_check(p, logp);
    CHECK(r.lhs <= r.rhs + 1e-9);
    CHECK(r.lhs < r.rhs - 1e-3);
  }
  SUBCASE("invalid distributions") {
    const auto flat = [](double) { return 0.0; };
    CHECK_THROWS_AS(jensen_bound_check({{0, 1}, {0.5, 0.6}}, flat), Error);
    CHECK_THROWS_AS(jensen_bound_check({{0}, {}}, flat), Error);
  }
}
}
