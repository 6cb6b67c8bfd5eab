// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <cmath>
#include <numbers>
#include <random>

#include "deqflow/checkpoint.hpp"
#include "deqflow/error.hpp"
#include "deqflow/flow.hpp"
#include "deqflow/objective.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace deqflow;

namespace {

Tensor random_tensor(int c, int t, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d(0.0, sd);
  Tensor x(c, t);
  for (double& v : x.data) v = d(g);
  return x;
}

FlowConfig tiny_config() {
  FlowConfig fc;
  fc.n_mels = 3;
  fc.n_blocks = 2;
  fc.n_flows = 2;
  fc.width = 6;
  fc.n_layers = 2;
  return fc;
}

double naive_logn(const Tensor& z) {
  double s = 0.0;
  for (double v : z.data) s += -0.5 * v * v - 0.5 * std::log(2.0 * std::numbers::pi);
  return s;
}

}  // namespace

TEST_SUITE("flow") {
TEST_CASE("squeeze interleaves even and odd times") {
  Tensor x(1, 4);
  x.data = {1, 2, 3, 4};
  const Tensor s = squeeze(x);
  CHECK(s.channels == 2);
  CHECK(s.length == 2);
  CHECK(s.data == std::vector<double>{1, 3, 2, 4});
  const Tensor r = random_tensor(3, 16, 1);
  CHECK(unsqueeze(squeeze(r)).data == r.data);
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted(squeeze(r).data) == sorted(r.data));
  try {
    squeeze(Tensor(1, 5));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("swap_halves is an involution") {
  Tensor x(2, 3);
  x.data = {1, 2, 3, 4, 5, 6};
  CHECK(swap_halves(x).data == std::vector<double>{4, 5, 6, 1, 2, 3});
  const Tensor r = random_tensor(4, 5, 2);
  CHECK(swap_halves(swap_halves(r)).data == r.data);
}

TEST_CASE("affine coupling") {
  ParamSet ps;
  StackSpec spec;
  spec.in_channels = 1;
  spec.cond_channels = 2;
  spec.n_blocks = 1;
  spec.n_flows = 1;
  spec.width = 5;
  spec.n_layers = 2;
  FlowStack stack("t", spec, ps, 7);
  const CouplingNet& net = stack.couplings().front();
  const Tensor x = random_tensor(2, 4, 3);
  const Tensor cond = random_tensor(4, 4, 4);

  SUBCASE("zero-initialised output is the identity") {
    double ld = 0.0;
    const Tensor y = affine_coupling(ps.values().data(), net, 5.0, x, cond, Direction::Forward, &ld);
    CHECK(y.data == x.data);
    CHECK(ld == 0.0);
  }

  std::mt19937_64 g(5);
  std::normal_distribution<double> d(0.0, 0.4);
  for (double& v : ps.storage()) v = d(g);

  SUBCASE("inverse undoes forward") {
    double ld = 0.0, ild = 0.0;
    const Tensor y = affine_coupling(ps.values().data(), net, 5.0, x, cond, Direction::Forward, &ld);
    const Tensor back = affine_coupling(ps.values().data(), net, 5.0, y, cond, Direction::Inverse, &ild);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back.data[i] - x.data[i]) < 1e-9);
    CHECK(std::abs(ld + ild) < 1e-12);
  }

  SUBCASE("logdet matches a numerical Jacobian (8 dims)") {
    double ld = 0.0;
    affine_coupling(ps.values().data(), net, 5.0, x, cond, Direction::Forward, &ld);
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd J(n, n);
    const double h = 1e-6;
    for (int j = 0; j < n; ++j) {
      Tensor xp = x, xm = x;
      xp.data[j] += h;
      xm.data[j] -= h;
      double dummy = 0.0;
      const Tensor yp = affine_coupling(ps.values().data(), net, 5.0, xp, cond, Direction::Forward, &dummy);
      const Tensor ym = affine_coupling(ps.values().data(), net, 5.0, xm, cond, Direction::Forward, &dummy);
      for (int i = 0; i < n; ++i) J(i, j) = (yp.data[i] - ym.data[i]) / (2 * h);
    }
    const double numeric = std::log(std::abs(J.determinant()));
    CHECK(std::abs(ld - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
  }
}

TEST_CASE("model state and shapes") {
  FlowModel m(tiny_config(), 1);
  const Tensor y = random_tensor(1, 16, 1, 0.3);
  const Tensor mel = random_tensor(3, 16, 2);
  try {
    forward_loglik(m, {y}, {mel});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::State);
  }
  CHECK_THROWS_AS(inverse_sample(m, {squeeze(squeeze(y))}, {mel}, 1.0), Error);
  m.set_initialized(true);
  try {
    forward_loglik(m, {y}, {random_tensor(2, 16, 2)});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
  CHECK_THROWS_AS(forward_loglik(m, {random_tensor(1, 14, 1)}, {random_tensor(3, 14, 2)}), Error);
  CHECK(m.time_multiple() == 4);
}

TEST_CASE("identity-initialised model reduces to a permutation") {
  FlowModel m(tiny_config(), 1);
  m.set_initialized(true);
  const Tensor y = random_tensor(1, 32, 3, 0.5);
  const ForwardResult r = forward_loglik(m, {y}, {random_tensor(3, 32, 4)});
  CHECK(r.latent.logdet[0] == 0.0);
  CHECK(std::abs(r.loglik[0] - naive_logn(y)) < 1e-9);
  CHECK(std::abs(bits_per_dim(r.loglik[0], 32) - r.loglik[0] / (32 * std::log(2.0))) < 1e-15);
}

TEST_CASE("random model: invertibility, temperature, permutation") {
  FlowModel m(tiny_config(), 1);
  m.randomize(9, 0.3);
  const std::vector<Tensor> ys = {random_tensor(1, 32, 1, 0.4), random_tensor(1, 32, 2, 0.4)};
  const std::vector<Tensor> mels = {random_tensor(3, 32, 3), random_tensor(3, 32, 4)};
  const ForwardResult r = forward_loglik(m, ys, mels);
  const auto back = inverse_sample(m, r.latent.z, mels, 1.0);
  for (std::size_t e = 0; e < ys.size(); ++e) {
    for (std::size_t i = 0; i < ys[e].size(); ++i) CHECK(std::abs(back[e].data[i] - ys[e].data[i]) < 1e-6);
  }
  const ForwardResult swapped = forward_loglik(m, {ys[1], ys[0]}, {mels[1], mels[0]});
  CHECK(swapped.loglik[0] == r.loglik[1]);
  CHECK(swapped.loglik[1] == r.loglik[0]);

  const auto a = inverse_sample(m, {random_tensor(4, 8, 10)}, {mels[0]}, 0.0);
  const auto b = inverse_sample(m, {random_tensor(4, 8, 11)}, {mels[0]}, 0.0);
  CHECK(a[0].data == b[0].data);
  const auto c = inverse_sample(m, {random_tensor(4, 8, 11)}, {mels[0]}, 0.7);
  CHECK(c[0].data != a[0].data);
  CHECK(c[0].length == 32);
}

TEST_CASE("actnorm initialisation") {
  FlowModel m(tiny_config(), 2);
  Batch batch;
  std::mt19937_64 g(6);
  std::uniform_int_distribution<int> code(60, 200);
  for (int e = 0; e < 32; ++e) {
    CodeChunk c;
    for (int i = 0; i < 32; ++i) c.codes.push_back(code(g));
    batch.push_back(make_example(c, random_tensor(3, 32, 100 + e)));
  }
  DequantScheme none;
  none.kind = SchemeKind::None;
  const auto warnings = actnorm_init(m, batch, none, CounterRng(1, 1));
  CHECK(warnings.empty());
  CHECK(m.initialized());

  // Post-actnorm statistics, recomputed from the cached actnorm inputs.
  const FlowStack& voc = m.vocoder();
  const double* p = m.params().values().data();
  std::vector<FlowStack::Cache> caches(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    double ld = 0.0;
    voc.forward(p, batch[e].x, voc.block_conds(batch[e].mel), ld, &caches[e]);
  }
  for (std::size_t k = 0; k < voc.ops().size(); ++k) {
    const auto& op = voc.ops()[k];
    if (op.kind != FlowStack::OpKind::ActNorm) continue;
    for (int c = 0; c < op.channels; ++c) {
      double s = 0.0, ss = 0.0, n = 0.0;
      for (const auto& cache : caches) {
        const Tensor& in = cache.inputs[k];
        for (int t = 0; t < in.length; ++t) {
          const double v = in.at(c, t) * p[op.scale + c] + p[op.bias + c];
          s += v;
          ss += v * v;
          n += 1;
        }
      }
      const double mean = s / n;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(ss / n - mean * mean - 1.0) < 1e-3);
    }
  }

  const std::vector<double> before(m.params().values().begin(), m.params().values().end());
  actnorm_init(m, batch, none, CounterRng(1, 1));
  CHECK(std::equal(before.begin(), before.end(), m.params().values().begin()));

  SUBCASE("constant input hits the variance floor") {
    FlowModel c(tiny_config(), 2);
    Batch flat;
    for (int e = 0; e < 32; ++e) {
      CodeChunk k;
      k.codes.assign(32, 128);
      flat.push_back(make_example(k, Tensor(3, 32, -1.0)));
    }
    const auto w = actnorm_init(c, flat, none, CounterRng(1, 1));
    CHECK_FALSE(w.empty());
    const ParamGroup* g = c.params().find("vocoder.b0.f0.actnorm.scale");
    REQUIRE(g);
    CHECK(c.params().values()[g->offset] == doctest::Approx(1.0 / std::sqrt(kActnormVarFloor)));
    for (double v : c.params().values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("gradients") {
  FlowConfig fc = tiny_config();
  fc.variational = true;
  fc.deq_n_blocks = 1;
  fc.deq_n_flows = 2;
  fc.deq_width = 4;
  fc.deq_n_layers = 1;
  FlowModel m(fc, 4);
  Batch batch;
  for (int e = 0; e < 3; ++e) {
    CodeChunk c;
    for (int i = 0; i < 16; ++i) c.codes.push_back((i * 31 + e * 7) % 256);
    batch.push_back(make_example(c, random_tensor(3, 16, 50 + e)));
  }
  DequantScheme s;
  s.kind = SchemeKind::Variational;
  actnorm_init(m, batch, s, CounterRng(3, 3));

  SUBCASE("zero-initialised couplings still train their shift outputs") {
    const auto g = gradients(m, batch, s, CounterRng(5, 5));
    for (const ParamGroup& grp : m.params().groups()) {
      if (!grp.name.ends_with(".coupling.out.bias")) continue;
      double norm = 0.0;
      for (std::size_t i = 0; i < grp.size; ++i) norm += g[grp.offset + i] * g[grp.offset + i];
      CAPTURE(grp.name);
      CHECK(norm > 0.0);
    }
  }
  SUBCASE("thread count does not change the result") {
    m.randomize(2, 0.2);
    std::vector<double> g1, g3;
    const auto r1 = evaluate_objective(m, batch, s, CounterRng(5, 5), &g1, 1);
    const auto r3 = evaluate_objective(m, batch, s, CounterRng(5, 5), &g3, 3);
    CHECK(g1 == g3);
    CHECK(r1.loss == r3.loss);
    CHECK(r1.objective == r3.objective);
  }
  SUBCASE("non-finite gradients are reported by group") {
    std::vector<double> g(m.params().size(), 0.0);
    g[m.params().groups()[3].offset] = std::nan("");
    try {
      check_gradients_finite(m.params(), g);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
      CHECK(std::string(e.what()).find(m.params().groups()[3].name) != std::string::npos);
    }
  }
}

TEST_CASE("checkpoints") {
  const auto dir = testutil::scratch_dir("ckpt");
  FlowConfig fc = tiny_config();
  fc.variational = true;
  FlowModel m(fc, 3);
  m.randomize(4, 0.5);
  save_checkpoint(dir / "m.ckpt", m, R"({"note":"x"})");
  const FlowModel r = load_checkpoint(dir / "m.ckpt", fc);
  CHECK(r.config() == fc);
  CHECK(r.initialized());
  CHECK(std::equal(r.params().values().begin(), r.params().values().end(), m.params().values().begin()));
  REQUIRE(r.params().groups().size() == m.params().groups().size());

  FlowConfig other = fc;
  other.width += 1;
  try {
    load_checkpoint(dir / "m.ckpt", other);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Load);
  }

  std::string bytes = testutil::slurp(dir / "m.ckpt");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  bytes = testutil::slurp(dir / "m.ckpt");
  bytes.resize(bytes.size() - 8);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), Error);
}
}
