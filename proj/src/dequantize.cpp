// SPDX-License-Identifier: Apache-2.0
#include "deqflow/dequantize.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "deqflow/error.hpp"

namespace deqflow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// log(1 - tanh(v)^2) without cancellation for large |v|
double log_sech2(double v) {
  const double a = std::abs(v);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

}  // namespace

void DequantScheme::validate() const {
  if (K < 1) fail(ErrorKind::Parameter, "uniform K must be >= 1");
  if (!(var_floor > 0.0)) fail(ErrorKind::Parameter, "gaussian var_floor must be positive");
}

const char* to_string(SchemeKind k) noexcept {
  switch (k) {
    case SchemeKind::None: return "none";
    case SchemeKind::Uniform: return "uniform";
    case SchemeKind::Gaussian: return "gaussian";
    case SchemeKind::Variational: return "variational";
  }
  return "?";
}

const char* to_string(Squash s) noexcept { return s == Squash::Sigmoid ? "sigmoid" : "tanh"; }

SchemeKind scheme_kind_from_string(const std::string& s) {
  if (s == "none") return SchemeKind::None;
  if (s == "uniform") return SchemeKind::Uniform;
  if (s == "gaussian") return SchemeKind::Gaussian;
  if (s == "variational") return SchemeKind::Variational;
  fail(ErrorKind::Parameter, "unknown dequantization scheme '" + s + "'");
}

Squash squash_from_string(const std::string& s) {
  if (s == "sigmoid") return Squash::Sigmoid;
  if (s == "tanh") return Squash::Tanh;
  fail(ErrorKind::Parameter, "unknown squash '" + s + "' (sigmoid|tanh)");
}

DequantOutput dequant_none(const std::vector<Tensor>& x) {
  DequantOutput out;
  out.scheme = SchemeKind::None;
  out.y = x;
  out.noise_logq.assign(x.size(), 0.0);
  return out;
}

DequantOutput dequant_uniform_iw(const std::vector<CodeChunk>& codes, int K, const CounterRng& rng) {
  if (K < 1) fail(ErrorKind::Parameter, "K must be >= 1");
  DequantOutput out;
  out.scheme = SchemeKind::Uniform;
  out.noise_logq.assign(codes.size(), 0.0);
  for (std::size_t e = 0; e < codes.size(); ++e) {
    const CodeChunk& c = codes[e];
    const CounterRng r = rng.substream(e);
    Tensor y(1, static_cast<int>(c.codes.size()));
    for (std::size_t i = 0; i < c.codes.size(); ++i) {
      double noise = 0.0;
      for (int k = 0; k < K; ++k) noise += r.uniform(i * static_cast<std::uint64_t>(K) + k);
      const double y_code = c.codes[i] + noise / K;
      y.data[i] = std::ldexp(y_code, 1 - c.bits) - 1.0;
    }
    out.y.push_back(std::move(y));
  }
  return out;
}

BatchMoments batch_moments(const std::vector<Tensor>& x) {
  BatchMoments m;
  double n = 0.0, sum = 0.0;
  for (const Tensor& t : x) {
    for (double v : t.data) sum += v;
    n += static_cast<double>(t.data.size());
  }
  if (n == 0.0) fail(ErrorKind::Input, "gaussian dequantization needs a non-empty batch");
  m.mean = sum / n;
  double ss = 0.0;
  for (const Tensor& t : x) {
    for (double v : t.data) ss += (v - m.mean) * (v - m.mean);
  }
  m.variance = ss / n;
  return m;
}

DequantOutput dequant_gaussian(const std::vector<Tensor>& x, Squash squash, double var_floor,
                               const CounterRng& rng) {
  if (!(var_floor > 0.0)) fail(ErrorKind::Parameter, "var_floor must be positive");
  const BatchMoments m = batch_moments(x);
  const double sd = std::sqrt(std::max(m.variance, var_floor));
  DequantOutput out;
  out.scheme = SchemeKind::Gaussian;
  out.noise_logq.assign(x.size(), 0.0);
  for (std::size_t e = 0; e < x.size(); ++e) {
    const CounterRng r = rng.substream(e);
    Tensor y = x[e];
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const double n = m.mean + sd * r.normal(i);
      y.data[i] += squash == Squash::Tanh ? std::tanh(n) : 1.0 / (1.0 + std::exp(-n));
    }
    out.y.push_back(std::move(y));
  }
  return out;
}

Tensor flatten_latent(Tensor z, int n_blocks) {
  for (int b = 0; b < n_blocks; ++b) z = unsqueeze(z);
  return z;
}

Tensor shape_latent(Tensor x, int n_blocks) {
  for (int b = 0; b < n_blocks; ++b) x = squeeze(x);
  return x;
}

VariationalDraw draw_variational(const FlowModel& model, const Tensor& x, const CounterRng& rng,
                                 bool keep_cache) {
  const FlowStack* deq = model.dequantizer();
  if (!deq || !model.initialized()) {
    fail(ErrorKind::State, "variational dequantizer is not initialised");
  }
  const double ns = model.config().noise_scale;
  VariationalDraw d;
  d.eps = Tensor(1, x.length);
  for (int i = 0; i < x.length; ++i) d.eps.data[i] = rng.normal(static_cast<std::uint64_t>(i));

  const std::vector<Tensor> conds = deq->block_conds(x);
  Tensor z = deq->forward(model.params().values().data(), d.eps, conds, d.flow_logdet,
                          keep_cache ? &d.cache : nullptr);
  d.v = flatten_latent(std::move(z), deq->spec().n_blocks);
  d.u = Tensor(1, x.length);
  const double top = std::nextafter(1.0, 0.0);
  double sech_sum = 0.0;
  for (int i = 0; i < x.length; ++i) {
    const double v = d.v.data[i];
    d.u.data[i] = ns * std::clamp(std::tanh(v), -top, top);
    sech_sum += log_sech2(v);
  }
  double eps_ss = 0.0;
  for (double e : d.eps.data) eps_ss += e * e;
  const double log_eps = -0.5 * eps_ss - kHalfLog2Pi * x.length;
  d.logq = log_eps - d.flow_logdet - sech_sum - x.length * std::log(ns);
  return d;
}

DequantOutput dequant_variational(const std::vector<Tensor>& x, const FlowModel& model,
                                  const CounterRng& rng) {
  DequantOutput out;
  out.scheme = SchemeKind::Variational;
  for (std::size_t e = 0; e < x.size(); ++e) {
    VariationalDraw d = draw_variational(model, x[e], rng.substream(e), false);
    Tensor y = x[e];
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += d.u.data[i];
    out.y.push_back(std::move(y));
    out.noise_logq.push_back(d.logq);
  }
  return out;
}

JensenResult jensen_bound_check(const DiscreteDistribution& data,
                                const std::function<double(double)>& log_density) {
  if (data.support.empty() || data.support.size() != data.prob.size()) {
    fail(ErrorKind::Parameter, "discrete distribution needs matching support and probabilities");
  }
  if (data.support.size() > 256) fail(ErrorKind::Parameter, "discrete support limited to 256 points");
  double total = 0.0;
  for (double p : data.prob) {
    if (!(p >= 0.0)) fail(ErrorKind::Parameter, "negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::Parameter, "probabilities do not sum to 1");

  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  constexpr double kTol = 1e-12;
  constexpr unsigned kDepth = 20;

  JensenResult r;
  for (std::size_t j = 0; j < data.support.size(); ++j) {
    if (data.prob[j] == 0.0) continue;
    const double x = data.support[j];
    double err = 0.0;
    const double inner_log = Quad::integrate([&](double u) { return log_density(x + u); }, 0.0, 1.0,
                                             kDepth, kTol, &err);
    if (!std::isfinite(inner_log) || err > 1e-8 * std::max(1.0, std::abs(inner_log))) {
      fail(ErrorKind::Numeric, "quadrature of log density did not converge at x=" + std::to_string(x));
    }
    // integrate exp(log p - ref) and add ref back, so tiny densities do not underflow
    const double ref = std::max({log_density(x), log_density(x + 0.5), log_density(x + 1.0)});
    const double mass = Quad::integrate([&](double u) { return std::exp(log_density(x + u) - ref); },
                                        0.0, 1.0, kDepth, kTol, &err);
    if (!(mass > 0.0) || !std::isfinite(mass) || err > 1e-8 * mass) {
      fail(ErrorKind::Numeric, "quadrature of density did not converge at x=" + std::to_string(x));
    }
    r.lhs += data.prob[j] * inner_log;
    r.rhs += data.prob[j] * (ref + std::log(mass));
  }
  return r;
}

}  // namespace deqflow
