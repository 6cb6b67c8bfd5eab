// SPDX-License-Identifier: Apache-2.0
#include "deqflow/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deqflow/error.hpp"
#include "deqflow/parallel.hpp"

namespace deqflow {

namespace {

std::vector<Tensor> levels(const Batch& batch) {
  std::vector<Tensor> x;
  x.reserve(batch.size());
  for (const Example& e : batch) x.push_back(e.x);
  return x;
}

DequantOutput fixed_dequant(const Batch& batch, const DequantScheme& scheme, const CounterRng& rng) {
  switch (scheme.kind) {
    case SchemeKind::None:
      return dequant_none(levels(batch));
    case SchemeKind::Uniform: {
      std::vector<CodeChunk> codes;
      codes.reserve(batch.size());
      for (const Example& e : batch) codes.push_back(e.codes);
      return dequant_uniform_iw(codes, scheme.K, rng);
    }
    case SchemeKind::Gaussian:
      return dequant_gaussian(levels(batch), scheme.squash, scheme.var_floor, rng);
    case SchemeKind::Variational:
      break;
  }
  fail(ErrorKind::Parameter, "variational scheme has no fixed dequantization");
}

struct ExampleEval {
  double loglik = 0.0;
  double logq = 0.0;
  std::vector<double> grad;
};

}  // namespace

Example make_example(CodeChunk codes, Tensor mel) {
  Example e;
  e.x = Tensor(1, static_cast<int>(codes.codes.size()));
  for (std::size_t i = 0; i < codes.codes.size(); ++i) e.x.data[i] = code_to_level(codes.codes[i], codes.bits);
  e.codes = std::move(codes);
  e.mel = std::move(mel);
  return e;
}

double ObjectiveResult::bits_per_dim() const { return loss / std::numbers::ln2; }

double ObjectiveResult::max_pointwise() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double o : objective) m = std::max(m, o / static_cast<double>(dims));
  return m;
}

ObjectiveResult evaluate_objective(const FlowModel& model, const Batch& batch,
                                   const DequantScheme& scheme, const CounterRng& rng,
                                   std::vector<double>* grads, int threads) {
  if (batch.empty()) fail(ErrorKind::Input, "empty batch");
  if (!model.initialized()) fail(ErrorKind::State, "model actnorm not initialised");
  scheme.validate();
  const bool variational = scheme.kind == SchemeKind::Variational;
  if (variational && !model.dequantizer()) {
    fail(ErrorKind::State, "variational scheme requires a model built with a dequantizer");
  }
  const std::size_t dims = batch.front().x.data.size();
  for (const Example& e : batch) {
    if (e.x.data.size() != dims) fail(ErrorKind::Shape, "examples in a batch must share a length");
  }

  DequantOutput fixed;
  if (!variational) fixed = fixed_dequant(batch, scheme, rng);

  const double* params = model.params().values().data();
  const std::size_t n_params = model.params().size();
  const bool conditioned = model.config().n_mels > 0;
  // d(loss)/d(objective_e)
  const double w = -1.0 / (static_cast<double>(batch.size()) * static_cast<double>(dims));
  const FlowStack& voc = model.vocoder();

  std::vector<ExampleEval> evals(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t e) {
    ExampleEval& out = evals[e];
    const Example& ex = batch[e];
    std::vector<Tensor> conds;
    if (conditioned) conds = voc.block_conds(ex.mel);

    VariationalDraw draw;
    Tensor y;
    if (variational) {
      draw = draw_variational(model, ex.x, rng.substream(e), grads != nullptr);
      y = ex.x;
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += draw.u.data[i];
      out.logq = draw.logq;
    } else {
      y = fixed.y[e];
    }

    FlowStack::Cache cache;
    double ld = 0.0;
    const Tensor z = voc.forward(params, y, conds, ld, grads ? &cache : nullptr);
    out.loglik = standard_normal_logpdf(z) + ld;
    if (!grads) return;

    out.grad.assign(n_params, 0.0);
    Tensor gz = z;
    for (double& v : gz.data) v *= -w;  // d(w * logN(z))/dz = -w z
    const Tensor gy = voc.backward(params, cache, gz, w, out.grad.data());

    if (variational) {
      const FlowStack& deq = *model.dequantizer();
      const double ns = model.config().noise_scale;
      Tensor gv(1, y.length);
      for (int i = 0; i < y.length; ++i) {
        const double th = std::tanh(draw.v.data[i]);
        // through u = ns*tanh(v) into the vocoder, plus the -log q term's sech^2 part
        gv.data[i] = gy.data[i] * ns * (1.0 - th * th) + w * (-2.0 * th);
      }
      const Tensor gzq = shape_latent(std::move(gv), deq.spec().n_blocks);
      deq.backward(params, draw.cache, gzq, w, out.grad.data());
    }
  });

  ObjectiveResult r;
  r.dims = dims;
  double total = 0.0;
  for (const ExampleEval& ev : evals) {
    r.loglik.push_back(ev.loglik);
    r.logq.push_back(ev.logq);
    r.objective.push_back(ev.loglik - ev.logq);
    total += ev.loglik - ev.logq;
  }
  r.loss = -total / (static_cast<double>(batch.size()) * static_cast<double>(dims));

  if (grads) {
    grads->assign(n_params, 0.0);
    for (const ExampleEval& ev : evals) {
      for (std::size_t i = 0; i < n_params; ++i) (*grads)[i] += ev.grad[i];
    }
  }
  return r;
}

void check_gradients_finite(const ParamSet& params, const std::vector<double>& grads) {
  for (const ParamGroup& g : params.groups()) {
    for (std::size_t i = 0; i < g.size; ++i) {
      if (!std::isfinite(grads[g.offset + i])) {
        fail(ErrorKind::Numeric, "non-finite gradient in parameter group " + g.name);
      }
    }
  }
}

std::vector<double> gradients(const FlowModel& model, const Batch& batch, const DequantScheme& scheme,
                              const CounterRng& rng, int threads) {
  std::vector<double> g;
  evaluate_objective(model, batch, scheme, rng, &g, threads);
  check_gradients_finite(model.params(), g);
  return g;
}

std::vector<std::string> actnorm_init(FlowModel& model, const Batch& batch,
                                      const DequantScheme& scheme, const CounterRng& rng) {
  if (batch.empty()) fail(ErrorKind::Input, "empty actnorm init batch");
  scheme.validate();
  std::vector<std::string> warnings;
  double* params = model.params().values().data();
  const std::vector<Tensor> x = levels(batch);

  std::vector<Tensor> y;
  if (scheme.kind == SchemeKind::Variational) {
    const FlowStack* deq = model.dequantizer();
    if (!deq) fail(ErrorKind::State, "variational scheme requires a model built with a dequantizer");
    std::vector<Tensor> eps;
    std::vector<std::vector<Tensor>> conds;
    for (std::size_t e = 0; e < x.size(); ++e) {
      const CounterRng r = rng.substream(e);
      Tensor n(1, x[e].length);
      for (int i = 0; i < n.length; ++i) n.data[i] = r.normal(static_cast<std::uint64_t>(i));
      eps.push_back(std::move(n));
      conds.push_back(deq->block_conds(x[e]));
    }
    auto w = deq->init_actnorm(params, eps, conds);
    warnings.insert(warnings.end(), w.begin(), w.end());
    model.set_initialized(true);
    y = dequant_variational(x, model, rng).y;
  } else {
    y = fixed_dequant(batch, scheme, rng).y;
  }

  std::vector<std::vector<Tensor>> conds;
  if (model.config().n_mels > 0) {
    for (const Example& e : batch) conds.push_back(model.vocoder().block_conds(e.mel));
  }
  auto w = model.vocoder().init_actnorm(params, y, conds);
  warnings.insert(warnings.end(), w.begin(), w.end());
  model.set_initialized(true);
  return warnings;
}

}  // namespace deqflow
