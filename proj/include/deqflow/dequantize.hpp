// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "deqflow/companding.hpp"
#include "deqflow/flow.hpp"
#include "deqflow/rng.hpp"
#include "deqflow/tensor.hpp"

namespace deqflow {

enum class SchemeKind { None, Uniform, Gaussian, Variational };
enum class Squash { Sigmoid, Tanh };

/// Which noise turns the discrete training signal into a continuous target.
/// The variational dequantizer's parameters live in FlowModel.
struct DequantScheme {
  SchemeKind kind = SchemeKind::Uniform;
  int K = 1;                    // uniform: noise draws averaged per sample
  Squash squash = Squash::Tanh;  // gaussian
  double var_floor = 1e-5;       // gaussian

  void validate() const;
  bool operator==(const DequantScheme&) const = default;
};

const char* to_string(SchemeKind k) noexcept;
const char* to_string(Squash s) noexcept;
SchemeKind scheme_kind_from_string(const std::string& s);
Squash squash_from_string(const std::string& s);

struct DequantOutput {
  std::vector<Tensor> y;            // same shape as the input, [1, T] each
  std::vector<double> noise_logq;   // log q(u|x) per example; 0 for fixed schemes
  SchemeKind scheme = SchemeKind::None;
};

/// Discrete points themselves (no dequantization).
DequantOutput dequant_none(const std::vector<Tensor>& x);

/// y = (code + mean of K Unif[0,1) draws) / 2^(bits-1) - 1. Draw k of sample
/// i in example e uses counter i*K + k of rng.substream(e).
DequantOutput dequant_uniform_iw(const std::vector<CodeChunk>& codes, int K, const CounterRng& rng);

struct BatchMoments {
  double mean = 0.0;
  double variance = 0.0;  // population variance, before flooring
};

/// Mean and variance over every sample of every example in the batch.
BatchMoments batch_moments(const std::vector<Tensor>& x);

/// y = x + squash(n), n ~ N(M, max(Sigma, var_floor)) with M, Sigma the
/// batch moments of x.
DequantOutput dequant_gaussian(const std::vector<Tensor>& x, Squash squash, double var_floor,
                               const CounterRng& rng);

/// One draw from the conditional flow dequantizer for a single example.
struct VariationalDraw {
  Tensor eps;   // [1, T] standard normal input
  Tensor v;     // flow output flattened to [1, T]
  Tensor u;     // noise_scale * tanh(v)
  double logq = 0.0;
  double flow_logdet = 0.0;
  FlowStack::Cache cache;  // populated when requested
};

VariationalDraw draw_variational(const FlowModel& model, const Tensor& x, const CounterRng& rng,
                                 bool keep_cache);

/// y = x + u with u from the dequantizer conditioned on x, and
/// log q(u|x) = log N(eps) - sum flow logdets - sum log(1 - tanh(v)^2) - T log(noise_scale).
DequantOutput dequant_variational(const std::vector<Tensor>& x, const FlowModel& model,
                                  const CounterRng& rng);

/// Flattens a squeezed latent [C*2^n, T/2^n] back to [C, T].
Tensor flatten_latent(Tensor z, int n_blocks);
Tensor shape_latent(Tensor x, int n_blocks);

struct DiscreteDistribution {
  std::vector<double> support;  // integer-spaced points x
  std::vector<double> prob;
};

struct JensenResult {
  double lhs = 0.0;  // sum_x P(x) * integral_0^1 log p(x+u) du
  double rhs = 0.0;  // sum_x P(x) * log integral_0^1 p(x+u) du
};

/// Evaluates both sides of the dequantization bound by adaptive
/// Gauss-Kronrod quadrature over each unit bin. Throws Numeric when the
/// quadrature error estimate does not converge.
JensenResult jensen_bound_check(const DiscreteDistribution& data,
                                const std::function<double(double)>& log_density);

}  // namespace deqflow
