// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "deqflow/companding.hpp"
#include "deqflow/dequantize.hpp"
#include "deqflow/flow.hpp"

namespace deqflow {

/// One training window: discrete levels in the model domain, the codes they
/// came from, and frame-repeated conditioning.
struct Example {
  Tensor x;        // [1, T], code_to_level of each code
  CodeChunk codes;
  Tensor mel;      // [n_mels, T]; empty when the model is unconditioned
};

using Batch = std::vector<Example>;

/// Builds an Example from codes (and optional conditioning).
Example make_example(CodeChunk codes, Tensor mel = {});

struct ObjectiveResult {
  std::vector<double> objective;  // per example, nats: log p(y) - log q(u|x)
  std::vector<double> loglik;     // log p(y)
  std::vector<double> logq;       // 0 for fixed schemes
  std::size_t dims = 0;           // samples per example
  double loss = 0.0;              // -mean(objective) / dims

  double bits_per_dim() const;
  /// Largest per-example objective per dimension in the batch.
  double max_pointwise() const;
};

/// Dequantizes the batch under `scheme` and evaluates the model. When grads
/// is non-null it receives d(loss)/d(params), sized like the parameter set.
/// Per-example gradients are reduced in example order, so the result is the
/// same for any thread count.
ObjectiveResult evaluate_objective(const FlowModel& model, const Batch& batch,
                                   const DequantScheme& scheme, const CounterRng& rng,
                                   std::vector<double>* grads = nullptr, int threads = 1);

/// Gradient of the mean loss for every parameter (dequantizer included when
/// variational). Throws Numeric naming the first group with a non-finite entry.
std::vector<double> gradients(const FlowModel& model, const Batch& batch,
                              const DequantScheme& scheme, const CounterRng& rng, int threads = 1);

/// Data-dependent actnorm initialisation for the whole model. The
/// dequantizer (if any) is initialised on its noise input first, then the
/// vocoder on the dequantized batch.
std::vector<std::string> actnorm_init(FlowModel& model, const Batch& batch,
                                      const DequantScheme& scheme, const CounterRng& rng);

/// Throws Numeric if any gradient entry is non-finite, naming its group.
void check_gradients_finite(const ParamSet& params, const std::vector<double>& grads);

}  // namespace deqflow
