// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "deqflow/dsp.hpp"
#include "deqflow/tensor.hpp"

namespace deqflow {

inline constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

/// 1-D convolution with zero "same" padding. Weight layout [out][in][kernel].
struct ConvLayer {
  std::size_t weight = kNoParam;
  std::size_t bias = kNoParam;
  int in = 0;
  int out = 0;
  int kernel = 1;
  int dilation = 1;
};

/// out += conv(in) (+ bias)
void conv_forward(const double* params, const ConvLayer& layer, const Tensor& in, Tensor& out);

/// Accumulates weight/bias gradients into gparams and, if gin is non-null,
/// the input gradient into *gin.
void conv_backward(const double* params, const ConvLayer& layer, const Tensor& in,
                   const Tensor& gout, Tensor* gin, double* gparams);

/// Predicts log-scale and shift for the back half of the channels from the
/// front half and the conditioning features.
struct CouplingNet {
  ConvLayer input;              // C/2 -> width, 1x1
  ConvLayer cond;               // cond -> width, 1x1, no bias (absent when in == 0)
  std::vector<ConvLayer> layers;  // width -> width, kernel 3, dilation 2^l, residual
  ConvLayer output;             // width -> C, 1x1, zero-initialised
};

struct CouplingCache {
  Tensor x;                 // coupling input
  std::vector<Tensor> h;    // residual stream h_0..h_L
  std::vector<Tensor> act;  // tanh outputs of the dilated layers
  Tensor raw;               // net output: raw log-scale rows then shift rows
};

enum class Direction { Forward, Inverse };

/// Affine coupling on x = [xa; xb]:
///   forward  yb = xb * exp(s) + t,   inverse  xb = (yb - t) * exp(-s)
/// with s = cap * tanh(raw_s / cap). Adds +sum(s) (forward) or -sum(s)
/// (inverse) to *logdet. Throws Numeric naming `where` on non-finite s or t.
Tensor affine_coupling(const double* params, const CouplingNet& net, double scale_cap,
                       const Tensor& x, const Tensor& cond, Direction dir, double* logdet,
                       CouplingCache* cache = nullptr, const std::string& where = "coupling");

struct StackSpec {
  int in_channels = 1;
  int cond_channels = 0;  // before squeezing; 0 disables conditioning
  int n_blocks = 2;
  int n_flows = 4;
  int width = 64;
  int n_layers = 2;
  double scale_cap = 5.0;
};

/// A chain of context blocks: one squeeze followed by n_flows steps of
/// (actnorm, affine coupling, channel swap).
class FlowStack {
 public:
  enum class OpKind { Squeeze, ActNorm, Coupling, Swap };
  struct Op {
    OpKind kind;
    int block = 0;
    int flow = 0;
    int channels = 0;          // channel count seen by this op
    std::size_t scale = kNoParam;  // actnorm
    std::size_t bias = kNoParam;   // actnorm
    int coupling = -1;             // index into couplings()
  };

  struct Cache {
    std::vector<Tensor> inputs;  // actnorm inputs, by op index (empty otherwise)
    std::vector<CouplingCache> couplings;
    std::vector<Tensor> conds;
  };

  FlowStack() = default;
  FlowStack(const std::string& prefix, const StackSpec& spec, ParamSet& params, std::uint64_t seed);

  const StackSpec& spec() const { return spec_; }
  const std::vector<Op>& ops() const { return ops_; }
  const std::vector<CouplingNet>& couplings() const { return nets_; }
  int time_multiple() const { return 1 << spec_.n_blocks; }

  /// Conditioning tensor for each block: the base conditioning squeezed
  /// block+1 times so it lines up with the audio inside that block.
  std::vector<Tensor> block_conds(const Tensor& base) const;

  /// x [in_channels, T] -> z [in_channels * 2^n_blocks, T / 2^n_blocks].
  Tensor forward(const double* params, const Tensor& x, const std::vector<Tensor>& conds,
                 double& logdet, Cache* cache = nullptr) const;

  /// Reverse-mode pass. gz is dObjective/dz, glogdet is dObjective/dlogdet.
  /// Parameter gradients are accumulated into gparams; returns dObjective/dx.
  Tensor backward(const double* params, const Cache& cache, const Tensor& gz, double glogdet,
                  double* gparams) const;

  Tensor inverse(const double* params, const Tensor& z, const std::vector<Tensor>& conds) const;

  /// Data-dependent actnorm initialisation, performed layer by layer through
  /// the stack so each actnorm normalises what the previous layers emit.
  /// Returns warnings for channels whose variance had to be floored.
  std::vector<std::string> init_actnorm(double* params, std::vector<Tensor> xs,
                                        const std::vector<std::vector<Tensor>>& conds) const;

 private:
  void check_input(const Tensor& x, const std::vector<Tensor>& conds) const;

  StackSpec spec_;
  std::string prefix_;
  std::vector<Op> ops_;
  std::vector<CouplingNet> nets_;
};

inline constexpr double kActnormVarFloor = 1e-6;

struct FlowConfig {
  int n_mels = 80;
  int n_blocks = 2;
  int n_flows = 4;
  int width = 64;
  int n_layers = 2;
  double scale_cap = 5.0;

  bool variational = false;
  int deq_n_blocks = 2;
  int deq_n_flows = 4;  // total flow steps, split evenly across deq_n_blocks
  int deq_width = 32;
  int deq_n_layers = 2;
  double noise_scale = 1.0;

  bool operator==(const FlowConfig&) const = default;
};

/// Vocoder density model plus the optional variational dequantizer flow.
class FlowModel {
 public:
  explicit FlowModel(const FlowConfig& cfg, std::uint64_t init_seed = 0);

  const FlowConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const FlowStack& vocoder() const { return vocoder_; }
  const FlowStack* dequantizer() const { return dequantizer_ ? &*dequantizer_ : nullptr; }

  bool initialized() const { return initialized_; }
  void set_initialized(bool v) { initialized_ = v; }

  /// Time lengths must be multiples of this.
  int time_multiple() const;

  /// Sets every parameter (including zero-initialised output layers) to
  /// N(0, scale^2) draws and actnorm scales near 1. For tests and oracles.
  void randomize(std::uint64_t seed, double scale);

 private:
  FlowConfig cfg_;
  ParamSet params_;
  FlowStack vocoder_;
  std::optional<FlowStack> dequantizer_;
  bool initialized_ = false;
};

/// Frame-repetition upsampling: sample n of the window starting at `offset`
/// takes frame min((offset + n) / hop, frames - 1). Returns [n_mels, length].
Tensor upsample_mel(const Matrix& mel, int hop, std::size_t offset, int length);

struct LatentBatch {
  std::vector<Tensor> z;
  std::vector<double> logdet;
};

struct ForwardResult {
  LatentBatch latent;
  std::vector<double> loglik;  // nats per example
};

/// Sum of log N(z_i; 0, 1).
double standard_normal_logpdf(const Tensor& z);

double bits_per_dim(double nats, std::size_t dims);

/// Exact log-likelihood of continuous audio y ([1, T] each) under the vocoder.
ForwardResult forward_loglik(const FlowModel& model, const std::vector<Tensor>& y,
                             const std::vector<Tensor>& mel);

/// Audio from latents (shaped like forward's z) scaled by temperature.
std::vector<Tensor> inverse_sample(const FlowModel& model, const std::vector<Tensor>& z,
                                   const std::vector<Tensor>& mel, double temperature);

}  // namespace deqflow
