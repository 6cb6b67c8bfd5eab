// SPDX-License-Identifier: Apache-2.0
#include "deqflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deqflow/error.hpp"
#include "deqflow/kernels.hpp"
#include "deqflow/rng.hpp"

namespace deqflow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Valid output range [t0, t1) for a tap at `shift`.
inline void tap_range(int length, int shift, int& t0, int& t1) {
  t0 = std::max(0, -shift);
  t1 = std::min(length, length - shift);
}

Tensor front_half(const Tensor& x) {
  Tensor out(x.channels / 2, x.length);
  std::copy_n(x.data.begin(), out.data.size(), out.data.begin());
  return out;
}

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data) {
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite value in " + where);
  }
}

ConvLayer make_conv(ParamSet& ps, const std::string& name, int in, int out, int kernel,
                    int dilation, bool bias) {
  ConvLayer c;
  c.in = in;
  c.out = out;
  c.kernel = kernel;
  c.dilation = dilation;
  c.weight = ps.add(name + ".weight", static_cast<std::size_t>(in) * out * kernel);
  if (bias) c.bias = ps.add(name + ".bias", static_cast<std::size_t>(out));
  return c;
}

void fill_normal(std::vector<double>& v, std::size_t offset, std::size_t n, double sd,
                 const CounterRng& rng) {
  for (std::size_t i = 0; i < n; ++i) v[offset + i] = sd * rng.normal(i);
}

// Runs the coupling net on xa (+ cond) and returns raw [log-scale; shift].
Tensor coupling_net_forward(const double* params, const CouplingNet& net, const Tensor& xa,
                            const Tensor& cond, CouplingCache* cache) {
  const int width = net.input.out;
  Tensor h(width, xa.length);
  conv_forward(params, net.input, xa, h);
  if (net.cond.in > 0) conv_forward(params, net.cond, cond, h);
  for (double& v : h.data) v = std::tanh(v);
  if (cache) {
    cache->h.clear();
    cache->act.clear();
    cache->h.push_back(h);
  }
  for (const ConvLayer& layer : net.layers) {
    Tensor a(width, xa.length);
    conv_forward(params, layer, h, a);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      a.data[i] = std::tanh(a.data[i]);
      h.data[i] += a.data[i];
    }
    if (cache) {
      cache->act.push_back(std::move(a));
      cache->h.push_back(h);
    }
  }
  Tensor raw(net.output.out, xa.length);
  conv_forward(params, net.output, h, raw);
  return raw;
}

// Gradient of the net output `graw` back to xa; parameter grads accumulated.
Tensor coupling_net_backward(const double* params, const CouplingNet& net, const Tensor& xa,
                             const Tensor& cond, const CouplingCache& cache, const Tensor& graw,
                             double* gparams) {
  const int width = net.input.out;
  const int T = xa.length;
  Tensor gh(width, T);
  conv_backward(params, net.output, cache.h.back(), graw, &gh, gparams);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const Tensor& a = cache.act[l];
    Tensor gpre(width, T);
    for (std::size_t i = 0; i < gpre.data.size(); ++i) gpre.data[i] = gh.data[i] * (1.0 - a.data[i] * a.data[i]);
    // h_{l+1} = h_l + a_l: gh flows through unchanged plus the conv path
    conv_backward(params, net.layers[l], cache.h[l], gpre, &gh, gparams);
  }
  const Tensor& h0 = cache.h.front();
  for (std::size_t i = 0; i < gh.data.size(); ++i) gh.data[i] *= 1.0 - h0.data[i] * h0.data[i];
  Tensor gxa(xa.channels, T);
  conv_backward(params, net.input, xa, gh, &gxa, gparams);
  if (net.cond.in > 0) conv_backward(params, net.cond, cond, gh, nullptr, gparams);
  return gxa;
}

Tensor coupling_backward(const double* params, const CouplingNet& net, double cap,
                         const Tensor& cond, const CouplingCache& cache, const Tensor& gy,
                         double glogdet, double* gparams) {
  const Tensor& x = cache.x;
  const int half = x.channels / 2;
  const int T = x.length;
  const std::size_t n = static_cast<std::size_t>(half) * T;

  Tensor graw(x.channels, T);
  Tensor gx(x.channels, T);
  const double* raw_s = cache.raw.data.data();
  const double* xb = x.data.data() + n;
  const double* gyb = gy.data.data() + n;
  for (std::size_t i = 0; i < n; ++i) {
    const double th = std::tanh(raw_s[i] / cap);
    const double es = std::exp(cap * th);
    gx.data[n + i] = gyb[i] * es;
    const double gs = gyb[i] * xb[i] * es + glogdet;
    graw.data[i] = gs * (1.0 - th * th);
    graw.data[n + i] = gyb[i];
  }
  const Tensor gxa = coupling_net_backward(params, net, front_half(x), cond, cache, graw, gparams);
  for (std::size_t i = 0; i < n; ++i) gx.data[i] = gy.data[i] + gxa.data[i];
  return gx;
}

}  // namespace

void conv_forward(const double* params, const ConvLayer& layer, const Tensor& in, Tensor& out) {
  const int T = in.length;
  const double* w = params + layer.weight;
  for (int o = 0; o < layer.out; ++o) {
    double* orow = out.row(o);
    if (layer.bias != kNoParam) {
      const double b = params[layer.bias + o];
      for (int t = 0; t < T; ++t) orow[t] += b;
    }
    for (int i = 0; i < layer.in; ++i) {
      const double* irow = in.row(i);
      for (int k = 0; k < layer.kernel; ++k) {
        const int shift = (k - layer.kernel / 2) * layer.dilation;
        int t0, t1;
        tap_range(T, shift, t0, t1);
        if (t1 <= t0) continue;
        const double wk = w[(static_cast<std::size_t>(o) * layer.in + i) * layer.kernel + k];
        kernels::axpy(wk, irow + t0 + shift, orow + t0, static_cast<std::size_t>(t1 - t0));
      }
    }
  }
}

void conv_backward(const double* params, const ConvLayer& layer, const Tensor& in,
                   const Tensor& gout, Tensor* gin, double* gparams) {
  const int T = in.length;
  const double* w = params + layer.weight;
  double* gw = gparams + layer.weight;
  for (int o = 0; o < layer.out; ++o) {
    const double* grow = gout.row(o);
    if (layer.bias != kNoParam) gparams[layer.bias + o] += kernels::sum(grow, static_cast<std::size_t>(T));
    for (int i = 0; i < layer.in; ++i) {
      const double* irow = in.row(i);
      for (int k = 0; k < layer.kernel; ++k) {
        const int shift = (k - layer.kernel / 2) * layer.dilation;
        int t0, t1;
        tap_range(T, shift, t0, t1);
        if (t1 <= t0) continue;
        const std::size_t idx = (static_cast<std::size_t>(o) * layer.in + i) * layer.kernel + k;
        const auto len = static_cast<std::size_t>(t1 - t0);
        gw[idx] += kernels::dot(grow + t0, irow + t0 + shift, len);
        if (gin) kernels::axpy(w[idx], grow + t0, gin->row(i) + t0 + shift, len);
      }
    }
  }
}

Tensor affine_coupling(const double* params, const CouplingNet& net, double scale_cap,
                       const Tensor& x, const Tensor& cond, Direction dir, double* logdet,
                       CouplingCache* cache, const std::string& where) {
  if (x.channels % 2 != 0) fail(ErrorKind::Shape, where + ": coupling needs an even channel count");
  const int half = x.channels / 2;
  const std::size_t n = static_cast<std::size_t>(half) * x.length;
  if (net.cond.in > 0 && (cond.channels != net.cond.in || cond.length != x.length)) {
    fail(ErrorKind::Shape, where + ": conditioning shape mismatch");
  }

  const Tensor xa = front_half(x);
  Tensor raw = coupling_net_forward(params, net, xa, cond, cache);
  Tensor y = x;
  double ld = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = scale_cap * std::tanh(raw.data[i] / scale_cap);
    const double t = raw.data[n + i];
    if (!std::isfinite(s) || !std::isfinite(t)) {
      fail(ErrorKind::Numeric, "non-finite scale/shift in " + where);
    }
    if (dir == Direction::Forward) {
      y.data[n + i] = x.data[n + i] * std::exp(s) + t;
      ld += s;
    } else {
      y.data[n + i] = (x.data[n + i] - t) * std::exp(-s);
      ld -= s;
    }
  }
  if (logdet) *logdet += ld;
  if (cache) {
    cache->x = x;
    cache->raw = std::move(raw);
  }
  return y;
}

FlowStack::FlowStack(const std::string& prefix, const StackSpec& spec, ParamSet& ps,
                     std::uint64_t seed)
    : spec_(spec), prefix_(prefix) {
  if (spec.in_channels <= 0 || spec.n_blocks <= 0 || spec.n_flows <= 0 || spec.width <= 0 ||
      spec.n_layers < 0 || !(spec.scale_cap > 0.0)) {
    fail(ErrorKind::Parameter, prefix + ": invalid flow stack hyperparameters");
  }
  const CounterRng rng(seed, 0x464c4f57ULL);
  std::uint64_t stream = 0;
  int channels = spec.in_channels;
  int cond_channels = spec.cond_channels;
  for (int b = 0; b < spec.n_blocks; ++b) {
    channels *= 2;
    cond_channels *= 2;
    ops_.push_back({OpKind::Squeeze, b, 0, channels});
    for (int f = 0; f < spec.n_flows; ++f) {
      const std::string base = prefix + ".b" + std::to_string(b) + ".f" + std::to_string(f);
      Op an{OpKind::ActNorm, b, f, channels};
      an.scale = ps.add(base + ".actnorm.scale", static_cast<std::size_t>(channels), 1.0);
      an.bias = ps.add(base + ".actnorm.bias", static_cast<std::size_t>(channels), 0.0);
      ops_.push_back(an);

      CouplingNet net;
      const int half = channels / 2;
      net.input = make_conv(ps, base + ".coupling.in", half, spec.width, 1, 1, true);
      fill_normal(ps.storage(), net.input.weight, static_cast<std::size_t>(half) * spec.width,
                  0.5 / std::sqrt(half), rng.substream(stream++));
      if (cond_channels > 0) {
        net.cond = make_conv(ps, base + ".coupling.cond", cond_channels, spec.width, 1, 1, false);
        fill_normal(ps.storage(), net.cond.weight,
                    static_cast<std::size_t>(cond_channels) * spec.width,
                    0.5 / std::sqrt(cond_channels), rng.substream(stream++));
      }
      for (int l = 0; l < spec.n_layers; ++l) {
        ConvLayer layer = make_conv(ps, base + ".coupling.dilated" + std::to_string(l), spec.width,
                                    spec.width, 3, 1 << l, true);
        fill_normal(ps.storage(), layer.weight, static_cast<std::size_t>(spec.width) * spec.width * 3,
                    0.5 / std::sqrt(3.0 * spec.width), rng.substream(stream++));
        net.layers.push_back(layer);
      }
      net.output = make_conv(ps, base + ".coupling.out", spec.width, channels, 1, 1, true);

      Op cp{OpKind::Coupling, b, f, channels};
      cp.coupling = static_cast<int>(nets_.size());
      nets_.push_back(std::move(net));
      ops_.push_back(cp);
      ops_.push_back({OpKind::Swap, b, f, channels});
    }
  }
}

std::vector<Tensor> FlowStack::block_conds(const Tensor& base) const {
  std::vector<Tensor> out;
  if (spec_.cond_channels == 0) return out;
  if (base.channels != spec_.cond_channels) {
    fail(ErrorKind::Shape, prefix_ + ": conditioning has " + std::to_string(base.channels) +
                               " channels, expected " + std::to_string(spec_.cond_channels));
  }
  Tensor c = base;
  for (int b = 0; b < spec_.n_blocks; ++b) {
    c = squeeze(c);
    out.push_back(c);
  }
  return out;
}

void FlowStack::check_input(const Tensor& x, const std::vector<Tensor>& conds) const {
  if (x.channels != spec_.in_channels) fail(ErrorKind::Shape, prefix_ + ": wrong input channel count");
  if (x.length % time_multiple() != 0) {
    fail(ErrorKind::Shape, prefix_ + ": time length " + std::to_string(x.length) +
                               " not divisible by " + std::to_string(time_multiple()));
  }
  if (spec_.cond_channels > 0) {
    if (conds.size() != static_cast<std::size_t>(spec_.n_blocks) ||
        conds.front().length * 2 != x.length) {
      fail(ErrorKind::Shape, prefix_ + ": conditioning does not match the input length");
    }
  }
}

Tensor FlowStack::forward(const double* params, const Tensor& x, const std::vector<Tensor>& conds,
                          double& logdet, Cache* cache) const {
  check_input(x, conds);
  static const Tensor kNoCond;
  if (cache) {
    cache->inputs.assign(ops_.size(), Tensor{});
    cache->couplings.assign(nets_.size(), CouplingCache{});
    cache->conds = conds;
  }
  Tensor h = x;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    switch (op.kind) {
      case OpKind::Squeeze:
        h = squeeze(h);
        break;
      case OpKind::ActNorm: {
        if (cache) cache->inputs[i] = h;
        double ld = 0.0;
        for (int c = 0; c < h.channels; ++c) {
          const double s = params[op.scale + c], b = params[op.bias + c];
          double* r = h.row(c);
          for (int t = 0; t < h.length; ++t) r[t] = r[t] * s + b;
          ld += std::log(std::abs(s));
        }
        logdet += ld * h.length;
        break;
      }
      case OpKind::Coupling: {
        const Tensor& cond = spec_.cond_channels > 0 ? conds[op.block] : kNoCond;
        h = affine_coupling(params, nets_[op.coupling], spec_.scale_cap, h, cond, Direction::Forward,
                            &logdet, cache ? &cache->couplings[op.coupling] : nullptr,
                            prefix_ + " block " + std::to_string(op.block) + " flow " +
                                std::to_string(op.flow));
        break;
      }
      case OpKind::Swap:
        h = swap_halves(h);
        break;
    }
  }
  return h;
}

Tensor FlowStack::backward(const double* params, const Cache& cache, const Tensor& gz,
                           double glogdet, double* gparams) const {
  static const Tensor kNoCond;
  Tensor g = gz;
  for (std::size_t i = ops_.size(); i-- > 0;) {
    const Op& op = ops_[i];
    switch (op.kind) {
      case OpKind::Swap:
        g = swap_halves(g);
        break;
      case OpKind::Coupling: {
        const CouplingCache& cc = cache.couplings[op.coupling];
        g = coupling_backward(params, nets_[op.coupling], spec_.scale_cap,
                              spec_.cond_channels > 0 ? cache.conds[op.block] : kNoCond, cc, g,
                              glogdet, gparams);
        break;
      }
      case OpKind::ActNorm: {
        const Tensor& x = cache.inputs[i];
        for (int c = 0; c < g.channels; ++c) {
          const double s = params[op.scale + c];
          double* gr = g.row(c);
          gparams[op.scale + c] += kernels::dot(gr, x.row(c), static_cast<std::size_t>(g.length)) +
                                   glogdet * g.length / s;
          gparams[op.bias + c] += kernels::sum(gr, static_cast<std::size_t>(g.length));
          for (int t = 0; t < g.length; ++t) gr[t] *= s;
        }
        break;
      }
      case OpKind::Squeeze:
        g = unsqueeze(g);
        break;
    }
  }
  return g;
}

Tensor FlowStack::inverse(const double* params, const Tensor& z, const std::vector<Tensor>& conds) const {
  static const Tensor kNoCond;
  const int expect_channels = spec_.in_channels * time_multiple();
  if (z.channels != expect_channels) fail(ErrorKind::Shape, prefix_ + ": latent has wrong channel count");
  Tensor h = z;
  for (std::size_t i = ops_.size(); i-- > 0;) {
    const Op& op = ops_[i];
    const std::string where = prefix_ + " block " + std::to_string(op.block) + " flow " +
                              std::to_string(op.flow);
    switch (op.kind) {
      case OpKind::Swap:
        h = swap_halves(h);
        break;
      case OpKind::Coupling: {
        const Tensor& cond = spec_.cond_channels > 0 ? conds.at(op.block) : kNoCond;
        h = affine_coupling(params, nets_[op.coupling], spec_.scale_cap, h, cond, Direction::Inverse,
                            nullptr, nullptr, where);
        break;
      }
      case OpKind::ActNorm:
        for (int c = 0; c < h.channels; ++c) {
          const double s = params[op.scale + c], b = params[op.bias + c];
          double* r = h.row(c);
          for (int t = 0; t < h.length; ++t) r[t] = (r[t] - b) / s;
        }
        check_finite(h, where + " actnorm");
        break;
      case OpKind::Squeeze:
        h = unsqueeze(h);
        break;
    }
  }
  return h;
}

std::vector<std::string> FlowStack::init_actnorm(double* params, std::vector<Tensor> xs,
                                                 const std::vector<std::vector<Tensor>>& conds) const {
  static const Tensor kNoCond;
  std::vector<std::string> warnings;
  if (xs.empty()) fail(ErrorKind::Input, prefix_ + ": empty actnorm init batch");
  for (std::size_t e = 0; e < xs.size(); ++e) check_input(xs[e], spec_.cond_channels > 0 ? conds.at(e) : std::vector<Tensor>{});

  for (const Op& op : ops_) {
    switch (op.kind) {
      case OpKind::Squeeze:
        for (Tensor& x : xs) x = squeeze(x);
        break;
      case OpKind::Swap:
        for (Tensor& x : xs) x = swap_halves(x);
        break;
      case OpKind::Coupling:
        for (std::size_t e = 0; e < xs.size(); ++e) {
          const Tensor& cond = spec_.cond_channels > 0 ? conds[e][op.block] : kNoCond;
          xs[e] = affine_coupling(params, nets_[op.coupling], spec_.scale_cap, xs[e], cond,
                                  Direction::Forward, nullptr);
        }
        break;
      case OpKind::ActNorm:
        for (int c = 0; c < op.channels; ++c) {
          double sum = 0.0, count = 0.0;
          for (const Tensor& x : xs) {
            sum += kernels::sum(x.row(c), static_cast<std::size_t>(x.length));
            count += x.length;
          }
          const double mean = sum / count;
          double ss = 0.0;
          for (const Tensor& x : xs) {
            for (int t = 0; t < x.length; ++t) ss += (x.at(c, t) - mean) * (x.at(c, t) - mean);
          }
          double var = ss / count;
          if (var < kActnormVarFloor) {
            warnings.push_back(prefix_ + " block " + std::to_string(op.block) + " flow " +
                               std::to_string(op.flow) + " actnorm channel " + std::to_string(c) +
                               ": variance " + std::to_string(var) + " floored at 1e-6");
            var = kActnormVarFloor;
          }
          const double scale = 1.0 / std::sqrt(var);
          params[op.scale + c] = scale;
          params[op.bias + c] = -mean * scale;
          for (Tensor& x : xs) {
            double* r = x.row(c);
            for (int t = 0; t < x.length; ++t) r[t] = r[t] * scale - mean * scale;
          }
        }
        break;
    }
  }
  return warnings;
}

FlowModel::FlowModel(const FlowConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  if (cfg.n_mels < 0) fail(ErrorKind::Parameter, "n_mels must be non-negative");
  StackSpec voc;
  voc.in_channels = 1;
  voc.cond_channels = cfg.n_mels;
  voc.n_blocks = cfg.n_blocks;
  voc.n_flows = cfg.n_flows;
  voc.width = cfg.width;
  voc.n_layers = cfg.n_layers;
  voc.scale_cap = cfg.scale_cap;
  vocoder_ = FlowStack("vocoder", voc, params_, init_seed);

  if (cfg.variational) {
    if (cfg.deq_n_blocks <= 0 || cfg.deq_n_flows <= 0 || cfg.deq_n_flows % cfg.deq_n_blocks != 0) {
      fail(ErrorKind::Parameter, "deq_n_flows must be a positive multiple of deq_n_blocks");
    }
    if (!(cfg.noise_scale > 0.0)) fail(ErrorKind::Parameter, "noise_scale must be positive");
    StackSpec deq;
    deq.in_channels = 1;
    deq.cond_channels = 1;  // conditioned on the discrete audio itself
    deq.n_blocks = cfg.deq_n_blocks;
    deq.n_flows = cfg.deq_n_flows / cfg.deq_n_blocks;
    deq.width = cfg.deq_width;
    deq.n_layers = cfg.deq_n_layers;
    deq.scale_cap = cfg.scale_cap;
    dequantizer_ = FlowStack("dequantizer", deq, params_, init_seed ^ 0x5eedULL);
  }
}

int FlowModel::time_multiple() const {
  const int a = vocoder_.time_multiple();
  const int b = dequantizer_ ? dequantizer_->time_multiple() : 1;
  return std::max(a, b);  // both are powers of two
}

void FlowModel::randomize(std::uint64_t seed, double scale) {
  const CounterRng rng(seed, 0x52414e44ULL);
  auto& v = params_.storage();
  for (const ParamGroup& g : params_.groups()) {
    const bool is_scale = g.name.ends_with(".actnorm.scale");
    const CounterRng sub = rng.substream(g.offset);
    for (std::size_t i = 0; i < g.size; ++i) {
      const double n = sub.normal(i);
      v[g.offset + i] = is_scale ? std::exp(scale * n) : scale * n;
    }
  }
  initialized_ = true;
}

Tensor upsample_mel(const Matrix& mel, int hop, std::size_t offset, int length) {
  if (mel.rows == 0) fail(ErrorKind::Size, "mel has no frames");
  if (hop <= 0) fail(ErrorKind::Parameter, "hop must be positive");
  Tensor out(static_cast<int>(mel.cols), length);
  for (int n = 0; n < length; ++n) {
    const std::size_t frame = std::min((offset + static_cast<std::size_t>(n)) / static_cast<std::size_t>(hop),
                                       mel.rows - 1);
    for (std::size_t m = 0; m < mel.cols; ++m) out.at(static_cast<int>(m), n) = mel(frame, m);
  }
  return out;
}

double standard_normal_logpdf(const Tensor& z) {
  double ss = 0.0;
  for (double v : z.data) ss += v * v;
  return -0.5 * ss - kHalfLog2Pi * static_cast<double>(z.data.size());
}

double bits_per_dim(double nats, std::size_t dims) {
  return nats / (std::numbers::ln2 * static_cast<double>(dims));
}

ForwardResult forward_loglik(const FlowModel& model, const std::vector<Tensor>& y,
                             const std::vector<Tensor>& mel) {
  if (!model.initialized()) fail(ErrorKind::State, "forward_loglik: actnorm not initialised");
  const bool conditioned = model.config().n_mels > 0;
  if (conditioned && mel.size() != y.size()) fail(ErrorKind::Shape, "one conditioning tensor per example required");
  ForwardResult r;
  const double* p = model.params().values().data();
  for (std::size_t e = 0; e < y.size(); ++e) {
    std::vector<Tensor> conds;
    if (conditioned) {
      if (mel[e].length != y[e].length) fail(ErrorKind::Shape, "conditioning length differs from audio length");
      conds = model.vocoder().block_conds(mel[e]);
    }
    double ld = 0.0;
    Tensor z = model.vocoder().forward(p, y[e], conds, ld);
    r.loglik.push_back(standard_normal_logpdf(z) + ld);
    r.latent.logdet.push_back(ld);
    r.latent.z.push_back(std::move(z));
  }
  return r;
}

std::vector<Tensor> inverse_sample(const FlowModel& model, const std::vector<Tensor>& z,
                                   const std::vector<Tensor>& mel, double temperature) {
  if (!model.initialized()) fail(ErrorKind::State, "inverse_sample: actnorm not initialised");
  const bool conditioned = model.config().n_mels > 0;
  const double* p = model.params().values().data();
  std::vector<Tensor> out;
  for (std::size_t e = 0; e < z.size(); ++e) {
    Tensor zt = z[e];
    for (double& v : zt.data) v *= temperature;
    std::vector<Tensor> conds;
    if (conditioned) conds = model.vocoder().block_conds(mel.at(e));
    out.push_back(model.vocoder().inverse(p, zt, conds));
  }
  return out;
}

}  // namespace deqflow
