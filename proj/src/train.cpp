// SPDX-License-Identifier: Apache-2.0
#include "deqflow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "deqflow/error.hpp"
#include "deqflow/rng.hpp"
#include "json.hpp"

namespace deqflow {

namespace {

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

DatasetSplit split_dataset(const std::map<std::string, std::vector<std::string>>& by_speaker,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  if (by_speaker.empty()) fail(ErrorKind::Input, "cannot split an empty corpus");
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::Parameter, "split ratios must be non-negative");
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(total > 0.0)) fail(ErrorKind::Parameter, "split ratios sum to zero");

  DatasetSplit out;
  bool any = false;
  for (const auto& [speaker, items] : by_speaker) {
    if (items.empty()) continue;
    any = true;
    std::vector<std::string> order = items;
    std::sort(order.begin(), order.end());
    const CounterRng rng(seed, hash_string(speaker));
    for (std::size_t i = order.size(); i > 1; --i) {  // Fisher-Yates
      std::swap(order[i - 1], order[rng.below(i, i)]);
    }
    const std::size_t n = order.size();
    if (n < 3) {
      out.warnings.push_back("speaker " + speaker + " has " + std::to_string(n) +
                             " item(s); all assigned to train");
      out.train.insert(out.train.end(), order.begin(), order.end());
      continue;
    }
    auto take = [&](double r) {
      return std::max<std::size_t>(r > 0.0 ? 1 : 0, static_cast<std::size_t>(std::llround(n * r / total)));
    };
    std::size_t n_valid = take(ratios[1]);
    std::size_t n_test = take(ratios[2]);
    while (n_valid + n_test >= n) (n_valid >= n_test ? n_valid : n_test) -= 1;
    const std::size_t n_train = n - n_valid - n_test;
    out.train.insert(out.train.end(), order.begin(), order.begin() + n_train);
    out.valid.insert(out.valid.end(), order.begin() + n_train, order.begin() + n_train + n_valid);
    out.test.insert(out.test.end(), order.begin() + n_train + n_valid, order.end());
  }
  if (!any) fail(ErrorKind::Input, "cannot split an empty corpus");
  return out;
}

std::string speaker_of(const std::string& file_name) {
  const std::string stem = std::filesystem::path(file_name).stem().string();
  const auto pos = stem.find('_');
  return pos == std::string::npos ? stem : stem.substr(0, pos);
}

Matrix normalize_conditioning(const Matrix& logmel) {
  const double half = -std::log(kLogMelFloor) / 2.0;
  Matrix out = logmel;
  for (double& v : out.data) v = v / half + 1.0;
  return out;
}

Example TrainingSet::example(std::size_t window) const {
  const auto [src, offset] = windows.at(window);
  const Utterance& u = sources[src];
  CodeChunk c;
  c.bits = u.codes.bits;
  c.mu = u.codes.mu;
  c.codes.assign(u.codes.codes.begin() + static_cast<std::ptrdiff_t>(offset),
                 u.codes.codes.begin() + static_cast<std::ptrdiff_t>(offset + chunk_len));
  Tensor mel;
  if (u.mel.rows > 0) mel = upsample_mel(u.mel, hop, offset, static_cast<int>(chunk_len));
  return make_example(std::move(c), std::move(mel));
}

TrainingSet build_training_set(const std::vector<std::pair<std::string, AudioBuffer>>& sources,
                               std::size_t chunk_len, std::size_t chunks_per_source, int bits, int mu,
                               std::uint64_t seed, const std::optional<MelParams>& mel) {
  if (sources.empty()) fail(ErrorKind::Input, "no training sources");
  TrainingSet set;
  set.chunk_len = chunk_len;
  set.hop = mel ? mel->hop : 256;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& [id, buf] = sources[s];
    Utterance u;
    u.id = id;
    u.codes = quantize_codes(buf, bits, mu);
    if (mel) u.mel = normalize_conditioning(conditioning_mel(buf, *mel).frames);
    const ChunkSet chunks = extract_chunks(buf, chunk_len, chunks_per_source, seed + s);
    for (std::size_t off : chunks.offsets) set.windows.emplace_back(s, off);
    set.sources.push_back(std::move(u));
  }
  return set;
}

void adam_step(ParamSet& params, const std::vector<double>& grads, AdamState& state, double lr,
               const AdamHyper& hyper) {
  const std::size_t n = params.size();
  if (grads.size() != n) fail(ErrorKind::Shape, "gradient size does not match parameters");
  for (const ParamGroup& g : params.groups()) {
    for (std::size_t i = 0; i < g.size; ++i) {
      if (!std::isfinite(grads[g.offset + i])) {
        fail(ErrorKind::Numeric, "non-finite gradient for parameter " + g.name);
      }
    }
  }
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  auto p = params.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorKind::Parameter, "lr must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) fail(ErrorKind::Parameter, "decay_factor must lie in (0, 1]");
  if (decay_every < 1) fail(ErrorKind::Parameter, "decay_every must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Parameter, "batch_size must be >= 1");
  if (max_iters < 0) fail(ErrorKind::Parameter, "max_iters must be >= 0");
  if (init_batch < 1) fail(ErrorKind::Parameter, "init_batch must be >= 1");
  scheme.validate();
}

double TrainConfig::lr_at(int iteration) const {
  return lr * std::pow(decay_factor, static_cast<double>(iteration / decay_every));
}

double TrainHistory::smoothed_bits(std::size_t begin, std::size_t window) const {
  if (begin >= rows.size()) fail(ErrorKind::Size, "smoothing window starts past the history");
  const std::size_t end = std::min(rows.size(), begin + window);
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += rows[i].bits_per_dim;
  return s / static_cast<double>(end - begin);
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  out << "iteration,loss_nats,bits_per_dim,lr,max_logp\n";
  char line[256];
  for (const HistoryRow& r : h.rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.loss_nats,
                  r.bits_per_dim, r.lr, r.max_logp);
    out << line;
  }
}

Batch sample_batch(const TrainingSet& data, int batch_size, std::uint64_t seed, std::int64_t it) {
  if (data.size() == 0) fail(ErrorKind::Input, "training set has no windows");
  const CounterRng rng(seed, 0x4241544348ULL);
  Batch batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const std::uint64_t counter = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(batch_size) + b;
    batch.push_back(data.example(rng.below(counter, data.size())));
  }
  return batch;
}

TrainHistory train_loop(FlowModel& model, const TrainingSet& data, const TrainConfig& cfg,
                        const TrainingSet* valid, int checkpoint_every, const CheckpointHook& on_checkpoint) {
  cfg.validate();
  if (data.size() == 0) fail(ErrorKind::Input, "training set has no windows");
  if (data.chunk_len % static_cast<std::size_t>(model.time_multiple()) != 0) {
    fail(ErrorKind::Shape, "chunk_len must be divisible by " + std::to_string(model.time_multiple()));
  }
  TrainHistory history;
  const CounterRng noise(cfg.seed, 0x4e4f495345ULL);

  if (!model.initialized()) {
    Batch init;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.init_batch), data.size());
    for (std::size_t i = 0; i < n; ++i) init.push_back(data.example(i));
    history.warnings = actnorm_init(model, init, cfg.scheme, noise.substream(0x1417ULL));
  }

  Batch eval_batch;
  if (valid && valid->size() > 0 && cfg.eval_every > 0) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.eval_examples), valid->size());
    for (std::size_t i = 0; i < n; ++i) eval_batch.push_back(valid->example(i));
  }

  AdamState adam;
  int bad_in_a_row = 0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> grads;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Batch batch = sample_batch(data, cfg.batch_size, cfg.seed, it);
    const CounterRng rng = noise.substream(static_cast<std::uint64_t>(it) + 1);
    const ObjectiveResult r = evaluate_objective(model, batch, cfg.scheme, rng, &grads, cfg.threads);

    double norm2 = 0.0;
    for (double g : grads) norm2 += g * g;
    const bool finite = std::isfinite(r.loss) && std::isfinite(norm2);
    if (!finite) {
      if (++bad_in_a_row >= 2) {
        std::string where;
        if (cfg.dump_dir) {
          std::filesystem::create_directories(*cfg.dump_dir);
          const auto path = *cfg.dump_dir / "abort_dump.json";
          nlohmann::json dump{{"iteration", it},
                              {"loss", std::isfinite(r.loss) ? nlohmann::json(r.loss) : nlohmann::json("non-finite")},
                              {"grad_norm_sq", std::isfinite(norm2) ? nlohmann::json(norm2) : nlohmann::json("non-finite")},
                              {"lr", cfg.lr_at(it)},
                              {"scheme", to_string(cfg.scheme.kind)}};
          std::ofstream(path) << dump.dump(2) << '\n';
          where = "; diagnostic dump at " + path.string();
        }
        fail(ErrorKind::Numeric, "training aborted at iteration " + std::to_string(it) +
                                     ": non-finite loss twice in a row" + where);
      }
      continue;
    }
    bad_in_a_row = 0;

    const double norm = std::sqrt(norm2);
    if (norm > cfg.clip_norm) {
      const double s = cfg.clip_norm / norm;
      for (double& g : grads) g *= s;
    }
    const double lr = cfg.lr_at(it);
    adam_step(model.params(), grads, adam, lr, cfg.adam);

    HistoryRow row;
    row.iteration = it;
    row.loss_nats = r.loss * static_cast<double>(r.dims);
    row.bits_per_dim = r.bits_per_dim();
    row.lr = lr;
    row.max_logp = r.max_pointwise();
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.max_logp_seen = std::max(history.max_logp_seen, row.max_logp);
    history.rows.push_back(row);

    if (!eval_batch.empty() && (it + 1) % cfg.eval_every == 0) {
      const ObjectiveResult e = evaluate_objective(model, eval_batch, cfg.scheme,
                                                   CounterRng(cfg.seed, 0x4556414cULL), nullptr, cfg.threads);
      history.evals.push_back({it + 1, e.bits_per_dim()});
    }
    if (checkpoint_every > 0 && on_checkpoint && (it + 1) % checkpoint_every == 0) on_checkpoint(it + 1, model);
  }
  return history;
}

}  // namespace deqflow
