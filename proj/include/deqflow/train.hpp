// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deqflow/companding.hpp"
#include "deqflow/dequantize.hpp"
#include "deqflow/dsp.hpp"
#include "deqflow/flow.hpp"
#include "deqflow/objective.hpp"

namespace deqflow {

// ---------------------------------------------------------------------------
// Dataset handling

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
  std::vector<std::string> warnings;
};

/// Per-speaker split of item ids at the given ratios, reproducible from seed.
/// Speakers with fewer than 3 items go entirely to train (with a warning).
DatasetSplit split_dataset(const std::map<std::string, std::vector<std::string>>& by_speaker,
                           std::array<double, 3> ratios, std::uint64_t seed);

/// Speaker key of a file name: everything before the first '_' of its stem.
std::string speaker_of(const std::string& file_name);

/// Maps log-mel energies onto roughly [-1, 1]: the log floor goes to -1 and
/// log(1) to +1.
Matrix normalize_conditioning(const Matrix& logmel);

struct Utterance {
  std::string id;
  CodeChunk codes;  // whole utterance, quantized once
  Matrix mel;       // normalised conditioning frames (frames x n_mels); may be empty
};

/// Windows over a set of utterances, materialised into Examples on demand.
struct TrainingSet {
  std::vector<Utterance> sources;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // (source, offset)
  std::size_t chunk_len = 0;
  int hop = 256;

  Example example(std::size_t window) const;
  std::size_t size() const { return windows.size(); }
};

/// Quantizes each buffer and cuts `chunks_per_source` windows per source
/// with extract_chunks (seed + source index).
TrainingSet build_training_set(const std::vector<std::pair<std::string, AudioBuffer>>& sources,
                               std::size_t chunk_len, std::size_t chunks_per_source, int bits, int mu,
                               std::uint64_t seed, const std::optional<MelParams>& mel);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Throws Numeric naming the parameter group
/// if any gradient is non-finite; parameters are untouched in that case.
void adam_step(ParamSet& params, const std::vector<double>& grads, AdamState& state, double lr,
               const AdamHyper& hyper = {});

struct TrainConfig {
  double lr = 1e-3;
  int decay_every = 2000;
  double decay_factor = 0.5;
  int batch_size = 8;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  DequantScheme scheme;
  AdamHyper adam;
  double clip_norm = 100.0;
  int init_batch = 32;
  int eval_every = 0;       // 0 disables held-out evaluation
  int eval_examples = 16;
  int threads = 1;
  std::optional<std::filesystem::path> dump_dir;  // written on abort

  void validate() const;
  double lr_at(int iteration) const;
};

struct HistoryRow {
  int iteration = 0;
  double loss_nats = 0.0;     // mean negative objective per example
  double bits_per_dim = 0.0;
  double lr = 0.0;
  double max_logp = 0.0;      // largest per-example objective per dimension in the batch
  double wall_seconds = 0.0;  // not written to CSV
};

struct EvalRow {
  int iteration = 0;
  double bits_per_dim = 0.0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::vector<EvalRow> evals;
  double max_logp_seen = -1e300;
  std::vector<std::string> warnings;

  /// Mean bits/dim over rows [begin, begin + window).
  double smoothed_bits(std::size_t begin, std::size_t window) const;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h);

using CheckpointHook = std::function<void(int iteration, const FlowModel& model)>;

/// Maximum-likelihood training. Initialises actnorm from the first
/// init_batch windows if the model is not yet initialised. Aborts with a
/// Numeric error after two consecutive non-finite losses.
TrainHistory train_loop(FlowModel& model, const TrainingSet& data, const TrainConfig& cfg,
                        const TrainingSet* valid = nullptr, int checkpoint_every = 0,
                        const CheckpointHook& on_checkpoint = {});

/// Deterministic batch of windows for iteration `it`.
Batch sample_batch(const TrainingSet& data, int batch_size, std::uint64_t seed, std::int64_t it);

}  // namespace deqflow
