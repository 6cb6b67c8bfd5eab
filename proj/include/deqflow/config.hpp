// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deqflow/dsp.hpp"
#include "deqflow/flow.hpp"
#include "deqflow/metrics.hpp"
#include "deqflow/train.hpp"

namespace deqflow {

struct DataConfig {
  std::filesystem::path wav_dir;
  std::size_t chunk_len = 16000;
  std::size_t chunks_per_source = 16;
  double split_train = 0.7;
  double split_valid = 0.2;
  double split_test = 0.1;
  int bits = 8;
  int mu = 255;
};

struct SynthConfig {
  std::filesystem::path checkpoint;  // empty: <output_dir>/train/final.ckpt
  std::string split = "test";        // which prepared split provides mels
  double temperature = 0.6;
  int max_files = 0;                 // 0 = all
  bool dump_spectrograms = false;
};

struct EvalConfig {
  std::filesystem::path ref_dir;  // empty: <output_dir>/synth/ref
  std::filesystem::path syn_dir;  // empty: <output_dir>/synth/wav
};

struct ReportConfig {
  std::vector<std::filesystem::path> inputs;
  std::vector<std::string> labels;  // defaults to each input's parent directory name
};

/// Everything one run needs. Relative paths resolve against the config
/// file's directory.
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  bool deterministic = false;
  int threads = 0;  // 0 = worker_count()

  DataConfig data;
  MelParams mel;
  F0Params f0;
  MetricParams metrics;  // mel/f0 copied from above on load
  DequantScheme scheme;
  FlowConfig model;
  TrainConfig train;
  int checkpoint_every = 0;
  SynthConfig synth;
  EvalConfig eval;
  ReportConfig report;

  void validate() const;
};

/// Parses an INI file. Unknown sections or keys are a Parameter error.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Round-trips through parse_config.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace deqflow
