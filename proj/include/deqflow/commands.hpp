// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "deqflow/config.hpp"
#include "deqflow/error.hpp"
#include "deqflow/metrics.hpp"
#include "deqflow/train.hpp"

namespace deqflow {

// Output layout under cfg.output_dir:
//   prepare/manifest.json, prepare/windows.csv, prepare/cache/<id>.{wav,codes,mel}
//   train/history.csv, train/evals.csv, train/final.ckpt, train/ckpt_<iter>.ckpt
//   synth/wav/<id>.wav, synth/ref/<id>.wav, synth/spec/<id>.{csv,pgm}
//   eval/report.csv
//   report/comparison.csv, report/comparison.md

void cmd_prepare(const ExperimentConfig& cfg, std::ostream& log);
TrainHistory cmd_train(const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> cmd_synth(const ExperimentConfig& cfg, std::ostream& log);
MetricReport cmd_eval(const ExperimentConfig& cfg, std::ostream& log);
void cmd_report(const ExperimentConfig& cfg, std::ostream& log);

/// Loads the prepared cache for one split ("train", "valid" or "test").
TrainingSet load_prepared(const ExperimentConfig& cfg, const std::string& split);

/// 1 usage/configuration, 3 numeric failure, 2 any other data problem.
int exit_code(ErrorKind kind) noexcept;

}  // namespace deqflow
