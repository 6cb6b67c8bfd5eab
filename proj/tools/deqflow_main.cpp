// SPDX-License-Identifier: Apache-2.0
// deqflow <prepare|train|synth|eval|report> --config <path> [--seed N] [--deterministic]

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "deqflow/commands.hpp"
#include "deqflow/kernels.hpp"
#include "deqflow/parallel.hpp"

int main(int argc, char** argv) {
  using namespace deqflow;

  CLI::App app{"Dequantization schemes for a flow vocoder, with objective evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool det = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment INI file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override experiment.seed");
    sub->add_flag("--deterministic", det, "sequential reductions, one worker");
  };
  common(app.add_subcommand("prepare", "quantize WAVs, split by speaker, cache chunks and mels"));
  common(app.add_subcommand("train", "train the vocoder under the configured scheme"));
  common(app.add_subcommand("synth", "synthesize audio for a prepared split"));
  common(app.add_subcommand("eval", "objective metrics between reference and synthesized WAVs"));
  common(app.add_subcommand("report", "merge eval reports into one comparison table"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (det || cfg.deterministic) set_deterministic(true);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "prepare") {
      cmd_prepare(cfg, std::cout);
    } else if (cmd == "train") {
      std::cout << "kernels: " << kernels::to_string(kernels::active()) << '\n';
      cmd_train(cfg, std::cout);
    } else if (cmd == "synth") {
      cmd_synth(cfg, std::cout);
    } else if (cmd == "eval") {
      cmd_eval(cfg, std::cout);
    } else {
      cmd_report(cfg, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "deqflow: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "deqflow: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
