// SPDX-License-Identifier: Apache-2.0
// Writes the synthetic tone-burst corpus as 16-bit WAVs, for trying the
// pipeline without real speech.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "deqflow/error.hpp"
#include "deqflow/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic corpus generator"};
  std::filesystem::path out;
  int speakers = 2, per_speaker = 5;
  double seconds = 1.0;
  std::uint64_t seed = 0;
  app.add_option("out", out, "output directory")->required();
  app.add_option("--speakers", speakers)->check(CLI::PositiveNumber);
  app.add_option("--per-speaker", per_speaker)->check(CLI::PositiveNumber);
  app.add_option("--seconds", seconds)->check(CLI::PositiveNumber);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  try {
    deqflow::SyntheticSpec spec;
    spec.length = static_cast<std::size_t>(seconds * spec.sample_rate);
    std::filesystem::create_directories(out);
    for (const auto& [id, buf] : deqflow::synthetic_corpus(spec, speakers, per_speaker, seed)) {
      deqflow::write_wav(out / (id + ".wav"), buf);
    }
  } catch (const deqflow::Error& e) {
    std::cerr << "mkcorpus: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
