// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deqflow/audio_io.hpp"

namespace deqflow {

/// Speech-like test material: harmonic tone bursts with a smooth envelope,
/// separated by stretches of exact digital silence.
struct SyntheticSpec {
  int sample_rate = 22050;
  std::size_t length = 22050;
  double f_lo = 110.0;
  double f_hi = 330.0;
  int harmonics = 3;
  double amplitude = 0.5;
  std::size_t burst_min = 2048;
  std::size_t burst_max = 4096;
  std::size_t gap_min = 512;
  std::size_t gap_max = 1024;
};

/// Deterministic in (spec, seed, index); samples lie on the 16-bit grid.
AudioBuffer synthetic_utterance(const SyntheticSpec& spec, std::uint64_t seed, std::uint64_t index);

/// Ids look like "spkS_NNN" so speaker_of() groups them.
std::vector<std::pair<std::string, AudioBuffer>> synthetic_corpus(const SyntheticSpec& spec, int speakers,
                                                                  int per_speaker, std::uint64_t seed);

}  // namespace deqflow
