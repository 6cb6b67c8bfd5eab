// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace deqflow {

/// Mono audio in the half-open range [-1, 1).
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 22050;
  int source_bits = 16;
};

/// Reads a RIFF/WAVE PCM-16 mono little-endian file. Integer code s maps to
/// s / 32768, so -32768 becomes exactly -1 and 32767 becomes 32767/32768.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes PCM-16 mono. Each sample is stored as round(v * 32768) clamped to
/// [-32768, 32767].
void write_wav(const std::filesystem::path& path, const AudioBuffer& buf);

std::int16_t to_pcm16(double v) noexcept;

/// Fixed-length windows cut from one buffer.
struct ChunkSet {
  std::vector<std::vector<double>> chunks;
  std::vector<std::size_t> offsets;  // start sample of each chunk in the source
  std::size_t chunk_len = 16000;
  std::uint64_t seed = 0;
};

/// Draws `count` windows with start offsets uniform over every valid start.
/// Pure function of its arguments.
ChunkSet extract_chunks(const AudioBuffer& buf, std::size_t chunk_len, std::size_t count,
                        std::uint64_t seed);

}  // namespace deqflow
