// SPDX-License-Identifier: Apache-2.0
#include "deqflow/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "deqflow/error.hpp"
#include "deqflow/rng.hpp"

namespace deqflow {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

std::int16_t to_pcm16(double v) noexcept {
  const double code = std::round(v * 32768.0);
  return static_cast<std::int16_t>(std::clamp(code, -32768.0, 32767.0));
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IO, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::Format, where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  AudioBuffer buf;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail(ErrorKind::Format, where + "truncated chunk");

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(ErrorKind::Format, where + "fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1) {
        fail(ErrorKind::Unsupported, where + "audio_format=" + std::to_string(format) +
                                         " (only PCM=1 supported)");
      }
      if (channels != 1) {
        fail(ErrorKind::Unsupported,
             where + "channels=" + std::to_string(channels) + " (only mono supported)");
      }
      if (bits != 16) {
        fail(ErrorKind::Unsupported,
             where + "bits_per_sample=" + std::to_string(bits) + " (only 16 supported)");
      }
      if (rate == 0) fail(ErrorKind::Format, where + "sample_rate=0");
      buf.sample_rate = static_cast<int>(rate);
      buf.source_bits = 16;
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorKind::Format, where + "data chunk before fmt chunk");
      if (size % 2 != 0) fail(ErrorKind::Format, where + "odd data chunk size");
      buf.samples.resize(size / 2);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < buf.samples.size(); ++i) {
        const auto code = static_cast<std::int16_t>(le16(d + 2 * i));
        buf.samples[i] = static_cast<double>(code) / 32768.0;
      }
      return buf;
    }
    pos = body + size + (size & 1u);
  }
  fail(ErrorKind::Format, where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf) {
  const auto n = static_cast<std::uint32_t>(buf.samples.size());
  std::string out;
  out.reserve(44 + 2 * std::size_t(n));
  out.append("RIFF");
  put32(out, 36 + 2 * n);
  out.append("WAVEfmt ");
  put32(out, 16);
  put16(out, 1);  // PCM
  put16(out, 1);  // mono
  put32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.append("data");
  put32(out, 2 * n);
  for (double v : buf.samples) put16(out, static_cast<std::uint16_t>(to_pcm16(v)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IO, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::IO, "write failed for " + path.string());
}

ChunkSet extract_chunks(const AudioBuffer& buf, std::size_t chunk_len, std::size_t count,
                        std::uint64_t seed) {
  if (chunk_len == 0) fail(ErrorKind::Parameter, "chunk_len must be positive");
  if (buf.samples.size() < chunk_len) {
    fail(ErrorKind::Size, "buffer of " + std::to_string(buf.samples.size()) +
                              " samples is shorter than chunk_len " + std::to_string(chunk_len));
  }
  const std::size_t starts = buf.samples.size() - chunk_len + 1;
  const CounterRng rng(seed, /*stream=*/0x43484e4bULL);

  ChunkSet set;
  set.chunk_len = chunk_len;
  set.seed = seed;
  set.chunks.reserve(count);
  set.offsets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = rng.below(i, starts);
    set.offsets.push_back(off);
    const auto first = buf.samples.begin() + static_cast<std::ptrdiff_t>(off);
    set.chunks.emplace_back(first, first + static_cast<std::ptrdiff_t>(chunk_len));
  }
  return set;
}

}  // namespace deqflow
