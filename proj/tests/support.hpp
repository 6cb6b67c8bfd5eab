// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "deqflow/audio_io.hpp"

namespace testutil {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("deqflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline deqflow::AudioBuffer sine(double hz, std::size_t n, double amp = 0.5, int rate = 22050,
                                 double phase = 0.0) {
  deqflow::AudioBuffer b;
  b.sample_rate = rate;
  b.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate + phase);
  }
  return b;
}

inline deqflow::AudioBuffer noise(std::size_t n, double amp, std::uint64_t seed, int rate = 22050) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  deqflow::AudioBuffer b;
  b.sample_rate = rate;
  b.samples.resize(n);
  for (double& v : b.samples) v = u(gen);
  return b;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testutil
