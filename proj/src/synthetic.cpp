// SPDX-License-Identifier: Apache-2.0
#include "deqflow/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "deqflow/error.hpp"
#include "deqflow/rng.hpp"

namespace deqflow {

AudioBuffer synthetic_utterance(const SyntheticSpec& spec, std::uint64_t seed, std::uint64_t index) {
  if (spec.sample_rate <= 0 || spec.length == 0) fail(ErrorKind::Parameter, "bad synthetic length or rate");
  if (!(spec.f_lo > 0.0 && spec.f_hi >= spec.f_lo && spec.f_hi * spec.harmonics < spec.sample_rate / 2.0)) {
    fail(ErrorKind::Parameter, "synthetic pitch range must stay below Nyquist");
  }
  if (spec.burst_min == 0 || spec.burst_max < spec.burst_min || spec.gap_max < spec.gap_min) {
    fail(ErrorKind::Parameter, "bad synthetic burst or gap range");
  }
  const CounterRng rng = CounterRng(seed, 0x53594e54ULL).substream(index);
  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.length, 0.0);

  std::uint64_t c = 0;
  auto span = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(c++, hi - lo + 1); };
  std::size_t pos = span(spec.gap_min, spec.gap_max);
  while (pos < spec.length) {
    const std::size_t len = std::min(span(spec.burst_min, spec.burst_max), spec.length - pos);
    const double f0 = spec.f_lo + (spec.f_hi - spec.f_lo) * rng.uniform(c++);
    const double glide = 1.0 + 0.1 * (rng.uniform(c++) - 0.5);  // slight pitch movement
    const double amp = spec.amplitude * (0.5 + 0.5 * rng.uniform(c++));
    double phase = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(len);
      const double f = f0 * (1.0 + (glide - 1.0) * t);
      phase += 2.0 * std::numbers::pi * f / spec.sample_rate;
      const double env = std::sin(std::numbers::pi * t);
      double v = 0.0;
      for (int h = 1; h <= spec.harmonics; ++h) v += std::sin(h * phase) / h;
      out.samples[pos + i] = amp * env * env * v / 1.84;
    }
    pos += len + span(spec.gap_min, spec.gap_max);
  }
  for (double& v : out.samples) v = to_pcm16(v) / 32768.0;
  return out;
}

std::vector<std::pair<std::string, AudioBuffer>> synthetic_corpus(const SyntheticSpec& spec, int speakers,
                                                                  int per_speaker, std::uint64_t seed) {
  if (speakers < 1 || per_speaker < 1) fail(ErrorKind::Parameter, "synthetic corpus needs at least one item");
  std::vector<std::pair<std::string, AudioBuffer>> out;
  for (int s = 0; s < speakers; ++s) {
    SyntheticSpec sp = spec;
    // Each speaker gets its own pitch register.
    const double shift = std::pow(1.25, s % 4);
    sp.f_lo *= shift;
    sp.f_hi *= shift;
    while (sp.f_hi * sp.harmonics >= sp.sample_rate / 2.0) {
      sp.f_lo /= 2.0;
      sp.f_hi /= 2.0;
    }
    for (int i = 0; i < per_speaker; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "spk%d_%03d", s, i);
      out.emplace_back(id, synthetic_utterance(sp, seed, static_cast<std::uint64_t>(s) * 100000 + i));
    }
  }
  return out;
}

}  // namespace deqflow
