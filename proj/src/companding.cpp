// SPDX-License-Identifier: Apache-2.0
#include "deqflow/companding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deqflow/error.hpp"

namespace deqflow {

namespace {

void check_mu(int mu) {
  if (mu <= 0) fail(ErrorKind::Parameter, "mu must be a positive integer, got " + std::to_string(mu));
}

void check_bits(int bits) {
  if (bits < 2 || bits > 16) {
    fail(ErrorKind::Parameter, "bits must lie in [2, 16], got " + std::to_string(bits));
  }
}

}  // namespace

double mu_compress(double x, int mu) {
  check_mu(mu);
  if (!(std::abs(x) <= 1.0)) fail(ErrorKind::Domain, "mu_compress: |x| > 1");
  const double m = static_cast<double>(mu);
  return std::copysign(std::log1p(m * std::abs(x)) / std::log1p(m), x);
}

double mu_expand(double y, int mu) {
  check_mu(mu);
  if (!(std::abs(y) <= 1.0)) fail(ErrorKind::Domain, "mu_expand: |y| > 1");
  if (std::abs(y) == 1.0) return y;
  const double m = static_cast<double>(mu);
  // (1+mu)^|y| - 1
  return std::copysign(std::expm1(std::abs(y) * std::log1p(m)) / m, y);
}

CodeChunk quantize_codes(const std::vector<double>& samples, int bits, int mu) {
  check_bits(bits);
  if (mu != 0) check_mu(mu);
  const double levels = std::ldexp(1.0, bits);
  const int top = (1 << bits) - 1;

  CodeChunk out;
  out.bits = bits;
  out.mu = mu;
  out.codes.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double c = mu == 0 ? samples[i] : mu_compress(samples[i], mu);
    if (mu == 0 && !(std::abs(c) <= 1.0)) fail(ErrorKind::Domain, "quantize_codes: |x| > 1");
    const double code = std::floor((c + 1.0) * 0.5 * levels);
    out.codes[i] = std::clamp(static_cast<int>(code), 0, top);
  }
  return out;
}

CodeChunk quantize_codes(const AudioBuffer& buf, int bits, int mu) {
  return quantize_codes(buf.samples, bits, mu);
}

double code_to_level(int code, int bits) noexcept {
  return std::ldexp(static_cast<double>(code), 1 - bits) - 1.0;
}

double decode_code(int code, int bits, int mu) {
  const double centre = std::ldexp(static_cast<double>(code) + 0.5, 1 - bits) - 1.0;
  return mu == 0 ? centre : mu_expand(centre, mu);
}

std::vector<double> decode_codes(const CodeChunk& chunk) {
  std::vector<double> out(chunk.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_code(chunk.codes[i], chunk.bits, chunk.mu);
  return out;
}

double level_to_sample(double level, int mu) {
  const double c = std::clamp(level, -1.0, std::nextafter(1.0, 0.0));
  return mu == 0 ? c : mu_expand(c, mu);
}

}  // namespace deqflow
