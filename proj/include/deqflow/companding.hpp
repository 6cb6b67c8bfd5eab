// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "deqflow/audio_io.hpp"

namespace deqflow {

/// Unsigned bin indices of a companded (or linearly quantized) signal.
struct CodeChunk {
  std::vector<int> codes;  // each in [0, 2^bits)
  int bits = 8;
  int mu = 255;  // 0 selects linear quantization (no companding)
};

/// sign(x) * ln(1 + mu|x|) / ln(1 + mu). Throws Domain for |x| > 1.
double mu_compress(double x, int mu);

/// Inverse of mu_compress: sign(y) * ((1 + mu)^|y| - 1) / mu.
double mu_expand(double y, int mu);

/// code = floor((c + 1) / 2 * 2^bits) clamped to 2^bits - 1, where c is the
/// companded sample (or the raw sample when mu == 0).
CodeChunk quantize_codes(const AudioBuffer& buf, int bits, int mu);
CodeChunk quantize_codes(const std::vector<double>& samples, int bits, int mu);

/// Left edge of a code's bin in the [-1, 1) model domain: code / 2^(bits-1) - 1.
/// This is the discrete point that dequantization noise is added to.
double code_to_level(int code, int bits) noexcept;

/// Centre of a code's bin mapped back to the sample domain (expanded).
double decode_code(int code, int bits, int mu);
std::vector<double> decode_codes(const CodeChunk& chunk);

/// Maps a model-domain value back to a sample: clamp into [-1, 1) then expand.
double level_to_sample(double level, int mu);

}  // namespace deqflow
