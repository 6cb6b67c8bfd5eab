// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "deqflow/audio_io.hpp"

namespace deqflow {

/// Row-major matrix, rows = frames.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct Spectrogram {
  Matrix frames;  // magnitudes, n_fft/2 + 1 bins per frame
  int n_fft = 1024;
  int hop = 256;
  int sample_rate = 22050;
};

struct MelParams {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
};

struct MelSpec {
  Matrix frames;  // log mel energies, n_mels per frame
  MelParams params;
};

struct F0Params {
  int frame = 1024;
  int hop = 256;
  double fmin = 50.0;
  double fmax = 500.0;
  double threshold = 0.15;
};

/// Per-frame f0 in Hz; std::nullopt marks an unvoiced frame.
struct F0Track {
  std::vector<std::optional<double>> f0;
  F0Params params;
  int sample_rate = 22050;
};

inline constexpr double kLogMelFloor = 1e-10;

/// In-place radix-2 FFT. Size must be a power of two.
void fft(std::span<std::complex<double>> data);

/// floor((len - n_fft) / hop) + 1, or 0 when len < n_fft.
std::size_t frame_count(std::size_t len, int n_fft, int hop) noexcept;

/// Periodic Hann window.
std::vector<double> hann_window(int n);

/// Hann-windowed magnitude STFT without centering or padding.
Spectrogram stft(const AudioBuffer& buf, int n_fft, int hop);

/// HTK-style triangular filterbank, n_mels x (n_fft/2 + 1). Peak weight 1.
Matrix mel_filterbank(const MelParams& p);

MelSpec mel_spectrogram(const AudioBuffer& buf, const MelParams& p);

/// Orthonormal DCT-II of each log-mel frame, coefficients 1..n_coeffs.
Matrix mfcc(const AudioBuffer& buf, int n_coeffs, const MelParams& p = {});
Matrix mfcc_from_logmel(const Matrix& logmel, int n_coeffs);

F0Track estimate_f0(const AudioBuffer& buf, const F0Params& p = {});

/// Mel frames used to condition the vocoder: the signal is right-padded with
/// n_fft - hop zeros so that a buffer of F*hop samples yields F frames.
MelSpec conditioning_mel(const AudioBuffer& buf, const MelParams& p);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// 8-bit greyscale PGM, time on the x axis, low frequencies at the bottom.
void write_matrix_pgm(const std::filesystem::path& path, const Matrix& m);

}  // namespace deqflow
