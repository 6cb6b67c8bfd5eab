// SPDX-License-Identifier: Apache-2.0
#include "deqflow/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "deqflow/error.hpp"
#include "deqflow/kernels.hpp"

namespace deqflow {

namespace {

constexpr double kPi = std::numbers::pi;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void check_framing(std::size_t len, int n_fft, int hop) {
  if (n_fft <= 0 || !std::has_single_bit(static_cast<unsigned>(n_fft))) {
    fail(ErrorKind::Parameter, "n_fft must be a power of two, got " + std::to_string(n_fft));
  }
  if (hop <= 0) fail(ErrorKind::Parameter, "hop must be positive");
  if (len < static_cast<std::size_t>(n_fft)) {
    fail(ErrorKind::Size, "signal of " + std::to_string(len) + " samples is shorter than n_fft " +
                              std::to_string(n_fft));
  }
}

// Power spectra (|X_k|^2, k = 0..n_fft/2) for every frame.
Matrix power_frames(const std::vector<double>& x, int n_fft, int hop) {
  check_framing(x.size(), n_fft, hop);
  const std::size_t frames = frame_count(x.size(), n_fft, hop);
  const std::size_t bins = static_cast<std::size_t>(n_fft) / 2 + 1;
  const std::vector<double> window = hann_window(n_fft);

  Matrix out(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * static_cast<std::size_t>(hop);
    for (int n = 0; n < n_fft; ++n) buf[n] = {x[start + n] * window[n], 0.0};
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) out(t, k) = std::norm(buf[k]);
  }
  return out;
}

MelSpec logmel_from_power(const Matrix& power, const MelParams& p) {
  const Matrix fb = mel_filterbank(p);
  MelSpec out;
  out.params = p;
  out.frames = Matrix(power.rows, static_cast<std::size_t>(p.n_mels));
  for (std::size_t t = 0; t < power.rows; ++t) {
    for (int m = 0; m < p.n_mels; ++m) {
      const double e = kernels::dot(fb.row(m).data(), power.row(t).data(), power.cols);
      out.frames(t, m) = std::log(std::max(e, kLogMelFloor));
    }
  }
  return out;
}

}  // namespace

void fft(std::span<std::complex<double>> a) {
  const std::size_t n = a.size();
  if (n == 0 || !std::has_single_bit(n)) fail(ErrorKind::Parameter, "fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // direct twiddles
      const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(len);
      const std::complex<double> w(std::cos(ang), std::sin(ang));
      for (std::size_t i = 0; i < n; i += len) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

std::size_t frame_count(std::size_t len, int n_fft, int hop) noexcept {
  if (n_fft <= 0 || hop <= 0 || len < static_cast<std::size_t>(n_fft)) return 0;
  return (len - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop) + 1;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

Spectrogram stft(const AudioBuffer& buf, int n_fft, int hop) {
  Spectrogram s;
  s.frames = power_frames(buf.samples, n_fft, hop);
  for (double& v : s.frames.data) v = std::sqrt(v);
  s.n_fft = n_fft;
  s.hop = hop;
  s.sample_rate = buf.sample_rate;
  return s;
}

Matrix mel_filterbank(const MelParams& p) {
  if (p.n_mels <= 0) fail(ErrorKind::Parameter, "n_mels must be positive");
  if (p.sample_rate <= 0) fail(ErrorKind::Parameter, "sample_rate must be positive");
  const double nyquist = p.sample_rate / 2.0;
  if (p.fmax > nyquist) {
    fail(ErrorKind::Parameter, "fmax " + std::to_string(p.fmax) + " exceeds Nyquist " +
                                   std::to_string(nyquist));
  }
  if (!(p.fmin >= 0.0 && p.fmin < p.fmax)) fail(ErrorKind::Parameter, "need 0 <= fmin < fmax");
  if (p.n_fft <= 0 || !std::has_single_bit(static_cast<unsigned>(p.n_fft))) {
    fail(ErrorKind::Parameter, "n_fft must be a power of two");
  }

  const std::size_t bins = static_cast<std::size_t>(p.n_fft) / 2 + 1;
  const double lo = hz_to_mel(p.fmin);
  const double hi = hz_to_mel(p.fmax);
  std::vector<double> edges(static_cast<std::size_t>(p.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(p.n_mels + 1));
  }

  Matrix fb(static_cast<std::size_t>(p.n_mels), bins);
  for (int m = 0; m < p.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * p.sample_rate / p.n_fft;
      double w = 0.0;
      if (f >= left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f <= right) {
        w = (right - f) / (right - centre);
      }
      fb(m, k) = w;
      row_sum += w;
    }
    if (row_sum <= 0.0) {
      fail(ErrorKind::Parameter, "mel filter " + std::to_string(m) +
                                     " covers no FFT bin; reduce n_mels or raise n_fft");
    }
  }
  return fb;
}

MelSpec mel_spectrogram(const AudioBuffer& buf, const MelParams& p) {
  return logmel_from_power(power_frames(buf.samples, p.n_fft, p.hop), p);
}

MelSpec conditioning_mel(const AudioBuffer& buf, const MelParams& p) {
  if (p.hop <= 0 || p.hop > p.n_fft) fail(ErrorKind::Parameter, "need 0 < hop <= n_fft");
  if (buf.samples.size() < static_cast<std::size_t>(p.hop)) {
    fail(ErrorKind::Size, "signal shorter than one hop");
  }
  std::vector<double> padded = buf.samples;
  padded.resize(buf.samples.size() + static_cast<std::size_t>(p.n_fft - p.hop), 0.0);
  return logmel_from_power(power_frames(padded, p.n_fft, p.hop), p);
}

Matrix mfcc_from_logmel(const Matrix& logmel, int n_coeffs) {
  const std::size_t n = logmel.cols;
  if (n_coeffs <= 0 || static_cast<std::size_t>(n_coeffs) >= n) {
    fail(ErrorKind::Parameter, "n_coeffs must lie in [1, n_mels)");
  }
  Matrix basis(static_cast<std::size_t>(n_coeffs), n);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (int k = 1; k <= n_coeffs; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      basis(k - 1, i) = scale * std::cos(kPi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  Matrix out(logmel.rows, static_cast<std::size_t>(n_coeffs));
  for (std::size_t t = 0; t < logmel.rows; ++t) {
    for (int k = 0; k < n_coeffs; ++k) {
      out(t, k) = kernels::dot(basis.row(k).data(), logmel.row(t).data(), n);
    }
  }
  return out;
}

Matrix mfcc(const AudioBuffer& buf, int n_coeffs, const MelParams& p) {
  if (n_coeffs > p.n_mels) fail(ErrorKind::Parameter, "n_coeffs exceeds n_mels");
  return mfcc_from_logmel(mel_spectrogram(buf, p).frames, n_coeffs);
}

F0Track estimate_f0(const AudioBuffer& buf, const F0Params& p) {
  const double sr = buf.sample_rate;
  if (p.frame <= 0 || p.hop <= 0) fail(ErrorKind::Parameter, "f0 frame and hop must be positive");
  if (!(p.fmin > 0.0 && p.fmin < p.fmax)) fail(ErrorKind::Parameter, "need 0 < f0 fmin < fmax");
  const int tau_min = std::max(2, static_cast<int>(std::ceil(sr / p.fmax)));
  const int tau_max = static_cast<int>(std::floor(sr / p.fmin));
  if (tau_min + 1 >= tau_max || tau_max >= p.frame) {
    fail(ErrorKind::Parameter, "f0 search range [" + std::to_string(p.fmin) + ", " +
                                   std::to_string(p.fmax) + "] Hz is empty for frame " +
                                   std::to_string(p.frame) + " at " + std::to_string(buf.sample_rate) +
                                   " Hz");
  }
  if (buf.samples.size() < static_cast<std::size_t>(p.frame)) {
    fail(ErrorKind::Size, "signal shorter than the f0 frame length");
  }

  const std::size_t window = static_cast<std::size_t>(p.frame - tau_max);
  const std::size_t frames = frame_count(buf.samples.size(), p.frame, p.hop);
  F0Track track;
  track.params = p;
  track.sample_rate = buf.sample_rate;
  track.f0.resize(frames);

  std::vector<double> d(static_cast<std::size_t>(tau_max) + 1);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = buf.samples.data() + t * static_cast<std::size_t>(p.hop);

    // cumulative-mean-normalized difference function
    d[0] = 1.0;
    double running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
      const double diff = kernels::sum_sq_diff(x, x + tau, window);
      running += diff;
      d[tau] = running > 0.0 ? diff * tau / running : 1.0;
    }

    int best = -1;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      if (d[tau] < p.threshold) {
        while (tau + 1 <= tau_max && d[tau + 1] < d[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) continue;

    double period = best;
    if (best > 1 && best < tau_max) {
      const double a = d[best - 1], b = d[best], c = d[best + 1];
      const double denom = a - 2.0 * b + c;
      if (denom > 0.0) period += 0.5 * (a - c) / denom;
    }
    const double f0 = sr / period;
    if (f0 >= p.fmin && f0 <= p.fmax) track.f0[t] = f0;
  }
  return track;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  char cell[40];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(cell, sizeof cell, "%.17g", m(r, c));
      if (c) out << ',';
      out << cell;
    }
    out << '\n';
  }
}

void write_matrix_pgm(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  double lo = 0.0, hi = 0.0;
  if (!m.data.empty()) {
    const auto [mn, mx] = std::minmax_element(m.data.begin(), m.data.end());
    lo = *mn;
    hi = *mx;
  }
  const double span = hi > lo ? hi - lo : 1.0;
  out << "P5\n" << m.rows << ' ' << m.cols << "\n255\n";
  for (std::size_t c = m.cols; c-- > 0;) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (m(r, c) - lo) / span))));
    }
  }
}

}  // namespace deqflow
