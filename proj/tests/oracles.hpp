// SPDX-License-Identifier: Apache-2.0
// Brute-force reimplementations used as test oracles. They share no code
// with the library beyond the plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

namespace oracle {

inline std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce the angle index first so large products keep full precision.
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      s += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = s;
  }
  return out;
}

/// Power spectra of periodic-Hann frames, frame-major.
inline std::vector<std::vector<double>> power_frames(const std::vector<double>& x, int n_fft, int hop) {
  std::vector<std::vector<double>> out;
  if (x.size() < static_cast<std::size_t>(n_fft)) return out;
  for (std::size_t start = 0; start + n_fft <= x.size(); start += hop) {
    std::vector<std::complex<double>> f(n_fft);
    for (int i = 0; i < n_fft; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
      f[i] = x[start + i] * w;
    }
    const auto X = dft(f);
    std::vector<double> p(n_fft / 2 + 1);
    for (int k = 0; k <= n_fft / 2; ++k) p[k] = std::norm(X[k]);
    out.push_back(std::move(p));
  }
  return out;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// HTK triangles evaluated directly at each bin frequency.
inline std::vector<std::vector<double>> filterbank(int sr, int n_fft, int n_mels, double fmin, double fmax) {
  std::vector<double> edges(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    edges[m] = mel_to_hz(hz_to_mel(fmin) + (hz_to_mel(fmax) - hz_to_mel(fmin)) * m / (n_mels + 1));
  }
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(n_fft / 2 + 1, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    for (int k = 0; k <= n_fft / 2; ++k) {
      const double f = static_cast<double>(k) * sr / n_fft;
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      fb[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

inline std::vector<std::vector<double>> logmel(const std::vector<double>& x, int sr, int n_fft, int hop,
                                               int n_mels, double fmin, double fmax) {
  const auto fb = filterbank(sr, n_fft, n_mels, fmin, fmax);
  std::vector<std::vector<double>> out;
  for (const auto& p : power_frames(x, n_fft, hop)) {
    std::vector<double> row(n_mels);
    for (int m = 0; m < n_mels; ++m) {
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) s += fb[m][k] * p[k];
      row[m] = std::log(std::max(s, 1e-10));
    }
    out.push_back(std::move(row));
  }
  return out;
}

/// Orthonormal DCT-II coefficients 1..n of each row.
inline std::vector<std::vector<double>> dct_cepstrum(const std::vector<std::vector<double>>& lm, int n) {
  std::vector<std::vector<double>> out;
  for (const auto& row : lm) {
    const std::size_t N = row.size();
    std::vector<double> c(n);
    for (int k = 1; k <= n; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < N; ++i) s += row[i] * std::cos(std::numbers::pi * k * (i + 0.5) / N);
      c[k - 1] = std::sqrt(2.0 / N) * s;
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline double mcd(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const std::size_t T = std::min(a.size(), b.size());
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double d = 0.0;
    for (std::size_t k = 0; k < a[t].size(); ++k) d += (a[t][k] - b[t][k]) * (a[t][k] - b[t][k]);
    total += std::sqrt(d);
  }
  return total / T;
}

inline double gsnr(const std::vector<double>& r, const std::vector<double>& s) {
  const std::size_t n = std::min(r.size(), s.size());
  double mr = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mr += r[i];
    me += r[i] - s[i];
  }
  mr /= n;
  me /= n;
  double vr = 0.0, ve = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vr += (r[i] - mr) * (r[i] - mr);
    ve += (r[i] - s[i] - me) * (r[i] - s[i] - me);
  }
  return 10.0 * std::log10((vr / n) / (ve / n));
}

/// Per-segment SNR in dB before clamping; nullopt for skipped segments.
inline std::vector<std::optional<double>> ssnr_segments(const std::vector<double>& r, const std::vector<double>& s,
                                                        int seg) {
  std::vector<std::optional<double>> out;
  const std::size_t n = std::min(r.size(), s.size());
  for (std::size_t b = 0; b + seg <= n; b += seg) {
    double es = 0.0, en = 0.0;
    for (int i = 0; i < seg; ++i) {
      es += r[b + i] * r[b + i];
      en += (r[b + i] - s[b + i]) * (r[b + i] - s[b + i]);
    }
    if (es < 1e-10) {
      out.push_back(std::nullopt);
    } else {
      out.push_back(10.0 * std::log10(es / en));
    }
  }
  return out;
}

inline double ssnr(const std::vector<double>& r, const std::vector<double>& s, int seg) {
  double total = 0.0;
  int count = 0;
  for (const auto& v : ssnr_segments(r, s, seg)) {
    if (!v) continue;
    total += std::clamp(*v, -10.0, 35.0);
    ++count;
  }
  return total / count;
}

}  // namespace oracle
