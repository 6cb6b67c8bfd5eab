// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deqflow/audio_io.hpp"
#include "deqflow/dsp.hpp"

namespace deqflow {

struct MetricParams {
  MelParams mel;
  F0Params f0;
  int n_mfcc = 13;
  int seg_len = 256;
  bool mcd_standard_constant = false;  // multiply by 10*sqrt(2)/ln(10)
};

inline constexpr double kGsnrCeiling = 120.0;
inline constexpr double kSsnrFloor = -10.0;
inline constexpr double kSsnrCeiling = 35.0;

// Each metric throws Error(Domain) when it is undefined for the pair (silent
// reference, no jointly voiced frames). evaluate_pair turns those into flags.

/// Mean per-frame Euclidean distance between MFCC 1..n_mfcc. Inputs are
/// trimmed to the shorter length.
double mcd13(const AudioBuffer& ref, const AudioBuffer& syn, const MetricParams& p = {});
double mcd_from_mfcc(const Matrix& a, const Matrix& b, bool standard_constant = false);

/// Global SNR in dB, capped at kGsnrCeiling.
double gsnr(const AudioBuffer& ref, const AudioBuffer& syn);

/// Segmental SNR over non-overlapping segments, each clamped to
/// [kSsnrFloor, kSsnrCeiling]. Near-silent reference segments are skipped.
double ssnr(const AudioBuffer& ref, const AudioBuffer& syn, int seg_len = 256);

struct F0Error {
  double cents = 0.0;
  double hz = 0.0;
  std::size_t frames = 0;  // jointly voiced
};

F0Error rmse_f0(const AudioBuffer& ref, const AudioBuffer& syn, const F0Params& p = {});
F0Error rmse_f0_tracks(const F0Track& ref, const F0Track& syn);

enum Metric : std::size_t { kMcd13, kGsnr, kSsnr, kF0Cents, kF0Hz, kMetricCount };
inline constexpr std::array<const char*, kMetricCount> kMetricNames = {
    "mcd13", "gsnr", "ssnr", "rmse_f0_cents", "rmse_f0_hz"};

struct MetricRow {
  std::string id;
  std::array<std::optional<double>, kMetricCount> values;  // empty = flagged
  std::string note;
};

struct MetricAggregate {
  double mean = 0.0;
  double sd = 0.0;    // sample standard deviation
  double ci95 = 0.0;  // 1.96 * sd / sqrt(n)
  std::size_t n = 0;
  std::size_t flagged = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::array<MetricAggregate, kMetricCount> aggregates;
  std::vector<std::string> unpaired;
};

MetricRow evaluate_pair(const std::string& id, const AudioBuffer& ref, const AudioBuffer& syn,
                        const MetricParams& p = {});

MetricAggregate aggregate_values(std::span<const double> values);
std::array<MetricAggregate, kMetricCount> aggregate(const std::vector<MetricRow>& rows);

/// CSV with a `kind` column: row, unpaired, mean, sd, ci95, n, flagged.
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);

}  // namespace deqflow
