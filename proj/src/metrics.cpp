// SPDX-License-Identifier: Apache-2.0
#include "deqflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "deqflow/error.hpp"

namespace deqflow {

namespace {

std::size_t trimmed_length(const AudioBuffer& ref, const AudioBuffer& syn) {
  if (ref.sample_rate != syn.sample_rate) {
    fail(ErrorKind::Parameter, "sample rates differ: " + std::to_string(ref.sample_rate) + " vs " +
                                   std::to_string(syn.sample_rate));
  }
  return std::min(ref.samples.size(), syn.samples.size());
}

AudioBuffer head(const AudioBuffer& b, std::size_t n) {
  AudioBuffer out;
  out.sample_rate = b.sample_rate;
  out.source_bits = b.source_bits;
  out.samples.assign(b.samples.begin(), b.samples.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

double variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

double mcd_from_mfcc(const Matrix& a, const Matrix& b, bool standard_constant) {
  if (a.cols != b.cols) fail(ErrorKind::Shape, "MFCC coefficient counts differ");
  const std::size_t frames = std::min(a.rows, b.rows);
  if (frames < 1) fail(ErrorKind::Size, "MCD needs at least one frame");
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double diff = a(t, k) - b(t, k);
      d += diff * diff;
    }
    total += std::sqrt(d);
  }
  double mcd = total / static_cast<double>(frames);
  if (standard_constant) mcd *= 10.0 * std::numbers::sqrt2 / std::numbers::ln10;
  return mcd;
}

double mcd13(const AudioBuffer& ref, const AudioBuffer& syn, const MetricParams& p) {
  const std::size_t n = trimmed_length(ref, syn);
  if (frame_count(n, p.mel.n_fft, p.mel.hop) < 1) {
    fail(ErrorKind::Size, "MCD needs at least one " + std::to_string(p.mel.n_fft) + "-sample frame");
  }
  MelParams mel = p.mel;
  mel.sample_rate = ref.sample_rate;
  return mcd_from_mfcc(mfcc(head(ref, n), p.n_mfcc, mel), mfcc(head(syn, n), p.n_mfcc, mel),
                       p.mcd_standard_constant);
}

double gsnr(const AudioBuffer& ref, const AudioBuffer& syn) {
  const std::size_t n = trimmed_length(ref, syn);
  if (n == 0) fail(ErrorKind::Size, "GSNR of empty buffers");
  const std::span<const double> r(ref.samples.data(), n);
  const double sig = variance(r);
  if (sig <= 1e-12) fail(ErrorKind::Domain, "silent reference");
  std::vector<double> res(n);
  for (std::size_t i = 0; i < n; ++i) res[i] = ref.samples[i] - syn.samples[i];
  const double noise = variance(res);
  if (noise <= 1e-12) return kGsnrCeiling;
  return std::min(kGsnrCeiling, 10.0 * std::log10(sig / noise));
}

double ssnr(const AudioBuffer& ref, const AudioBuffer& syn, int seg_len) {
  if (seg_len < 1) fail(ErrorKind::Parameter, "seg_len must be >= 1");
  const std::size_t n = trimmed_length(ref, syn);
  const std::size_t segs = n / static_cast<std::size_t>(seg_len);
  if (segs < 1) fail(ErrorKind::Size, "SSNR needs at least one full segment");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t s = 0; s < segs; ++s) {
    double es = 0.0, en = 0.0;
    for (std::size_t i = s * seg_len; i < (s + 1) * seg_len; ++i) {
      const double x = ref.samples[i];
      const double e = x - syn.samples[i];
      es += x * x;
      en += e * e;
    }
    if (es < 1e-10) continue;
    const double db = en > 0.0 ? 10.0 * std::log10(es / en) : kSsnrCeiling;
    total += std::clamp(db, kSsnrFloor, kSsnrCeiling);
    ++counted;
  }
  if (counted == 0) fail(ErrorKind::Domain, "every reference segment is silent");
  return total / static_cast<double>(counted);
}

F0Error rmse_f0_tracks(const F0Track& ref, const F0Track& syn) {
  if (ref.params.hop != syn.params.hop || ref.params.frame != syn.params.frame) {
    fail(ErrorKind::Parameter, "F0 tracks use different framing");
  }
  const std::size_t frames = std::min(ref.f0.size(), syn.f0.size());
  F0Error out;
  double sc = 0.0, sh = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    if (!ref.f0[t] || !syn.f0[t]) continue;
    const double a = *ref.f0[t], b = *syn.f0[t];
    const double dc = std::log2(a) - std::log2(b);
    sc += dc * dc;
    sh += (a - b) * (a - b);
    ++out.frames;
  }
  if (out.frames == 0) fail(ErrorKind::Domain, "no jointly voiced frames");
  out.cents = 1200.0 * std::sqrt(sc / static_cast<double>(out.frames));
  out.hz = std::sqrt(sh / static_cast<double>(out.frames));
  return out;
}

F0Error rmse_f0(const AudioBuffer& ref, const AudioBuffer& syn, const F0Params& p) {
  const std::size_t n = trimmed_length(ref, syn);
  if (n < static_cast<std::size_t>(p.frame)) {
    fail(ErrorKind::Size, "F0 needs at least " + std::to_string(p.frame) + " samples");
  }
  return rmse_f0_tracks(estimate_f0(head(ref, n), p), estimate_f0(head(syn, n), p));
}

MetricRow evaluate_pair(const std::string& id, const AudioBuffer& ref, const AudioBuffer& syn,
                        const MetricParams& p) {
  MetricRow row;
  row.id = id;
  auto flag = [&](const char* what, const Error& e) {
    if (e.kind() != ErrorKind::Domain && e.kind() != ErrorKind::Size) throw;
    if (!row.note.empty()) row.note += "; ";
    row.note += std::string(what) + ": " + e.what();
  };
  try {
    row.values[kMcd13] = mcd13(ref, syn, p);
  } catch (const Error& e) {
    flag("mcd13", e);
  }
  try {
    row.values[kGsnr] = gsnr(ref, syn);
  } catch (const Error& e) {
    flag("gsnr", e);
  }
  try {
    row.values[kSsnr] = ssnr(ref, syn, p.seg_len);
  } catch (const Error& e) {
    flag("ssnr", e);
  }
  try {
    F0Params f0 = p.f0;
    const F0Error r = rmse_f0(ref, syn, f0);
    row.values[kF0Cents] = r.cents;
    row.values[kF0Hz] = r.hz;
  } catch (const Error& e) {
    flag("rmse_f0", e);
  }
  return row;
}

MetricAggregate aggregate_values(std::span<const double> values) {
  MetricAggregate a;
  a.n = values.size();
  if (a.n == 0) return a;
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(a.n);
  if (a.n < 2) return a;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
  a.ci95 = 1.96 * a.sd / std::sqrt(static_cast<double>(a.n));
  return a;
}

std::array<MetricAggregate, kMetricCount> aggregate(const std::vector<MetricRow>& rows) {
  std::array<MetricAggregate, kMetricCount> out;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    std::vector<double> v;
    std::size_t flagged = 0;
    for (const MetricRow& r : rows) {
      if (r.values[m]) {
        v.push_back(*r.values[m]);
      } else {
        ++flagged;
      }
    }
    out[m] = aggregate_values(v);
    out[m].flagged = flagged;
  }
  return out;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  out << "kind,id";
  for (const char* name : kMetricNames) out << ',' << name;
  out << ",note\n";
  for (const MetricRow& r : report.rows) {
    out << "row," << quote(r.id);
    for (const auto& v : r.values) out << ',' << (v ? fmt(*v) : "");
    out << ',' << quote(r.note) << '\n';
  }
  for (const std::string& u : report.unpaired) {
    out << "unpaired," << quote(u) << std::string(kMetricCount, ',') << ",no matching file\n";
  }
  auto line = [&](const char* kind, auto get, bool need_two) {
    out << kind << ',';
    for (const MetricAggregate& a : report.aggregates) {
      out << ',';
      if (a.n >= (need_two ? 2u : 1u)) out << get(a);
    }
    out << ",\n";
  };
  line("mean", [](const MetricAggregate& a) { return fmt(a.mean); }, false);
  line("sd", [](const MetricAggregate& a) { return fmt(a.sd); }, true);
  line("ci95", [](const MetricAggregate& a) { return fmt(a.ci95); }, true);
  out << "n,";
  for (const MetricAggregate& a : report.aggregates) out << ',' << a.n;
  out << ",\nflagged,";
  for (const MetricAggregate& a : report.aggregates) out << ',' << a.flagged;
  out << ",\n";
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IO, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("kind,id,", 0) != 0) {
    fail(ErrorKind::Format, path.string() + ": not a metric report");
  }
  MetricReport rep;
  auto num = [&](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + ": bad number '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != kMetricCount + 3) fail(ErrorKind::Format, path.string() + ": wrong column count");
    const std::string& kind = cells[0];
    if (kind == "row") {
      MetricRow r;
      r.id = cells[1];
      for (std::size_t m = 0; m < kMetricCount; ++m) r.values[m] = num(cells[m + 2]);
      r.note = cells.back();
      rep.rows.push_back(std::move(r));
    } else if (kind == "unpaired") {
      rep.unpaired.push_back(cells[1]);
    } else {
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto v = num(cells[m + 2]);
        MetricAggregate& a = rep.aggregates[m];
        if (kind == "mean") {
          a.mean = v.value_or(0.0);
        } else if (kind == "sd") {
          a.sd = v.value_or(0.0);
        } else if (kind == "ci95") {
          a.ci95 = v.value_or(0.0);
        } else if (kind == "n") {
          a.n = static_cast<std::size_t>(v.value_or(0.0));
        } else if (kind == "flagged") {
          a.flagged = static_cast<std::size_t>(v.value_or(0.0));
        } else {
          fail(ErrorKind::Format, path.string() + ": unknown row kind '" + kind + "'");
        }
      }
    }
  }
  return rep;
}

}  // namespace deqflow
