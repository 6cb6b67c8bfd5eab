// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "deqflow/error.hpp"
#include "deqflow/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace deqflow;

namespace {

AudioBuffer scaled(const AudioBuffer& b, double k) {
  AudioBuffer out = b;
  for (double& v : out.samples) v *= k;
  return out;
}

AudioBuffer mixed(const AudioBuffer& a, const AudioBuffer& b, double wb) {
  AudioBuffer out = a;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += wb * b.samples[i];
  return out;
}

F0Track track(std::vector<std::optional<double>> f0) {
  F0Track t;
  t.f0 = std::move(f0);
  return t;
}

}  // namespace

TEST_SUITE("metrics") {
TEST_CASE("analytic values") {
  const AudioBuffer ref = mixed(testutil::sine(220.0, 8192, 0.4), testutil::noise(8192, 0.05, 1), 1.0);

  SUBCASE("identical signals") {
    CHECK(mcd13(ref, ref) == 0.0);
    CHECK(gsnr(ref, ref) == kGsnrCeiling);
    CHECK(ssnr(ref, ref) == kSsnrCeiling);
    const F0Error f = rmse_f0(ref, ref);
    CHECK(f.cents == 0.0);
    CHECK(f.hz == 0.0);
    CHECK(f.frames > 0);
  }
  SUBCASE("coefficient offset") {
    Matrix a(6, 13);
    std::mt19937_64 g(3);
    std::normal_distribution<double> d;
    for (double& v : a.data) v = d(g);
    Matrix b = a;
    for (std::size_t t = 0; t < b.rows; ++t) b(t, 0) += -0.75;
    CHECK(mcd_from_mfcc(a, b) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(mcd_from_mfcc(a, b, true) ==
          doctest::Approx(0.75 * 10.0 * std::sqrt(2.0) / std::log(10.0)).epsilon(1e-14));
  }
  SUBCASE("scaled residuals") {
    CHECK(gsnr(ref, scaled(ref, 0.9)) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(gsnr(ref, scaled(ref, -1.0)) == doctest::Approx(-20.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(gsnr(ref, scaled(ref, -1.0)) == doctest::Approx(-6.0206).epsilon(1e-5));
    CHECK(ssnr(ref, scaled(ref, 0.9)) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(ssnr(ref, scaled(ref, -1000.0)) == kSsnrFloor);
  }
  SUBCASE("octave error") {
    const F0Error e = rmse_f0_tracks(track({220.0, 110.0, std::nullopt, 300.0}),
                                     track({440.0, 220.0, 180.0, std::nullopt}));
    CHECK(e.frames == 2);
    CHECK(e.cents == doctest::Approx(1200.0).epsilon(1e-14));
    CHECK(e.hz == doctest::Approx(std::sqrt((220.0 * 220.0 + 110.0 * 110.0) / 2.0)));
    CHECK_THROWS_AS(rmse_f0_tracks(track({std::nullopt, 200.0}), track({150.0, std::nullopt})), Error);
  }
}

TEST_CASE("metrics agree with direct oracles on random pairs") {
  MetricParams p;
  p.mel.n_fft = 1024;
  p.mel.hop = 256;
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> u(0.05, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const AudioBuffer a = mixed(testutil::sine(100.0 + 20 * trial, 2048, u(g)), testutil::noise(2048, 0.1, trial), 1.0);
    const AudioBuffer b = mixed(a, testutil::noise(2048, u(g), 100 + trial), 1.0);
    const auto ca = oracle::dct_cepstrum(oracle::logmel(a.samples, 22050, 1024, 256, 80, 0.0, 8000.0), 13);
    const auto cb = oracle::dct_cepstrum(oracle::logmel(b.samples, 22050, 1024, 256, 80, 0.0, 8000.0), 13);
    const double want = oracle::mcd(ca, cb);
    CHECK(mcd13(a, b, p) == doctest::Approx(want).epsilon(1e-9));
    CHECK(gsnr(a, b) == doctest::Approx(oracle::gsnr(a.samples, b.samples)).epsilon(1e-10));
    CHECK(ssnr(a, b, 256) == doctest::Approx(oracle::ssnr(a.samples, b.samples, 256)).epsilon(1e-10));
  }
}

TEST_CASE("symmetry and monotonicity") {
  const AudioBuffer a = testutil::sine(180.0, 4096, 0.4);
  const AudioBuffer b = mixed(a, testutil::noise(4096, 0.2, 5), 1.0);
  CHECK(mcd13(a, b) == doctest::Approx(mcd13(b, a)).epsilon(1e-12));
  CHECK(gsnr(a, b) != doctest::Approx(gsnr(b, a)));
  double last = kGsnrCeiling + 1.0;
  for (double level : {0.001, 0.01, 0.05, 0.2, 1.0}) {
    const double v = gsnr(a, mixed(a, testutil::noise(4096, 1.0, 9), level));
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("undefined cases") {
  const AudioBuffer silent = scaled(testutil::sine(200.0, 4096), 0.0);
  const AudioBuffer s = testutil::sine(200.0, 4096, 0.3);
  CHECK_THROWS_AS(gsnr(silent, s), Error);
  CHECK_THROWS_AS(ssnr(silent, s), Error);
  CHECK_THROWS_AS(mcd13(testutil::sine(200.0, 500), testutil::sine(200.0, 500)), Error);
  const MetricRow row = evaluate_pair("x", silent, s);
  CHECK_FALSE(row.values[kGsnr].has_value());
  CHECK_FALSE(row.values[kSsnr].has_value());
  CHECK_FALSE(row.values[kF0Cents].has_value());
  CHECK(row.values[kMcd13].has_value());
  CHECK(row.note.find("gsnr") != std::string::npos);
}

TEST_CASE("aggregation") {
  const std::vector<double> two = {3.0, 5.0};
  const MetricAggregate a = aggregate_values(two);
  CHECK(a.mean == 4.0);
  CHECK(a.sd == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(a.ci95 == doctest::Approx(1.96).epsilon(1e-15));
  CHECK(a.n == 2);

  std::mt19937_64 g(8);
  std::normal_distribution<double> d(5.0, 2.0);
  std::vector<MetricRow> rows(100);
  std::vector<double> vals;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].id = "r" + std::to_string(i);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      if (m == kSsnr && i % 10 == 0) continue;  // flagged
      rows[i].values[m] = d(g);
    }
    vals.push_back(*rows[i].values[kMcd13]);
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= 100.0;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / 99.0);
  const auto agg = aggregate(rows);
  CHECK(agg[kMcd13].mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(agg[kMcd13].sd == doctest::Approx(sd).epsilon(1e-12));
  CHECK(agg[kMcd13].ci95 == doctest::Approx(1.96 * sd / 10.0).epsilon(1e-12));
  CHECK(agg[kSsnr].n == 90);
  CHECK(agg[kSsnr].flagged == 10);

  SUBCASE("report csv round trip") {
    MetricReport rep;
    rep.rows = rows;
    rep.aggregates = agg;
    rep.unpaired = {"lonely.wav"};
    const auto dir = testutil::scratch_dir("report");
    write_report_csv(dir / "r.csv", rep);
    CHECK(testutil::slurp(dir / "r.csv").rfind("kind,id,mcd13,gsnr,ssnr,rmse_f0_cents,rmse_f0_hz,note\n", 0) == 0);
    const MetricReport back = read_report_csv(dir / "r.csv");
    REQUIRE(back.rows.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back.rows[i].id == rows[i].id);
      CHECK(back.rows[i].values == rows[i].values);
    }
    CHECK(back.unpaired == rep.unpaired);
    CHECK(back.aggregates[kMcd13].mean == agg[kMcd13].mean);
    CHECK(back.aggregates[kSsnr].flagged == 10);
  }
}
}
