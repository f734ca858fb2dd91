#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cqed/analysis.hpp"
#include "cqed/spectrum.hpp"

using namespace cqed;
using constants::two_pi;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.atoms = 8;
  c.protocol.max_sim_time = 1.2e-3;
  c.grid.probe_detunings = {-c.system.g0, two_pi * 9e6};
  c.grid.dipole_powers = {0.8, 1.0};
  return c;
}

}  // namespace

TEST(RunGrid, RowMajorWithSharedDarkReference) {
  const RunConfig c = small_config();
  std::vector<SpectrumPoint> pts;
  std::vector<std::vector<RunRecord>> darks;
  run_grid(c, [&](const SpectrumPoint& p, const auto& dark, const auto& runs) {
    pts.push_back(p);
    darks.push_back(dark);
    EXPECT_EQ(runs.size(), c.atoms);
  });
  ASSERT_EQ(pts.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(pts[k].row, k / 2);
    EXPECT_EQ(pts[k].column, k % 2);
    EXPECT_EQ(pts[k].dipole_power, c.grid.dipole_powers[k / 2]);
    EXPECT_EQ(pts[k].probe_detuning, c.grid.probe_detunings[k % 2]);
    EXPECT_EQ(pts[k].n_injected, c.atoms);
    EXPECT_GE(pts[k].loss_rate_error, 0.0);
    EXPECT_GE(pts[k].transmission_error, 0.0);
    EXPECT_EQ(pts[k].excess_loss_rate, pts[k].loss_rate - pts[k].dark_rate);
  }
  EXPECT_EQ(pts[0].dark_rate, pts[1].dark_rate);
  EXPECT_EQ(darks[0][3].storage_time, darks[1][3].storage_time);
  EXPECT_EQ(darks[2][0].stream_id, ensemble_stream_id(1, 0));
}

TEST(RunGrid, ResumingFromAPointReproducesTheTail) {
  const RunConfig c = small_config();
  std::vector<SpectrumPoint> all, tail;
  run_grid(c, [&](const SpectrumPoint& p, const auto&, const auto&) { all.push_back(p); });
  run_grid(c, [&](const SpectrumPoint& p, const auto&, const auto&) { tail.push_back(p); }, 3);
  ASSERT_EQ(tail.size(), 1u);
  EXPECT_EQ(tail[0].loss_rate, all[3].loss_rate);
  EXPECT_EQ(tail[0].dark_rate, all[3].dark_rate);
  EXPECT_EQ(tail[0].transmission_mean, all[3].transmission_mean);
}

TEST(RunGrid, InvalidConfigThrowsBeforeRunning) {
  RunConfig c = small_config();
  c.grid.dipole_powers = {0.1};
  int calls = 0;
  EXPECT_THROW(run_grid(c, [&](auto&&...) { ++calls; }), ConfigError);
  EXPECT_EQ(calls, 0);
}

TEST(SummarizePoint, CountsOnlyQualifiedWindows) {
  RunRecord r;
  r.captured = true;
  r.censored = true;
  r.storage_time = 1e-3;
  r.window_transmission = {0.2, 0.4, 0.9};
  r.window_duration = {1e-4, 1e-4, 5e-5};
  r.window_qualified = {true, true, false};
  r.qualified_windows = 2;
  r.ledger_sp = 1;
  r.ledger_dp = 3;
  r.probe_time = 2.5e-4;
  r.ledger_coupling = 2.5e-4 * 5;
  StorageStatistics dark;
  const SpectrumPoint p = summarize_point({r}, dark, 1.0, 0.0);
  EXPECT_EQ(p.qualified_windows, 2u);
  EXPECT_DOUBLE_EQ(p.transmission_mean, 0.3);
  EXPECT_DOUBLE_EQ(p.transmission_error, 0.1 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(p.sp_share, 0.25);
  EXPECT_DOUBLE_EQ(p.dp_share, 0.75);
  EXPECT_DOUBLE_EQ(p.mean_coupling, 5.0);
}

TEST(Calibration, RejectsInvalidTargetsAndRanges) {
  RunConfig c;
  c.atoms = 2;
  EXPECT_THROW(calibrate_noise(0.0, c, 1), CalibrationError);
  EXPECT_THROW(calibrate_noise(-1e-3, c, 1), CalibrationError);
  CalibrationOptions bad;
  bad.sigma_low = 0.3;
  bad.sigma_high = 0.2;
  EXPECT_THROW(calibrate_noise(1e-3, c, 1, bad), CalibrationError);
}

TEST(Calibration, NonBracketingRangeFails) {
  RunConfig c;
  c.atoms = 10;
  CalibrationOptions opt;
  opt.sigma_low = 0.3;
  opt.sigma_high = 0.5;
  // far longer than anything reachable with sigma >= 0.3
  EXPECT_THROW(calibrate_noise(5e-3, c, 1, opt), CalibrationError);
}

TEST(Calibration, DarkStorageTimeDecreasesWithNoiseWidth) {
  RunConfig c;
  c.atoms = 60;
  c.protocol.max_sim_time = 6e-3;
  const double t1 = dark_storage_time(c, 0.08, 7);
  const double t2 = dark_storage_time(c, 0.16, 7);
  const double t3 = dark_storage_time(c, 0.32, 7);
  EXPECT_GT(t1, t2);
  EXPECT_GT(t2, t3);
}

TEST(PeakFinding, LocalMaximaAndParabolicRefinement) {
  std::vector<double> x, y;
  for (int i = 0; i <= 40; ++i) {
    x.push_back(i * 0.25);
    y.push_back(std::exp(-std::pow(x.back() - 3.1, 2)) + 0.5 * std::exp(-std::pow(x.back() - 7.0, 2)));
  }
  const auto m = local_maxima(y);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_NEAR(parabolic_peak(x, y, m[0]), 3.1, 0.02);
  EXPECT_NEAR(x[m[1]], 7.0, 0.13);
}

TEST(TwoPeakFit, RecoversSyntheticParameters) {
  std::mt19937 gen(4);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x, y, s;
  for (int i = 0; i < 41; ++i) {
    const double xi = -25 + i * 1.0;
    x.push_back(xi);
    const double truth = 10 + detail::gauss(xi, 100, -14, 6) + detail::gauss(xi, 250, 9, 10);
    s.push_back(5.0);
    y.push_back(truth + 5.0 * noise(gen));
  }
  const TwoPeakFit f = fit_two_peaks(x, y, s, -12, 10, 8);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.left.center, -14, 3 * f.left.center_error);
  EXPECT_NEAR(f.right.center, 9, 3 * f.right.center_error);
  EXPECT_NEAR(f.left.fwhm, 6, 3 * f.left.fwhm_error);
  EXPECT_NEAR(f.right.fwhm, 10, 3 * f.right.fwhm_error);
  EXPECT_LT(f.left.center, f.right.center);
  EXPECT_GT(f.left.fwhm_error, 0.0);
  EXPECT_EQ(f.dof, 41 - 7);
}
