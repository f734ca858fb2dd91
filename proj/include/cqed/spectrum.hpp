#pragma once

// Ensemble orchestration over the (dipole power x probe detuning) grid, the
// force-decomposition runs and the dark-trap noise calibration.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqed/config.hpp"
#include "cqed/ensemble.hpp"
#include "cqed/protocol.hpp"

namespace cqed {

struct SpectrumPoint {
  std::size_t row = 0;     // dipole power index
  std::size_t column = 0;  // probe detuning index
  double dipole_power = 0.0;
  double probe_detuning = 0.0;  // rad/s
  // duration-weighted mean over qualified probe windows
  double transmission_mean = 0.0;
  double transmission_error = 0.0;
  std::size_t qualified_windows = 0;
  double loss_rate = 0.0;
  double loss_rate_error = 0.0;
  bool all_censored = false;
  double dark_rate = 0.0;
  double dark_rate_error = 0.0;
  double excess_loss_rate = 0.0;
  double excess_loss_error = 0.0;
  bool excess_negative = false;
  std::size_t n_atoms = 0;  // captured atoms contributing to the rates
  std::size_t n_injected = 0;
  std::size_t n_lost = 0;
  double dp_share = 0.0;  // ledger shares over probe windows
  double sp_share = 0.0;
  double axial_fraction = 0.0;
  // probe-window averages of g(r) and of the local atom-cavity detuning, rad/s
  double mean_coupling = 0.0;
  double mean_detuning = 0.0;
};

inline SpectrumPoint summarize_point(const std::vector<RunRecord>& probe, const StorageStatistics& dark,
                                     double dipole_power, double probe_detuning) {
  SpectrumPoint pt;
  pt.dipole_power = dipole_power;
  pt.probe_detuning = probe_detuning;
  const StorageStatistics st = storage_statistics(probe);
  pt.loss_rate = st.loss_rate;
  pt.loss_rate_error = st.loss_rate_error;
  pt.all_censored = st.all_censored;
  pt.dark_rate = dark.loss_rate;
  pt.dark_rate_error = dark.loss_rate_error;
  const ExcessLoss ex = excess_loss_rate(st, dark);
  pt.excess_loss_rate = ex.rate;
  pt.excess_loss_error = ex.error;
  pt.excess_negative = ex.negative;
  pt.n_atoms = st.n_captured;
  pt.n_injected = st.n_total;
  pt.n_lost = st.n_lost;
  pt.axial_fraction = st.axial_fraction;
  pt.dp_share = st.ledger_dp_share;
  double sp = 0.0;
  double dp = 0.0;
  double t_sum = 0.0;
  double t2_sum = 0.0;
  double w_sum = 0.0;
  double g_sum = 0.0;
  double d_sum = 0.0;
  double probe_time = 0.0;
  for (const auto& r : probe) {
    if (!r.captured) continue;
    sp += r.ledger_sp;
    dp += r.ledger_dp;
    g_sum += r.ledger_coupling;
    d_sum += r.ledger_detuning;
    probe_time += r.probe_time;
    for (std::size_t i = 0; i < r.window_transmission.size(); ++i) {
      if (!r.window_qualified[i]) continue;
      const double w = r.window_duration[i];
      t_sum += w * r.window_transmission[i];
      t2_sum += w * r.window_transmission[i] * r.window_transmission[i];
      w_sum += w;
      ++pt.qualified_windows;
    }
  }
  if (sp + dp > 0.0) pt.sp_share = sp / (sp + dp);
  if (w_sum > 0.0) {
    pt.transmission_mean = t_sum / w_sum;
    const double var = std::max(0.0, t2_sum / w_sum - pt.transmission_mean * pt.transmission_mean);
    pt.transmission_error = std::sqrt(var / static_cast<double>(pt.qualified_windows));
  }
  if (probe_time > 0.0) {
    pt.mean_coupling = g_sum / probe_time;
    pt.mean_detuning = d_sum / probe_time;
  }
  return pt;
}

/// Runs the grid in row-major order starting at flat index `first_point`,
/// calling on_point(point, dark_runs, probe_runs) as each point completes.
/// Atoms fan out over `cfg.jobs` workers; points are produced in grid order, so
/// the callback sequence is the same for any job count. Row r uses stream
/// family r for both its dark reference and every detuning (common random
/// numbers).
template <typename OnPoint>
void run_grid(const RunConfig& cfg, OnPoint&& on_point, std::size_t first_point = 0) {
  if (auto errs = cfg.validation_errors(); !errs.empty()) throw ConfigError(std::move(errs));
  const std::size_t n_cols = cfg.grid.probe_detunings.size();
  const std::size_t n_points = n_cols * cfg.grid.dipole_powers.size();
  std::vector<RunRecord> dark;
  StorageStatistics dark_stats;
  std::size_t dark_row = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = first_point; k < n_points; ++k) {
    const std::size_t row = k / n_cols;
    const std::size_t col = k % n_cols;
    const double power = cfg.grid.dipole_powers[row];
    const ProtocolConfig base = cfg.build_protocol(power);
    if (row != dark_row) {
      dark = run_ensemble(base.dark(), cfg.system, cfg.seed, row, cfg.atoms, cfg.jobs);
      dark_stats = storage_statistics(dark);
      dark_row = row;
    }
    ProtocolConfig pc = base;
    pc.probe_drive = base.probe_drive.with_probe_detuning(cfg.grid.probe_detunings[col]);
    const std::vector<RunRecord> runs = run_ensemble(pc, cfg.system, cfg.seed, row, cfg.atoms, cfg.jobs);
    SpectrumPoint pt = summarize_point(runs, dark_stats, power, cfg.grid.probe_detunings[col]);
    pt.row = row;
    pt.column = col;
    on_point(pt, dark, runs);
  }
}

/// Loss spectrum over the configured grid with only the selected diffusion
/// channels active. Deterministic forces and trap noise are unchanged; the
/// dark reference runs in the same mode.
inline std::vector<SpectrumPoint> force_decomposition_run(RunConfig cfg, DiffusionMode mode) {
  cfg.mode = mode;
  std::vector<SpectrumPoint> out;
  run_grid(cfg, [&](const SpectrumPoint& p, const auto&, const auto&) { out.push_back(p); });
  return out;
}

// ---------------------------------------------------------------------------
// Noise calibration

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CalibrationOptions {
  double sigma_low = 0.0;
  double sigma_high = 0.5;
  double rel_tolerance = 0.05;  // stop when |T / target - 1| falls below this
  int max_evaluations = 24;
  double horizon_factor = 3.0;  // storage horizon as a multiple of the target
};

struct CalibrationResult {
  double sigma_eps = 0.0;
  double storage_time = 0.0;
  int evaluations = 0;
};

/// Mean dark storage time (censored MLE) at noise width `sigma`. The same
/// stream ids are used for every width.
inline double dark_storage_time(const RunConfig& cfg, double sigma, std::uint64_t seed) {
  ProtocolConfig pc = cfg.build_protocol().dark();
  pc.sigma_eps = sigma;
  const auto runs = run_ensemble(pc, cfg.system, seed, 0, cfg.atoms, cfg.jobs);
  const StorageStatistics st = storage_statistics(runs);
  return st.mean_storage_time;
}

/// Bisection over sigma_eps until the simulated mean dark storage time matches
/// `target` (s). Uses cfg.atoms atoms per evaluation (at least 100 for a
/// meaningful result).
inline CalibrationResult calibrate_noise(double target, RunConfig cfg, std::uint64_t seed,
                                         const CalibrationOptions& opt = {}) {
  if (!(target > 0.0) || !std::isfinite(target)) throw CalibrationError("target dark storage time must be > 0");
  if (!(opt.sigma_high > opt.sigma_low && opt.sigma_low >= 0.0))
    throw CalibrationError("calibration range must satisfy 0 <= sigma_low < sigma_high");
  cfg.protocol.max_sim_time = opt.horizon_factor * target;
  CalibrationResult res;
  auto eval = [&](double sigma) {
    ++res.evaluations;
    return dark_storage_time(cfg, sigma, seed);
  };
  double lo = opt.sigma_low;
  double hi = opt.sigma_high;
  const double t_lo = eval(lo);
  const double t_hi = eval(hi);
  if (!(t_lo >= target && t_hi <= target))
    throw CalibrationError("target " + format_number(target) + " s not bracketed: storage time " +
                           format_number(t_lo) + " s at sigma " + format_number(lo) + ", " + format_number(t_hi) +
                           " s at sigma " + format_number(hi));
  res.sigma_eps = hi;
  res.storage_time = t_hi;
  if (std::abs(t_lo / target - 1.0) < std::abs(t_hi / target - 1.0)) {
    res.sigma_eps = lo;
    res.storage_time = t_lo;
  }
  while (std::abs(res.storage_time / target - 1.0) > opt.rel_tolerance && res.evaluations < opt.max_evaluations) {
    const double mid = 0.5 * (lo + hi);
    const double t = eval(mid);
    if (std::abs(t / target - 1.0) < std::abs(res.storage_time / target - 1.0) || !std::isfinite(res.storage_time)) {
      res.sigma_eps = mid;
      res.storage_time = t;
    }
    if (t > target) lo = mid;
    else hi = mid;
  }
  return res;
}

}  // namespace cqed
