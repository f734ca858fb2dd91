#pragma once

// The trapping experiment as a state machine: transverse injection in a weak
// guide, transmission-drop trigger, trap power switch, interleaved cooling and
// probe windows, loss detection and per-atom bookkeeping. Also the reducers
// that turn ensembles of runs into loss rates.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cqed/constants.hpp"
#include "cqed/light_forces.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/rng.hpp"
#include "cqed/stochastic.hpp"

namespace cqed {

enum class DiffusionMode { both, sp_only, dp_only };

inline std::string_view to_string(DiffusionMode m) {
  switch (m) {
    case DiffusionMode::sp_only: return "sp_only";
    case DiffusionMode::dp_only: return "dp_only";
    default: return "both";
  }
}

inline std::optional<DiffusionMode> parse_diffusion_mode(std::string_view s) {
  if (s == "both") return DiffusionMode::both;
  if (s == "sp_only") return DiffusionMode::sp_only;
  if (s == "dp_only") return DiffusionMode::dp_only;
  return std::nullopt;
}

enum class EscapeAxis { none, axial, radial };

inline std::string_view to_string(EscapeAxis e) {
  switch (e) {
    case EscapeAxis::axial: return "axial";
    case EscapeAxis::radial: return "radial";
    default: return "none";
  }
}

struct ProtocolConfig {
  // injection
  double inject_speed = 0.05;          // m/s along +x (upwards), <= 0.1
  double inject_distance = 30.0e-6;    // start at x = -inject_distance
  double inject_temperature = 2.0e-6;  // K, velocity spread of the released atoms
  double inject_y_spread = 2.0e-6;     // m, Gaussian sigma
  double inject_z_spread = 10.0e-6;    // m, uniform half width along the cavity axis
  double injection_timeout = 3.0e-3;   // s

  double trigger_threshold = 0.05;  // fraction of empty-cavity transmission
  double trap_power_low = 0.2;
  double trap_power_high = 1.0;

  double probe_window = 1.0e-4;
  double cool_window = 5.0e-4;

  // Drives at relative trap power 1. The protocol rescales trap depth and
  // Stark shift by the current trap power.
  DriveSettings monitor_drive;  // injection, probe resonant with the cavity
  DriveSettings probe_drive;
  DriveSettings cool_drive;

  double qualify_threshold = 0.01;  // mean cooling-window transmission
  double loss_radius = 87.0e-6;     // 3 waists
  double loss_zmax = 30.5e-6;       // cavity_length / 4
  double max_sim_time = 5.0e-3;     // storage horizon after the trigger

  double sigma_eps = 0.0;
  double dt_noise = 9.0e-8;

  StepControl integrator{.tolerance = 1.0e-5};
  DynamicsOptions dynamics;

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> e;
    if (!(inject_speed > 0.0 && inject_speed <= 0.1)) e.emplace_back("protocol.inject_speed must be in (0, 0.1] m/s");
    if (!(inject_distance > 0.0)) e.emplace_back("protocol.inject_distance must be > 0");
    if (!(inject_temperature >= 0.0)) e.emplace_back("protocol.inject_temperature must be >= 0");
    if (!(inject_y_spread >= 0.0 && inject_z_spread >= 0.0)) e.emplace_back("protocol spreads must be >= 0");
    if (!(injection_timeout > 0.0)) e.emplace_back("protocol.injection_timeout must be > 0");
    if (!(trigger_threshold > 0.0 && trigger_threshold < 1.0))
      e.emplace_back("protocol.trigger_threshold must be in (0, 1)");
    if (!(trap_power_low >= 0.0)) e.emplace_back("protocol.trap_power_low must be >= 0");
    if (!(trap_power_high > trap_power_low)) e.emplace_back("protocol.trap_power_high must exceed trap_power_low");
    if (!(probe_window > 0.0)) e.emplace_back("protocol.probe_window must be > 0");
    if (!(cool_window > 0.0)) e.emplace_back("protocol.cool_window must be > 0");
    if (!(monitor_drive.eta > 0.0)) e.emplace_back("monitor.eta must be > 0 for the transmission trigger");
    for (auto& m : monitor_drive.validation_errors("monitor")) e.push_back(m);
    for (auto& m : probe_drive.validation_errors("probe")) e.push_back(m);
    for (auto& m : cool_drive.validation_errors("cool")) e.push_back(m);
    if (!(loss_radius > 0.0)) e.emplace_back("protocol.loss_radius must be > 0");
    if (!(loss_zmax > 0.0)) e.emplace_back("protocol.loss_zmax must be > 0");
    if (!(inject_distance < loss_radius)) e.emplace_back("protocol.inject_distance must be < loss_radius");
    if (!(max_sim_time > 0.0)) e.emplace_back("protocol.max_sim_time must be > 0");
    if (!(sigma_eps >= 0.0)) e.emplace_back("noise.sigma_eps must be >= 0");
    if (!(dt_noise > 0.0)) e.emplace_back("noise.dt must be > 0");
    if (!(integrator.tolerance > 0.0)) e.emplace_back("integrator.tolerance must be > 0");
    if (!(integrator.max_step > integrator.min_step && integrator.min_step > 0.0))
      e.emplace_back("integrator step bounds must satisfy 0 < min_step < max_step");
    return e;
  }

  /// Same protocol with the selected diffusion channels zeroed.
  ProtocolConfig with_mode(DiffusionMode mode) const {
    ProtocolConfig c = *this;
    c.dynamics.forces.spontaneous_diffusion = mode != DiffusionMode::dp_only;
    c.dynamics.forces.dipole_diffusion = mode != DiffusionMode::sp_only;
    return c;
  }

  /// Same protocol without probe light in the probe windows.
  ProtocolConfig dark() const {
    ProtocolConfig c = *this;
    c.probe_drive.eta = 0.0;
    return c;
  }
};

/// Default trap depth U0 (J) and peak Stark shift S0 (rad/s) at trap power 1.
inline const double kDefaultTrapDepth = constants::planck * 20.0e6;
inline const double kDefaultStarkShift = constants::two_pi * 20.0e6;

/// Desk-scale protocol: the bare atom sits S0 below the cavity so that the
/// Stark-shifted atom at the trap centre is resonant with it (local Delta = 0).
/// Monitor probe on the empty-cavity resonance, probe on the lower normal mode,
/// cooling light red of the lower normal mode.
inline ProtocolConfig default_protocol(const SystemParams& p) {
  ProtocolConfig c;
  const double delta = kDefaultStarkShift * c.trap_power_high;
  c.monitor_drive = DriveSettings::from_detunings(0.0, delta, 0.3 * p.kappa, kDefaultTrapDepth, kDefaultStarkShift);
  c.probe_drive = DriveSettings::from_detunings(-p.g0, delta, 0.5 * p.kappa, kDefaultTrapDepth, kDefaultStarkShift);
  c.cool_drive = DriveSettings::from_detunings(-constants::two_pi * 20.0e6, delta, 0.3 * p.kappa, kDefaultTrapDepth,
                                               kDefaultStarkShift);
  return c;
}

struct RunRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  bool captured = false;
  bool censored = false;
  double trigger_time = 0.0;
  double trigger_transmission = 0.0;
  double storage_time = 0.0;
  EscapeAxis escape_axis = EscapeAxis::none;
  std::size_t qualified_windows = 0;
  std::vector<double> window_transmission;  // duration-weighted mean per probe window
  std::vector<double> window_duration;
  std::vector<bool> window_qualified;
  // time integrals over probe windows (kg^2 m^2 / s^2)
  double ledger_sp = 0.0;
  double ledger_dp = 0.0;
  double ledger_total = 0.0;
  double probe_time = 0.0;
  double cool_time = 0.0;
  // probe-window time integrals of |g(r)| and of the local atom-cavity detuning
  double ledger_coupling = 0.0;
  double ledger_detuning = 0.0;
  std::uint64_t steps = 0;
};

enum class TrajectoryEvent : int { none = 0, trigger = 1, window = 2, loss = 3, emission = 4 };

/// Optional per-step observer: (state, eps, event).
using TrajectoryObserver = std::function<void(const AtomState&, double, TrajectoryEvent)>;

namespace detail {

inline std::optional<EscapeAxis> check_loss(const AtomState& s, const ProtocolConfig& c) {
  if (std::hypot(s.pos.x, s.pos.y) > c.loss_radius) return EscapeAxis::radial;
  if (std::abs(s.pos.z) > c.loss_zmax) return EscapeAxis::axial;
  return std::nullopt;
}

}  // namespace detail

/// Runs one atom through injection, trigger and the interleaved window schedule
/// until loss or max_sim_time after the trigger.
inline RunRecord run_trajectory(const ProtocolConfig& cfg, const SystemParams& params, RngStream& rng,
                                const TrajectoryObserver& observer = {}) {
  RunRecord rec;
  rec.seed = rng.seed();
  rec.stream_id = rng.stream_id();

  const double sigma_v = std::sqrt(constants::k_boltzmann * cfg.inject_temperature / params.mass);
  AtomState s;
  s.pos = {-cfg.inject_distance, cfg.inject_y_spread * rng.normal(),
           cfg.inject_z_spread * (2.0 * rng.uniform() - 1.0)};
  const Vec3 vel{cfg.inject_speed + sigma_v * rng.normal(), sigma_v * rng.normal(), sigma_v * rng.normal()};
  s.mom = params.mass * vel;
  s.t = 0.0;

  NoiseProcess noise = make_noise(cfg.sigma_eps, cfg.dt_noise, 0.0, rng);
  StepControl ctrl = cfg.integrator;
  const DynamicsOptions& dyn = cfg.dynamics;
  auto notify = [&](TrajectoryEvent ev) {
    if (observer) observer(s, noise.eps, ev);
  };
  notify(TrajectoryEvent::none);

  // Injection: weak guide, resonant monitoring probe.
  const DriveSettings monitor = cfg.monitor_drive.with_trap_power(cfg.trap_power_low);
  for (;;) {
    const StepResult r = step(s, monitor, params, noise, rng, ctrl, dyn, cfg.injection_timeout);
    s = r.state;
    ++rec.steps;
    if (r.diag.transmission_norm <= cfg.trigger_threshold) {
      rec.captured = true;
      rec.trigger_time = s.t;
      rec.trigger_transmission = r.diag.transmission_norm;
      notify(TrajectoryEvent::trigger);
      break;
    }
    notify(r.diag.spontaneous_events ? TrajectoryEvent::emission : TrajectoryEvent::none);
    if (detail::check_loss(s, cfg) || s.t >= cfg.injection_timeout) return rec;
  }

  // Trapped phase: cooling window first, then probe, repeating.
  const DriveSettings cool = cfg.cool_drive.with_trap_power(cfg.trap_power_high);
  const DriveSettings probe = cfg.probe_drive.with_trap_power(cfg.trap_power_high);
  const double cycle = cfg.cool_window + cfg.probe_window;
  const double t0 = rec.trigger_time;
  const double t_end = t0 + cfg.max_sim_time;

  std::vector<double> cool_means;  // mean transmission per cooling window
  std::vector<bool> cool_complete;
  double acc_t = 0.0;
  double acc_w = 0.0;
  std::size_t n_cycle = 0;
  bool in_probe = false;
  auto close_window = [&](bool probe_window, bool complete) {
    const double mean = acc_w > 0.0 ? acc_t / acc_w : 0.0;
    if (probe_window) {
      rec.window_transmission.push_back(mean);
      rec.window_duration.push_back(acc_w);
    } else {
      cool_means.push_back(mean);
      cool_complete.push_back(complete);
    }
    acc_t = 0.0;
    acc_w = 0.0;
  };

  for (;;) {
    const double window_start = t0 + static_cast<double>(n_cycle) * cycle + (in_probe ? cfg.cool_window : 0.0);
    const double window_end = std::min(window_start + (in_probe ? cfg.probe_window : cfg.cool_window), t_end);
    const DriveSettings& drive = in_probe ? probe : cool;
    bool lost = false;
    while (s.t < window_end) {
      const double g_here = in_probe ? std::abs(coupling_at(s.pos, params)) : 0.0;
      const double d_here =
          in_probe ? effective_atom_detuning(s.pos, drive, params, noise.eps) - drive.delta_pc : 0.0;
      const StepResult r = step(s, drive, params, noise, rng, ctrl, dyn, window_end);
      s = r.state;
      ++rec.steps;
      const double h = r.diag.h;
      acc_t += r.diag.transmission_norm * h;
      acc_w += h;
      if (in_probe) {
        rec.ledger_sp += r.diag.d_sp * h;
        rec.ledger_dp += r.diag.d_dp * h;
        rec.ledger_total += r.diag.d_total * h;
        rec.probe_time += h;
        rec.ledger_coupling += g_here * h;
        rec.ledger_detuning += d_here * h;
      } else {
        rec.cool_time += h;
      }
      if (auto axis = detail::check_loss(s, cfg)) {
        rec.escape_axis = *axis;
        rec.storage_time = s.t - t0;
        lost = true;
        break;
      }
      notify(r.diag.spontaneous_events ? TrajectoryEvent::emission : TrajectoryEvent::none);
    }
    close_window(in_probe, !lost);
    if (lost) {
      notify(TrajectoryEvent::loss);
      break;
    }
    if (s.t >= t_end) {
      rec.censored = true;
      rec.storage_time = cfg.max_sim_time;
      break;
    }
    notify(TrajectoryEvent::window);
    if (in_probe) ++n_cycle;
    in_probe = !in_probe;
  }

  // A probe window qualifies when both neighbouring cooling windows ran to
  // completion with mean transmission above threshold. Probe window i sits
  // between cooling windows i and i + 1.
  const std::size_t n_probe = rec.window_transmission.size();
  rec.window_qualified.assign(n_probe, false);
  for (std::size_t i = 0; i < n_probe; ++i) {
    if (i + 1 >= cool_means.size() || !cool_complete[i] || !cool_complete[i + 1]) continue;
    if (cool_means[i] >= cfg.qualify_threshold && cool_means[i + 1] >= cfg.qualify_threshold) {
      rec.window_qualified[i] = true;
      ++rec.qualified_windows;
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Statistics

struct StorageStatistics {
  std::size_t n_total = 0;
  std::size_t n_captured = 0;
  std::size_t n_lost = 0;
  double exposure = 0.0;           // summed storage time of captured atoms, s
  double loss_rate = 0.0;          // 1/s, censored exponential MLE
  double loss_rate_error = 0.0;    // 1/s
  double mean_storage_time = 0.0;  // 1 / loss_rate, infinite without losses
  bool all_censored = false;       // no losses observed
  double rate_upper_bound = 0.0;   // one-sided 95% bound 3 / exposure, set when all_censored
  double axial_fraction = 0.0;     // of lost atoms
  double radial_fraction = 0.0;
  double ledger_dp_share = 0.0;    // dp / (sp + dp) over probe windows
  double capture_probability = 0.0;
};

/// Reduces captured runs to a loss rate. Runs surviving to max_sim_time are
/// right-censored: rate = n_lost / sum(storage_time), error rate / sqrt(n_lost).
/// With no losses the estimate is 0, the error 1 / exposure and the flagged
/// upper bound 3 / exposure.
inline StorageStatistics storage_statistics(const std::vector<RunRecord>& runs) {
  StorageStatistics st;
  st.n_total = runs.size();
  double sp = 0.0;
  double dp = 0.0;
  std::size_t axial = 0;
  for (const auto& r : runs) {
    if (!r.captured) continue;
    ++st.n_captured;
    st.exposure += r.storage_time;
    if (!r.censored && r.escape_axis != EscapeAxis::none) {
      ++st.n_lost;
      if (r.escape_axis == EscapeAxis::axial) ++axial;
    }
    sp += r.ledger_sp;
    dp += r.ledger_dp;
  }
  if (st.n_total > 0) st.capture_probability = static_cast<double>(st.n_captured) / static_cast<double>(st.n_total);
  if (sp + dp > 0.0) st.ledger_dp_share = dp / (sp + dp);
  if (st.n_captured == 0 || !(st.exposure > 0.0)) {
    st.all_censored = true;
    st.loss_rate = std::numeric_limits<double>::quiet_NaN();
    st.loss_rate_error = std::numeric_limits<double>::infinity();
    st.rate_upper_bound = std::numeric_limits<double>::infinity();
    st.mean_storage_time = 0.0;
    return st;
  }
  if (st.n_lost == 0) {
    st.all_censored = true;
    st.loss_rate = 0.0;
    st.loss_rate_error = 1.0 / st.exposure;
    st.rate_upper_bound = 3.0 / st.exposure;
  } else {
    const double n = static_cast<double>(st.n_lost);
    st.loss_rate = n / st.exposure;
    st.loss_rate_error = st.loss_rate / std::sqrt(n);
    st.axial_fraction = static_cast<double>(axial) / n;
    st.radial_fraction = 1.0 - st.axial_fraction;
  }
  st.mean_storage_time = st.n_lost > 0 ? 1.0 / st.loss_rate : std::numeric_limits<double>::infinity();
  return st;
}

struct ExcessLoss {
  double rate = 0.0;
  double error = 0.0;
  bool negative = false;
};

/// Probe-induced surplus loss rate with errors added in quadrature.
inline ExcessLoss excess_loss_rate(const StorageStatistics& probe, const StorageStatistics& dark) {
  ExcessLoss e;
  e.rate = probe.loss_rate - dark.loss_rate;
  e.error = std::hypot(probe.loss_rate_error, dark.loss_rate_error);
  e.negative = e.rate < 0.0;
  return e;
}

inline ExcessLoss excess_loss_rate(const std::vector<RunRecord>& probe, const std::vector<RunRecord>& dark) {
  return excess_loss_rate(storage_statistics(probe), storage_statistics(dark));
}

}  // namespace cqed
