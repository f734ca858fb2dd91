#pragma once

// Langevin integration: an embedded Dormand-Prince 5(4) pair advances the
// deterministic motion, after which Euler-Maruyama momentum kicks, discrete
// spontaneous-emission recoils and the trap-intensity noise are applied.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "cqed/constants.hpp"
#include "cqed/light_forces.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/rng.hpp"
#include "cqed/vec3.hpp"

namespace cqed {

struct AtomState {
  Vec3 pos;  // m
  Vec3 mom;  // kg m/s
  double t = 0.0;

  bool finite() const { return is_finite(pos) && is_finite(mom) && std::isfinite(t); }
};

inline ForceBreakdown total_force_and_noise(const AtomState& s, const DriveSettings& drive, const SystemParams& p,
                                            double eps, const ForceOptions& opt = {}) {
  return total_force_and_noise(s.pos, drive, p, eps, opt);
}

/// Kinetic + trap + gravitational energy (J).
inline double mechanical_energy(const AtomState& s, const DriveSettings& drive, const SystemParams& p,
                                double eps = 1.0, bool gravity = true) {
  double e = dot(s.mom, s.mom) / (2.0 * p.mass) + trap_potential(s.pos, drive, p, eps);
  if (gravity) e += p.mass * constants::standard_gravity * s.pos.x;
  return e;
}

// ---------------------------------------------------------------------------
// Trap-intensity noise

/// Piecewise-constant relative trap intensity eps(t), redrawn on a fixed grid of
/// spacing dt_noise from a Gaussian with mean 1 and width sigma_eps, truncated
/// at zero. White up to 1/(2 dt_noise). With sigma_eps = 0 the process is the
/// constant 1 and has no grid, so it never limits the integrator step.
struct NoiseProcess {
  double eps = 1.0;
  double sigma_eps = 0.0;
  double dt_noise = 1.0e-7;
  double origin = 0.0;
  std::uint64_t draws = 0;

  double next_resample() const {
    if (sigma_eps <= 0.0) return std::numeric_limits<double>::infinity();
    return origin + static_cast<double>(draws + 1) * dt_noise;
  }
};

namespace detail {
inline double draw_eps(double sigma, RngStream& rng) {
  if (sigma <= 0.0) return 1.0;
  for (;;) {
    const double e = 1.0 + sigma * rng.normal();
    if (e >= 0.0) return e;
  }
}
}  // namespace detail

/// Starts the noise process at time t0 with a fresh draw.
inline NoiseProcess make_noise(double sigma_eps, double dt_noise, double t0, RngStream& rng) {
  NoiseProcess n;
  n.sigma_eps = sigma_eps;
  n.dt_noise = dt_noise;
  n.origin = t0;
  n.eps = detail::draw_eps(sigma_eps, rng);
  return n;
}

/// Redraws eps once per grid boundary crossed up to and including t_target.
inline NoiseProcess noise_advance(NoiseProcess noise, RngStream& rng, double t_target) {
  while (noise.next_resample() <= t_target) {
    ++noise.draws;
    noise.eps = detail::draw_eps(noise.sigma_eps, rng);
  }
  return noise;
}

// ---------------------------------------------------------------------------
// Spontaneous emission

/// Emission direction for a sigma+ dipole oriented along the cavity axis:
/// density (1 + cos^2 theta) about z, so E[u_z^2] = 2/5, E[u_x^2] = E[u_y^2] = 3/10.
inline Vec3 spontaneous_recoil_direction(RngStream& rng) {
  double c = 0.0;
  for (;;) {
    c = 2.0 * rng.uniform() - 1.0;
    if (2.0 * rng.uniform() < 1.0 + c * c) break;
  }
  const double phi = constants::two_pi * rng.uniform();
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  return {s * std::cos(phi), s * std::sin(phi), c};
}

// ---------------------------------------------------------------------------
// Integrator

struct StepControl {
  double tolerance = 1.0e-9;  // per-step relative error on position and momentum
  double min_step = 1.0e-14;
  double max_step = 1.0e-6;
  int max_retries = 60;
  double next_step = 1.0e-9;  // proposal carried between calls
  // Floors for the relative error measure (0 selects lambda_probe/2pi and hbar k).
  double position_floor = 0.0;
  double momentum_floor = 0.0;
};

struct DynamicsOptions {
  ForceOptions forces;
  bool spontaneous_events = true;    // false: Gaussian kicks with the same second moments
  bool axial_only_dipole_kicks = false;  // +/- sqrt(2 D_dp h) along z only
  bool freeze_position = false;      // kick-statistics tests
};

struct StepDiagnostics {
  double h = 0.0;
  int rejected = 0;
  double error_norm = 0.0;
  std::uint64_t spontaneous_events = 0;
  Vec3 kick;  // stochastic momentum change
  // values at the start of the step
  double d_sp = 0.0;
  double d_dp = 0.0;
  double d_total = 0.0;
  Vec3 d_sp_axis;
  Vec3 d_dp_axis;
  double transmission_norm = 0.0;
  double p_excited = 0.0;
  bool valid = true;
};

struct StepResult {
  AtomState state;
  StepDiagnostics diag;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, const AtomState& snapshot)
      : std::runtime_error(what), snapshot_(snapshot) {}
  const AtomState& snapshot() const { return snapshot_; }

 private:
  AtomState snapshot_;
};

namespace detail {

struct PhasePoint {
  std::array<double, 6> y{};
};

inline PhasePoint pack(const AtomState& s) {
  return {{s.pos.x, s.pos.y, s.pos.z, s.mom.x, s.mom.y, s.mom.z}};
}

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (error weights)
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace detail

/// One accepted step. The deterministic part (trap, mean dipole force, friction,
/// gravity) is advanced with adaptive step size limited by the noise grid and
/// t_limit; the stochastic kicks use the diffusion at the start of the step and
/// the accepted step length. Throws IntegrationError when no acceptable step is
/// found within max_retries.
inline StepResult step(const AtomState& state, const DriveSettings& drive, const SystemParams& p,
                       NoiseProcess& noise, RngStream& rng, StepControl& ctrl, const DynamicsOptions& opt = {},
                       double t_limit = std::numeric_limits<double>::infinity()) {
  using detail::PhasePoint;
  const double eps = noise.eps;
  const double inv_m = 1.0 / p.mass;

  ForceOptions det_opts = opt.forces;
  det_opts.spontaneous_diffusion = false;
  det_opts.dipole_diffusion = false;

  const ForceBreakdown start = total_force_and_noise(state.pos, drive, p, eps, opt.forces);

  auto deriv = [&](const PhasePoint& y, const ForceBreakdown* known) {
    const Vec3 pos{y.y[0], y.y[1], y.y[2]};
    const Vec3 mom{y.y[3], y.y[4], y.y[5]};
    const Vec3 vel = inv_m * mom;
    const ForceBreakdown b = known ? *known : total_force_and_noise(pos, drive, p, eps, det_opts);
    const Vec3 f = b.deterministic_force(vel);
    PhasePoint d;
    if (!opt.freeze_position) {
      d.y[0] = vel.x;
      d.y[1] = vel.y;
      d.y[2] = vel.z;
    }
    d.y[3] = f.x;
    d.y[4] = f.y;
    d.y[5] = f.z;
    return d;
  };
  auto axpy = [](const PhasePoint& y, std::initializer_list<std::pair<double, const PhasePoint*>> terms,
                 double h) {
    PhasePoint out = y;
    for (const auto& [c, k] : terms)
      for (std::size_t i = 0; i < 6; ++i) out.y[i] += h * c * k->y[i];
    return out;
  };

  const double pos_floor = ctrl.position_floor > 0.0 ? ctrl.position_floor : p.lambda_probe / constants::two_pi;
  const double mom_floor = ctrl.momentum_floor > 0.0 ? ctrl.momentum_floor : p.hbar_k();

  const PhasePoint y0 = detail::pack(state);
  const PhasePoint k1 = deriv(y0, &start);

  const double boundary = std::min(noise.next_resample(), t_limit);
  double h = std::clamp(ctrl.next_step, ctrl.min_step, ctrl.max_step);
  StepDiagnostics diag;
  PhasePoint y_new;
  bool accepted = false;
  bool hit_boundary = false;
  for (int attempt = 0; attempt <= ctrl.max_retries; ++attempt) {
    hit_boundary = false;
    if (state.t + h >= boundary) {
      h = boundary - state.t;
      hit_boundary = true;
    }
    using namespace detail;
    const PhasePoint k2 = deriv(axpy(y0, {{a21, &k1}}, h), nullptr);
    const PhasePoint k3 = deriv(axpy(y0, {{a31, &k1}, {a32, &k2}}, h), nullptr);
    const PhasePoint k4 = deriv(axpy(y0, {{a41, &k1}, {a42, &k2}, {a43, &k3}}, h), nullptr);
    const PhasePoint k5 = deriv(axpy(y0, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}, h), nullptr);
    const PhasePoint k6 = deriv(axpy(y0, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}, h), nullptr);
    y_new = axpy(y0, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}}, h);
    const PhasePoint k7 = deriv(y_new, nullptr);
    double err = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      const double e = h * (e1 * k1.y[i] + e3 * k3.y[i] + e4 * k4.y[i] + e5 * k5.y[i] + e6 * k6.y[i] + e7 * k7.y[i]);
      const double floor = i < 3 ? pos_floor : mom_floor;
      const double scale = ctrl.tolerance * std::max({std::abs(y0.y[i]), std::abs(y_new.y[i]), floor});
      err = std::max(err, std::abs(e) / scale);
    }
    if (!std::isfinite(err)) err = 1.0e10;
    const double factor = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
    if (err <= 1.0 || h <= ctrl.min_step) {
      diag.error_norm = err;
      if (!hit_boundary) ctrl.next_step = std::clamp(h * factor, ctrl.min_step, ctrl.max_step);
      else ctrl.next_step = std::clamp(std::max(ctrl.next_step, h * factor), ctrl.min_step, ctrl.max_step);
      accepted = err <= 1.0;
      break;
    }
    ++diag.rejected;
    h = std::max(h * factor, ctrl.min_step);
  }
  if (!accepted) throw IntegrationError("integration step rejected beyond max_retries / min_step", state);

  StepResult out;
  out.state.pos = {y_new.y[0], y_new.y[1], y_new.y[2]};
  out.state.mom = {y_new.y[3], y_new.y[4], y_new.y[5]};
  out.state.t = hit_boundary ? boundary : state.t + h;
  diag.h = out.state.t - state.t;
  const double hs = diag.h;

  // Stochastic momentum kicks.
  Vec3 kick;
  const double d_dp_sum = start.d_dp_axis.x + start.d_dp_axis.y + start.d_dp_axis.z;
  if (opt.axial_only_dipole_kicks) {
    if (d_dp_sum > 0.0) kick.z += rng.sign() * std::sqrt(2.0 * d_dp_sum * hs);
  } else {
    for (std::size_t j = 0; j < 3; ++j)
      if (start.d_dp_axis[j] > 0.0) kick[j] += std::sqrt(2.0 * start.d_dp_axis[j] * hs) * rng.normal();
  }
  if (start.d_sp > 0.0) {
    const double hk = p.hbar_k();
    if (opt.spontaneous_events) {
      const double rate = 2.0 * start.d_sp / (hk * hk);  // 2 gamma P_e
      diag.spontaneous_events = rng.poisson(rate * hs);
      for (std::uint64_t n = 0; n < diag.spontaneous_events; ++n) kick += hk * spontaneous_recoil_direction(rng);
    } else {
      for (std::size_t j = 0; j < 3; ++j) kick[j] += std::sqrt(2.0 * start.d_sp_axis[j] * hs) * rng.normal();
    }
  }
  out.state.mom += kick;
  diag.kick = kick;
  diag.d_sp = start.d_sp;
  diag.d_dp = d_dp_sum;
  diag.d_total = start.total_diffusion();
  diag.d_sp_axis = start.d_sp_axis;
  diag.d_dp_axis = start.d_dp_axis;
  diag.transmission_norm = start.transmission_norm;
  diag.p_excited = start.p_excited;
  diag.valid = start.valid;

  noise = noise_advance(noise, rng, out.state.t);
  out.diag = diag;
  if (!out.state.finite()) throw IntegrationError("non-finite state after step", state);
  return out;
}

}  // namespace cqed
