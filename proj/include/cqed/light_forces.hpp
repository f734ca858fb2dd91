#pragma once

// Low-saturation light forces on the atom: conservative trap force, mean probe
// dipole force, linear-response friction and momentum diffusion split into
// spontaneous-emission and dipole-fluctuation parts.

#include <array>
#include <complex>

#include "cqed/constants.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/vec3.hpp"

namespace cqed {

/// Per-axis fractions (x, y, z) of spontaneous-emission diffusion for sigma+
/// emission about the cavity axis.
inline constexpr Vec3 kRecoilFractions{0.3, 0.3, 0.4};

/// Switches for individual mechanisms; everything on by default.
struct ForceOptions {
  bool trap = true;
  bool mean_dipole = true;
  bool stark_dipole = true;  // excited-state Stark gradient term of the probe force
  bool friction = true;
  bool gravity = true;
  bool spontaneous_diffusion = true;
  bool dipole_diffusion = true;
};

/// Position-dependent fields, amplitudes and their analytic gradients.
struct FieldSample {
  double g = 0.0;
  Vec3 grad_g;
  double trap_intensity = 0.0;
  Vec3 grad_trap_intensity;
  double delta_pa = 0.0;
  Vec3 grad_delta_pa;
  SteadyState steady;
  std::array<complex, 3> grad_a{};
  std::array<complex, 3> grad_sigma{};
  // linear-system coefficients d_c, d_a and den = d_c d_a + g^2
  complex dc{};
  complex da{};
  complex den{};
};

inline FieldSample sample_field(const Vec3& pos, const DriveSettings& drive, const SystemParams& p,
                                double eps = 1.0) {
  FieldSample f;
  f.g = coupling_at(pos, p);
  f.grad_g = coupling_gradient(pos, p);
  f.trap_intensity = trap_intensity_at(pos, p);
  f.grad_trap_intensity = trap_intensity_gradient(pos, p);
  const double stark = drive.effective_stark() * eps;
  f.delta_pa = drive.delta_pa0 - stark * f.trap_intensity;
  f.grad_delta_pa = -stark * f.grad_trap_intensity;
  const double eta = drive.effective_eta();
  f.steady = steady_state_local(f.g, drive.delta_pc, f.delta_pa, eta, p);
  f.dc = complex{p.kappa, -drive.delta_pc};
  f.da = complex{p.gamma, -f.delta_pa};
  f.den = f.dc * f.da + f.g * f.g;
  const complex den2 = f.den * f.den;
  for (std::size_t j = 0; j < 3; ++j) {
    const complex dda{0.0, -f.grad_delta_pa[j]};
    const complex dden = 2.0 * f.g * f.grad_g[j] + f.dc * dda;
    f.grad_a[j] = eta * (dda * f.den - f.da * dden) / den2;
    f.grad_sigma[j] = complex{0.0, -eta} * (f.grad_g[j] * f.den - f.g * dden) / den2;
  }
  return f;
}

inline double trap_potential(const Vec3& pos, const DriveSettings& drive, const SystemParams& p, double eps = 1.0) {
  return -drive.effective_trap_depth() * eps * trap_intensity_at(pos, p);
}

/// -grad U for U = -U0 eps f_t(r).
inline Vec3 trap_force(const Vec3& pos, const DriveSettings& drive, const SystemParams& p, double eps = 1.0) {
  return drive.effective_trap_depth() * eps * trap_intensity_gradient(pos, p);
}

namespace detail {
// Force for given amplitudes (a, sigma) at a fixed position; the amplitudes need
// not be the local steady state.
inline Vec3 dipole_force_for(const FieldSample& f, complex a, complex sigma, double stark_eps, bool stark_term) {
  const double coupling_term = -2.0 * constants::hbar * std::real(a * std::conj(sigma));
  Vec3 force = coupling_term * f.grad_g;
  if (stark_term) force += (-constants::hbar * stark_eps * std::norm(sigma)) * f.grad_trap_intensity;
  return force;
}
}  // namespace detail

/// Mean force of the probe field: -grad <H_int> with the gradient acting on g(r)
/// and, optionally, on the Stark-shifted excited-state energy.
inline Vec3 mean_dipole_force(const FieldSample& f, const DriveSettings& drive, double eps = 1.0,
                              bool stark_term = true) {
  return detail::dipole_force_for(f, f.steady.a_mean, f.steady.sigma_mean, drive.effective_stark() * eps,
                                  stark_term);
}

inline Vec3 mean_dipole_force(const Vec3& pos, const DriveSettings& drive, const SystemParams& p, double eps = 1.0,
                              bool stark_term = true) {
  return mean_dipole_force(sample_field(pos, drive, p, eps), drive, eps, stark_term);
}

/// Friction tensor from linear response of the two mean-field equations
///   da/dt = -d_c a - i g sigma + eta,  dsigma/dt = -d_a sigma - i g a.
/// For unit velocity along j the first-order amplitude lag is
/// x1 = -M^{-1} d_j x0 with M = [[d_c, i g], [i g, d_a]]; column j is minus the
/// resulting force change, so that F = F0 - friction * v.
inline Mat3 friction_tensor(const FieldSample& f, const DriveSettings& drive, double eps = 1.0,
                            bool stark_term = true) {
  const complex ig{0.0, f.g};
  const complex det = f.den;  // d_c d_a - (i g)^2
  auto solve = [&](complex b0, complex b1) {
    return std::array<complex, 2>{(f.da * b0 - ig * b1) / det, (f.dc * b1 - ig * b0) / det};
  };
  const complex a0 = f.steady.a_mean;
  const complex s0 = f.steady.sigma_mean;
  const double stark_eps = drive.effective_stark() * eps;
  Mat3 out{};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto x1 = solve(-f.grad_a[j], -f.grad_sigma[j]);
    const double d_coupling = -2.0 * constants::hbar * std::real(x1[0] * std::conj(s0) + a0 * std::conj(x1[1]));
    Vec3 dforce = d_coupling * f.grad_g;
    if (stark_term) {
      const double d_pop = 2.0 * std::real(std::conj(s0) * x1[1]);
      dforce += (-constants::hbar * stark_eps * d_pop) * f.grad_trap_intensity;
    }
    for (std::size_t i = 0; i < 3; ++i) out[i][j] = -dforce[i];
  }
  return out;
}

inline Mat3 friction_tensor(const Vec3& pos, const DriveSettings& drive, const SystemParams& p, double eps = 1.0,
                            bool stark_term = true) {
  return friction_tensor(sample_field(pos, drive, p, eps), drive, eps, stark_term);
}

/// Momentum diffusion D = D_sp + D_dp with D_sp = (hbar k)^2 gamma P_e and
/// D_dp = |hbar grad sigma|^2 gamma + |hbar grad a|^2 kappa, split per axis.
struct DiffusionTerms {
  double d_sp = 0.0;
  Vec3 d_sp_axis;
  Vec3 d_dp_atom_axis;
  Vec3 d_dp_cavity_axis;

  Vec3 d_dp_axis() const { return d_dp_atom_axis + d_dp_cavity_axis; }
  double d_dp() const {
    const Vec3 d = d_dp_axis();
    return d.x + d.y + d.z;
  }
  double total() const { return d_sp + d_dp(); }
};

inline DiffusionTerms diffusion(const FieldSample& f, const SystemParams& p) {
  DiffusionTerms d;
  const double hk = p.hbar_k();
  d.d_sp = hk * hk * p.gamma * f.steady.p_excited;
  d.d_sp_axis = d.d_sp * kRecoilFractions;
  const double h2 = constants::hbar * constants::hbar;
  for (std::size_t j = 0; j < 3; ++j) {
    d.d_dp_atom_axis[j] = h2 * std::norm(f.grad_sigma[j]) * p.gamma;
    d.d_dp_cavity_axis[j] = h2 * std::norm(f.grad_a[j]) * p.kappa;
  }
  return d;
}

inline DiffusionTerms diffusion(const Vec3& pos, const DriveSettings& drive, const SystemParams& p,
                                double eps = 1.0) {
  return diffusion(sample_field(pos, drive, p, eps), p);
}

/// Everything acting on the atom at one phase-space point.
struct ForceBreakdown {
  Vec3 f_trap;
  Vec3 f_dipole;
  Vec3 f_gravity;
  Mat3 friction{};
  double d_sp = 0.0;
  Vec3 d_sp_axis;
  Vec3 d_dp_axis;
  Vec3 d_dp_atom_axis;
  Vec3 d_dp_cavity_axis;
  double p_excited = 0.0;
  double transmission_norm = 0.0;
  bool valid = true;

  /// Total diffusion, D = D_sp + sum_j D_dp,j.
  double total_diffusion() const { return d_sp + d_dp_axis.x + d_dp_axis.y + d_dp_axis.z; }

  /// Deterministic force at velocity v.
  Vec3 deterministic_force(const Vec3& velocity) const {
    return f_trap + f_dipole + f_gravity - friction * velocity;
  }
};

/// Aggregates trap, probe and gravity forces, friction and diffusion. Switched
/// off mechanisms contribute exact zeros.
inline ForceBreakdown total_force_and_noise(const Vec3& pos, const DriveSettings& drive, const SystemParams& p,
                                            double eps, const ForceOptions& opt = {}) {
  ForceBreakdown b;
  if (opt.trap) b.f_trap = trap_force(pos, drive, p, eps);
  if (opt.gravity) b.f_gravity = Vec3{-p.mass * constants::standard_gravity, 0.0, 0.0};
  const bool need_field =
      opt.mean_dipole || opt.friction || opt.spontaneous_diffusion || opt.dipole_diffusion;
  if (!need_field || drive.eta == 0.0) return b;
  const FieldSample f = sample_field(pos, drive, p, eps);
  b.p_excited = f.steady.p_excited;
  b.transmission_norm = f.steady.transmission_norm;
  b.valid = f.steady.low_saturation;
  if (opt.mean_dipole) b.f_dipole = mean_dipole_force(f, drive, eps, opt.stark_dipole);
  if (opt.friction) b.friction = friction_tensor(f, drive, eps, opt.stark_dipole);
  if (opt.spontaneous_diffusion || opt.dipole_diffusion) {
    const DiffusionTerms d = diffusion(f, p);
    if (opt.spontaneous_diffusion) {
      b.d_sp = d.d_sp;
      b.d_sp_axis = d.d_sp_axis;
    }
    if (opt.dipole_diffusion) {
      b.d_dp_atom_axis = d.d_dp_atom_axis;
      b.d_dp_cavity_axis = d.d_dp_cavity_axis;
      b.d_dp_axis = d.d_dp_axis();
    }
  }
  return b;
}

}  // namespace cqed
