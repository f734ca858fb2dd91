#pragma once

// Jaynes-Cummings algebra for one two-level atom in a driven, lossy standing-wave
// cavity with an intracavity dipole trap. All steady-state quantities are written
// in the frame rotating at the probe frequency; detunings are laser minus
// resonance.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "cqed/constants.hpp"
#include "cqed/vec3.hpp"

namespace cqed {

using complex = std::complex<double>;

/// Cavity HWHM field decay rate from finesse: kappa = pi c / (2 L F).
inline double kappa_from_finesse(double cavity_length, double finesse) {
  return constants::pi * constants::speed_of_light / (2.0 * cavity_length * finesse);
}

/// Fixed physical constants and mode geometry. Rates are angular (rad/s) half
/// widths; lengths in metres.
struct SystemParams {
  double g0 = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double lambda_probe = 0.0;
  double lambda_trap = 0.0;
  double waist_probe = 0.0;
  double waist_trap = 0.0;
  double cavity_length = 0.0;
  double mass = 0.0;

  double k_probe() const { return constants::two_pi / lambda_probe; }

  /// Trap wave number. The trap standing wave has exactly two fewer nodes than
  /// the probe wave over the cavity length, and both share an antinode at z = 0.
  double k_trap() const { return k_probe() - constants::two_pi / cavity_length; }

  /// Trap wavelength implied by the node-count rule.
  double lambda_trap_exact() const { return constants::two_pi / k_trap(); }

  double hbar_k() const { return constants::hbar * k_probe(); }

  bool strong_coupling() const { return g0 > kappa && g0 > gamma; }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    auto positive = [&](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) errs.push_back(std::string(name) + " must be finite and > 0");
    };
    positive(g0, "system.g0");
    positive(kappa, "system.kappa");
    positive(gamma, "system.gamma");
    positive(lambda_probe, "system.lambda_probe");
    positive(lambda_trap, "system.lambda_trap");
    positive(waist_probe, "system.waist_probe");
    positive(waist_trap, "system.waist_trap");
    positive(cavity_length, "system.cavity_length");
    positive(mass, "system.mass");
    if (!errs.empty()) return errs;
    if (!(lambda_trap > lambda_probe)) errs.emplace_back("system.lambda_trap must exceed system.lambda_probe");
    if (!(k_trap() > 0.0)) {
      errs.emplace_back("system.cavity_length too short for a trap mode with two fewer nodes");
    } else if (std::abs(lambda_trap_exact() - lambda_trap) > 0.01 * lambda_trap) {
      errs.emplace_back("system.lambda_trap differs by more than 1% from the two-fewer-nodes mode (" +
                        std::to_string(lambda_trap_exact()) + " m)");
    }
    return errs;
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (!strong_coupling()) w.emplace_back("g0 does not exceed both kappa and gamma: not in strong coupling");
    return w;
  }
};

/// 85Rb in a 122 um, finesse 4.4e5 cavity with 29 um waist, driven on the
/// F=3,mF=3 -> F'=4,mF'=4 line at 780.2 nm. kappa is the finesse value rounded
/// to 2pi x 1.4 MHz; gamma is the D2 HWHM rounded to 2pi x 3 MHz.
inline SystemParams rb85_cavity_params() {
  using constants::two_pi;
  SystemParams p;
  p.g0 = two_pi * 16.0e6;
  p.kappa = two_pi * 1.4e6;
  p.gamma = two_pi * 3.0e6;
  p.lambda_probe = 780.2e-9;
  p.waist_probe = 29.0e-6;
  p.waist_trap = 29.0e-6;
  p.cavity_length = 122.0e-6;
  p.mass = constants::rb85_mass;
  p.lambda_trap = p.lambda_trap_exact();
  return p;
}

/// Probe drive, detunings and trap settings for one window.
struct DriveSettings {
  double delta_pc = 0.0;     // probe minus cavity, rad/s
  double delta_pa0 = 0.0;    // probe minus bare atom, rad/s
  double eta = 0.0;          // cavity drive amplitude, rad/s
  double trap_depth = 0.0;   // peak ground-state trap depth U0, J
  double stark_coeff = 0.0;  // peak differential Stark shift S0, rad/s
  double power_scale = 1.0;  // calibration factor on trap and probe powers

  /// Builds settings from probe-cavity detuning and atom-cavity detuning
  /// Delta = w_cav - w_at, keeping delta_pa0 - delta_pc == Delta.
  static DriveSettings from_detunings(double probe_cavity, double atom_cavity, double eta,
                                      double trap_depth = 0.0, double stark_coeff = 0.0) {
    DriveSettings d;
    d.delta_pc = probe_cavity;
    d.delta_pa0 = probe_cavity + atom_cavity;
    d.eta = eta;
    d.trap_depth = trap_depth;
    d.stark_coeff = stark_coeff;
    return d;
  }

  double atom_cavity_detuning() const { return delta_pa0 - delta_pc; }

  /// Retunes the probe while keeping the atom-cavity detuning.
  DriveSettings with_probe_detuning(double probe_cavity) const {
    DriveSettings d = *this;
    d.delta_pa0 = probe_cavity + atom_cavity_detuning();
    d.delta_pc = probe_cavity;
    return d;
  }

  /// Scales trap depth and Stark shift jointly (relative trap power).
  DriveSettings with_trap_power(double relative) const {
    DriveSettings d = *this;
    d.trap_depth *= relative;
    d.stark_coeff *= relative;
    return d;
  }

  double effective_eta() const { return eta * std::sqrt(power_scale); }
  double effective_trap_depth() const { return trap_depth * power_scale; }
  double effective_stark() const { return stark_coeff * power_scale; }

  std::vector<std::string> validation_errors(const std::string& prefix) const {
    std::vector<std::string> errs;
    if (!(eta >= 0.0)) errs.push_back(prefix + ".eta must be >= 0");
    if (!(trap_depth >= 0.0)) errs.push_back(prefix + ".trap_depth must be >= 0");
    if (!(power_scale > 0.0)) errs.push_back(prefix + ".power_scale must be > 0");
    for (double v : {delta_pc, delta_pa0, stark_coeff})
      if (!std::isfinite(v)) {
        errs.push_back(prefix + ": detunings and stark_coeff must be finite");
        break;
      }
    return errs;
  }
};

/// Mean-field steady state of the weakly driven system.
struct SteadyState {
  complex a_mean{};
  complex sigma_mean{};
  double photon_number = 0.0;
  double p_excited = 0.0;
  double transmission_norm = 0.0;
  bool low_saturation = true;  // false when p_excited > 0.1
};

inline constexpr double kLowSaturationLimit = 0.1;

/// Complex eigenfrequencies of the single-excitation manifold relative to w_cav.
/// Real part: eigenfrequency. Imaginary part: minus the HWHM.
struct DressedPair {
  complex e_plus{};
  complex e_minus{};
  double mixing_angle = 0.0;

  double splitting() const { return e_plus.real() - e_minus.real(); }
  /// Full widths (2 x HWHM).
  double linewidth_plus() const { return -2.0 * e_plus.imag(); }
  double linewidth_minus() const { return -2.0 * e_minus.imag(); }
};

// ---------------------------------------------------------------------------
// Mode geometry

inline double coupling_at(const Vec3& pos, const SystemParams& p) {
  const double w2 = p.waist_probe * p.waist_probe;
  return p.g0 * std::cos(p.k_probe() * pos.z) * std::exp(-(pos.x * pos.x + pos.y * pos.y) / w2);
}

inline Vec3 coupling_gradient(const Vec3& pos, const SystemParams& p) {
  const double w2 = p.waist_probe * p.waist_probe;
  const double k = p.k_probe();
  const double transverse = std::exp(-(pos.x * pos.x + pos.y * pos.y) / w2);
  const double g = p.g0 * std::cos(k * pos.z) * transverse;
  return {-2.0 * pos.x / w2 * g, -2.0 * pos.y / w2 * g, -p.g0 * k * std::sin(k * pos.z) * transverse};
}

inline double trap_intensity_at(const Vec3& pos, const SystemParams& p) {
  const double w2 = p.waist_trap * p.waist_trap;
  const double c = std::cos(p.k_trap() * pos.z);
  return c * c * std::exp(-2.0 * (pos.x * pos.x + pos.y * pos.y) / w2);
}

inline Vec3 trap_intensity_gradient(const Vec3& pos, const SystemParams& p) {
  const double w2 = p.waist_trap * p.waist_trap;
  const double k = p.k_trap();
  const double transverse = std::exp(-2.0 * (pos.x * pos.x + pos.y * pos.y) / w2);
  const double c = std::cos(k * pos.z);
  const double f = c * c * transverse;
  return {-4.0 * pos.x / w2 * f, -4.0 * pos.y / w2 * f, -k * std::sin(2.0 * k * pos.z) * transverse};
}

/// Probe-atom detuning including the trap-induced differential Stark shift.
/// A positive Stark coefficient raises the atomic resonance.
inline double effective_atom_detuning(const Vec3& pos, const DriveSettings& drive, const SystemParams& p,
                                      double eps = 1.0) {
  return drive.delta_pa0 - drive.effective_stark() * eps * trap_intensity_at(pos, p);
}

// ---------------------------------------------------------------------------
// Dressed states

/// Eigenfrequencies of [[-i kappa, g], [g, -Delta - i gamma]], the non-Hermitian
/// single-excitation Hamiltonian relative to the cavity, with Delta = w_cav - w_at.
inline DressedPair dressed_states(double delta, double g, const SystemParams& p) {
  const complex dc{0.0, -p.kappa};
  const complex da{-delta, -p.gamma};
  const complex half_trace = 0.5 * (dc + da);
  const complex half_diff = 0.5 * (dc - da);
  const complex root = std::sqrt(half_diff * half_diff + g * g);
  complex l1 = half_trace + root;
  complex l2 = half_trace - root;
  if (l1.real() < l2.real()) std::swap(l1, l2);
  DressedPair out;
  out.e_plus = l1;
  out.e_minus = l2;
  out.mixing_angle = 0.5 * std::atan2(2.0 * g, -delta);
  return out;
}

inline DressedPair dressed_states(double delta, const SystemParams& p) { return dressed_states(delta, p.g0, p); }

// ---------------------------------------------------------------------------
// Weak-driving steady state

/// Closed-form steady state for coupling g, probe-cavity detuning delta_pc,
/// probe-atom detuning delta_pa and drive eta.
inline SteadyState steady_state_local(double g, double delta_pc, double delta_pa, double eta,
                                      const SystemParams& p) {
  const complex dc{p.kappa, -delta_pc};
  const complex da{p.gamma, -delta_pa};
  const complex den = dc * da + g * g;
  SteadyState s;
  s.a_mean = eta * da / den;
  s.sigma_mean = complex{0.0, -g * eta} / den;
  s.photon_number = std::norm(s.a_mean);
  s.p_excited = std::norm(s.sigma_mean);
  const double empty = eta / p.kappa;
  s.transmission_norm = empty > 0.0 ? s.photon_number / (empty * empty) : 0.0;
  s.low_saturation = s.p_excited <= kLowSaturationLimit;
  return s;
}

inline SteadyState steady_state(const Vec3& pos, const DriveSettings& drive, const SystemParams& p,
                                double eps = 1.0) {
  return steady_state_local(coupling_at(pos, p), drive.delta_pc, effective_atom_detuning(pos, drive, p, eps),
                            drive.effective_eta(), p);
}

// ---------------------------------------------------------------------------
// Spectral maps

/// Values on a (Delta, probe detuning) grid; values[i * probe.size() + j]
/// belongs to (delta[i], probe[j]).
struct SpectralMap {
  std::vector<double> delta;
  std::vector<double> probe;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * probe.size() + j]; }
};

namespace detail {
template <typename Extract>
SpectralMap spectral_map(std::span<const double> deltas, std::span<const double> probes, const DriveSettings& drive,
                         const SystemParams& p, Extract extract) {
  SpectralMap m;
  m.delta.assign(deltas.begin(), deltas.end());
  m.probe.assign(probes.begin(), probes.end());
  m.values.reserve(deltas.size() * probes.size());
  for (double delta : deltas)
    for (double dpc : probes)
      m.values.push_back(extract(steady_state_local(p.g0, dpc, dpc + delta, drive.effective_eta(), p)));
  return m;
}
}  // namespace detail

/// Cavity transmission (normalised to the empty resonant cavity) at maximal
/// coupling g0 and no trap.
inline SpectralMap transmission_map(std::span<const double> deltas, std::span<const double> probes,
                                    const DriveSettings& drive, const SystemParams& p) {
  return detail::spectral_map(deltas, probes, drive, p, [](const SteadyState& s) { return s.transmission_norm; });
}

/// Atomic excitation probability at maximal coupling g0 and no trap.
inline SpectralMap excitation_map(std::span<const double> deltas, std::span<const double> probes,
                                  const DriveSettings& drive, const SystemParams& p) {
  return detail::spectral_map(deltas, probes, drive, p, [](const SteadyState& s) { return s.p_excited; });
}

/// Evenly spaced grid including both end points.
inline std::vector<double> linspace(double start, double stop, std::size_t count) {
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = start;
    return v;
  }
  for (std::size_t i = 0; i < count; ++i)
    v[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

}  // namespace cqed
