#pragma once

#include <numbers>

namespace cqed::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018, SI units
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double planck = 6.62607015e-34;       // J s
inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double k_boltzmann = 1.380649e-23;    // J/K
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double standard_gravity = 9.80665;    // m/s^2

inline constexpr double rb85_mass = 84.911789738 * atomic_mass_unit;

}  // namespace cqed::constants
