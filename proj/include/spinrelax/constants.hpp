#pragma once

// Physical constants (CODATA 2018). Internal units are seconds, Hz, Tesla and
// Kelvin; energies cross the API in meV.

namespace spinrelax::constants {

/// Boltzmann constant in meV/K.
inline constexpr double kBoltzmannMeVPerK = 8.617333262e-2;

/// Bohr magneton over Planck constant, Hz/T.
inline constexpr double kBohrMagnetonHzPerT = 13.996244936e9;

/// Planck constant in meV/Hz.
inline constexpr double kPlanckMeVPerHz = 4.135667696e-12;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace spinrelax::constants
