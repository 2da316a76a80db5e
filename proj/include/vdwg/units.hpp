#pragma once

// Internal unit system:
//   length nm, velocity m/s, mass amu, energy meV, C3 meV*nm^3, angles rad.
// Degrees and mrad/urad appear only at file and command-line boundaries.

#include <numbers>

namespace vdwg::units {

// CODATA 2018.
inline constexpr double kPlanck_Js = 6.62607015e-34;
inline constexpr double kHbar_meVs = 6.582119569e-13;
inline constexpr double kAtomicMass_kg = 1.66053906660e-27;
inline constexpr double kBoltzmann_JK = 1.380649e-23;

inline constexpr double kNmPerM = 1e9;

/// h / (1 amu * 1 m/s) in nm; lambda_nm = kLambdaConst / (mass_amu * v_mps).
inline constexpr double kLambdaConst = kPlanck_Js / kAtomicMass_kg * kNmPerM;

/// 1 / (hbar * 1 m/s) in 1/(meV*nm); the eikonal phase t*C3/(hbar v zeta^3)
/// is kKappaPhase * t_nm * C3 / (v_mps * zeta_nm^3).
inline constexpr double kKappaPhase = 1.0 / (kHbar_meVs * kNmPerM);

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// FWHM of a Gaussian in units of its standard deviation.
inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

}  // namespace vdwg::units

namespace vdwg {

/// Matter wavelength h/(m v) in nm.  Throws DomainError for non-positive input.
double de_broglie_wavelength(double mass_amu, double velocity_mps);

/// 2 pi / lambda in 1/nm.
double wavenumber(double mass_amu, double velocity_mps);

/// Terminal speed sqrt(2 gamma/(gamma-1) kT/m) of an ideal supersonic expansion.
double supersonic_velocity(double mass_amu, double nozzle_temperature_K,
                           double heat_capacity_ratio = 5.0 / 3.0);

}  // namespace vdwg
