#include "vdwg/units.hpp"

#include <cmath>

#include "vdwg/error.hpp"

namespace vdwg {

double de_broglie_wavelength(double mass_amu, double velocity_mps) {
  if (!(mass_amu > 0.0) || !(velocity_mps > 0.0))
    throw DomainError("de_broglie_wavelength: mass and velocity must be positive");
  return units::kLambdaConst / (mass_amu * velocity_mps);
}

double wavenumber(double mass_amu, double velocity_mps) {
  return 2.0 * units::kPi / de_broglie_wavelength(mass_amu, velocity_mps);
}

double supersonic_velocity(double mass_amu, double nozzle_temperature_K,
                           double heat_capacity_ratio) {
  if (!(mass_amu > 0.0) || !(nozzle_temperature_K > 0.0) || !(heat_capacity_ratio > 1.0))
    throw DomainError("supersonic_velocity: invalid arguments");
  const double g = heat_capacity_ratio;
  const double kT_over_m =
      units::kBoltzmann_JK * nozzle_temperature_K / (mass_amu * units::kAtomicMass_kg);
  return std::sqrt(2.0 * g / (g - 1.0) * kT_over_m);
}

}  // namespace vdwg
