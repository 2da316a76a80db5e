#pragma once

#include <span>
#include <string_view>

namespace vdwg {

struct SpeciesInfo {
  std::string_view name;
  double mass_amu;
  double polarizability_A3;  // static dipole polarizability (CRC tables)
  double dv_over_v;          // FWHM velocity spread at T0 = 300 K
  double heat_capacity_ratio;
};

/// He, Ne, D2, Ar, Kr.
std::span<const SpeciesInfo> species_table();

/// Case-sensitive lookup; nullptr if unknown.
const SpeciesInfo* find_species(std::string_view name);

/// Supersonic terminal velocity of the species at nozzle temperature T0.
double species_velocity(const SpeciesInfo& species, double nozzle_temperature_K);

}  // namespace vdwg
