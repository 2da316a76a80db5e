#include "vdwg/species.hpp"

#include <array>

#include "vdwg/units.hpp"

namespace vdwg {

namespace {

constexpr std::array<SpeciesInfo, 5> kSpecies{{
    {"He", 4.002602, 0.2050, 0.021, 5.0 / 3.0},
    {"Ne", 20.1797, 0.3956, 0.05, 5.0 / 3.0},
    {"D2", 4.028203, 0.7954, 0.076, 7.0 / 5.0},
    {"Ar", 39.948, 1.6411, 0.077, 5.0 / 3.0},
    {"Kr", 83.798, 2.4844, 0.10, 5.0 / 3.0},
}};

}  // namespace

std::span<const SpeciesInfo> species_table() { return kSpecies; }

const SpeciesInfo* find_species(std::string_view name) {
  for (const auto& s : kSpecies)
    if (s.name == name) return &s;
  return nullptr;
}

double species_velocity(const SpeciesInfo& species, double nozzle_temperature_K) {
  return supersonic_velocity(species.mass_amu, nozzle_temperature_K, species.heat_capacity_ratio);
}

}  // namespace vdwg
