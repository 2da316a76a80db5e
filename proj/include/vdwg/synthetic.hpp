#pragma once

// Synthetic angular scans from the forward model: velocity-averaged N-slit
// pattern, Gaussian angular resolution, flat background and Poisson noise.

#include <cstdint>
#include <optional>
#include <vector>

#include "vdwg/data_io.hpp"
#include "vdwg/physics.hpp"

namespace vdwg {

struct SynthConfig {
  GratingGeometry geometry;
  BeamSpec beam;
  double c3_meV_nm3 = 0.0;
  int slits = 1000;
  double angle_min_rad = -5e-3;
  double angle_max_rad = 5e-3;
  double angle_step_rad = 5e-6;
  double resolution_fwhm_rad = 70e-6;  // 0 disables the angular convolution
  double peak_counts = 1e5;            // brightest sample before background and noise
  double background_counts = 0.0;
  std::uint64_t seed = 1;
  bool poisson_noise = true;
  int velocity_nodes = 7;              // Gauss-Hermite nodes: 1, 3, 5 or 7
  std::optional<double> nozzle_temperature_K;  // metadata only
  QuadratureOptions quadrature;

  void validate() const;
};

/// Noise-free expected counts on the output grid (background included).
std::vector<double> expected_counts(const SynthConfig& cfg);

/// Expected counts with Poisson sampling if enabled; metadata filled from the
/// beam and the configuration.
DiffractionScan generate_scan(const SynthConfig& cfg);

/// Output angle grid: angle_min + j * step up to angle_max.
std::vector<double> output_angles(const SynthConfig& cfg);

}  // namespace vdwg
