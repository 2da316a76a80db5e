#pragma once

// Command-line front end.  Subcommands: simulate, extract, fit-slit, fit-c3,
// alpha-fit.  Exit codes: 0 success, 2 usage, 3 parse/validation/configuration,
// 4 numerical failure, 1 anything else.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vdwg/synthetic.hpp"

namespace vdwg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumerical = 4;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "VDWG_OUTPUT_DIR";

inline constexpr const char* kManifestSchema = "vdwgrating-manifest/1";

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> inputs;
  std::vector<std::pair<std::string, std::string>> parameters;  // every effective value
  std::filesystem::path output_dir;
  std::vector<std::string> outputs;
  std::string seed;  // empty when the run uses no randomness

  std::string render(const std::string& timestamp) const;
};

/// Simulation config file: key-value lines.
///   geometry (preset or file), t_nm, sigma0_nm, species, mass_amu, v_mps,
///   dv_over_v, T0_K, c3_meV_nm3, slits, angle_min_mrad, angle_max_mrad,
///   max_order (range from the order angles when min/max are absent),
///   angle_step_urad, resolution_urad, peak_counts, background_counts, seed,
///   noise, velocity_nodes, output.
/// Relative geometry paths resolve against `base_dir`.
struct SimulationJob {
  SynthConfig config;
  std::string output_name = "scan.dat";
  std::vector<std::pair<std::string, std::string>> echo;  // effective settings
};
SimulationJob parse_simulation_config(std::istream& in, const std::filesystem::path& base_dir);

/// Runs the command line; diagnostics go to `err`, reports to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vdwg
