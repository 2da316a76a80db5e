#pragma once

// Scan files, peak-area extraction, grating/beam records and fit results.
//
// Scan file grammar (one record per line, UTF-8/ASCII):
//
//   file      := { header | blank } { data | blank | comment }
//   header    := "#" ws key ":" ws value          (only before the first data line)
//   comment   := "#" anything                     (after the first data line)
//   data      := number ws number [ ws number ]   angle_mrad counts [dwell_s]
//
// Recognized header keys: species, T0_K, grating, v_mps, dv_over_v, mass_amu.
// Any other key is kept verbatim in ScanMetadata::extra.  Either every data
// line carries a dwell column or none does.  Angles are converted from mrad by
// shifting the decimal exponent, so each angle is rounded to binary once and
// serialize_scan output reads back bit-exactly.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vdwg/fit_result.hpp"
#include "vdwg/physics.hpp"

namespace vdwg {

struct ScanSample {
  double angle_rad = 0.0;
  double counts = 0.0;
  std::optional<double> dwell_s;
};

struct ScanMetadata {
  std::string species;  // empty if absent
  std::optional<double> nozzle_temperature_K;
  std::string grating_id;
  std::optional<double> velocity_mps;
  std::optional<double> dv_over_v;
  std::optional<double> mass_amu;
  std::vector<std::pair<std::string, std::string>> extra;
};

struct DiffractionScan {
  ScanMetadata metadata;
  std::vector<ScanSample> samples;

  /// Strictly increasing angles, finite non-negative counts, positive
  /// dwell times present on all samples or none.
  void validate() const;
};

DiffractionScan parse_scan(std::istream& in);
DiffractionScan parse_scan_file(const std::filesystem::path& path);
void serialize_scan(const DiffractionScan& scan, std::ostream& out);
std::string serialize_scan(const DiffractionScan& scan);

// ---------------------------------------------------------------------------

enum class BackgroundModel { Linear, ConstantMedian };

struct PeakEntry {
  int order = 0;
  double area = 0.0;              // counts * rad (or counts/s * rad with dwell)
  double area_uncertainty = 0.0;
  double center_rad = 0.0;
};

struct PeakTable {
  std::vector<PeakEntry> entries;  // ascending order
  BackgroundModel background = BackgroundModel::Linear;
  double window_halfwidth_rad = 0.0;
  std::vector<std::string> notices;  // skipped orders and fallbacks

  const PeakEntry* find(int order) const;
};

struct PeakExtractionOptions {
  int max_order = 8;
  BackgroundModel background = BackgroundModel::Linear;
  double angle_offset_rad = 0.0;  // shifts every window centre
};

/// Background-corrected area of every order |n| <= max_order whose window
/// lies inside the scan.  With dwell times present, counts are converted to
/// rates first.
PeakTable extract_peak_areas(const DiffractionScan& scan, const GratingGeometry& geometry,
                             double wavelength_nm, double window_halfwidth_rad,
                             const PeakExtractionOptions& options = {});

/// 2.5 x the peak FWHM, clipped to 0.45 of the first-order spacing.  The peak
/// FWHM combines the resolution with the velocity smearing of `max_order`;
/// with dv_over_v = 0 it is the resolution alone.
double default_window_halfwidth(double resolution_fwhm_rad, double wavelength_nm,
                                double period_nm, double dv_over_v = 0.0, int max_order = 0);

// ---------------------------------------------------------------------------

/// `key: value` or `key = value` lines; '#' starts a comment.  Keys are
/// returned in file order with their line numbers.
struct KeyValueLine {
  std::string key;
  std::string value;
  int line = 0;
};
std::vector<KeyValueLine> parse_key_values(std::istream& in);

/// Built-in gratings "I", "II", "III".  Bar thickness and roughness are not
/// part of the presets: thickness is NaN and sigma0 is 0 until overridden.
GratingGeometry grating_preset(std::string_view id);

/// Geometry file keys: preset, id, d_nm, s0_nm, t_nm, beta_deg, sigma0_nm.
/// Without `preset`, d_nm, s0_nm and beta_deg are mandatory.
GratingGeometry parse_geometry(std::istream& in);

/// A preset id or a path to a geometry file.
GratingGeometry load_geometry(const std::string& id_or_path);

/// Beam file keys: species, mass_amu, v_mps, dv_over_v, alpha_A3.  v_mps is
/// mandatory; mass_amu may be omitted for a species in the built-in table.
BeamSpec parse_beam(std::istream& in);
BeamSpec load_beam(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

inline constexpr std::string_view kResultSchema = "vdwgrating-result/1";

/// Provenance entries are written under `provenance.<key>`.
using Provenance = std::vector<std::pair<std::string, std::string>>;

void write_results(const FitResult& result, const Provenance& provenance, std::ostream& out);
void save_results(const FitResult& result, const std::filesystem::path& path,
                  const Provenance& provenance = {});
FitResult read_results(std::istream& in, Provenance* provenance = nullptr);
FitResult load_results(const std::filesystem::path& path, Provenance* provenance = nullptr);

// ---------------------------------------------------------------------------

/// Effective slit width versus velocity.
///   columns: v_mps s_eff_nm uncertainty_nm [grating] [species]
struct SeffRow {
  double velocity_mps = 0.0;
  double s_eff_nm = 0.0;
  double uncertainty_nm = 0.0;
  std::string grating_id;
  std::string species;
};
std::vector<SeffRow> parse_seff_table(std::istream& in);
void write_seff_table(const std::vector<SeffRow>& rows, std::ostream& out);

/// C3 versus polarizability.
///   columns: alpha_A3 c3_meV_nm3 uncertainty [label]
struct C3Row {
  double alpha_A3 = 0.0;
  double c3_meV_nm3 = 0.0;
  double uncertainty = 0.0;
  std::string label;
};
std::vector<C3Row> parse_c3_table(std::istream& in);
void write_c3_table(const std::vector<C3Row>& rows, std::ostream& out);

// ---------------------------------------------------------------------------

/// Shortest decimal text that reads back to the identical double.
std::string format_double(double x);
/// Whole-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

/// Writes to `path` through a temporary file in the same directory and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace vdwg
