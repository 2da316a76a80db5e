#pragma once

// Inverse problems: peak-area ratios -> (s_eff, delta, sigma) -> (C3, s0), the
// wedge-angle systematic, and the C3 versus polarizability line.

#include <string>
#include <vector>

#include "vdwg/data_io.hpp"
#include "vdwg/fit_result.hpp"
#include "vdwg/minimizer.hpp"
#include "vdwg/physics.hpp"

namespace vdwg {

struct RatioFitParams {
  double s_eff_nm = 0.0;
  double delta_nm = 0.0;
  double sigma_nm = 0.0;
};

/// Reads s_eff, delta and sigma from a ratio fit.
RatioFitParams ratio_params(const FitResult& fit);

struct RatioFitOptions {
  int max_order = 8;
  MinimizerOptions minimizer;
};

/// One measured I_n/I_1 value.
struct RatioPoint {
  int order = 0;
  double ratio = 0.0;
  double uncertainty = 0.0;  // 0 when the table carries no uncertainties
};

/// I_n/I_1 for 2 <= |n| <= max_order, with I_1 the mean of the +1 and -1
/// areas.  Uncertainties combine the order's and the reference's in quadrature.
std::vector<RatioPoint> measured_ratios(const PeakTable& peaks, int max_order = 8);

/// Least-squares fit of the measured I_n/I_1 to R(n)/R(1).  s_eff and d - s_eff
/// give identical ratios; the branch closer to the geometric slit width is
/// reported.  Parameters: "s_eff", "delta", "sigma" (nm).
FitResult fit_ratio_params(const PeakTable& peaks, const GratingGeometry& geometry,
                           const RatioFitOptions& options = {});

struct SeffPoint {
  double velocity_mps = 0.0;
  double s_eff_nm = 0.0;
  double uncertainty_nm = 0.0;  // 0 for unweighted
  std::string grating_id;
  std::string species;
};

struct C3FitOptions {
  QuadratureOptions quadrature;
  MinimizerOptions minimizer;
  double c3_guess = 0.05;  // meV nm^3
};

/// Model s_eff(v) = s0 - 2 Re R1(C3, v) for the given geometry (slit width
/// taken from `s0_nm`).
double model_seff(double c3_meV_nm3, double s0_nm, const GratingGeometry& geometry,
                  double velocity_mps, const QuadratureOptions& quadrature = {});

/// Joint (C3, s0) fit.  Parameters: "C3" (meV nm^3), "s0" (nm).
FitResult fit_c3_s0(const std::vector<SeffPoint>& points, const GratingGeometry& geometry,
                    const C3FitOptions& options = {});

/// C3 with s0 held fixed.  Parameter: "C3".
FitResult fit_c3_fixed_s0(const std::vector<SeffPoint>& points,
                          const GratingGeometry& geometry, double s0_nm,
                          const C3FitOptions& options = {});

struct BetaSensitivity {
  double c3_minus = 0.0;    // fit with beta - delta_beta
  double c3_central = 0.0;
  double c3_plus = 0.0;     // fit with beta + delta_beta
  double half_spread = 0.0; // |c3_plus - c3_minus| / 2
  FitResult minus, central, plus;

  double relative_half_spread() const {
    return c3_central != 0.0 ? half_spread / c3_central : 0.0;
  }
};

BetaSensitivity beta_sensitivity(const std::vector<SeffPoint>& points,
                                 const GratingGeometry& geometry, double s0_nm,
                                 double delta_beta_rad, const C3FitOptions& options = {});

struct AlphaPoint {
  double alpha_A3 = 0.0;
  double c3_meV_nm3 = 0.0;
  double uncertainty = 0.0;  // 0 for unweighted
};

struct LinearFit {
  double slope = 0.0;      // meV nm^3 / A^3
  double intercept = 0.0;  // meV nm^3
  double slope_uncertainty = 0.0;
  double intercept_uncertainty = 0.0;
  std::vector<double> residuals;  // c3 - (slope alpha + intercept)
  double chi_square = 0.0;
  bool weighted = false;
};

/// Weighted straight-line fit C3 = slope * alpha + intercept.
LinearFit fit_c3_vs_alpha(const std::vector<AlphaPoint>& points);

}  // namespace vdwg
