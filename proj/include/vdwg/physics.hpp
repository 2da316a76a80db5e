#pragma once

// Forward model of a transmission grating whose bars attract the passing
// particle with a -C3/l^3 wall potential.

#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vdwg {

using Complex = std::complex<double>;

struct GratingGeometry {
  std::string id;
  double period_nm = 100.0;
  double slit_width_nm = 50.0;      // geometric s0
  double thickness_nm = 0.0;        // bar thickness t along the beam; NaN if unknown
  double wedge_angle_rad = 0.0;     // trapezoid wedge angle beta
  double roughness_var_nm2 = 0.0;   // variance sigma0^2 of the slit width

  bool has_thickness() const;
  /// Checks 0 < s0 < d, 0 <= beta < pi/2, sigma0^2 >= 0 and, if
  /// `need_thickness`, that t > 0.
  void validate(bool need_thickness = true) const;
};

struct BeamSpec {
  std::string species;
  double mass_amu = 0.0;
  double velocity_mps = 0.0;
  double dv_over_v = 0.0;  // FWHM
  std::optional<double> polarizability_A3;

  void validate() const;
  double wavelength_nm() const;
};

/// The three quantities that fix the principal-maximum intensities.
struct SlitEnvelope {
  double s_eff_nm = 0.0;
  double delta_nm = 0.0;
  double sigma_sq_nm2 = 0.0;
};

struct CumulantSet {
  Complex r1_nm;
  Complex r2_nm2;
  double s_eff_nm = 0.0;
  double delta_nm = 0.0;
  double sigma_sq_eff_nm2 = 0.0;
  double edge_phase_rad = 0.0;    // phi(s0/2), so tau(s0/2) = exp(i edge_phase_rad)

  // Quadrature bookkeeping.
  double abs_error_nm = 0.0;      // bound on the error of R1
  double cutoff_nm = 0.0;         // zeta below which the asymptotic tail is used
  int panels = 0;

  SlitEnvelope envelope() const { return {s_eff_nm, delta_nm, sigma_sq_eff_nm2}; }
};

struct SlitAmplitude {
  Complex value;
  double theta_rad = 0.0;
  double kappa_per_nm = 0.0;
  double abs_error = 0.0;  // quadrature estimate; zero for closed forms

  double intensity() const { return std::norm(value); }
};

/// Eikonal phase accumulated next to a trapezoidal bar wall,
///   phi(zeta) = A * u^3 (1 + a u / 2) / (1 + a u)^2,  u = 1/zeta,
/// with A = t cos(beta) C3 / (hbar v) and a = t tan(beta).
/// phi is strictly decreasing in zeta for A > 0.
class WallPhase {
 public:
  WallPhase(double c3_meV_nm3, const GratingGeometry& geometry, double velocity_mps);

  double operator()(double zeta_nm) const;
  double derivative(double zeta_nm) const;
  double second_derivative(double zeta_nm) const;

  /// Largest zeta in (0, zeta_hi] with phi(zeta) >= level.  Requires A > 0.
  double solve(double level, double zeta_hi) const;

  bool is_zero() const { return prefactor_ == 0.0; }
  double prefactor() const { return prefactor_; }
  double offset_nm() const { return offset_; }

 private:
  double prefactor_;  // A, nm^3
  double offset_;     // a, nm
};

/// Single-slit transmission model tau(zeta) = exp(i phi(zeta)) on (0, s0/2].
class TransmissionModel {
 public:
  TransmissionModel(double c3_meV_nm3, const GratingGeometry& geometry, double velocity_mps);

  Complex operator()(double zeta_nm) const;
  const WallPhase& phase() const { return phase_; }
  double half_width_nm() const { return half_width_; }
  double c3() const { return c3_; }

 private:
  double c3_;
  double half_width_;
  WallPhase phase_;
};

struct QuadratureOptions {
  double target_rel_tol = 1e-8;
  double accept_rel_tol = 1e-6;
  double max_phase_rad = 1e4;         // Phi_max: start of the asymptotic tail
  double panel_phase_rad = 0.785398163397448;  // pi/4
};

/// -C3 / l^3 in meV.
double vdw_potential(double c3_meV_nm3, double distance_nm);

/// tau(zeta) for the trapezoidal bar; unit modulus.
Complex transmission_function(double zeta_nm, double c3_meV_nm3,
                              const GratingGeometry& geometry, double velocity_mps);

/// First two cumulants of the wall-edge distribution tau'/tau(s0/2) and the
/// derived effective slit parameters.  Throws NumericalError if the
/// quadrature error exceeds the acceptance tolerance.
CumulantSet cumulants(double c3_meV_nm3, const GratingGeometry& geometry,
                      double velocity_mps, const QuadratureOptions& options = {});

/// Single-slit amplitude by direct quadrature of the Huygens integral.
SlitAmplitude slit_amplitude_direct(double theta_rad, const TransmissionModel& tau,
                                    const GratingGeometry& geometry, double wavelength_nm,
                                    const QuadratureOptions& options = {});

/// Single-slit amplitude truncated after the second cumulant.
SlitAmplitude slit_amplitude_cumulant(double theta_rad, const CumulantSet& cum,
                                      const GratingGeometry& geometry, double wavelength_nm);

/// I_n / I_0 at the principal maxima including the Debye-Waller factor.
double intensity_ratio(int order, const CumulantSet& cum, const GratingGeometry& geometry);
double intensity_ratio(int order, const SlitEnvelope& env, double period_nm);
/// Same expression evaluated at a real-valued order (plotting).
double intensity_ratio_continuous(double order, const SlitEnvelope& env, double period_nm);

/// asin(n lambda / d); throws DomainError for evanescent orders.
double diffraction_angle(int order, double wavelength_nm, double period_nm);

/// [sin(N x) / sin(x)]^2 with x = pi d sin(theta) / lambda, N^2 at principal maxima.
double grating_factor(double theta_rad, int slits, double wavelength_nm, double period_nm);

/// N-slit intensity |f_slit|^2 times the grating factor and the roughness
/// factor exp(-kappa^2 sigma0^2), on an arbitrary angle grid.
std::vector<double> full_pattern(std::span<const double> theta_rad, int slits,
                                 const CumulantSet& cum, const GratingGeometry& geometry,
                                 double wavelength_nm);

/// sin(kappa a) / kappa with the kappa -> 0 limit handled by series.
Complex sin_over_kappa(double kappa, Complex a);

}  // namespace vdwg
