#include "vdwg/physics.hpp"

#include <algorithm>
#include <cmath>

#include "vdwg/error.hpp"
#include "vdwg/units.hpp"
#include "vdwg/wall_quadrature.hpp"

namespace vdwg {

using units::kPi;

bool GratingGeometry::has_thickness() const {
  return std::isfinite(thickness_nm) && thickness_nm > 0.0;
}

void GratingGeometry::validate(bool need_thickness) const {
  if (!(period_nm > 0.0)) throw ValidationError("grating period must be positive");
  if (!(slit_width_nm > 0.0 && slit_width_nm < period_nm))
    throw ValidationError("slit width must satisfy 0 < s0 < d");
  if (!(wedge_angle_rad >= 0.0 && wedge_angle_rad < kPi / 2))
    throw ValidationError("wedge angle must satisfy 0 <= beta < 90 deg");
  if (!(roughness_var_nm2 >= 0.0)) throw ValidationError("roughness variance must be >= 0");
  if (need_thickness && !has_thickness())
    throw ValidationError("bar thickness t_nm is not set (it is not tabulated for the "
                          "built-in gratings and must be supplied)");
}

void BeamSpec::validate() const {
  if (!(mass_amu > 0.0)) throw ValidationError("beam mass must be positive");
  if (!(velocity_mps > 0.0)) throw ValidationError("beam velocity must be positive");
  if (!(dv_over_v >= 0.0 && dv_over_v < 1.0))
    throw ValidationError("relative velocity spread must satisfy 0 <= dv/v < 1");
}

double BeamSpec::wavelength_nm() const { return de_broglie_wavelength(mass_amu, velocity_mps); }

// ---------------------------------------------------------------------------

WallPhase::WallPhase(double c3_meV_nm3, const GratingGeometry& geometry, double velocity_mps) {
  if (!(velocity_mps > 0.0)) throw DomainError("WallPhase: velocity must be positive");
  if (!(c3_meV_nm3 >= 0.0)) throw DomainError("WallPhase: C3 must be non-negative");
  const double t = geometry.thickness_nm;
  const double beta = geometry.wedge_angle_rad;
  prefactor_ = c3_meV_nm3 == 0.0
                   ? 0.0
                   : units::kKappaPhase * t * std::cos(beta) * c3_meV_nm3 / velocity_mps;
  offset_ = t * std::tan(beta);
}

namespace {

// p(u) = u^3 (1 + a u/2) / (1 + a u)^2 and the log-derivative
// L(u) = p'/p = 3/u + (a/2)/(1 + a u/2) - 2a/(1 + a u).
struct PhaseShape {
  double p, dp, d2p;
};

PhaseShape shape(double u, double a) {
  const double half = 1.0 + 0.5 * a * u;
  const double full = 1.0 + a * u;
  const double p = u * u * u * half / (full * full);
  const double L = 3.0 / u + 0.5 * a / half - 2.0 * a / full;
  const double dL = -3.0 / (u * u) - 0.25 * a * a / (half * half) + 2.0 * a * a / (full * full);
  return {p, p * L, p * (L * L + dL)};
}

}  // namespace

double WallPhase::operator()(double zeta_nm) const {
  if (prefactor_ == 0.0) return 0.0;
  return prefactor_ * shape(1.0 / zeta_nm, offset_).p;
}

double WallPhase::derivative(double zeta_nm) const {
  if (prefactor_ == 0.0) return 0.0;
  const double u = 1.0 / zeta_nm;
  return -prefactor_ * u * u * shape(u, offset_).dp;
}

double WallPhase::second_derivative(double zeta_nm) const {
  if (prefactor_ == 0.0) return 0.0;
  const double u = 1.0 / zeta_nm;
  const auto s = shape(u, offset_);
  return prefactor_ * (2.0 * u * u * u * s.dp + u * u * u * u * s.d2p);
}

double WallPhase::solve(double level, double zeta_hi) const {
  if (prefactor_ == 0.0) throw DomainError("WallPhase::solve: zero phase never reaches a level");
  if ((*this)(zeta_hi) >= level) return zeta_hi;

  // Bracket in log(zeta): phi -> infinity as zeta -> 0.
  double hi = std::log(zeta_hi);
  double lo = hi;
  do {
    lo -= 2.0;
  } while ((*this)(std::exp(lo)) < level);

  // Safeguarded Newton on log(phi) vs log(zeta).
  const double target = std::log(level);
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double z = std::exp(s);
    const double ph = (*this)(z);
    const double f = std::log(ph) - target;
    if (f > 0.0)
      lo = s;
    else
      hi = s;
    const double slope = z * derivative(z) / ph;  // d log(phi) / d log(zeta) < 0
    double next = s - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-14 || hi - lo < 1e-14) {
      s = next;
      break;
    }
    s = next;
  }
  return std::exp(s);
}

TransmissionModel::TransmissionModel(double c3_meV_nm3, const GratingGeometry& geometry,
                                     double velocity_mps)
    : c3_(c3_meV_nm3),
      half_width_(0.5 * geometry.slit_width_nm),
      phase_(c3_meV_nm3, geometry, velocity_mps) {
  geometry.validate(c3_meV_nm3 != 0.0);
}

Complex TransmissionModel::operator()(double zeta_nm) const {
  if (!(zeta_nm > 0.0)) throw DomainError("transmission function: zeta must be > 0");
  return std::polar(1.0, phase_(zeta_nm));
}

// ---------------------------------------------------------------------------

double vdw_potential(double c3_meV_nm3, double distance_nm) {
  if (!(distance_nm > 0.0)) throw DomainError("vdw_potential: distance must be > 0");
  return -c3_meV_nm3 / (distance_nm * distance_nm * distance_nm);
}

Complex transmission_function(double zeta_nm, double c3_meV_nm3,
                              const GratingGeometry& geometry, double velocity_mps) {
  if (!(zeta_nm > 0.0)) throw DomainError("transmission function: zeta must be > 0");
  if (zeta_nm > 0.5 * geometry.slit_width_nm)
    throw DomainError("transmission function: zeta beyond the slit centre");
  return TransmissionModel(c3_meV_nm3, geometry, velocity_mps)(zeta_nm);
}

CumulantSet cumulants(double c3_meV_nm3, const GratingGeometry& geometry, double velocity_mps,
                      const QuadratureOptions& options) {
  if (!(c3_meV_nm3 >= 0.0)) throw DomainError("cumulants: C3 must be non-negative");
  if (!(velocity_mps > 0.0)) throw DomainError("cumulants: velocity must be positive");
  geometry.validate(c3_meV_nm3 != 0.0);

  CumulantSet cum;
  const double b = 0.5 * geometry.slit_width_nm;
  if (c3_meV_nm3 == 0.0) {
    cum.s_eff_nm = geometry.slit_width_nm;
    cum.sigma_sq_eff_nm2 = geometry.roughness_var_nm2;
    return cum;
  }

  const WallPhase phase(c3_meV_nm3, geometry, velocity_mps);
  const PanelGrid grid = build_panels(phase, b, b / 8.0, options);

  const auto [i0, i1] = integrate_wall_moments(phase, grid, options);

  const double accept = options.accept_rel_tol;
  if (i0.abs_error > accept * std::abs(i0.value) || i1.abs_error > accept * std::abs(i1.value))
    throw NumericalError("cumulants: quadrature did not reach the acceptance tolerance",
                         std::max(i0.abs_error / std::abs(i0.value),
                                  i1.abs_error / std::abs(i1.value)));

  const Complex m1 = b - i0.value;
  const Complex m2 = b * b - 2.0 * i1.value;
  cum.r1_nm = m1;
  cum.r2_nm2 = m2 - m1 * m1;
  cum.s_eff_nm = geometry.slit_width_nm - 2.0 * cum.r1_nm.real();
  cum.delta_nm = 2.0 * cum.r1_nm.imag();
  cum.sigma_sq_eff_nm2 = geometry.roughness_var_nm2 + cum.r2_nm2.real();
  cum.edge_phase_rad = phase(b);
  cum.abs_error_nm = i0.abs_error;
  cum.cutoff_nm = grid.cutoff_nm;
  cum.panels = static_cast<int>(grid.edges.size()) - 1;
  return cum;
}

SlitAmplitude slit_amplitude_direct(double theta_rad, const TransmissionModel& tau,
                                    const GratingGeometry& geometry, double wavelength_nm,
                                    const QuadratureOptions& options) {
  if (!(std::abs(theta_rad) < kPi / 2)) throw DomainError("slit amplitude: |theta| >= pi/2");
  if (!(wavelength_nm > 0.0)) throw DomainError("slit amplitude: wavelength must be positive");

  const double b = 0.5 * geometry.slit_width_nm;
  const double kappa = 2.0 * kPi / wavelength_nm * std::sin(theta_rad);
  const WallPhase& phase = tau.phase();

  double max_width = b / 8.0;
  if (kappa != 0.0) max_width = std::min(max_width, options.panel_phase_rad / std::abs(kappa));
  const PanelGrid grid = build_panels(phase, b, max_width, options);

  const auto g = [&](double z) { return std::cos(kappa * (b - z)); };
  const auto dg = [&](double z) { return kappa * std::sin(kappa * (b - z)); };
  const auto integral = integrate_wall_phase(phase, grid, g, dg, options);

  const double pref = 2.0 * std::cos(theta_rad) / std::sqrt(wavelength_nm);
  SlitAmplitude out;
  out.value = pref * std::polar(1.0, phase(b)) * integral.value;
  out.theta_rad = theta_rad;
  out.kappa_per_nm = kappa;
  out.abs_error = pref * integral.abs_error;
  return out;
}

Complex sin_over_kappa(double kappa, Complex a) {
  const Complex x = kappa * a;
  if (std::abs(x) < 1e-6) return a * (1.0 - x * x / 6.0);
  return std::sin(x) / kappa;
}

SlitAmplitude slit_amplitude_cumulant(double theta_rad, const CumulantSet& cum,
                                      const GratingGeometry& geometry, double wavelength_nm) {
  if (!(std::abs(theta_rad) < kPi / 2)) throw DomainError("slit amplitude: |theta| >= pi/2");
  if (!(wavelength_nm > 0.0)) throw DomainError("slit amplitude: wavelength must be positive");

  const double b = 0.5 * geometry.slit_width_nm;
  const double kappa = 2.0 * kPi / wavelength_nm * std::sin(theta_rad);
  const double pref = 2.0 * std::cos(theta_rad) / std::sqrt(wavelength_nm);

  SlitAmplitude out;
  out.value = pref * std::polar(1.0, cum.edge_phase_rad) *
              std::exp(-0.5 * kappa * kappa * cum.r2_nm2) * sin_over_kappa(kappa, b - cum.r1_nm);
  out.theta_rad = theta_rad;
  out.kappa_per_nm = kappa;
  return out;
}

double intensity_ratio_continuous(double order, const SlitEnvelope& env, double period_nm) {
  if (order == 0.0) return 1.0;
  const double d = period_nm;
  const double x = kPi * order / d;
  const double debye_waller = std::exp(-4.0 * x * x * env.sigma_sq_nm2);
  const double sn = std::sin(x * env.s_eff_nm);
  const double sh = std::sinh(x * env.delta_nm);
  const double norm = x * x * (env.s_eff_nm * env.s_eff_nm + env.delta_nm * env.delta_nm);
  return debye_waller * (sn * sn + sh * sh) / norm;
}

double intensity_ratio(int order, const SlitEnvelope& env, double period_nm) {
  return intensity_ratio_continuous(static_cast<double>(order), env, period_nm);
}

double intensity_ratio(int order, const CumulantSet& cum, const GratingGeometry& geometry) {
  return intensity_ratio(order, cum.envelope(), geometry.period_nm);
}

double diffraction_angle(int order, double wavelength_nm, double period_nm) {
  if (!(wavelength_nm > 0.0) || !(period_nm > 0.0))
    throw DomainError("diffraction_angle: wavelength and period must be positive");
  const double s = order * wavelength_nm / period_nm;
  if (std::abs(s) > 1.0) throw DomainError("diffraction_angle: evanescent order");
  return std::asin(s);
}

double grating_factor(double theta_rad, int slits, double wavelength_nm, double period_nm) {
  if (slits < 1) throw DomainError("grating_factor: need at least one slit");
  if (slits == 1) return 1.0;
  const double x = kPi * period_nm * std::sin(theta_rad) / wavelength_nm;
  const double m = std::round(x / kPi);
  const double y = x - m * kPi;
  const double n = slits;
  // sin(N x)/sin(x) = (-1)^{m(N-1)} sin(N y)/sin(y); the sign drops out on squaring.
  if (std::abs(n * y) < 1e-6) {
    const double r = n * (1.0 - (n * n - 1.0) * y * y / 6.0);
    return r * r;
  }
  const double r = std::sin(n * y) / std::sin(y);
  return r * r;
}

std::vector<double> full_pattern(std::span<const double> theta_rad, int slits,
                                 const CumulantSet& cum, const GratingGeometry& geometry,
                                 double wavelength_nm) {
  if (slits < 1) throw DomainError("full_pattern: need at least one slit");
  std::vector<double> out;
  out.reserve(theta_rad.size());
  const double sigma0_sq = geometry.roughness_var_nm2;
  for (double th : theta_rad) {
    const auto f = slit_amplitude_cumulant(th, cum, geometry, wavelength_nm);
    const double rough = std::exp(-f.kappa_per_nm * f.kappa_per_nm * sigma0_sq);
    out.push_back(grating_factor(th, slits, wavelength_nm, geometry.period_nm) * f.intensity() *
                  rough);
  }
  return out;
}

}  // namespace vdwg
