#include "vdwg/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "vdwg/units.hpp"

namespace vdwg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Characteristic magnitudes used to scale the parameters to order one.
constexpr double kC3Scale = 0.1;  // meV nm^3
constexpr double kNmScale = 1.0;  // nm

constexpr double kC3UpperScaled = 100.0;  // C3 <= 10 meV nm^3

bool all_positive(const std::vector<double>& u) {
  return !u.empty() && std::all_of(u.begin(), u.end(), [](double x) { return x > 0.0; });
}

// Turns a minimizer result in scaled coordinates into named parameters.
FitResult make_result(const std::string& kind, const MinimizerResult& m,
                      const std::vector<std::string>& names, const std::vector<std::string>& units,
                      const std::vector<double>& scales, bool weighted, std::size_t n_data) {
  FitResult r;
  r.kind = kind;
  r.rss = m.objective;
  r.iterations = m.iterations;
  r.converged = m.converged;
  r.gradient_norm = m.gradient_norm;
  r.condition_number = m.condition_number;

  int free = 0;
  for (std::size_t j = 0; j < names.size(); ++j)
    if (!m.at_lower[j] && !m.at_upper[j]) ++free;
  r.dof = static_cast<int>(n_data) - free;

  // Without measurement errors the residual scatter sets the noise level.
  double cov_scale = 1.0;
  if (!weighted) cov_scale = r.dof > 0 ? m.objective / r.dof : 0.0;

  for (std::size_t j = 0; j < names.size(); ++j) {
    FitParameter p;
    p.name = names[j];
    p.unit = units[j];
    p.value = m.x[static_cast<Eigen::Index>(j)] * scales[j];
    const double var = m.covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
    p.uncertainty = std::sqrt(std::max(0.0, var * cov_scale)) * scales[j];
    p.at_lower = m.at_lower[j];
    p.at_upper = m.at_upper[j];
    r.parameters.push_back(std::move(p));
  }
  if (!m.message.empty()) r.warnings.push_back(m.message);
  return r;
}

}  // namespace

RatioFitParams ratio_params(const FitResult& fit) {
  return {fit.value("s_eff"), fit.value("delta"), fit.value("sigma")};
}

std::vector<RatioPoint> measured_ratios(const PeakTable& peaks, int max_order) {
  double ref = 0.0;
  double ref_var = 0.0;
  int ref_count = 0;
  for (const auto& e : peaks.entries) {
    if (std::abs(e.order) != 1) continue;
    ref += e.area;
    ref_var += e.area_uncertainty * e.area_uncertainty;
    ++ref_count;
  }
  if (ref_count == 0) throw UnderdeterminedError("peak table has no first-order entry");
  ref /= ref_count;
  const double ref_u = std::sqrt(ref_var) / ref_count;
  if (!(ref > 0.0)) throw ValidationError("first-order peak area is zero");

  std::vector<RatioPoint> out;
  for (const auto& e : peaks.entries) {
    const int n = std::abs(e.order);
    if (n < 2 || n > max_order) continue;
    RatioPoint p;
    p.order = e.order;
    p.ratio = e.area / ref;
    const double a = e.area_uncertainty / ref;
    const double b = e.area * ref_u / (ref * ref);
    p.uncertainty = std::sqrt(a * a + b * b);
    out.push_back(p);
  }
  return out;
}

FitResult fit_ratio_params(const PeakTable& peaks, const GratingGeometry& geometry,
                           const RatioFitOptions& options) {
  const double d = geometry.period_nm;
  if (!(d > 0.0)) throw DomainError("fit_ratio_params: period must be > 0");
  if (!(geometry.slit_width_nm > 0.0 && geometry.slit_width_nm < d))
    throw DomainError("fit_ratio_params: geometric slit width must satisfy 0 < s0 < d");

  std::set<int> distinct;
  for (const auto& e : peaks.entries)
    if (std::abs(e.order) >= 1 && std::abs(e.order) <= options.max_order)
      distinct.insert(std::abs(e.order));
  if (distinct.size() < 4)
    throw UnderdeterminedError("ratio fit needs at least 4 distinct orders |n| >= 1, have " +
                               std::to_string(distinct.size()));

  const auto pts = measured_ratios(peaks, options.max_order);
  std::vector<double> u;
  for (const auto& p : pts) u.push_back(p.uncertainty);
  const bool weighted = all_positive(u);

  auto residuals = [&](const Eigen::VectorXd& x) {
    const SlitEnvelope env{x[0] * d, x[1] * kNmScale, x[2] * x[2] * kNmScale * kNmScale};
    const double r1 = intensity_ratio(1, env, d);
    Eigen::VectorXd r(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double model = r1 > 0.0 ? intensity_ratio(pts[i].order, env, d) / r1 : kNaN;
      r[static_cast<Eigen::Index>(i)] = (pts[i].ratio - model) / (weighted ? u[i] : 1.0);
    }
    return r;
  };

  // Kirchhoff inversion of I2/I1 = cos^2(pi s / d).
  const double s0 = geometry.slit_width_nm;
  double s_start = s0;
  double r2 = 0.0;
  int n2 = 0;
  for (const auto& p : pts)
    if (std::abs(p.order) == 2) {
      r2 += p.ratio;
      ++n2;
    }
  if (n2 > 0) {
    const double c = std::sqrt(std::clamp(r2 / n2, 0.0, 1.0));
    const double s = d / units::kPi * std::acos(c);
    s_start = std::abs(s - s0) <= std::abs(d - s - s0) ? s : d - s;
  }

  Eigen::VectorXd lower(3), upper(3);
  lower << 1e-6, 0.0, 0.0;
  upper << 1.0 - 1e-6, d / kNmScale, 0.5 * d / kNmScale;

  MinimizerResult best;
  bool have = false;
  for (const double s_init : {s_start, s0}) {
    Eigen::VectorXd x0(3);
    x0 << std::clamp(s_init / d, 0.02, 0.98), 0.1 / kNmScale, 1.0 / kNmScale;
    auto m = minimize_least_squares(residuals, x0, lower, upper, options.minimizer);
    if (!have || m.objective < best.objective) {
      best = std::move(m);
      have = true;
    }
    if (s_start == s0) break;
  }

  // s and d - s give the same ratios at integer orders.  Keep the branch
  // nearer s0; on a tie (s0 = d/2) keep the narrower slit, since the wall
  // attraction only ever narrows it.
  const double s_fit = best.x[0] * d;
  const double keep = std::abs(s_fit - s0);
  const double flip = std::abs(d - s_fit - s0);
  const bool tie = std::abs(keep - flip) <= 1e-9 * d;
  if ((tie && d - s_fit < s_fit) || (!tie && flip < keep)) {
    best.x[0] = 1.0 - best.x[0];
    std::swap(best.at_lower[0], best.at_upper[0]);
  }

  auto result = make_result("ratio", best, {"s_eff", "delta", "sigma"}, {"nm", "nm", "nm"},
                            {d, kNmScale, kNmScale}, weighted, pts.size());
  if (!weighted) result.warnings.push_back("peak table has no uncertainties; orders weighted equally");
  if (!result.converged)
    throw ConvergenceError("ratio fit did not converge: " + best.message, std::move(result));
  return result;
}

// ---------------------------------------------------------------------------

double model_seff(double c3_meV_nm3, double s0_nm, const GratingGeometry& geometry,
                  double velocity_mps, const QuadratureOptions& quadrature) {
  GratingGeometry g = geometry;
  g.slit_width_nm = s0_nm;
  return cumulants(c3_meV_nm3, g, velocity_mps, quadrature).s_eff_nm;
}

namespace {

void check_points(const std::vector<SeffPoint>& points) {
  for (const auto& p : points) {
    if (!(p.velocity_mps > 0.0)) throw ValidationError("s_eff point: velocity must be > 0");
    if (!(p.uncertainty_nm >= 0.0)) throw ValidationError("s_eff point: uncertainty must be >= 0");
    if (!std::isfinite(p.s_eff_nm)) throw ValidationError("s_eff point: s_eff must be finite");
  }
}

MinimizerOptions c3_minimizer_defaults(MinimizerOptions m) {
  // Each objective evaluation costs one cumulant quadrature per point; the
  // simplex only needs to reach the basin.
  m.max_simplex_iterations = std::min(m.max_simplex_iterations, 40);
  // s_eff carries quadrature noise near 1e-9 nm; a wider difference step
  // keeps it out of the Jacobian.
  m.jacobian_step = std::max(m.jacobian_step, 1e-4);
  return m;
}

struct SeffObjective {
  const std::vector<SeffPoint>& points;
  const GratingGeometry& geometry;
  const QuadratureOptions& quadrature;
  std::vector<double> sigma;

  Eigen::VectorXd operator()(double c3, double s0) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      double model = kNaN;
      try {
        model = model_seff(c3, s0, geometry, points[i].velocity_mps, quadrature);
      } catch (const Error&) {
        // Outside the model's domain; rejected by the minimizer.
      }
      r[static_cast<Eigen::Index>(i)] = (points[i].s_eff_nm - model) / sigma[i];
    }
    return r;
  }
};

}  // namespace

FitResult fit_c3_s0(const std::vector<SeffPoint>& points, const GratingGeometry& geometry,
                    const C3FitOptions& options) {
  if (points.size() < 3)
    throw UnderdeterminedError("joint C3/s0 fit needs at least 3 points, have " +
                               std::to_string(points.size()));
  check_points(points);
  geometry.validate(true);

  std::vector<double> u;
  for (const auto& p : points) u.push_back(p.uncertainty_nm);
  const bool weighted = all_positive(u);
  SeffObjective obj{points, geometry, options.quadrature,
                    weighted ? u : std::vector<double>(points.size(), 1.0)};

  double vmin = points.front().velocity_mps, vmax = vmin, smax = points.front().s_eff_nm;
  for (const auto& p : points) {
    vmin = std::min(vmin, p.velocity_mps);
    vmax = std::max(vmax, p.velocity_mps);
    smax = std::max(smax, p.s_eff_nm);
  }

  // Start s0 where the mean residual vanishes at the guessed C3.
  const double d = geometry.period_nm;
  double s0_start = std::min(smax + 1.0, d - 1.0);
  {
    double shift = 0.0;
    int n = 0;
    for (const auto& p : points) {
      try {
        shift += s0_start - model_seff(options.c3_guess, s0_start, geometry, p.velocity_mps,
                                       options.quadrature);
        ++n;
      } catch (const Error&) {
      }
    }
    double mean_s = 0.0;
    for (const auto& p : points) mean_s += p.s_eff_nm;
    mean_s /= static_cast<double>(points.size());
    if (n > 0) s0_start = std::clamp(mean_s + shift / n, 1e-2 * d, (1.0 - 1e-2) * d);
  }

  auto residuals = [&](const Eigen::VectorXd& x) { return obj(x[0] * kC3Scale, x[1] * kNmScale); };
  Eigen::VectorXd x0(2), lower(2), upper(2);
  x0 << options.c3_guess / kC3Scale, s0_start / kNmScale;
  lower << 0.0, 1e-3 / kNmScale;
  upper << kC3UpperScaled, (d - 1e-3) / kNmScale;

  MinimizerOptions mopt = c3_minimizer_defaults(options.minimizer);
  mopt.simplex_size = 0.2;
  const auto m = minimize_least_squares(residuals, x0, lower, upper, mopt);
  auto result = make_result("c3_s0", m, {"C3", "s0"}, {"meV nm^3", "nm"},
                            {kC3Scale, kNmScale}, weighted, points.size());

  if (vmax / vmin <= 1.0 + 1e-12) {
    result.ill_conditioned = true;
    result.warnings.push_back(
        "all points share one velocity: C3 and s0 are not separately identifiable");
  } else if (vmax / vmin < 1.5) {
    result.warnings.push_back("velocity range max/min = " + format_double(vmax / vmin) +
                              " < 1.5: C3 and s0 are strongly correlated");
  }
  if (!(result.condition_number < 1e10)) {
    result.ill_conditioned = true;
    result.warnings.push_back("normal matrix is ill-conditioned (condition number " +
                              format_double(result.condition_number) + ")");
  }
  if (!weighted) result.warnings.push_back("points carry no uncertainties; weighted equally");
  if (!result.converged && !result.ill_conditioned)
    throw ConvergenceError("C3/s0 fit did not converge: " + m.message, std::move(result));
  return result;
}

FitResult fit_c3_fixed_s0(const std::vector<SeffPoint>& points,
                          const GratingGeometry& geometry, double s0_nm,
                          const C3FitOptions& options) {
  if (points.empty()) throw UnderdeterminedError("C3 fit needs at least one point");
  check_points(points);
  GratingGeometry g = geometry;
  g.slit_width_nm = s0_nm;
  g.validate(true);

  std::vector<double> u;
  for (const auto& p : points) u.push_back(p.uncertainty_nm);
  const bool weighted = all_positive(u);
  SeffObjective obj{points, g, options.quadrature,
                    weighted ? u : std::vector<double>(points.size(), 1.0)};

  auto residuals = [&](const Eigen::VectorXd& x) { return obj(x[0] * kC3Scale, s0_nm); };
  Eigen::VectorXd x0(1), lower(1), upper(1);
  x0 << options.c3_guess / kC3Scale;
  lower << 0.0;
  upper << kC3UpperScaled;

  MinimizerOptions mopt = c3_minimizer_defaults(options.minimizer);
  mopt.simplex_size = 0.2;
  const auto m = minimize_least_squares(residuals, x0, lower, upper, mopt);
  auto result = make_result("c3_fixed_s0", m, {"C3"}, {"meV nm^3"}, {kC3Scale}, weighted,
                            points.size());
  if (result.parameters[0].at_lower)
    result.warnings.push_back("C3 at its lower bound 0");
  if (!weighted) result.warnings.push_back("points carry no uncertainties; weighted equally");
  if (!result.converged)
    throw ConvergenceError("C3 fit did not converge: " + m.message, std::move(result));
  return result;
}

BetaSensitivity beta_sensitivity(const std::vector<SeffPoint>& points,
                                 const GratingGeometry& geometry, double s0_nm,
                                 double delta_beta_rad, const C3FitOptions& options) {
  if (!(delta_beta_rad >= 0.0)) throw DomainError("beta_sensitivity: delta beta must be >= 0");
  const double beta = geometry.wedge_angle_rad;
  if (beta - delta_beta_rad < 0.0 || beta + delta_beta_rad >= units::kPi / 2)
    throw DomainError("beta_sensitivity: beta +/- delta beta leaves [0, 90) deg");

  BetaSensitivity out;
  out.central = fit_c3_fixed_s0(points, geometry, s0_nm, options);
  if (delta_beta_rad == 0.0) {
    out.minus = out.plus = out.central;
  } else {
    GratingGeometry g = geometry;
    g.wedge_angle_rad = beta - delta_beta_rad;
    out.minus = fit_c3_fixed_s0(points, g, s0_nm, options);
    g.wedge_angle_rad = beta + delta_beta_rad;
    out.plus = fit_c3_fixed_s0(points, g, s0_nm, options);
  }
  out.c3_minus = out.minus.value("C3");
  out.c3_central = out.central.value("C3");
  out.c3_plus = out.plus.value("C3");
  out.half_spread = 0.5 * std::abs(out.c3_plus - out.c3_minus);
  return out;
}

// ---------------------------------------------------------------------------

LinearFit fit_c3_vs_alpha(const std::vector<AlphaPoint>& points) {
  if (points.size() < 2)
    throw UnderdeterminedError("C3 versus alpha fit needs at least 2 points, have " +
                               std::to_string(points.size()));
  std::vector<double> u;
  for (const auto& p : points) {
    if (!std::isfinite(p.alpha_A3) || !std::isfinite(p.c3_meV_nm3))
      throw ValidationError("C3 versus alpha: values must be finite");
    if (!(p.uncertainty >= 0.0)) throw ValidationError("C3 versus alpha: uncertainty must be >= 0");
    u.push_back(p.uncertainty);
  }
  LinearFit fit;
  fit.weighted = all_positive(u);

  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (const auto& p : points) {
    const double w = fit.weighted ? 1.0 / (p.uncertainty * p.uncertainty) : 1.0;
    S += w;
    Sx += w * p.alpha_A3;
    Sy += w * p.c3_meV_nm3;
    Sxx += w * p.alpha_A3 * p.alpha_A3;
    Sxy += w * p.alpha_A3 * p.c3_meV_nm3;
  }
  const double det = S * Sxx - Sx * Sx;
  if (!(std::abs(det) > 1e-12 * S * Sxx))
    throw UnderdeterminedError("C3 versus alpha: all polarizabilities coincide");

  fit.slope = (S * Sxy - Sx * Sy) / det;
  fit.intercept = (Sxx * Sy - Sx * Sxy) / det;
  for (const auto& p : points) {
    const double r = p.c3_meV_nm3 - (fit.slope * p.alpha_A3 + fit.intercept);
    fit.residuals.push_back(r);
    fit.chi_square += fit.weighted ? r * r / (p.uncertainty * p.uncertainty) : r * r;
  }
  double scale = 1.0;
  if (!fit.weighted) {
    const auto dof = static_cast<double>(points.size()) - 2.0;
    scale = dof > 0.0 ? fit.chi_square / dof : 0.0;
  }
  fit.slope_uncertainty = std::sqrt(S / det * scale);
  fit.intercept_uncertainty = std::sqrt(Sxx / det * scale);
  return fit;
}

}  // namespace vdwg
