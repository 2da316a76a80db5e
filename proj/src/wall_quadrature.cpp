#include "vdwg/wall_quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "vdwg/error.hpp"

namespace vdwg {

namespace {

constexpr int kMaxPanelDepth = 24;

template <std::size_t M>
using Values = std::array<Complex, M>;

template <std::size_t M>
struct PanelValue {
  Values<M> value{};
  std::array<double, M> abs_error{};
};

// Non-adaptive G7K15 on [lo, hi], bisected while any component's
// Kronrod-Gauss difference exceeds tol relative to its L1 norm.  `noise` is
// the relative rounding level of the integrand (the phase is large near the
// wall and only known to eps * phi), below which bisection cannot help.
template <std::size_t M, class F>
PanelValue<M> integrate_panel(const F& f, double lo, double hi, double tol, double noise,
                              int depth) {
  using Kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
  using Gauss = boost::math::quadrature::gauss<double, 7>;
  static const auto& xk = Kronrod::abscissa();
  static const auto& wk = Kronrod::weights();
  static const auto& wg = Gauss::weights();

  const double c = 0.5 * (lo + hi);
  const double h = 0.5 * (hi - lo);
  Values<M> kron{}, gauss{};
  std::array<double, M> l1{};

  auto accumulate = [&](const Values<M>& v, double w_k, double w_g) {
    for (std::size_t j = 0; j < M; ++j) {
      kron[j] += w_k * v[j];
      gauss[j] += w_g * v[j];
      l1[j] += w_k * std::abs(v[j]);
    }
  };
  // Abscissae are stored non-negative; even indices are the Gauss nodes.
  accumulate(f(c), wk[0], wg[0]);
  for (std::size_t i = 1; i < xk.size(); ++i) {
    const double wgi = (i % 2 == 0) ? wg[i / 2] : 0.0;
    accumulate(f(c - h * xk[i]), wk[i], wgi);
    accumulate(f(c + h * xk[i]), wk[i], wgi);
  }

  PanelValue<M> out;
  bool ok = true;
  for (std::size_t j = 0; j < M; ++j) {
    out.value[j] = h * kron[j];
    out.abs_error[j] = h * std::abs(kron[j] - gauss[j]);
    if (out.abs_error[j] > std::max(tol, noise) * h * l1[j]) ok = false;
  }
  if (ok || depth >= kMaxPanelDepth) return out;

  const double mid = 0.5 * (lo + hi);
  const auto left = integrate_panel<M>(f, lo, mid, tol, noise, depth + 1);
  const auto right = integrate_panel<M>(f, mid, hi, tol, noise, depth + 1);
  for (std::size_t j = 0; j < M; ++j) {
    out.value[j] = left.value[j] + right.value[j];
    out.abs_error[j] = left.abs_error[j] + right.abs_error[j];
  }
  return out;
}

// g has M components; g(z)[j] and dg(z)[j] are the weight functions and
// their derivatives.
template <std::size_t M, class G, class DG>
std::array<OscillatoryIntegral, M> integrate_impl(const WallPhase& phase, const PanelGrid& grid,
                                                  const G& g, const DG& dg,
                                                  const QuadratureOptions& options) {
  const double upper = grid.edges.front();
  const double phase_upper = phase(upper);

  auto integrand = [&](double zeta) {
    const double psi = phase(zeta) - phase_upper;
    const Complex e(std::cos(psi), std::sin(psi));
    const auto w = g(zeta);
    Values<M> v;
    for (std::size_t j = 0; j < M; ++j) v[j] = w[j] * e;
    return v;
  };

  std::array<OscillatoryIntegral, M> out{};
  for (std::size_t i = 1; i < grid.edges.size(); ++i) {
    const double lo = grid.edges[i];
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(phase(lo)));
    const auto piece =
        integrate_panel<M>(integrand, lo, grid.edges[i - 1], options.target_rel_tol, noise, 0);
    for (std::size_t j = 0; j < M; ++j) {
      out[j].value += piece.value[j];
      out[j].abs_error += piece.abs_error[j];
    }
  }

  const double zc = grid.cutoff_nm;
  if (zc > 0.0) {
    const double d1 = phase.derivative(zc);
    const double d2 = phase.second_derivative(zc);
    const double psi = phase(zc) - phase_upper;
    const Complex e(std::cos(psi), std::sin(psi));
    const auto gz = g(zc);
    const auto dgz = dg(zc);
    for (std::size_t j = 0; j < M; ++j) {
      const Complex first = gz[j] * e / Complex(0.0, d1);
      const double g_over_d1_prime = dgz[j] / d1 - gz[j] * d2 / (d1 * d1);
      const Complex second = g_over_d1_prime * e / d1;
      out[j].value += first + second;
      out[j].abs_error += std::abs(second);
      out[j].tail_magnitude = std::abs(first);
    }
  }
  return out;
}

}  // namespace

PanelGrid build_panels(const WallPhase& phase, double upper_nm, double max_panel_width_nm,
                       const QuadratureOptions& options) {
  PanelGrid grid;
  if (!(upper_nm > 0.0) || !(max_panel_width_nm > 0.0))
    throw DomainError("build_panels: upper limit and panel width must be positive");

  double cutoff = 0.0;
  if (!phase.is_zero()) cutoff = phase.solve(options.max_phase_rad, upper_nm);
  grid.cutoff_nm = cutoff;

  grid.edges.push_back(upper_nm);
  double zeta = upper_nm;
  const double step_phase = options.panel_phase_rad;
  while (zeta > cutoff) {
    double width = max_panel_width_nm;
    if (!phase.is_zero()) {
      // |phi'| grows towards the wall, so sizing the step with the slope at a
      // trial lower edge bounds the phase change across the panel.
      const double trial = std::min(width, step_phase / std::abs(phase.derivative(zeta)));
      const double lower = std::max(zeta - trial, 0.5 * zeta);
      width = std::min({width, zeta - lower, step_phase / std::abs(phase.derivative(lower))});
    }
    double next = std::max(zeta - width, cutoff);
    // Panels narrower than a few ulps carry nothing.
    if (zeta - next <= 4.0 * std::numeric_limits<double>::epsilon() * zeta) next = cutoff;
    grid.edges.push_back(next);
    zeta = next;
  }
  return grid;
}

OscillatoryIntegral integrate_wall_phase(const WallPhase& phase, const PanelGrid& grid,
                                         const std::function<double(double)>& g,
                                         const std::function<double(double)>& dg,
                                         const QuadratureOptions& options) {
  const auto gv = [&](double z) { return std::array<double, 1>{g(z)}; };
  const auto dgv = [&](double z) { return std::array<double, 1>{dg(z)}; };
  return integrate_impl<1>(phase, grid, gv, dgv, options)[0];
}

std::array<OscillatoryIntegral, 2> integrate_wall_moments(const WallPhase& phase,
                                                          const PanelGrid& grid,
                                                          const QuadratureOptions& options) {
  const auto gv = [](double z) { return std::array<double, 2>{1.0, z}; };
  const auto dgv = [](double) { return std::array<double, 2>{0.0, 1.0}; };
  return integrate_impl<2>(phase, grid, gv, dgv, options);
}

}  // namespace vdwg
