#include <doctest.h>

#include <cmath>

#include "vdwg/data_io.hpp"
#include "vdwg/error.hpp"
#include "vdwg/physics.hpp"
#include "vdwg/wall_quadrature.hpp"

using namespace vdwg;

namespace {

GratingGeometry grating(const char* id) {
  GratingGeometry g = grating_preset(id);
  g.thickness_nm = 120.0;
  return g;
}

Complex r1(double c3, double v, const QuadratureOptions& opt, const char* id = "I") {
  return cumulants(c3, grating(id), v, opt).r1_nm;
}

}  // namespace

TEST_CASE("panel grid") {
  const WallPhase phase(0.2, grating("I"), 700.0);
  const QuadratureOptions opt;
  const PanelGrid grid = build_panels(phase, 25.0, 25.0 / 8.0, opt);
  REQUIRE(grid.edges.size() >= 2);
  CHECK(grid.edges.front() == 25.0);
  CHECK(grid.edges.back() == grid.cutoff_nm);
  CHECK(phase(grid.cutoff_nm) == doctest::Approx(opt.max_phase_rad).epsilon(1e-10));
  for (std::size_t i = 1; i < grid.edges.size(); ++i) {
    const double hi = grid.edges[i - 1], lo = grid.edges[i];
    CHECK(lo < hi);
    CHECK(hi - lo <= 25.0 / 8.0 + 1e-12);
    // Phase advance per panel stays within the requested step.
    CHECK(phase(lo) - phase(hi) <= opt.panel_phase_rad * (1.0 + 1e-9));
  }
  CHECK_THROWS_AS(build_panels(phase, 0.0, 1.0, opt), DomainError);

  const WallPhase zero(0.0, grating("I"), 700.0);
  const PanelGrid flat = build_panels(zero, 25.0, 5.0, opt);
  CHECK(flat.cutoff_nm == 0.0);
  CHECK(flat.edges.size() == 6);
}

TEST_CASE("moments agree with the single-function integrator") {
  const WallPhase phase(0.15, grating("II"), 900.0);
  const QuadratureOptions opt;
  const PanelGrid grid = build_panels(phase, 33.75, 33.75 / 8.0, opt);
  const auto m = integrate_wall_moments(phase, grid, opt);
  const auto i0 = integrate_wall_phase(phase, grid, [](double) { return 1.0; },
                                       [](double) { return 0.0; }, opt);
  const auto i1 = integrate_wall_phase(phase, grid, [](double z) { return z; },
                                       [](double) { return 1.0; }, opt);
  CHECK(std::abs(m[0].value - i0.value) <= 1e-12 * std::abs(i0.value));
  CHECK(std::abs(m[1].value - i1.value) <= 1e-12 * std::abs(i1.value));
  CHECK(m[0].abs_error <= 1e-8 * std::abs(m[0].value));
}

TEST_CASE("zero phase integrates polynomials exactly") {
  const WallPhase zero(0.0, grating("I"), 1000.0);
  const QuadratureOptions opt;
  const PanelGrid grid = build_panels(zero, 25.0, 25.0 / 8.0, opt);
  const auto m = integrate_wall_moments(zero, grid, opt);
  CHECK(m[0].value.real() == doctest::Approx(25.0).epsilon(1e-14));
  CHECK(m[1].value.real() == doctest::Approx(312.5).epsilon(1e-14));
  CHECK(m[0].value.imag() == 0.0);
}

TEST_CASE("result does not depend on the tail cutoff or the panel phase step") {
  QuadratureOptions base;
  for (double v : {400.0, 1500.0}) {
    const Complex ref = r1(0.2, v, base);
    QuadratureOptions lower = base, higher = base, fine = base;
    lower.max_phase_rad = 1e3;
    higher.max_phase_rad = 1e5;
    fine.panel_phase_rad = base.panel_phase_rad / 3.0;
    for (const auto& o : {lower, higher, fine}) {
      const Complex x = r1(0.2, v, o);
      CHECK(std::abs(x - ref) <= 1e-7 * std::abs(ref));
    }
  }
}

TEST_CASE("reported error bound is honest") {
  // Compare the default quadrature against a much tighter one.
  QuadratureOptions tight;
  tight.target_rel_tol = 1e-12;
  tight.max_phase_rad = 1e6;
  tight.panel_phase_rad = 0.2;
  for (const char* id : {"I", "II", "III"}) {
    for (double c3 : {0.05, 0.5}) {
      const CumulantSet c = cumulants(c3, grating(id), 800.0);
      const Complex ref = r1(c3, 800.0, tight, id);
      CHECK(std::abs(c.r1_nm - ref) <= std::max(c.abs_error_nm, 1e-12));
      CHECK(c.panels > 0);
      CHECK(c.cutoff_nm > 0.0);
    }
  }
}

TEST_CASE("unreachable acceptance tolerance raises a numerical error") {
  QuadratureOptions opt;
  opt.max_phase_rad = 3.0;  // the tail term then dominates the error budget
  opt.accept_rel_tol = 1e-12;
  try {
    cumulants(0.3, grating("I"), 500.0, opt);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.achieved_error() > 1e-12);
  }
}
