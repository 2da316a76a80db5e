#pragma once

// Quadrature of g(zeta) * exp(i [phi(zeta) - phi(b)]) over (0, b] where phi is
// the wall phase, which grows without bound as zeta -> 0.
//
// [zeta*, b] is cut into panels across which phi changes by at most
// panel_phase_rad; each panel is integrated with Gauss-Kronrod (7/15 points), bisected
// until the Kronrod-Gauss difference is small.
// zeta* is where phi reaches max_phase_rad.  On (0, zeta*] the integrand
// oscillates faster than any smooth g varies, so the integral is replaced by
// its endpoint expansion (two integrations by parts); the magnitude of the
// second term is charged to the error estimate.

#include <array>
#include <functional>
#include <vector>

#include "vdwg/physics.hpp"

namespace vdwg {

struct PanelGrid {
  std::vector<double> edges;  // descending: b = edges.front() > ... > edges.back() = cutoff
  double cutoff_nm = 0.0;
};

struct OscillatoryIntegral {
  Complex value;
  double abs_error = 0.0;
  double tail_magnitude = 0.0;  // |leading tail term|
};

PanelGrid build_panels(const WallPhase& phase, double upper_nm, double max_panel_width_nm,
                       const QuadratureOptions& options);

/// g and its derivative; dg is only evaluated at the cutoff.
OscillatoryIntegral integrate_wall_phase(const WallPhase& phase, const PanelGrid& grid,
                                         const std::function<double(double)>& g,
                                         const std::function<double(double)>& dg,
                                         const QuadratureOptions& options);

/// The two moments int zeta^k exp(i [phi - phi(b)]) for k = 0, 1 in one pass.
std::array<OscillatoryIntegral, 2> integrate_wall_moments(const WallPhase& phase,
                                                          const PanelGrid& grid,
                                                          const QuadratureOptions& options);

}  // namespace vdwg
