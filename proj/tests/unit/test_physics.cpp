#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vdwg/data_io.hpp"
#include "vdwg/error.hpp"
#include "vdwg/physics.hpp"
#include "vdwg/units.hpp"

using namespace vdwg;

namespace {

GratingGeometry grating(const char* id, double t = 120.0) {
  GratingGeometry g = grating_preset(id);
  g.thickness_nm = t;
  return g;
}

constexpr double kHe = 4.002602;

}  // namespace

TEST_CASE("van der Waals potential") {
  CHECK(vdw_potential(1.0, 1.0) == -1.0);
  CHECK(vdw_potential(0.0, 3.7) == 0.0);
  CHECK(vdw_potential(1.0, 2.0) == -0.125);
  CHECK_THROWS_AS(vdw_potential(1.0, 0.0), DomainError);
  CHECK_THROWS_AS(vdw_potential(1.0, -1.0), DomainError);
}

TEST_CASE("transmission function") {
  const auto g = grating("I");
  SUBCASE("zero coupling") {
    for (double z : {0.1, 1.0, 10.0, 25.0}) {
      const Complex t = transmission_function(z, 0.0, g, 1000.0);
      CHECK(t.real() == 1.0);
      CHECK(t.imag() == 0.0);
    }
  }
  SUBCASE("vertical walls reduce to t C3 / (hbar v zeta^3)") {
    GratingGeometry flat = g;
    flat.wedge_angle_rad = 0.0;
    const double z = 3.0, c3 = 0.2, v = 800.0;
    const double phi = units::kKappaPhase * 120.0 * c3 / (v * z * z * z);
    const Complex t = transmission_function(z, c3, flat, v);
    CHECK(t.real() == doctest::Approx(std::cos(phi)).epsilon(1e-12));
    CHECK(t.imag() == doctest::Approx(std::sin(phi)).epsilon(1e-12));
  }
  SUBCASE("unit modulus") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uz(1e-3, 25.0), uc(0.0, 0.5), uv(300.0, 2500.0);
    for (int i = 0; i < 1000; ++i)
      CHECK(std::abs(std::abs(transmission_function(uz(rng), uc(rng), g, uv(rng))) - 1.0) <
            1e-12);
  }
  SUBCASE("domain") {
    CHECK_THROWS_AS(transmission_function(0.0, 0.1, g, 1000.0), DomainError);
    CHECK_THROWS_AS(transmission_function(-1.0, 0.1, g, 1000.0), DomainError);
    CHECK_THROWS_AS(transmission_function(25.5, 0.1, g, 1000.0), DomainError);
  }
}

TEST_CASE("wall phase derivatives and inverse") {
  const auto g = grating("III");
  const WallPhase phase(0.3, g, 600.0);
  for (double z : {0.3, 1.0, 4.0, 20.0}) {
    const double h = 1e-5 * z;
    const double fd1 = (phase(z + h) - phase(z - h)) / (2 * h);
    const double fd2 = (phase(z + h) - 2 * phase(z) + phase(z - h)) / (h * h);
    CHECK(phase.derivative(z) == doctest::Approx(fd1).epsilon(1e-7));
    CHECK(phase.second_derivative(z) == doctest::Approx(fd2).epsilon(1e-4));
    CHECK(phase.derivative(z) < 0.0);
  }
  for (double level : {1.0, 1e2, 1e4, 1e6}) {
    const double z = phase.solve(level, 35.6);
    CHECK(phase(z) == doctest::Approx(level).epsilon(1e-12));
  }
  CHECK(WallPhase(0.0, g, 600.0).is_zero());
}

TEST_CASE("Kirchhoff limit") {
  GratingGeometry g = grating_preset("I");
  const CumulantSet cum = cumulants(0.0, g, 1000.0);
  CHECK(cum.r1_nm == Complex(0.0, 0.0));
  CHECK(cum.r2_nm2 == Complex(0.0, 0.0));
  CHECK(cum.s_eff_nm == 50.0);
  CHECK(cum.delta_nm == 0.0);
  for (int n = 1; n <= 8; ++n) {
    const double x = units::kPi * n * 0.5;
    const double sinc2 = std::pow(std::sin(x) / x, 2);
    CHECK(std::abs(intensity_ratio(n, cum, g) - sinc2) < 1e-10);
    if (n % 2 == 0) CHECK(std::abs(intensity_ratio(n, cum, g)) < 1e-10);
  }
  CHECK(intensity_ratio(0, cum, g) == 1.0);
}

TEST_CASE("intensity ratio") {
  const SlitEnvelope half{50.0, 0.0, 0.0};
  CHECK(std::abs(intensity_ratio(2, half, 100.0)) < 1e-30);
  CHECK(intensity_ratio(0, half, 100.0) == 1.0);
  CHECK(intensity_ratio(2, SlitEnvelope{50.0, 0.5, 0.0}, 100.0) > 0.0);
  const SlitEnvelope env{47.3, -1.2, 2.1};
  for (int n = 1; n <= 8; ++n) CHECK(intensity_ratio(n, env, 100.0) == intensity_ratio(-n, env, 100.0));
  // Roughness multiplies by the Debye-Waller factor.
  const double dw = std::exp(-std::pow(2 * units::kPi * 3 * 1.5 / 100.0, 2));
  CHECK(intensity_ratio(3, SlitEnvelope{47.3, 0.0, 2.25}, 100.0) ==
        doctest::Approx(dw * intensity_ratio(3, SlitEnvelope{47.3, 0.0, 0.0}, 100.0)).epsilon(1e-14));
  CHECK(intensity_ratio_continuous(3.0, env, 100.0) == intensity_ratio(3, env, 100.0));
}

TEST_CASE("diffraction angle") {
  CHECK(diffraction_angle(0, 0.0563, 100.0) == 0.0);
  CHECK(diffraction_angle(1, 0.0563, 100.0) == doctest::Approx(5.63e-4).epsilon(1e-6));
  CHECK(diffraction_angle(-1, 0.0563, 100.0) == -diffraction_angle(1, 0.0563, 100.0));
  CHECK_THROWS_AS(diffraction_angle(3, 50.0, 100.0), DomainError);
}

TEST_CASE("grating factor and full pattern") {
  const double lam = de_broglie_wavelength(kHe, 1000.0);
  const auto g = grating("I");
  for (int n = -4; n <= 4; ++n) {
    const double th = diffraction_angle(n, lam, 100.0);
    CHECK(grating_factor(th, 100, lam, 100.0) == doctest::Approx(1e4).epsilon(1e-9));
  }
  CHECK(grating_factor(1.234e-4, 1, lam, 100.0) == 1.0);

  const CumulantSet cum = cumulants(0.1, g, 1000.0);
  std::vector<double> th;
  for (int n = 0; n <= 6; ++n) th.push_back(diffraction_angle(n, lam, 100.0));
  const auto single = full_pattern(th, 1, cum, g, lam);
  const auto hundred = full_pattern(th, 100, cum, g, lam);
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double f2 = slit_amplitude_cumulant(th[i], cum, g, lam).intensity();
    CHECK(single[i] == doctest::Approx(f2).epsilon(1e-12));
    CHECK(hundred[i] == doctest::Approx(1e4 * f2).epsilon(1e-9));
  }
}

TEST_CASE("slit amplitude closed forms") {
  const auto g = grating("I");
  const double lam = de_broglie_wavelength(kHe, 1770.0);
  const TransmissionModel free(0.0, g, 1770.0);
  const CumulantSet cum0 = cumulants(0.0, g, 1770.0);

  const SlitAmplitude f0 = slit_amplitude_direct(0.0, free, g, lam);
  CHECK(f0.value.real() == doctest::Approx(50.0 / std::sqrt(lam)).epsilon(1e-12));
  CHECK(f0.value.imag() == 0.0);
  CHECK(slit_amplitude_cumulant(0.0, cum0, g, lam).value.real() ==
        doctest::Approx(50.0 / std::sqrt(lam)).epsilon(1e-15));

  // kappa s0/2 = pi: second order of the 50/50 grating.
  const double th2 = std::asin(2.0 * lam / 100.0);
  CHECK(slit_amplitude_direct(th2, free, g, lam).intensity() < 1e-16);

  for (double th : {1e-4, 7e-4, 2.5e-3}) {
    const double kappa = 2 * units::kPi / lam * std::sin(th);
    const double kirchhoff = 2 * std::cos(th) / std::sqrt(lam) * std::sin(kappa * 25.0) / kappa;
    CHECK(slit_amplitude_cumulant(th, cum0, g, lam).value.real() ==
          doctest::Approx(kirchhoff).epsilon(1e-12));
    CHECK(slit_amplitude_direct(th, free, g, lam).value.real() ==
          doctest::Approx(kirchhoff).epsilon(1e-9));
  }
  CHECK_THROWS_AS(slit_amplitude_direct(2.0, free, g, lam), DomainError);
}

TEST_CASE("sin(kappa a)/kappa series branch") {
  const Complex a(24.0, 0.4);
  for (double k : {0.0, 1e-12, 1e-9, 3e-8}) {
    const Complex s = sin_over_kappa(k, a);
    const Complex ref = k == 0.0 ? a : std::sin(k * a) / k;
    CHECK(std::abs(s - ref) <= 1e-13 * std::abs(a));
  }
  // Continuity across the branch point |kappa a| = 1e-6.
  const double k0 = 1e-6 / std::abs(a);
  CHECK(std::abs(sin_over_kappa(k0 * (1 - 1e-9), a) - sin_over_kappa(k0 * (1 + 1e-9), a)) < 1e-12);
}

TEST_CASE("cumulant signs and monotonicity") {
  const auto g = grating("I");
  double prev = 50.0;
  for (double c3 : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    const CumulantSet c = cumulants(c3, g, 1000.0);
    CHECK(c.r1_nm.real() > 0.0);
    CHECK(c.delta_nm < 0.0);
    CHECK(c.s_eff_nm < prev);
    prev = c.s_eff_nm;
  }
  prev = 0.0;
  for (double v : {300.0, 600.0, 1200.0, 2400.0}) {
    const CumulantSet c = cumulants(0.1, g, v);
    CHECK(c.s_eff_nm > prev);
    prev = c.s_eff_nm;
  }
}

TEST_CASE("cumulants reject bad input") {
  auto g = grating("I");
  CHECK_THROWS_AS(cumulants(-0.1, g, 1000.0), DomainError);
  CHECK_THROWS_AS(cumulants(0.1, g, 0.0), DomainError);
  g.thickness_nm = std::nan("");
  CHECK_THROWS(cumulants(0.1, g, 1000.0));
  CHECK_NOTHROW(cumulants(0.0, g, 1000.0));
}

// Frozen values from tests/oracle/wall_oracle.py (mpmath, independent of the
// quadrature in the library); t = 120 nm, sigma0 = 0.
struct CumulantOracle {
  double c3, v;
  const char* grating;
  double re_r1, im_r1, re_r2;
};
const CumulantOracle kCumulantOracle[] = {
    {0.05, 500, "I", 0.94573283700025085, -0.89117064330848862, 0.79030907643917891},
    {0.15, 1000, "II", 1.0730482856005483, -1.0174602898360285, 1.0308172828054441},
    {0.3, 2000, "III", 0.87948613086463223, -0.84742502097928454, 0.71655160253778151},
    {0.1, 300, "I", 1.7187386305825687, -1.5480152573702242, 2.368136272456722},
    {0.3, 500, "III", 1.7550475561634033, -1.6323438226448046, 2.6474258397324363},
    {0.5, 2500, "II", 1.2382759796299471, -1.1650457435884851, 1.3501842398333624},
    {0.02, 1500, "III", 0.2624097558145416, -0.25946565261802121, 0.0673020560515235},
    {0.2, 700, "II", 1.478501371396298, -1.375673267905717, 1.8795596885034451},
    {0.4, 350, "I", 3.1412620609822855, -2.6164887914216152, 6.6564949865651004},
    {0.08, 1200, "III", 0.58658841365095656, -0.57211994585201831, 0.32694588472281964},
};

TEST_CASE("cumulants against the oracle") {
  for (const auto& o : kCumulantOracle) {
    CAPTURE(o.c3);
    CAPTURE(o.v);
    CAPTURE(o.grating);
    const CumulantSet c = cumulants(o.c3, grating(o.grating), o.v);
    CHECK(c.r1_nm.real() == doctest::Approx(o.re_r1).epsilon(1e-7));
    CHECK(c.r1_nm.imag() == doctest::Approx(o.im_r1).epsilon(1e-7));
    CHECK(c.r2_nm2.real() == doctest::Approx(o.re_r2).epsilon(1e-6));
  }
}

struct DirectOracle {
  int order;
  double c3, v;
  const char* grating;
  double intensity;
};
const DirectOracle kDirectOracle[] = {
    {1, 0.15, 1000, "I", 10110.926164258402},
    {3, 0.15, 1000, "I", 1082.4115182425448},
    {2, 0.3, 500, "II", 733.80535514929329},
    {5, 0.05, 2000, "III", 808.45397498756305},
    {8, 0.3, 500, "I", 68.271640463995078},
};

TEST_CASE("direct amplitude against the oracle") {
  for (const auto& o : kDirectOracle) {
    CAPTURE(o.order);
    const auto g = grating(o.grating);
    const double lam = de_broglie_wavelength(kHe, o.v);
    const double th = diffraction_angle(o.order, lam, g.period_nm);
    const TransmissionModel tau(o.c3, g, o.v);
    CHECK(slit_amplitude_direct(th, tau, g, lam).intensity() ==
          doctest::Approx(o.intensity).epsilon(1e-7));
  }
}

TEST_CASE("cumulant amplitude against the direct amplitude, He-like beam on Grating I") {
  const auto g = grating("I");
  const double v = 1770.0;
  const double lam = de_broglie_wavelength(kHe, v);
  const TransmissionModel tau(0.1, g, v);
  const CumulantSet cum = cumulants(0.1, g, v);
  for (int n = 0; n <= 8; ++n) {
    CAPTURE(n);
    const double th = diffraction_angle(n, lam, 100.0);
    const double direct = slit_amplitude_direct(th, tau, g, lam).intensity();
    const double trunc = slit_amplitude_cumulant(th, cum, g, lam).intensity();
    const double rel = std::abs(trunc - direct) / direct;
    if (n % 2 == 1 || n == 0) {
      CHECK(rel < 0.02);
    } else {
      // Even orders sit on Kirchhoff zeros of the 50 nm slit; the second
      // cumulant leaves a truncation error that grows with n (measured
      // 4%, 11%, 17%, 21% for n = 2, 4, 6, 8).
      CHECK(rel > 0.02);
      CHECK(rel < 0.25);
    }
  }
}
