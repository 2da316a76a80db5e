#include "vdwg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "vdwg/units.hpp"

namespace vdwg {

namespace {

struct Node {
  double x;
  double w;
};

// Gauss-Hermite rules for weight exp(-x^2), positive half (x = 0 first).
constexpr std::array<Node, 1> kGh1{{{0.0, 1.7724538509055159}}};
constexpr std::array<Node, 2> kGh3{{{0.0, 1.1816359006036772}, {1.2247448713915890, 0.29540897515091934}}};
constexpr std::array<Node, 3> kGh5{{{0.0, 0.94530872048294190},
                                    {0.95857246461381851, 0.39361932315224116},
                                    {2.0201828704560856, 0.019953242059045913}}};
constexpr std::array<Node, 4> kGh7{{{0.0, 0.81026461755680733},
                                    {0.81628788285896466, 0.42560725261012780},
                                    {1.6735516287674714, 0.054515582819127030},
                                    {2.6519613568352334, 0.00097178124509951915}}};

std::vector<Node> hermite_rule(int nodes) {
  std::vector<Node> half;
  switch (nodes) {
    case 1: half.assign(kGh1.begin(), kGh1.end()); break;
    case 3: half.assign(kGh3.begin(), kGh3.end()); break;
    case 5: half.assign(kGh5.begin(), kGh5.end()); break;
    case 7: half.assign(kGh7.begin(), kGh7.end()); break;
    default: throw ConfigError("velocity nodes must be 1, 3, 5 or 7");
  }
  std::vector<Node> rule;
  for (auto it = half.rbegin(); it != half.rend(); ++it)
    if (it->x != 0.0) rule.push_back({-it->x, it->w});
  for (const auto& n : half) rule.push_back(n);
  return rule;
}

struct VelocityNode {
  double velocity_mps;
  double weight;  // sums to one
};

std::vector<VelocityNode> velocity_nodes(const SynthConfig& cfg) {
  const double v = cfg.beam.velocity_mps;
  const double sigma_v = cfg.beam.dv_over_v * v / units::kFwhmPerSigma;
  if (sigma_v == 0.0) return {{v, 1.0}};
  std::vector<VelocityNode> out;
  const double norm = std::sqrt(units::kPi);
  for (const auto& n : hermite_rule(cfg.velocity_nodes))
    out.push_back({v + std::sqrt(2.0) * sigma_v * n.x, n.w / norm});
  return out;
}

// Velocity-averaged pattern on an arbitrary angle grid.
std::vector<double> averaged_pattern(const SynthConfig& cfg, const std::vector<double>& theta) {
  std::vector<double> sum(theta.size(), 0.0);
  for (const auto& node : velocity_nodes(cfg)) {
    if (!(node.velocity_mps > 0.0)) throw ConfigError("velocity spread reaches v <= 0");
    const auto cum = cumulants(cfg.c3_meV_nm3, cfg.geometry, node.velocity_mps, cfg.quadrature);
    const double lambda = de_broglie_wavelength(cfg.beam.mass_amu, node.velocity_mps);
    const auto p = full_pattern(theta, cfg.slits, cum, cfg.geometry, lambda);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += node.weight * p[i];
  }
  return sum;
}

}  // namespace

void SynthConfig::validate() const {
  geometry.validate(c3_meV_nm3 != 0.0);
  beam.validate();
  if (!(c3_meV_nm3 >= 0.0)) throw ConfigError("C3 must be >= 0");
  if (slits < 1) throw ConfigError("number of slits must be >= 1");
  if (!(angle_step_rad > 0.0)) throw ConfigError("angle step must be > 0");
  if (!(angle_max_rad > angle_min_rad)) throw ConfigError("angle range is empty");
  if (!(std::abs(angle_min_rad) < units::kPi / 2 && std::abs(angle_max_rad) < units::kPi / 2))
    throw ConfigError("angle range must lie inside (-90, 90) deg");
  if (!(resolution_fwhm_rad >= 0.0)) throw ConfigError("resolution FWHM must be >= 0");
  if (!(peak_counts > 0.0)) throw ConfigError("peak counts must be > 0");
  if (!(background_counts >= 0.0)) throw ConfigError("background must be >= 0");
  if (resolution_fwhm_rad > 0.0 && angle_step_rad > resolution_fwhm_rad / 3.0)
    throw ConfigError("angle step " + format_double(angle_step_rad * 1e6) +
                      " urad undersamples the resolution FWHM " +
                      format_double(resolution_fwhm_rad * 1e6) + " urad (need step <= FWHM/3)");
  if ((angle_max_rad - angle_min_rad) / angle_step_rad > 1e7)
    throw ConfigError("angle grid has more than 1e7 samples");
}

std::vector<double> output_angles(const SynthConfig& cfg) {
  const auto n = static_cast<std::size_t>(
      std::floor((cfg.angle_max_rad - cfg.angle_min_rad) / cfg.angle_step_rad * (1.0 + 1e-12)));
  std::vector<double> out(n + 1);
  for (std::size_t j = 0; j <= n; ++j)
    out[j] = cfg.angle_min_rad + static_cast<double>(j) * cfg.angle_step_rad;
  return out;
}

std::vector<double> expected_counts(const SynthConfig& cfg) {
  cfg.validate();
  const auto theta = output_angles(cfg);
  std::vector<double> intensity;

  if (cfg.resolution_fwhm_rad == 0.0) {
    intensity = averaged_pattern(cfg, theta);
  } else {
    // Fine grid resolving both the N-slit fringes and the kernel.
    const double sigma = cfg.resolution_fwhm_rad / units::kFwhmPerSigma;
    double lambda_min = cfg.beam.wavelength_nm();
    for (const auto& node : velocity_nodes(cfg))
      lambda_min = std::min(lambda_min, de_broglie_wavelength(cfg.beam.mass_amu, node.velocity_mps));
    const double fringe = lambda_min / (cfg.slits * cfg.geometry.period_nm);
    const double h = std::min({cfg.angle_step_rad, sigma / 8.0, fringe / 8.0});
    const double reach = 6.0 * sigma;
    const double lo = cfg.angle_min_rad - reach;
    const double hi = cfg.angle_max_rad + reach;
    const auto nf = static_cast<std::size_t>(std::ceil((hi - lo) / h));
    if (nf > 50'000'000) throw ConfigError("angular fine grid too large; reduce slits or range");
    std::vector<double> fine(nf + 1);
    for (std::size_t i = 0; i <= nf; ++i) fine[i] = lo + static_cast<double>(i) * h;
    const auto pattern = averaged_pattern(cfg, fine);

    const auto half = static_cast<std::ptrdiff_t>(std::ceil(reach / h));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    intensity.resize(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      // Fine index nearest theta_j; the kernel is centred on theta_j exactly.
      const auto c = static_cast<std::ptrdiff_t>(std::llround((theta[j] - lo) / h));
      double acc = 0.0, norm = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const std::ptrdiff_t i = c + k;
        if (i < 0 || i > static_cast<std::ptrdiff_t>(nf)) continue;
        const double z = (fine[static_cast<std::size_t>(i)] - theta[j]) / sigma;
        const double w = std::exp(-0.5 * z * z);
        acc += w * pattern[static_cast<std::size_t>(i)];
        norm += w;
      }
      intensity[j] = acc / norm;
    }
  }

  const double peak = *std::max_element(intensity.begin(), intensity.end());
  if (!(peak > 0.0)) throw ConfigError("simulated pattern is zero on the whole grid");
  std::vector<double> counts(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j)
    counts[j] = cfg.peak_counts * intensity[j] / peak + cfg.background_counts;
  return counts;
}

DiffractionScan generate_scan(const SynthConfig& cfg) {
  const auto theta = output_angles(cfg);
  const auto mean = expected_counts(cfg);

  DiffractionScan scan;
  auto& m = scan.metadata;
  m.species = cfg.beam.species;
  m.mass_amu = cfg.beam.mass_amu;
  m.nozzle_temperature_K = cfg.nozzle_temperature_K;
  m.grating_id = cfg.geometry.id;
  m.velocity_mps = cfg.beam.velocity_mps;
  m.dv_over_v = cfg.beam.dv_over_v;
  m.extra = {
      {"synthetic.c3_meV_nm3", format_double(cfg.c3_meV_nm3)},
      {"synthetic.slits", std::to_string(cfg.slits)},
      {"synthetic.resolution_fwhm_urad", format_double(cfg.resolution_fwhm_rad * 1e6)},
      {"synthetic.peak_counts", format_double(cfg.peak_counts)},
      {"synthetic.background_counts", format_double(cfg.background_counts)},
      {"synthetic.poisson_noise", cfg.poisson_noise ? "true" : "false"},
      {"synthetic.seed", std::to_string(cfg.seed)},
      {"synthetic.velocity_nodes", std::to_string(cfg.velocity_nodes)},
  };

  std::mt19937_64 rng(cfg.seed);
  scan.samples.resize(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    double c = mean[j];
    if (cfg.poisson_noise) {
      if (c > 0.0) {
        std::poisson_distribution<long long> pd(c);
        c = static_cast<double>(pd(rng));
      } else {
        c = 0.0;
      }
    }
    scan.samples[j] = {theta[j], c, std::nullopt};
  }
  return scan;
}

}  // namespace vdwg
