#include "vdwg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "vdwg/data_io.hpp"
#include "vdwg/error.hpp"
#include "vdwg/fitting.hpp"
#include "vdwg/species.hpp"
#include "vdwg/units.hpp"

namespace vdwg {

namespace fs = std::filesystem;

namespace {

using Params = std::vector<std::pair<std::string, std::string>>;

std::string num(double x) { return format_double(x); }

/// An error re-raised with the offending file prepended; keeps the exit code.
class ContextError : public Error {
 public:
  ContextError(const std::string& what, int code) : Error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

int exit_code_for(const std::exception& e) {
  if (const auto* c = dynamic_cast<const ContextError*>(&e)) return c->code();
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UnderdeterminedError*>(&e) ||
      dynamic_cast<const DomainError*>(&e))
    return kExitInput;
  return kExitInternal;
}

template <class F>
auto with_file_context(const fs::path& path, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw ContextError(path.string() + ": " + e.what(), exit_code_for(e));
  }
}

std::ifstream open_or_throw(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("cannot open '" + path.string() + "'");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return in;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

/// Files are staged in memory and only written once every computation has
/// succeeded, so a failing run leaves nothing behind.
struct Staged {
  RunManifest manifest;
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }

  void commit(std::ostream& out) {
    std::set<std::string> seen;
    for (const auto& [name, _] : files)
      if (!seen.insert(name).second)
        throw ConfigError("two outputs would share the file name '" + name + "'");
    fs::create_directories(manifest.output_dir);
    for (const auto& [name, content] : files) {
      write_file_atomic(manifest.output_dir / name, content);
      manifest.outputs.push_back(name);
    }
    const std::string manifest_name = manifest.subcommand + ".manifest.json";
    write_file_atomic(manifest.output_dir / manifest_name, manifest.render(utc_timestamp()));
    out << "wrote " << files.size() << " file(s) and " << manifest_name << " to "
        << manifest.output_dir.string() << '\n';
  }
};

// ---------------------------------------------------------------------------
// Grating geometry from --geometry plus overrides.

struct GeometryFlags {
  std::string spec;
  std::optional<double> thickness_nm;
  std::optional<double> sigma0_nm;
  std::optional<double> beta_deg;
};

void add_geometry_flags(CLI::App* sub, GeometryFlags& g) {
  sub->add_option("--geometry", g.spec, "Grating preset (I, II, III) or geometry file")
      ->required();
  sub->add_option("--thickness-nm", g.thickness_nm, "Bar thickness t along the beam (nm)");
  sub->add_option("--sigma0-nm", g.sigma0_nm, "Slit-width roughness sigma0 (nm)");
  sub->add_option("--beta-deg", g.beta_deg, "Wedge angle beta (deg)");
}

GratingGeometry resolve_geometry(const GeometryFlags& f) {
  GratingGeometry g = load_geometry(f.spec);
  if (f.thickness_nm) g.thickness_nm = *f.thickness_nm;
  if (f.sigma0_nm) g.roughness_var_nm2 = *f.sigma0_nm * *f.sigma0_nm;
  if (f.beta_deg) g.wedge_angle_rad = units::deg_to_rad(*f.beta_deg);
  return g;
}

void echo_geometry(const GratingGeometry& g, Params& p) {
  p.emplace_back("grating.id", g.id);
  p.emplace_back("grating.d_nm", num(g.period_nm));
  p.emplace_back("grating.s0_nm", num(g.slit_width_nm));
  p.emplace_back("grating.t_nm", g.has_thickness() ? num(g.thickness_nm) : "unknown");
  p.emplace_back("grating.beta_deg", num(units::rad_to_deg(g.wedge_angle_rad)));
  p.emplace_back("grating.sigma0_nm", num(std::sqrt(g.roughness_var_nm2)));
}

// ---------------------------------------------------------------------------
// Peak extraction shared by `extract` and `fit-slit`.

struct ExtractFlags {
  std::vector<std::string> scans;
  int orders = 8;
  std::optional<double> window_urad;
  double resolution_urad = 70.0;
  std::string background = "linear";
  double offset_urad = 0.0;
  std::optional<double> v_mps;
  std::optional<double> mass_amu;
  std::optional<double> dv_over_v;
};

void add_extract_flags(CLI::App* sub, ExtractFlags& f) {
  sub->add_option("scans", f.scans, "Scan files")->required()->check(CLI::ExistingFile);
  sub->add_option("--orders", f.orders, "Highest diffraction order |n| to use")
      ->check(CLI::Range(1, 50));
  sub->add_option("--window-urad", f.window_urad,
                  "Integration half-width per peak (urad); default from the resolution");
  sub->add_option("--resolution-urad", f.resolution_urad, "Angular resolution FWHM (urad)");
  sub->add_option("--background", f.background, "Background model")
      ->check(CLI::IsMember({"linear", "median"}));
  sub->add_option("--offset-urad", f.offset_urad, "Angle offset of every window (urad)");
  sub->add_option("--v-mps", f.v_mps, "Beam velocity; overrides the scan header");
  sub->add_option("--mass-amu", f.mass_amu, "Particle mass; overrides the scan header");
  sub->add_option("--dv-over-v", f.dv_over_v,
                  "Velocity spread (FWHM) for the default window; overrides the scan header");
}

void echo_extract(const ExtractFlags& f, Params& p) {
  p.emplace_back("orders", std::to_string(f.orders));
  p.emplace_back("window_urad", f.window_urad ? num(*f.window_urad) : "auto");
  p.emplace_back("resolution_urad", num(f.resolution_urad));
  p.emplace_back("background", f.background);
  p.emplace_back("offset_urad", num(f.offset_urad));
  p.emplace_back("v_mps", f.v_mps ? num(*f.v_mps) : "from scan header");
  p.emplace_back("mass_amu", f.mass_amu ? num(*f.mass_amu) : "from scan header");
  p.emplace_back("dv_over_v", f.dv_over_v ? num(*f.dv_over_v) : "from scan header, else 0");
}

struct ExtractedScan {
  fs::path path;
  DiffractionScan scan;
  double velocity_mps = 0.0;
  double mass_amu = 0.0;
  double wavelength_nm = 0.0;
  PeakTable peaks;
};

ExtractedScan extract_one(const fs::path& path, const GratingGeometry& geometry,
                          const ExtractFlags& f) {
  ExtractedScan e;
  e.path = path;
  e.scan = parse_scan_file(path);
  const auto& m = e.scan.metadata;
  if (f.v_mps) e.velocity_mps = *f.v_mps;
  else if (m.velocity_mps) e.velocity_mps = *m.velocity_mps;
  else throw ValidationError("no beam velocity: scan header lacks v_mps and --v-mps is not set");
  if (f.mass_amu) {
    e.mass_amu = *f.mass_amu;
  } else if (m.mass_amu) {
    e.mass_amu = *m.mass_amu;
  } else if (const auto* sp = find_species(m.species); sp && !m.species.empty()) {
    e.mass_amu = sp->mass_amu;
  } else {
    throw ValidationError("no particle mass: scan header lacks mass_amu and a known species");
  }
  e.wavelength_nm = de_broglie_wavelength(e.mass_amu, e.velocity_mps);
  const double dv = f.dv_over_v ? *f.dv_over_v : m.dv_over_v.value_or(0.0);
  const double window =
      f.window_urad ? *f.window_urad * 1e-6
                    : default_window_halfwidth(f.resolution_urad * 1e-6, e.wavelength_nm,
                                               geometry.period_nm, dv, f.orders);
  PeakExtractionOptions opt;
  opt.max_order = f.orders;
  opt.background = f.background == "median" ? BackgroundModel::ConstantMedian
                                            : BackgroundModel::Linear;
  opt.angle_offset_rad = f.offset_urad * 1e-6;
  e.peaks = extract_peak_areas(e.scan, geometry, e.wavelength_nm, window, opt);
  return e;
}

/// Runs `fn` on every input concurrently; results keep the input order and
/// the first failure (in input order) is rethrown.
template <class T, class F>
std::vector<T> for_each_file(const std::vector<std::string>& paths, F fn) {
  std::vector<std::future<T>> jobs;
  jobs.reserve(paths.size());
  for (const auto& p : paths)
    jobs.push_back(std::async(std::launch::async, [p, &fn] {
      return with_file_context(p, [&] { return fn(fs::path(p)); });
    }));
  std::vector<T> out;
  out.reserve(paths.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

std::string unique_stem(const fs::path& path, std::set<std::string>& used) {
  const std::string stem = path.stem().string();
  if (!used.insert(stem).second)
    throw ConfigError("two inputs share the file stem '" + stem + "'; outputs would collide");
  return stem;
}

std::string render_peak_table(const ExtractedScan& e) {
  std::ostringstream s;
  s << "# source: " << e.path.filename().string() << '\n';
  s << "# wavelength_nm: " << num(e.wavelength_nm) << '\n';
  s << "# window_halfwidth_urad: " << num(e.peaks.window_halfwidth_rad * 1e6) << '\n';
  s << "# background: "
    << (e.peaks.background == BackgroundModel::Linear ? "linear" : "median") << '\n';
  for (const auto& n : e.peaks.notices) s << "# notice: " << n << '\n';
  s << "# order area area_uncertainty center_mrad\n";
  for (const auto& p : e.peaks.entries)
    s << p.order << ' ' << num(p.area) << ' ' << num(p.area_uncertainty) << ' '
      << num(p.center_rad * 1e3) << '\n';
  return s.str();
}

// ---------------------------------------------------------------------------
// Subcommands.

struct SimulateFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path config_path(f.config);
  SimulationJob job = with_file_context(config_path, [&] {
    auto in = open_or_throw(config_path);
    return parse_simulation_config(in, config_path.parent_path());
  });
  if (f.seed) {
    job.config.seed = *f.seed;
    for (auto& [k, v] : job.echo)
      if (k == "seed") v = std::to_string(*f.seed);
  }
  const DiffractionScan scan = generate_scan(job.config);

  Staged st;
  st.manifest.subcommand = "simulate";
  st.manifest.inputs = {config_path.string()};
  st.manifest.parameters = job.echo;
  st.manifest.output_dir = resolve_output_dir(f.out);
  st.manifest.seed = std::to_string(job.config.seed);
  st.add(job.output_name, serialize_scan(scan));
  st.commit(out);
  (void)err;
  return kExitOk;
}

struct ExtractCmd {
  GeometryFlags geometry;
  ExtractFlags extract;
  std::string out;
};

int cmd_extract(const ExtractCmd& f, std::ostream& out, std::ostream& err) {
  const GratingGeometry geometry = resolve_geometry(f.geometry);
  geometry.validate(false);
  const auto results = for_each_file<ExtractedScan>(
      f.extract.scans, [&](const fs::path& p) { return extract_one(p, geometry, f.extract); });

  Staged st;
  st.manifest.subcommand = "extract";
  st.manifest.inputs = f.extract.scans;
  echo_geometry(geometry, st.manifest.parameters);
  echo_extract(f.extract, st.manifest.parameters);
  st.manifest.output_dir = resolve_output_dir(f.out);
  std::set<std::string> stems;
  for (const auto& e : results) {
    st.add(unique_stem(e.path, stems) + ".peaks.dat", render_peak_table(e));
    for (const auto& n : e.peaks.notices) err << e.path.string() << ": " << n << '\n';
    out << e.path.string() << ": " << e.peaks.entries.size() << " peaks\n";
  }
  st.commit(out);
  return kExitOk;
}

struct FitSlitCmd {
  GeometryFlags geometry;
  ExtractFlags extract;
  std::string out;
};

struct SlitFit {
  ExtractedScan scan;
  FitResult fit;
  std::vector<RatioPoint> ratios;
};

int cmd_fit_slit(const FitSlitCmd& f, std::ostream& out, std::ostream& err) {
  const GratingGeometry geometry = resolve_geometry(f.geometry);
  geometry.validate(false);
  RatioFitOptions opt;
  opt.max_order = f.extract.orders;
  const auto fits = for_each_file<SlitFit>(f.extract.scans, [&](const fs::path& p) {
    SlitFit s;
    s.scan = extract_one(p, geometry, f.extract);
    s.ratios = measured_ratios(s.scan.peaks, opt.max_order);
    s.fit = fit_ratio_params(s.scan.peaks, geometry, opt);
    return s;
  });

  Staged st;
  st.manifest.subcommand = "fit-slit";
  st.manifest.inputs = f.extract.scans;
  echo_geometry(geometry, st.manifest.parameters);
  echo_extract(f.extract, st.manifest.parameters);
  st.manifest.output_dir = resolve_output_dir(f.out);

  std::ostringstream summary;
  summary << "# scan v_mps s_eff_nm s_eff_unc delta_nm delta_unc sigma_nm sigma_unc rss dof\n";
  std::vector<SeffRow> seff;
  std::set<std::string> stems;
  for (const auto& s : fits) {
    const std::string stem = unique_stem(s.scan.path, stems);
    const RatioFitParams rp = ratio_params(s.fit);
    const SlitEnvelope env{rp.s_eff_nm, rp.delta_nm, rp.sigma_nm * rp.sigma_nm};
    const double d = geometry.period_nm;
    const double r1 = intensity_ratio(1, env, d);

    std::ostringstream table;
    table << "# order measured uncertainty model residual\n";
    for (const auto& r : s.ratios) {
      const double model = intensity_ratio(r.order, env, d) / r1;
      table << r.order << ' ' << num(r.ratio) << ' ' << num(r.uncertainty) << ' ' << num(model)
            << ' ' << num(r.ratio - model) << '\n';
    }
    std::ostringstream curve;
    curve << "# order model_ratio\n";
    for (int k = 0; k <= 20 * f.extract.orders; ++k) {
      const double n = 1.0 + k * (f.extract.orders - 1.0) / (20.0 * f.extract.orders);
      curve << num(n) << ' ' << num(intensity_ratio_continuous(n, env, d) / r1) << '\n';
    }
    std::ostringstream res;
    write_results(s.fit,
                  {{"scan", s.scan.path.filename().string()},
                   {"v_mps", num(s.scan.velocity_mps)},
                   {"wavelength_nm", num(s.scan.wavelength_nm)},
                   {"grating", geometry.id}},
                  res);
    st.add(stem + ".ratio.res", res.str());
    st.add(stem + ".ratios.dat", table.str());
    st.add(stem + ".ratio_model.dat", curve.str());

    const auto& p_s = s.fit.param("s_eff");
    const auto& p_d = s.fit.param("delta");
    const auto& p_g = s.fit.param("sigma");
    summary << stem << ' ' << num(s.scan.velocity_mps) << ' ' << num(p_s.value) << ' '
            << num(p_s.uncertainty) << ' ' << num(p_d.value) << ' ' << num(p_d.uncertainty)
            << ' ' << num(p_g.value) << ' ' << num(p_g.uncertainty) << ' ' << num(s.fit.rss)
            << ' ' << s.fit.dof << '\n';
    out << stem << ": v = " << num(s.scan.velocity_mps) << " m/s  s_eff = " << num(p_s.value)
        << " +/- " << num(p_s.uncertainty) << " nm  delta = " << num(p_d.value)
        << " nm  sigma = " << num(p_g.value) << " nm\n";
    for (const auto& w : s.fit.warnings) err << stem << ": warning: " << w << '\n';
    for (const auto& n : s.scan.peaks.notices) err << stem << ": " << n << '\n';

    seff.push_back({s.scan.velocity_mps, p_s.value, p_s.uncertainty,
                    s.scan.scan.metadata.grating_id.empty() ? geometry.id
                                                            : s.scan.scan.metadata.grating_id,
                    s.scan.scan.metadata.species});
  }
  std::ostringstream seff_text;
  write_seff_table(seff, seff_text);
  st.add("fit_slit.dat", summary.str());
  st.add("seff.dat", seff_text.str());
  st.commit(out);
  return kExitOk;
}

struct FitC3Cmd {
  GeometryFlags geometry;
  std::string table;
  std::string mode = "joint";
  std::optional<double> s0_nm;
  double delta_beta_deg = 2.0;
  double c3_guess = 0.05;
  std::string out;
};

int cmd_fit_c3(const FitC3Cmd& f, std::ostream& out, std::ostream& err) {
  const GratingGeometry geometry = resolve_geometry(f.geometry);
  if (!geometry.has_thickness())
    throw ConfigError("grating '" + geometry.id +
                      "' has no bar thickness; pass --thickness-nm or a geometry file with t_nm");
  geometry.validate(true);
  if (f.mode == "joint" && f.s0_nm)
    throw ConfigError("--s0-nm applies to --mode fixed only");

  const fs::path table_path(f.table);
  const auto rows = with_file_context(table_path, [&] {
    auto in = open_or_throw(table_path);
    return parse_seff_table(in);
  });
  if (rows.empty()) throw UnderdeterminedError(table_path.string() + ": table has no rows");
  std::vector<SeffPoint> points;
  for (const auto& r : rows)
    points.push_back({r.velocity_mps, r.s_eff_nm, r.uncertainty_nm, r.grating_id, r.species});

  C3FitOptions opt;
  opt.c3_guess = f.c3_guess;
  const double s0_fixed = f.s0_nm.value_or(geometry.slit_width_nm);
  const FitResult central = f.mode == "joint" ? fit_c3_s0(points, geometry, opt)
                                              : fit_c3_fixed_s0(points, geometry, s0_fixed, opt);
  const double s0 = f.mode == "joint" ? central.value("s0") : s0_fixed;
  const BetaSensitivity beta =
      beta_sensitivity(points, geometry, s0, units::deg_to_rad(f.delta_beta_deg), opt);

  const double c3 = central.value("C3");
  const double c3_stat = central.uncertainty("C3");

  Staged st;
  st.manifest.subcommand = "fit-c3";
  st.manifest.inputs = {table_path.string()};
  auto& p = st.manifest.parameters;
  echo_geometry(geometry, p);
  p.emplace_back("mode", f.mode);
  p.emplace_back("s0_nm", f.mode == "joint" ? "fitted" : num(s0_fixed));
  p.emplace_back("delta_beta_deg", num(f.delta_beta_deg));
  p.emplace_back("c3_guess_meV_nm3", num(f.c3_guess));
  st.manifest.output_dir = resolve_output_dir(f.out);

  std::ostringstream report;
  report << "mode: " << f.mode << '\n'
         << "points: " << points.size() << '\n'
         << "C3_meV_nm3: " << num(c3) << '\n'
         << "C3_stat: " << num(c3_stat) << '\n'
         << "C3_syst_beta: " << num(beta.half_spread) << '\n'
         << "delta_beta_deg: " << num(f.delta_beta_deg) << '\n'
         << "C3_beta_minus: " << num(beta.c3_minus) << '\n'
         << "C3_beta_plus: " << num(beta.c3_plus) << '\n'
         << "s0_nm: " << num(s0) << '\n';
  if (f.mode == "joint") report << "s0_stat: " << num(central.uncertainty("s0")) << '\n';
  report << "rss: " << num(central.rss) << '\n'
         << "dof: " << central.dof << '\n'
         << "condition_number: " << num(central.condition_number) << '\n'
         << "ill_conditioned: " << (central.ill_conditioned ? "true" : "false") << '\n';
  for (const auto& w : central.warnings) report << "warning: " << w << '\n';

  double vmin = points.front().velocity_mps, vmax = vmin;
  for (const auto& q : points) {
    vmin = std::min(vmin, q.velocity_mps);
    vmax = std::max(vmax, q.velocity_mps);
  }
  const double lo = 0.8 * vmin, hi = 1.2 * vmax;
  constexpr int kCurve = 60;
  std::ostringstream curve;
  curve << "# v_mps s_eff_model_nm\n";
  for (int k = 0; k <= kCurve; ++k) {
    const double v = lo + (hi - lo) * k / kCurve;
    curve << num(v) << ' ' << num(model_seff(c3, s0, geometry, v, opt.quadrature)) << '\n';
  }
  std::ostringstream resid;
  resid << "# v_mps s_eff_nm uncertainty_nm model_nm residual_nm\n";
  for (const auto& q : points) {
    const double m = model_seff(c3, s0, geometry, q.velocity_mps, opt.quadrature);
    resid << num(q.velocity_mps) << ' ' << num(q.s_eff_nm) << ' ' << num(q.uncertainty_nm) << ' '
          << num(m) << ' ' << num(q.s_eff_nm - m) << '\n';
  }
  std::ostringstream res;
  write_results(central,
                {{"table", table_path.filename().string()},
                 {"grating", geometry.id},
                 {"delta_beta_deg", num(f.delta_beta_deg)},
                 {"c3_beta_minus", num(beta.c3_minus)},
                 {"c3_beta_plus", num(beta.c3_plus)},
                 {"c3_syst_beta", num(beta.half_spread)}},
                res);
  st.add("c3.res", res.str());
  st.add("c3_report.txt", report.str());
  st.add("seff_model.dat", curve.str());
  st.add("seff_residuals.dat", resid.str());

  out << "C3 = " << num(c3) << " +/- " << num(c3_stat) << " (stat) +/- "
      << num(beta.half_spread) << " (beta) meV nm^3,  s0 = " << num(s0) << " nm\n";
  for (const auto& w : central.warnings) err << "warning: " << w << '\n';
  st.commit(out);
  return kExitOk;
}

struct AlphaFitCmd {
  std::string table;
  std::string out;
};

int cmd_alpha_fit(const AlphaFitCmd& f, std::ostream& out, std::ostream&) {
  const fs::path table_path(f.table);
  const auto rows = with_file_context(table_path, [&] {
    auto in = open_or_throw(table_path);
    return parse_c3_table(in);
  });
  if (rows.empty()) throw UnderdeterminedError(table_path.string() + ": table has no rows");
  std::vector<AlphaPoint> points;
  double amax = 0.0;
  for (const auto& r : rows) {
    points.push_back({r.alpha_A3, r.c3_meV_nm3, r.uncertainty});
    amax = std::max(amax, r.alpha_A3);
  }
  const LinearFit lf = fit_c3_vs_alpha(points);

  Staged st;
  st.manifest.subcommand = "alpha-fit";
  st.manifest.inputs = {table_path.string()};
  st.manifest.parameters.emplace_back("weighted", lf.weighted ? "true" : "false");
  st.manifest.output_dir = resolve_output_dir(f.out);

  std::ostringstream report;
  report << "slope_meV_nm3_per_A3: " << num(lf.slope) << '\n'
         << "slope_unc: " << num(lf.slope_uncertainty) << '\n'
         << "intercept_meV_nm3: " << num(lf.intercept) << '\n'
         << "intercept_unc: " << num(lf.intercept_uncertainty) << '\n'
         << "chi_square: " << num(lf.chi_square) << '\n'
         << "weighted: " << (lf.weighted ? "true" : "false") << '\n'
         << "points: " << points.size() << '\n';
  std::ostringstream line;
  line << "# alpha_A3 c3_model_meV_nm3\n";
  const double top = 1.1 * std::max(amax, 0.0);
  for (int k = 0; k <= 50; ++k) {
    const double a = top * k / 50.0;
    line << num(a) << ' ' << num(lf.slope * a + lf.intercept) << '\n';
  }
  std::ostringstream resid;
  resid << "# alpha_A3 c3_meV_nm3 uncertainty model residual label\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    resid << num(r.alpha_A3) << ' ' << num(r.c3_meV_nm3) << ' ' << num(r.uncertainty) << ' '
          << num(lf.slope * r.alpha_A3 + lf.intercept) << ' ' << num(lf.residuals[i]) << ' '
          << (r.label.empty() ? "-" : r.label) << '\n';
  }
  st.add("alpha_fit.txt", report.str());
  st.add("alpha_fit_model.dat", line.str());
  st.add("alpha_fit_residuals.dat", resid.str());

  out << "C3 = (" << num(lf.slope) << " +/- " << num(lf.slope_uncertainty) << ") alpha + ("
      << num(lf.intercept) << " +/- " << num(lf.intercept_uncertainty) << ")\n";
  st.commit(out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Simulation config parsing helpers.

bool parse_bool(const KeyValueLine& kv) {
  const std::string& v = kv.value;
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ParseError("'" + kv.key + "': expected true or false, got '" + v + "'", kv.line);
}

double parse_number(const KeyValueLine& kv) {
  const auto x = parse_double(kv.value);
  if (!x || !std::isfinite(*x))
    throw ParseError("'" + kv.key + "': not a finite number: '" + kv.value + "'", kv.line);
  return *x;
}

template <class Int>
Int parse_integer(const KeyValueLine& kv) {
  Int x{};
  const char* b = kv.value.data();
  const char* e = b + kv.value.size();
  const auto [ptr, ec] = std::from_chars(b, e, x);
  if (ec != std::errc{} || ptr != e)
    throw ParseError("'" + kv.key + "': not an integer: '" + kv.value + "'", kv.line);
  return x;
}

}  // namespace

std::string RunManifest::render(const std::string& timestamp) const {
  nlohmann::ordered_json j;
  j["schema"] = kManifestSchema;
  j["subcommand"] = subcommand;
  j["timestamp"] = timestamp;
  j["inputs"] = inputs;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : parameters) params[k] = v;
  j["parameters"] = params;
  j["output_dir"] = output_dir.string();
  j["outputs"] = outputs;
  if (seed.empty()) j["seed"] = nullptr;
  else j["seed"] = seed;
  return j.dump(2) + "\n";
}

SimulationJob parse_simulation_config(std::istream& in, const fs::path& base_dir) {
  static const std::set<std::string> kKnown = {
      "geometry",       "t_nm",           "sigma0_nm",       "beta_deg",
      "species",        "mass_amu",       "v_mps",           "dv_over_v",
      "T0_K",           "c3_meV_nm3",     "slits",           "angle_min_mrad",
      "angle_max_mrad", "max_order",      "angle_step_urad", "resolution_urad",
      "peak_counts",    "background_counts", "seed",         "noise",
      "velocity_nodes", "output"};
  std::map<std::string, KeyValueLine> kv;
  for (auto& line : parse_key_values(in)) {
    if (!kKnown.count(line.key)) throw ParseError("unknown key '" + line.key + "'", line.line);
    const int at = line.line;
    const std::string key = line.key;
    if (!kv.emplace(key, std::move(line)).second)
      throw ParseError("duplicate key '" + key + "'", at);
  }
  auto get = [&](const char* key) -> const KeyValueLine* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto need = [&](const char* key) -> const KeyValueLine& {
    const auto* p = get(key);
    if (!p) throw ValidationError(std::string("simulation config: '") + key + "' is required");
    return *p;
  };

  SimulationJob job;
  SynthConfig& cfg = job.config;

  const std::string& gspec = need("geometry").value;
  const bool preset = gspec == "I" || gspec == "II" || gspec == "III";
  cfg.geometry = load_geometry(preset ? gspec : (base_dir / gspec).string());
  if (const auto* p = get("t_nm")) cfg.geometry.thickness_nm = parse_number(*p);
  if (const auto* p = get("sigma0_nm")) {
    const double s = parse_number(*p);
    cfg.geometry.roughness_var_nm2 = s * s;
  }
  if (const auto* p = get("beta_deg"))
    cfg.geometry.wedge_angle_rad = units::deg_to_rad(parse_number(*p));

  const SpeciesInfo* sp = nullptr;
  if (const auto* p = get("species")) {
    cfg.beam.species = p->value;
    sp = find_species(p->value);
  }
  if (const auto* p = get("mass_amu")) cfg.beam.mass_amu = parse_number(*p);
  else if (sp) cfg.beam.mass_amu = sp->mass_amu;
  else throw ValidationError("simulation config: 'mass_amu' is required for an unknown species");
  if (const auto* p = get("T0_K")) cfg.nozzle_temperature_K = parse_number(*p);
  if (const auto* p = get("v_mps")) {
    cfg.beam.velocity_mps = parse_number(*p);
  } else if (sp && cfg.nozzle_temperature_K) {
    cfg.beam.velocity_mps = species_velocity(*sp, *cfg.nozzle_temperature_K);
  } else {
    throw ValidationError("simulation config: 'v_mps' is required unless a known species and "
                          "T0_K are given");
  }
  if (const auto* p = get("dv_over_v")) cfg.beam.dv_over_v = parse_number(*p);
  else if (sp) cfg.beam.dv_over_v = sp->dv_over_v;
  if (sp) cfg.beam.polarizability_A3 = sp->polarizability_A3;

  cfg.c3_meV_nm3 = parse_number(need("c3_meV_nm3"));
  if (const auto* p = get("slits")) cfg.slits = parse_integer<int>(*p);
  if (const auto* p = get("angle_step_urad")) cfg.angle_step_rad = parse_number(*p) * 1e-6;
  if (const auto* p = get("resolution_urad")) cfg.resolution_fwhm_rad = parse_number(*p) * 1e-6;
  if (const auto* p = get("peak_counts")) cfg.peak_counts = parse_number(*p);
  if (const auto* p = get("background_counts")) cfg.background_counts = parse_number(*p);
  if (const auto* p = get("seed")) cfg.seed = parse_integer<std::uint64_t>(*p);
  if (const auto* p = get("noise")) cfg.poisson_noise = parse_bool(*p);
  if (const auto* p = get("velocity_nodes")) cfg.velocity_nodes = parse_integer<int>(*p);

  const auto* amin = get("angle_min_mrad");
  const auto* amax = get("angle_max_mrad");
  const auto* order = get("max_order");
  int max_order = 0;
  if (amin || amax) {
    if (!(amin && amax))
      throw ValidationError("simulation config: give both angle_min_mrad and angle_max_mrad");
    if (order)
      throw ParseError("'max_order' conflicts with an explicit angle range", order->line);
    cfg.angle_min_rad = parse_number(*amin) * 1e-3;
    cfg.angle_max_rad = parse_number(*amax) * 1e-3;
  } else {
    max_order = order ? parse_integer<int>(*order) : 8;
    if (max_order < 1) throw ValidationError("simulation config: max_order must be >= 1");
    cfg.beam.validate();
    const double x = (max_order + 0.5) * cfg.beam.wavelength_nm() / cfg.geometry.period_nm;
    if (!(x < 1.0))
      throw ConfigError("simulation config: order " + std::to_string(max_order) +
                        " does not propagate");
    cfg.angle_max_rad = std::asin(x);
    cfg.angle_min_rad = -cfg.angle_max_rad;
  }
  if (const auto* p = get("output")) {
    const fs::path name(p->value);
    if (name.empty() || name.has_parent_path() || name.filename() != name)
      throw ParseError("'output' must be a plain file name", p->line);
    job.output_name = p->value;
  }
  cfg.validate();

  auto& e = job.echo;
  echo_geometry(cfg.geometry, e);
  e.emplace_back("species", cfg.beam.species.empty() ? "-" : cfg.beam.species);
  e.emplace_back("mass_amu", num(cfg.beam.mass_amu));
  e.emplace_back("v_mps", num(cfg.beam.velocity_mps));
  e.emplace_back("dv_over_v", num(cfg.beam.dv_over_v));
  e.emplace_back("T0_K", cfg.nozzle_temperature_K ? num(*cfg.nozzle_temperature_K) : "-");
  e.emplace_back("c3_meV_nm3", num(cfg.c3_meV_nm3));
  e.emplace_back("slits", std::to_string(cfg.slits));
  if (max_order > 0) e.emplace_back("max_order", std::to_string(max_order));
  e.emplace_back("angle_min_mrad", num(cfg.angle_min_rad * 1e3));
  e.emplace_back("angle_max_mrad", num(cfg.angle_max_rad * 1e3));
  e.emplace_back("angle_step_urad", num(cfg.angle_step_rad * 1e6));
  e.emplace_back("resolution_urad", num(cfg.resolution_fwhm_rad * 1e6));
  e.emplace_back("peak_counts", num(cfg.peak_counts));
  e.emplace_back("background_counts", num(cfg.background_counts));
  e.emplace_back("seed", std::to_string(cfg.seed));
  e.emplace_back("noise", cfg.poisson_noise ? "true" : "false");
  e.emplace_back("velocity_nodes", std::to_string(cfg.velocity_nodes));
  e.emplace_back("quadrature.target_rel_tol", num(cfg.quadrature.target_rel_tol));
  e.emplace_back("quadrature.max_phase_rad", num(cfg.quadrature.max_phase_rad));
  e.emplace_back("output", job.output_name);
  return job;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matter-wave grating diffraction with a van der Waals wall potential"};
  app.name("vdwgrating");
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* s_sim = app.add_subcommand("simulate", "Generate a synthetic diffraction scan");
  s_sim->add_option("config", sim.config, "Simulation config file")->required();
  s_sim->add_option("--seed", sim.seed, "Override the config seed");
  s_sim->add_option("--out", sim.out, "Output directory");

  ExtractCmd ext;
  auto* s_ext = app.add_subcommand("extract", "Background-corrected peak areas per order");
  add_geometry_flags(s_ext, ext.geometry);
  add_extract_flags(s_ext, ext.extract);
  s_ext->add_option("--out", ext.out, "Output directory");

  FitSlitCmd slit;
  auto* s_slit = app.add_subcommand("fit-slit", "Fit s_eff, delta and sigma to peak ratios");
  add_geometry_flags(s_slit, slit.geometry);
  add_extract_flags(s_slit, slit.extract);
  s_slit->add_option("--out", slit.out, "Output directory");

  FitC3Cmd c3;
  auto* s_c3 = app.add_subcommand("fit-c3", "Fit C3 (and s0) to s_eff versus velocity");
  add_geometry_flags(s_c3, c3.geometry);
  s_c3->add_option("table", c3.table, "s_eff table: v_mps s_eff_nm uncertainty_nm ...")
      ->required();
  s_c3->add_option("--mode", c3.mode, "joint: fit C3 and s0; fixed: fit C3 at fixed s0")
      ->check(CLI::IsMember({"joint", "fixed"}));
  s_c3->add_option("--s0-nm", c3.s0_nm, "Fixed slit width (fixed mode); default from geometry");
  s_c3->add_option("--delta-beta-deg", c3.delta_beta_deg, "Wedge-angle variation")
      ->check(CLI::NonNegativeNumber);
  s_c3->add_option("--c3-guess", c3.c3_guess, "Starting C3 (meV nm^3)");
  s_c3->add_option("--out", c3.out, "Output directory");

  AlphaFitCmd alpha;
  auto* s_alpha = app.add_subcommand("alpha-fit", "Straight-line fit of C3 against polarizability");
  s_alpha->add_option("table", alpha.table, "C3 table: alpha_A3 c3_meV_nm3 uncertainty [label]")
      ->required();
  s_alpha->add_option("--out", alpha.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_sim->parsed()) return cmd_simulate(sim, out, err);
    if (s_ext->parsed()) return cmd_extract(ext, out, err);
    if (s_slit->parsed()) return cmd_fit_slit(slit, out, err);
    if (s_c3->parsed()) return cmd_fit_c3(c3, out, err);
    if (s_alpha->parsed()) return cmd_alpha_fit(alpha, out, err);
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& p : e.best().parameters)
      err << "  best " << p.name << " = " << num(p.value) << ' ' << p.unit << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("vdwgrating");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vdwg
