#include "vdwg/data_io.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "vdwg/species.hpp"
#include "vdwg/units.hpp"

namespace vdwg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double require_double(std::string_view text, std::string_view what, int line) {
  const auto v = parse_double(text);
  if (!v) throw ParseError("invalid number for " + std::string(what) + ": '" +
                               std::string(text) + "'", line);
  return *v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + n / 2);
  return 0.5 * (lo + hi);
}

// Exact decimal text of x * 10^shift: the shortest round-trip digits of x
// with the decimal exponent moved.
std::string shifted_decimal(double x, int shift) {
  if (x == 0.0) return std::signbit(x) ? "-0" : "0";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific);
  const std::string s(buf, r.ptr);
  const auto epos = s.find('e');
  const int exp = std::stoi(s.substr(epos + 1)) + shift;
  std::string mant = s.substr(0, epos);
  const bool neg = mant.front() == '-';
  if (neg) mant.erase(0, 1);
  std::string digits;
  for (char c : mant)
    if (c != '.') digits += c;
  const int point = exp + 1;  // digits before the decimal point
  const int n = static_cast<int>(digits.size());
  std::string out;
  if (point < -6 || point > 21) {
    out = digits.substr(0, 1);
    if (n > 1) out += "." + digits.substr(1);
    out += "e" + std::to_string(exp);
  } else if (point <= 0) {
    out = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (point >= n) {
    out = digits + std::string(static_cast<std::size_t>(point - n), '0');
  } else {
    out = digits.substr(0, static_cast<std::size_t>(point)) + "." +
          digits.substr(static_cast<std::size_t>(point));
  }
  return neg ? "-" + out : out;
}

// Decimal text times 10^shift, rounded once.
std::optional<double> parse_shifted(std::string_view text, int shift) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  const auto epos = text.find_first_of("eE");
  int exp = 0;
  if (epos != std::string_view::npos) {
    std::string_view e = text.substr(epos + 1);
    if (!e.empty() && e.front() == '+') e.remove_prefix(1);
    const auto res = std::from_chars(e.data(), e.data() + e.size(), exp);
    if (e.empty() || res.ec != std::errc() || res.ptr != e.data() + e.size()) return std::nullopt;
    text = text.substr(0, epos);
  }
  if (text.empty() || text.find_first_of("eE") != std::string_view::npos) return std::nullopt;
  return parse_double(std::string(text) + "e" + std::to_string(exp + shift));
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw ConfigError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ConfigError("cannot move output into place: " + path.string());
  }
}

// ---------------------------------------------------------------------------
// Scans

void DiffractionScan::validate() const {
  if (samples.empty()) throw ValidationError("scan has no samples");
  const bool dwell = samples.front().dwell_s.has_value();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string where = "sample " + std::to_string(i + 1) + ": ";
    if (!std::isfinite(s.angle_rad)) throw ValidationError(where + "angle is not finite");
    if (!(std::isfinite(s.counts) && s.counts >= 0.0))
      throw ValidationError(where + "counts must be finite and >= 0");
    if (s.dwell_s.has_value() != dwell)
      throw ValidationError(where + "dwell column present on some samples only");
    if (dwell && !(*s.dwell_s > 0.0)) throw ValidationError(where + "dwell time must be > 0");
    if (i > 0 && !(s.angle_rad > samples[i - 1].angle_rad))
      throw ValidationError(where + "angles must be strictly increasing");
  }
}

DiffractionScan parse_scan(std::istream& in) {
  DiffractionScan scan;
  auto& meta = scan.metadata;
  std::set<std::string> seen;
  std::string raw;
  int line = 0;
  bool in_data = false;

  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim(raw);
    if (text.empty()) continue;

    if (text.front() == '#') {
      if (in_data) continue;
      const std::string_view body = trim(text.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;  // free-text comment
      const std::string key(trim(body.substr(0, colon)));
      const std::string_view value = trim(body.substr(colon + 1));
      if (key.empty()) throw ParseError("empty metadata key", line);
      if (!seen.insert(key).second) throw ParseError("duplicate metadata key '" + key + "'", line);
      if (key == "species") {
        meta.species = std::string(value);
      } else if (key == "grating") {
        meta.grating_id = std::string(value);
      } else if (key == "T0_K") {
        meta.nozzle_temperature_K = require_double(value, key, line);
      } else if (key == "v_mps") {
        meta.velocity_mps = require_double(value, key, line);
      } else if (key == "dv_over_v") {
        meta.dv_over_v = require_double(value, key, line);
      } else if (key == "mass_amu") {
        meta.mass_amu = require_double(value, key, line);
      } else {
        meta.extra.emplace_back(key, std::string(value));
      }
      continue;
    }

    in_data = true;
    const auto cols = split_ws(text);
    if (cols.size() != 2 && cols.size() != 3)
      throw ParseError("expected 2 or 3 numeric columns (angle_mrad counts [dwell_s]), got " +
                           std::to_string(cols.size()),
                       line);
    ScanSample s;
    const auto angle = parse_shifted(cols[0], -3);
    if (!angle)
      throw ParseError("invalid number for angle_mrad: '" + std::string(cols[0]) + "'", line);
    s.angle_rad = *angle;
    s.counts = require_double(cols[1], "counts", line);
    if (cols.size() == 3) s.dwell_s = require_double(cols[2], "dwell_s", line);

    if (!scan.samples.empty()) {
      const auto& prev = scan.samples.back();
      if (prev.dwell_s.has_value() != s.dwell_s.has_value())
        throw ParseError("dwell column present on some lines only", line);
      if (!(s.angle_rad > prev.angle_rad))
        throw ValidationError("line " + std::to_string(line) +
                              ": angles must be strictly increasing");
    }
    if (!(std::isfinite(s.counts) && s.counts >= 0.0))
      throw ValidationError("line " + std::to_string(line) + ": counts must be finite and >= 0");
    if (s.dwell_s && !(*s.dwell_s > 0.0))
      throw ValidationError("line " + std::to_string(line) + ": dwell time must be > 0");
    scan.samples.push_back(s);
  }
  if (in.bad()) throw ParseError("read error", line);
  scan.validate();
  return scan;
}

DiffractionScan parse_scan_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_scan(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void serialize_scan(const DiffractionScan& scan, std::ostream& out) {
  const auto& m = scan.metadata;
  if (!m.species.empty()) out << "# species: " << m.species << '\n';
  if (m.mass_amu) out << "# mass_amu: " << format_double(*m.mass_amu) << '\n';
  if (m.nozzle_temperature_K) out << "# T0_K: " << format_double(*m.nozzle_temperature_K) << '\n';
  if (!m.grating_id.empty()) out << "# grating: " << m.grating_id << '\n';
  if (m.velocity_mps) out << "# v_mps: " << format_double(*m.velocity_mps) << '\n';
  if (m.dv_over_v) out << "# dv_over_v: " << format_double(*m.dv_over_v) << '\n';
  for (const auto& [k, v] : m.extra) out << "# " << k << ": " << v << '\n';
  for (const auto& s : scan.samples) {
    out << shifted_decimal(s.angle_rad, 3) << ' ' << format_double(s.counts);
    if (s.dwell_s) out << ' ' << format_double(*s.dwell_s);
    out << '\n';
  }
}

std::string serialize_scan(const DiffractionScan& scan) {
  std::ostringstream os;
  serialize_scan(scan, os);
  return os.str();
}

// ---------------------------------------------------------------------------
// Peak areas

const PeakEntry* PeakTable::find(int order) const {
  for (const auto& e : entries)
    if (e.order == order) return &e;
  return nullptr;
}

double default_window_halfwidth(double resolution_fwhm_rad, double wavelength_nm,
                                double period_nm, double dv_over_v, int max_order) {
  const double spacing = std::asin(std::min(1.0, wavelength_nm / period_nm));
  // Order n is smeared by n * spacing * dv/v on top of the resolution.
  const double smear = max_order * spacing * dv_over_v;
  const double width = std::hypot(resolution_fwhm_rad, smear);
  return std::min(2.5 * width, 0.45 * spacing);
}

PeakTable extract_peak_areas(const DiffractionScan& scan, const GratingGeometry& geometry,
                             double wavelength_nm, double window_halfwidth_rad,
                             const PeakExtractionOptions& options) {
  scan.validate();
  if (!(wavelength_nm > 0.0)) throw DomainError("extract_peak_areas: wavelength must be > 0");
  if (!(geometry.period_nm > 0.0)) throw DomainError("extract_peak_areas: period must be > 0");
  if (!(window_halfwidth_rad > 0.0) || !std::isfinite(window_halfwidth_rad))
    throw ConfigError("peak window halfwidth must be positive");
  if (options.max_order < 0) throw ConfigError("max order must be >= 0");

  const double w = window_halfwidth_rad;
  struct Centre {
    int order;
    double theta;
  };
  std::vector<Centre> centres;
  for (int n = -options.max_order; n <= options.max_order; ++n) {
    const double s = n * wavelength_nm / geometry.period_nm;
    if (std::abs(s) >= 1.0) continue;
    centres.push_back({n, std::asin(s) + options.angle_offset_rad});
  }
  for (std::size_t i = 1; i < centres.size(); ++i) {
    if (centres[i].theta - centres[i - 1].theta <= 2.0 * w)
      throw ConfigError("peak windows of orders " + std::to_string(centres[i - 1].order) +
                        " and " + std::to_string(centres[i].order) + " overlap: halfwidth " +
                        format_double(w * 1e6) + " urad, spacing " +
                        format_double((centres[i].theta - centres[i - 1].theta) * 1e6) +
                        " urad");
  }

  const auto& smp = scan.samples;
  const std::size_t ns = smp.size();
  std::vector<double> angle(ns), rate(ns), rate_var(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    const double dwell = smp[i].dwell_s.value_or(1.0);
    angle[i] = smp[i].angle_rad;
    rate[i] = smp[i].counts / dwell;
    rate_var[i] = smp[i].counts / (dwell * dwell);
  }
  const double first = angle.front();
  const double last = angle.back();
  const double mean_step = ns > 1 ? (last - first) / static_cast<double>(ns - 1) : 0.0;

  auto interp = [&](double th) {
    const auto it = std::lower_bound(angle.begin(), angle.end(), th);
    if (it == angle.begin()) return rate.front();
    if (it == angle.end()) return rate.back();
    const std::size_t j = static_cast<std::size_t>(it - angle.begin());
    const double f = (th - angle[j - 1]) / (angle[j] - angle[j - 1]);
    return rate[j - 1] + f * (rate[j] - rate[j - 1]);
  };
  auto band_values = [&](double a, double b) {
    std::vector<double> v;
    for (std::size_t i = 0; i < ns; ++i)
      if (angle[i] >= a && angle[i] <= b) v.push_back(rate[i]);
    return v;
  };

  PeakTable table;
  table.background = options.background;
  table.window_halfwidth_rad = w;

  for (const auto& c : centres) {
    const double lo = c.theta - w;
    const double hi = c.theta + w;
    if (lo < first || hi > last) {
      table.notices.push_back("order " + std::to_string(c.order) +
                              ": window outside the scan range, skipped");
      continue;
    }

    const double band = std::max(2.0 * mean_step, 0.1 * w);
    // Bands stop short of the window edge by nothing and exclude it.
    auto left = band_values(lo - band, std::nextafter(lo, -1.0));
    auto right = band_values(std::nextafter(hi, 2.0), hi + band);

    std::function<double(double)> background;
    if (left.empty() && right.empty()) {
      const double a = interp(lo);
      const double b = interp(hi);
      background = [=](double th) { return a + (b - a) * (th - lo) / (hi - lo); };
      table.notices.push_back("order " + std::to_string(c.order) +
                              ": no samples outside the window, background from window edges");
    } else if (options.background == BackgroundModel::ConstantMedian || left.empty() ||
               right.empty()) {
      if (options.background == BackgroundModel::Linear)
        table.notices.push_back("order " + std::to_string(c.order) +
                                ": one-sided background, constant median used");
      std::vector<double> all = left;
      all.insert(all.end(), right.begin(), right.end());
      const double m = median(all);
      background = [=](double) { return m; };
    } else {
      const double ml = median(left);
      const double mr = median(right);
      const double cl = lo - 0.5 * band;
      const double cr = hi + 0.5 * band;
      background = [=](double th) { return ml + (mr - ml) * (th - cl) / (cr - cl); };
    }

    // Trapezoid over the window with interpolated end points.
    double area = 0.0;
    double var = 0.0;
    double prev_x = lo;
    double prev_y = interp(lo) - background(lo);
    for (std::size_t i = 0; i < ns; ++i) {
      if (angle[i] <= lo || angle[i] >= hi) continue;
      const double y = rate[i] - background(angle[i]);
      area += 0.5 * (angle[i] - prev_x) * (y + prev_y);
      var += rate_var[i];
      prev_x = angle[i];
      prev_y = y;
    }
    const double y_hi = interp(hi) - background(hi);
    area += 0.5 * (hi - prev_x) * (y_hi + prev_y);

    PeakEntry e;
    e.order = c.order;
    e.area = std::max(0.0, area);
    e.area_uncertainty = std::sqrt(var) * mean_step;
    e.center_rad = c.theta;
    table.entries.push_back(e);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Key-value records

namespace {

std::vector<KeyValueLine> parse_key_values_impl(std::istream& in, bool inline_comments) {
  std::vector<KeyValueLine> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text = trim(raw);
    if (text.empty() || text.front() == '#') continue;
    if (inline_comments) {
      for (std::size_t i = 1; i < text.size(); ++i) {
        if (text[i] == '#' && (text[i - 1] == ' ' || text[i - 1] == '\t')) {
          text = trim(text.substr(0, i));
          break;
        }
      }
    }
    const auto sep = text.find_first_of(":=");
    if (sep == std::string_view::npos) throw ParseError("expected 'key: value'", line);
    KeyValueLine kv;
    kv.key = std::string(trim(text.substr(0, sep)));
    kv.value = std::string(trim(text.substr(sep + 1)));
    kv.line = line;
    if (kv.key.empty()) throw ParseError("empty key", line);
    out.push_back(std::move(kv));
  }
  if (in.bad()) throw ParseError("read error", line);
  return out;
}

void reject_duplicates(const std::vector<KeyValueLine>& kvs) {
  std::set<std::string> seen;
  for (const auto& kv : kvs)
    if (!seen.insert(kv.key).second) throw ParseError("duplicate key '" + kv.key + "'", kv.line);
}

}  // namespace

std::vector<KeyValueLine> parse_key_values(std::istream& in) {
  return parse_key_values_impl(in, true);
}

GratingGeometry grating_preset(std::string_view id) {
  GratingGeometry g;
  g.id = std::string(id);
  g.period_nm = 100.0;
  g.thickness_nm = std::numeric_limits<double>::quiet_NaN();
  g.roughness_var_nm2 = 0.0;
  if (id == "I") {
    g.slit_width_nm = 50.0;
    g.wedge_angle_rad = units::deg_to_rad(7.5);
  } else if (id == "II") {
    g.slit_width_nm = 67.5;
    g.wedge_angle_rad = units::deg_to_rad(8.7);
  } else if (id == "III") {
    g.slit_width_nm = 71.2;
    g.wedge_angle_rad = units::deg_to_rad(12.7);
  } else {
    throw ConfigError("unknown grating preset '" + std::string(id) + "' (known: I, II, III)");
  }
  return g;
}

GratingGeometry parse_geometry(std::istream& in) {
  const auto kvs = parse_key_values(in);
  reject_duplicates(kvs);

  GratingGeometry g;
  g.thickness_nm = std::numeric_limits<double>::quiet_NaN();
  bool have_d = false, have_s0 = false, have_beta = false;
  for (const auto& kv : kvs) {
    if (kv.key == "preset") {
      g = grating_preset(kv.value);
      have_d = have_s0 = have_beta = true;
    }
  }
  for (const auto& kv : kvs) {
    if (kv.key == "preset") continue;
    if (kv.key == "id") {
      g.id = kv.value;
      continue;
    }
    const double v = require_double(kv.value, kv.key, kv.line);
    if (kv.key == "d_nm") {
      g.period_nm = v;
      have_d = true;
    } else if (kv.key == "s0_nm") {
      g.slit_width_nm = v;
      have_s0 = true;
    } else if (kv.key == "t_nm") {
      g.thickness_nm = v;
    } else if (kv.key == "beta_deg") {
      g.wedge_angle_rad = units::deg_to_rad(v);
      have_beta = true;
    } else if (kv.key == "sigma0_nm") {
      if (!(v >= 0.0)) throw ParseError("sigma0_nm must be >= 0", kv.line);
      g.roughness_var_nm2 = v * v;
    } else {
      throw ParseError("unknown geometry key '" + kv.key + "'", kv.line);
    }
  }
  if (!have_d) throw ValidationError("geometry: missing mandatory field d_nm");
  if (!have_s0) throw ValidationError("geometry: missing mandatory field s0_nm");
  if (!have_beta) throw ValidationError("geometry: missing mandatory field beta_deg");
  if (!std::isnan(g.thickness_nm) && !(g.thickness_nm > 0.0))
    throw ValidationError("geometry: t_nm must be > 0");
  g.validate(false);
  return g;
}

GratingGeometry load_geometry(const std::string& id_or_path) {
  if (id_or_path == "I" || id_or_path == "II" || id_or_path == "III")
    return grating_preset(id_or_path);
  const std::filesystem::path path(id_or_path);
  if (!std::filesystem::is_regular_file(path))
    throw ConfigError("'" + id_or_path + "' is neither a grating preset (I, II, III) nor a file");
  auto in = open_input(path);
  try {
    auto g = parse_geometry(in);
    if (g.id.empty()) g.id = path.stem().string();
    return g;
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

BeamSpec parse_beam(std::istream& in) {
  const auto kvs = parse_key_values(in);
  reject_duplicates(kvs);
  BeamSpec b;
  bool have_mass = false, have_v = false;
  for (const auto& kv : kvs) {
    if (kv.key == "species") {
      b.species = kv.value;
      continue;
    }
    const double v = require_double(kv.value, kv.key, kv.line);
    if (kv.key == "mass_amu") {
      b.mass_amu = v;
      have_mass = true;
    } else if (kv.key == "v_mps") {
      b.velocity_mps = v;
      have_v = true;
    } else if (kv.key == "dv_over_v") {
      b.dv_over_v = v;
    } else if (kv.key == "alpha_A3") {
      b.polarizability_A3 = v;
    } else {
      throw ParseError("unknown beam key '" + kv.key + "'", kv.line);
    }
  }
  if (!have_mass) {
    const SpeciesInfo* sp = find_species(b.species);
    if (!sp) throw ValidationError("beam: missing mandatory field mass_amu");
    b.mass_amu = sp->mass_amu;
  }
  if (!have_v) throw ValidationError("beam: missing mandatory field v_mps");
  b.validate();
  return b;
}

BeamSpec load_beam(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_beam(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results

const FitParameter& FitResult::param(std::string_view name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw ValidationError("fit result has no parameter '" + std::string(name) + "'");
}

void write_results(const FitResult& r, const Provenance& provenance, std::ostream& out) {
  auto flag = [](bool b) { return b ? "true" : "false"; };
  out << "schema: " << kResultSchema << '\n';
  out << "kind: " << r.kind << '\n';
  out << "converged: " << flag(r.converged) << '\n';
  out << "iterations: " << r.iterations << '\n';
  out << "rss: " << format_double(r.rss) << '\n';
  out << "dof: " << r.dof << '\n';
  out << "gradient_norm: " << format_double(r.gradient_norm) << '\n';
  out << "condition_number: " << format_double(r.condition_number) << '\n';
  out << "ill_conditioned: " << flag(r.ill_conditioned) << '\n';
  out << "parameters:";
  for (const auto& p : r.parameters) out << ' ' << p.name;
  out << '\n';
  for (const auto& p : r.parameters) {
    const std::string k = "param." + p.name + ".";
    out << k << "unit: " << p.unit << '\n';
    out << k << "value: " << format_double(p.value) << '\n';
    out << k << "uncertainty: " << format_double(p.uncertainty) << '\n';
    out << k << "at_lower: " << flag(p.at_lower) << '\n';
    out << k << "at_upper: " << flag(p.at_upper) << '\n';
  }
  for (std::size_t i = 0; i < r.warnings.size(); ++i)
    out << "warning." << i << ": " << r.warnings[i] << '\n';
  for (const auto& [k, v] : provenance) out << "provenance." << k << ": " << v << '\n';
}

void save_results(const FitResult& result, const std::filesystem::path& path,
                  const Provenance& provenance) {
  std::ostringstream os;
  write_results(result, provenance, os);
  write_file_atomic(path, os.str());
}

FitResult read_results(std::istream& in, Provenance* provenance) {
  const auto kvs = parse_key_values_impl(in, false);
  reject_duplicates(kvs);
  std::map<std::string, const KeyValueLine*> by_key;
  for (const auto& kv : kvs) by_key[kv.key] = &kv;

  auto get = [&](const std::string& key) -> const KeyValueLine& {
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ParseError("results: missing key '" + key + "'", 0);
    return *it->second;
  };
  auto num = [&](const std::string& key) {
    const auto& kv = get(key);
    return require_double(kv.value, key, kv.line);
  };
  auto integer = [&](const std::string& key) {
    const auto& kv = get(key);
    int v = 0;
    const auto r = std::from_chars(kv.value.data(), kv.value.data() + kv.value.size(), v);
    if (r.ec != std::errc() || r.ptr != kv.value.data() + kv.value.size())
      throw ParseError("invalid integer for " + key, kv.line);
    return v;
  };
  auto boolean = [&](const std::string& key) {
    const auto& kv = get(key);
    if (kv.value == "true") return true;
    if (kv.value == "false") return false;
    throw ParseError("expected true or false for " + key, kv.line);
  };

  const auto& schema = get("schema");
  if (schema.value != kResultSchema)
    throw ParseError("unsupported results schema '" + schema.value + "'", schema.line);

  FitResult r;
  r.kind = get("kind").value;
  r.converged = boolean("converged");
  r.iterations = integer("iterations");
  r.rss = num("rss");
  r.dof = integer("dof");
  r.gradient_norm = num("gradient_norm");
  r.condition_number = num("condition_number");
  r.ill_conditioned = boolean("ill_conditioned");
  for (const auto name : split_ws(get("parameters").value)) {
    FitParameter p;
    p.name = std::string(name);
    const std::string k = "param." + p.name + ".";
    p.unit = get(k + "unit").value;
    p.value = num(k + "value");
    p.uncertainty = num(k + "uncertainty");
    p.at_lower = boolean(k + "at_lower");
    p.at_upper = boolean(k + "at_upper");
    r.parameters.push_back(std::move(p));
  }
  for (std::size_t i = 0;; ++i) {
    const auto it = by_key.find("warning." + std::to_string(i));
    if (it == by_key.end()) break;
    r.warnings.push_back(it->second->value);
  }
  if (provenance) {
    provenance->clear();
    for (const auto& kv : kvs)
      if (kv.key.rfind("provenance.", 0) == 0)
        provenance->emplace_back(kv.key.substr(11), kv.value);
  }
  return r;
}

FitResult load_results(const std::filesystem::path& path, Provenance* provenance) {
  auto in = open_input(path);
  try {
    return read_results(in, provenance);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

// ---------------------------------------------------------------------------
// Tables

namespace {

template <class Row, class Fn>
std::vector<Row> parse_rows(std::istream& in, std::size_t min_cols, std::size_t max_cols,
                            Fn make_row) {
  std::vector<Row> rows;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim(raw);
    if (text.empty() || text.front() == '#') continue;
    const auto cols = split_ws(text);
    if (cols.size() < min_cols || cols.size() > max_cols)
      throw ParseError("expected " + std::to_string(min_cols) + " to " +
                           std::to_string(max_cols) + " columns, got " +
                           std::to_string(cols.size()),
                       line);
    rows.push_back(make_row(cols, line));
  }
  if (in.bad()) throw ParseError("read error", line);
  return rows;
}

}  // namespace

std::vector<SeffRow> parse_seff_table(std::istream& in) {
  return parse_rows<SeffRow>(in, 3, 5, [](const std::vector<std::string_view>& c, int line) {
    SeffRow r;
    r.velocity_mps = require_double(c[0], "v_mps", line);
    r.s_eff_nm = require_double(c[1], "s_eff_nm", line);
    r.uncertainty_nm = require_double(c[2], "uncertainty_nm", line);
    if (c.size() > 3 && c[3] != "-") r.grating_id = std::string(c[3]);
    if (c.size() > 4) r.species = std::string(c[4]);
    if (!(r.velocity_mps > 0.0)) throw ValidationError("line " + std::to_string(line) +
                                                       ": velocity must be > 0");
    if (!std::isfinite(r.s_eff_nm))
      throw ValidationError("line " + std::to_string(line) + ": s_eff must be finite");
    if (!(r.uncertainty_nm >= 0.0))
      throw ValidationError("line " + std::to_string(line) + ": uncertainty must be >= 0");
    return r;
  });
}

void write_seff_table(const std::vector<SeffRow>& rows, std::ostream& out) {
  out << "# v_mps s_eff_nm uncertainty_nm grating species\n";
  for (const auto& r : rows) {
    out << format_double(r.velocity_mps) << ' ' << format_double(r.s_eff_nm) << ' '
        << format_double(r.uncertainty_nm);
    if (!r.grating_id.empty() || !r.species.empty())
      out << ' ' << (r.grating_id.empty() ? "-" : r.grating_id);
    if (!r.species.empty()) out << ' ' << r.species;
    out << '\n';
  }
}

std::vector<C3Row> parse_c3_table(std::istream& in) {
  return parse_rows<C3Row>(in, 3, 4, [](const std::vector<std::string_view>& c, int line) {
    C3Row r;
    r.alpha_A3 = require_double(c[0], "alpha_A3", line);
    r.c3_meV_nm3 = require_double(c[1], "c3_meV_nm3", line);
    r.uncertainty = require_double(c[2], "uncertainty", line);
    if (c.size() > 3) r.label = std::string(c[3]);
    if (!std::isfinite(r.alpha_A3) || !std::isfinite(r.c3_meV_nm3))
      throw ValidationError("line " + std::to_string(line) + ": values must be finite");
    if (!(r.uncertainty >= 0.0))
      throw ValidationError("line " + std::to_string(line) + ": uncertainty must be >= 0");
    return r;
  });
}

void write_c3_table(const std::vector<C3Row>& rows, std::ostream& out) {
  out << "# alpha_A3 c3_meV_nm3 uncertainty label\n";
  for (const auto& r : rows) {
    out << format_double(r.alpha_A3) << ' ' << format_double(r.c3_meV_nm3) << ' '
        << format_double(r.uncertainty);
    if (!r.label.empty()) out << ' ' << r.label;
    out << '\n';
  }
}

}  // namespace vdwg
