#include "mrhom/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mrhom {

const char* delta_mode_name(DeltaMode m) {
  return m == DeltaMode::geometric ? "geometric" : "fitted";
}

DeltaMode delta_mode_from_name(const std::string& name) {
  if (name == "geometric") return DeltaMode::geometric;
  if (name == "fitted") return DeltaMode::fitted;
  throw ValidationError("delta mode must be 'geometric' or 'fitted', got '" + name + "'");
}

std::vector<double> ScanGrid::points() const {
  if (!(step_mm > 0.0)) throw ValidationError("scan grid step must be positive");
  if (stop_mm < start_mm) throw ValidationError("scan grid stop must be >= start");
  std::vector<double> pts;
  const double eps = 1e-9 * step_mm;
  for (int k = 0;; ++k) {
    const double x = start_mm + k * step_mm;
    if (x > stop_mm + eps) break;
    pts.push_back(x);
  }
  return pts;
}

ScanGrid ScanGrid::parse(const std::string& spec) {
  ScanGrid g;
  char extra = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &g.start_mm, &g.stop_mm, &g.step_mm, &extra) != 3)
    throw ValidationError("scan grid must be 'start:stop:step' in mm, got '" + spec + "'");
  return g;
}

std::string ScanGrid::to_string() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%g:%g:%g", start_mm, stop_mm, step_mm);
  return buf;
}

double RunConfig::delta_inv_mm() const {
  return delta_mode == DeltaMode::geometric ? geometry.momentum_width_inv_mm()
                                            : delta_fitted_inv_mm;
}

DetectorArray RunConfig::make_array() const {
  DetectorArray a = DetectorArray::from_geometry(geometry, delta_inv_mm(), default_masks);
  if (mask_antibunching_same_pixel) {
    for (const auto& p : DetectorArray::same_pixel_mask(geometry.n_pixels))
      a.antibunching_mask.insert(p);
  }
  return a;
}

SimConfig RunConfig::make_sim_config() const {
  SimConfig s;
  s.source = source;
  s.array = make_array();
  s.use_exact = use_exact_integral;
  s.poisson_totals = poisson_totals;
  return s;
}

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* fmt_bool(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  if (pos != v.size())
    throw ValidationError("config key '" + key + "': trailing characters in '" + v + "'");
  return d;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long u;
  try {
    u = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected an unsigned integer, got '" + v +
                          "'");
  }
  if (pos != v.size())
    throw ValidationError("config key '" + key + "': trailing characters in '" + v + "'");
  return u;
}

int parse_int(const std::string& v, const std::string& key) {
  return static_cast<int>(parse_u64(v, key));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"array.default_masks", fmt_bool(default_masks)},
      {"array.delta_fitted_inv_mm", fmt_double(delta_fitted_inv_mm)},
      {"array.delta_mode", delta_mode_name(delta_mode)},
      {"array.mask_antibunching_same_pixel", fmt_bool(mask_antibunching_same_pixel)},
      {"crb.grid_half_width", std::to_string(crb_grid_half_width)},
      {"mle.window_quarter_periods", fmt_double(mle_window_quarter_periods)},
      {"geometry.center_index", fmt_double(geometry.center_index)},
      {"geometry.focal_length_mm", fmt_double(geometry.focal_length_mm)},
      {"geometry.n_pixels", std::to_string(geometry.n_pixels)},
      {"geometry.pixel_pitch_um", fmt_double(geometry.pixel_pitch_um)},
      {"geometry.pixel_width_um", fmt_double(geometry.pixel_width_um)},
      {"geometry.wavelength_nm", fmt_double(geometry.wavelength_nm)},
      {"scan.emit_timetags", fmt_bool(emit_timetags)},
      {"scan.events_per_repeat", std::to_string(events_per_repeat)},
      {"scan.grid_mm", scan.to_string()},
      {"scan.poisson_totals", fmt_bool(poisson_totals)},
      {"scan.repeats", std::to_string(repeats)},
      {"scan.use_exact_integral", fmt_bool(use_exact_integral)},
      {"seed", std::to_string(seed)},
      {"source.sigma_x_mm", fmt_double(source.sigma_x_mm)},
      {"source.visibility", fmt_double(source.visibility)},
      {"windows.antibunching_ns", fmt_double(windows.antibunching_center_ns)},
      {"windows.bunching_ns", fmt_double(windows.bunching_center_ns)},
      {"windows.half_width_ns", fmt_double(windows.half_width_ns)},
  };
  return kv;
}

std::string RunConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  const auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : items()) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "source.sigma_x_mm") source.sigma_x_mm = parse_double(value, key);
  else if (key == "source.visibility") source.visibility = parse_double(value, key);
  else if (key == "geometry.wavelength_nm") geometry.wavelength_nm = parse_double(value, key);
  else if (key == "geometry.focal_length_mm") geometry.focal_length_mm = parse_double(value, key);
  else if (key == "geometry.pixel_pitch_um") geometry.pixel_pitch_um = parse_double(value, key);
  else if (key == "geometry.pixel_width_um") geometry.pixel_width_um = parse_double(value, key);
  else if (key == "geometry.n_pixels") geometry.n_pixels = parse_int(value, key);
  else if (key == "geometry.center_index") geometry.center_index = parse_double(value, key);
  else if (key == "array.delta_mode") delta_mode = delta_mode_from_name(value);
  else if (key == "array.delta_fitted_inv_mm") delta_fitted_inv_mm = parse_double(value, key);
  else if (key == "array.default_masks") default_masks = parse_bool(value, key);
  else if (key == "array.mask_antibunching_same_pixel")
    mask_antibunching_same_pixel = parse_bool(value, key);
  else if (key == "scan.grid_mm") scan = ScanGrid::parse(value);
  else if (key == "scan.repeats") repeats = parse_int(value, key);
  else if (key == "scan.events_per_repeat") events_per_repeat = parse_u64(value, key);
  else if (key == "scan.poisson_totals") poisson_totals = parse_bool(value, key);
  else if (key == "scan.use_exact_integral") use_exact_integral = parse_bool(value, key);
  else if (key == "scan.emit_timetags") emit_timetags = parse_bool(value, key);
  else if (key == "windows.bunching_ns") windows.bunching_center_ns = parse_double(value, key);
  else if (key == "windows.antibunching_ns")
    windows.antibunching_center_ns = parse_double(value, key);
  else if (key == "windows.half_width_ns") windows.half_width_ns = parse_double(value, key);
  else if (key == "crb.grid_half_width") crb_grid_half_width = parse_int(value, key);
  else if (key == "mle.window_quarter_periods")
    mle_window_quarter_periods = parse_double(value, key);
  else if (key == "seed") seed = parse_u64(value, key);
  else throw ValidationError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  const auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      problems.emplace_back(e.what());
    }
  };
  attempt([&] { source.validate(); });
  attempt([&] { geometry.validate(); });
  attempt([&] { windows.validate(); });
  attempt([&] {
    if (!(delta_fitted_inv_mm > 0.0)) throw ValidationError("fitted delta must be positive");
  });
  attempt([&] {
    if (delta_inv_mm() >= geometry.momentum_pitch_inv_mm())
      throw ValidationError("delta must be smaller than the momentum pitch (" +
                            std::to_string(geometry.momentum_pitch_inv_mm()) + " mm^-1)");
  });
  attempt([&] { (void)scan.points(); });
  attempt([&] {
    if (repeats < 2)
      throw ValidationError("scan.repeats must be >= 2 (uncertainties need repeat statistics)");
  });
  attempt([&] {
    if (crb_grid_half_width < 1) throw ValidationError("crb.grid_half_width must be >= 1");
  });
  attempt([&] {
    if (!(mle_window_quarter_periods > 0.0))
      throw ValidationError("mle.window_quarter_periods must be positive");
  });
  attempt([&] {
    if (emit_timetags && !mask_antibunching_same_pixel)
      throw ValidationError(
          "scan.emit_timetags requires array.mask_antibunching_same_pixel=true: same-pixel "
          "antibunching counts cannot be represented as time tags");
  });
  if (!problems.empty()) {
    std::string msg = "configuration invalid (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() > 1 ? "s" : "") + "):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> problems;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
    try {
      cfg.set_key(key, value);
    } catch (const ValidationError& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "config file '" + path + "' invalid:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.items()) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace mrhom
