#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mrhom/ingest.hpp"
#include "mrhom/model.hpp"
#include "mrhom/montecarlo.hpp"

namespace mrhom {

enum class DeltaMode { geometric, fitted };
const char* delta_mode_name(DeltaMode m);
DeltaMode delta_mode_from_name(const std::string& name);

struct ScanGrid {
  double start_mm = 0.0;
  double stop_mm = 2.0;
  double step_mm = 0.05;

  std::vector<double> points() const;
  // Parses "start:stop:step" (mm).
  static ScanGrid parse(const std::string& spec);
  std::string to_string() const;
};

// Effective run configuration: flat dotted keys in a text file, overridable
// from the CLI. The content digest of the effective configuration is embedded
// in every output file.
struct RunConfig {
  SourceParams source = {0.035, 0.3};
  OpticalGeometry geometry;
  DeltaMode delta_mode = DeltaMode::fitted;
  double delta_fitted_inv_mm = 1.7;
  bool default_masks = true;
  bool mask_antibunching_same_pixel = false;
  ScanGrid scan;
  int repeats = 10;
  std::uint64_t events_per_repeat = 2000;
  bool poisson_totals = false;
  CoincidenceWindows windows;
  bool use_exact_integral = false;
  bool emit_timetags = false;
  std::uint64_t seed = 20250531;
  int crb_grid_half_width = 50;
  // Maximum-likelihood window half-width in units of a quarter period of the
  // fastest fitted beat (the paper leaves its window unstated).
  double mle_window_quarter_periods = 1.0;

  double delta_inv_mm() const;
  DetectorArray make_array() const;
  SimConfig make_sim_config() const;

  // Canonical key/value serialization (sorted by key) used for the digest
  // and for writing config files back out.
  std::vector<std::pair<std::string, std::string>> items() const;
  std::string digest() const;  // 64-bit FNV-1a over the canonical items, hex

  // Collects every violation and reports them together.
  void validate() const;

  static RunConfig from_file(const std::string& path);
  void set_key(const std::string& key, const std::string& value);  // single dotted key
};

std::string format_config(const RunConfig& cfg);

}  // namespace mrhom
