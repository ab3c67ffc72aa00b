#include "mrhom/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "mrhom/rng.hpp"

namespace mrhom {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open output file: " + p.string());
  return f;
}

fs::path prepare_dir(const std::string& out_dir) {
  fs::path dir(out_dir.empty() ? "." : out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

// Appends the manifest path to `files` after listing the files written so far.
void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& command,
                    std::vector<std::string>& files) {
  const fs::path p = dir / "manifest.txt";
  auto f = open_out(p);
  f << "command = " << command << "\n";
  f << "config_digest = " << cfg.digest() << "\n";
  f << "rng = " << Xoshiro256pp::kName << "\n";
  for (const auto& name : files) f << "file = " << name << "\n";
  f << "# effective configuration\n";
  for (const auto& [k, v] : cfg.items()) f << k << " = " << v << "\n";
  files.push_back(p.string());
}

void write_count_matrix_csv(const fs::path& p, const CountMatrix& m, const RunConfig& cfg) {
  auto f = open_out(p);
  f << "# config_digest=" << cfg.digest() << "\n";
  f << "branch,i,j,count\n";
  for (int i = 0; i < m.n_pixels; ++i)
    for (int j = i; j < m.n_pixels; ++j) {
      if (m.is_masked(i, j)) continue;
      f << branch_code(m.branch) << ',' << i << ',' << j << ',' << m.at(i, j) << '\n';
    }
}

}  // namespace

SimulateOutputs run_simulate(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const fs::path dir = prepare_dir(out_dir);
  const SimConfig sim = cfg.make_sim_config();
  const std::vector<double> grid = cfg.scan.points();

  SimulateOutputs out;
  out.dataset = simulate_scan(grid, cfg.repeats, cfg.events_per_repeat, sim, cfg.seed);
  out.dataset.config_digest = cfg.digest();

  const fs::path scan_path = dir / "scan.csv";
  {
    auto f = open_out(scan_path);
    write_scan_csv(f, out.dataset);
  }
  out.files.push_back(scan_path.string());

  const fs::path meta_path = dir / "scan_meta.txt";
  {
    auto f = open_out(meta_path);
    f << "config_digest = " << cfg.digest() << "\n";
    f << "rng = " << out.dataset.rng_name << "\n";
    f << "seed = " << cfg.seed << "\n";
    f << "n_r = " << cfg.repeats << "\n";
    f << "events_per_repeat = " << cfg.events_per_repeat << "\n";
    f << "grid_mm = " << cfg.scan.to_string() << "\n";
    f << "channels = " << out.dataset.channels.size() << "\n";
  }
  out.files.push_back(meta_path.string());

  if (cfg.emit_timetags) {
    for (std::size_t t = 0; t < grid.size(); ++t) {
      for (int r = 0; r < cfg.repeats; ++r) {
        const auto [a, b] = sample_counts_at(grid[t], cfg.events_per_repeat, sim, cfg.seed, t,
                                             static_cast<std::uint64_t>(r));
        const auto records = synth_timetags(a, b, cfg.windows, cfg.seed ^ (t * 1000003ULL + r));
        char name[64];
        std::snprintf(name, sizeof name, "timetags_dx%03zu_rep%02d.mrht", t, r);
        auto f = open_out(dir / name);
        write_timetags(f, records, cfg.geometry.n_pixels);
        out.files.push_back((dir / name).string());
      }
    }
  }
  write_manifest(dir, cfg, "simulate", out.files);
  return out;
}

IngestOutputs run_ingest(const RunConfig& cfg, const std::string& timetag_path,
                         const std::string& out_dir) {
  cfg.validate();
  const fs::path dir = prepare_dir(out_dir);
  int n_pixels = cfg.geometry.n_pixels;
  const auto records = load_timetags(timetag_path, cfg.geometry.n_pixels, &n_pixels);
  if (n_pixels != cfg.geometry.n_pixels)
    throw ValidationError("time-tag file was recorded for " + std::to_string(n_pixels) +
                          " pixels but the configured array has " +
                          std::to_string(cfg.geometry.n_pixels));
  IngestOutputs out;
  out.result = coincidence_matrices(records, cfg.windows, cfg.make_array());

  const fs::path pa = dir / "countmatrix_a.csv";
  const fs::path pb = dir / "countmatrix_b.csv";
  write_count_matrix_csv(pa, out.result.antibunching, cfg);
  write_count_matrix_csv(pb, out.result.bunching, cfg);
  out.files = {pa.string(), pb.string()};

  const fs::path tally = dir / "ingest_tally.txt";
  {
    auto f = open_out(tally);
    f << "config_digest = " << cfg.digest() << "\n";
    f << "records = " << records.size() << "\n";
    f << "total_pairs = " << out.result.total_pairs << "\n";
    f << "classified_pairs = " << out.result.classified_pairs << "\n";
    f << "masked_dropped = " << out.result.masked_dropped << "\n";
    f << "ignored_pairs = " << out.result.ignored_pairs << "\n";
  }
  out.files.push_back(tally.string());
  write_manifest(dir, cfg, "ingest " + timetag_path, out.files);
  return out;
}

BeatFitGuess derive_fit_guess(const RunConfig& cfg, const ChannelSeries& series) {
  BeatFitGuess g;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
  for (double m : series.mean) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    sum += m;
  }
  const double mean = sum / std::max<std::size_t>(series.mean.size(), 1);
  g.amplitude = std::max(mean, 1e-9);
  g.visibility = (hi + lo > 0.0) ? std::clamp((hi - lo) / (hi + lo), 0.05, 1.0) : 0.3;
  g.delta = cfg.delta_inv_mm();
  const DetectorArray array = cfg.make_array();
  g.delta_k =
      std::abs(array.k_centers[series.channel.i] - array.k_centers[series.channel.j]);
  if (g.delta_k == 0.0) g.delta_k = 0.0;  // same-pixel channel: pure envelope
  return g;
}

SearchWindow default_search_window(double seed_dx_mm, const BeatCurveModel& model) {
  double dk_max = 0.0;
  for (const auto& e : model.entries) dk_max = std::max(dk_max, e.delta_k);
  if (dk_max <= 0.0) throw NumericalError("search window undefined: no beating channel in model");
  const double quarter = 0.5 * std::numbers::pi / dk_max;
  return {seed_dx_mm - quarter, seed_dx_mm + quarter};
}

double least_squares_seed(std::span<const double> counts, std::span<const double> errs,
                          const BeatCurveModel& model, double center_mm, double halfwidth_mm) {
  if (counts.size() != model.size() || errs.size() != counts.size())
    throw ValidationError("least_squares_seed: counts/errs/model sizes differ");
  const auto chi2 = [&](double dx) {
    double acc = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double r = (counts[k] - model.eval(k, dx).value) / errs[k];
      acc += r * r;
    }
    return acc;
  };
  const int n = 257;
  const double lo = center_mm - halfwidth_mm, hi = center_mm + halfwidth_mm;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int t = 0; t < n; ++t) {
    const double x = lo + (hi - lo) * t / (n - 1);
    const double v = chi2(x);
    if (v < best_val) {
      best_val = v;
      best = t;
    }
  }
  if (best == 0 || best == n - 1)
    throw NumericalError("least-squares seed hit the scan-window boundary; data inconsistent "
                         "with the nominal displacement");
  double a = lo + (hi - lo) * (best - 1) / (n - 1);
  double b = lo + (hi - lo) * (best + 1) / (n - 1);
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = chi2(x1), f2 = chi2(x2);
  while (b - a > 1e-7) {
    if (f1 > f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = chi2(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = chi2(x1);
    }
  }
  return 0.5 * (a + b);
}

namespace {

void write_fits_csv(const fs::path& p, const std::vector<ChannelFitRow>& rows,
                    const RunConfig& cfg) {
  auto f = open_out(p);
  f << "# config_digest=" << cfg.digest() << "\n";
  f << "branch,i,j,amplitude,visibility,delta_inv_mm,delta_k_inv_mm,amplitude_err,"
       "visibility_err,delta_err,delta_k_err,residual_norm,status\n";
  for (const auto& r : rows) {
    f << branch_code(r.channel.branch) << ',' << r.channel.i << ',' << r.channel.j << ','
      << fmt(r.params.amplitude) << ',' << fmt(r.params.visibility) << ','
      << fmt(r.params.delta) << ',' << fmt(r.params.delta_k) << ','
      << fmt(r.params.stderr_of(0)) << ',' << fmt(r.params.stderr_of(1)) << ','
      << fmt(r.params.stderr_of(2)) << ',' << fmt(r.params.stderr_of(3)) << ','
      << fmt(r.params.residual_norm) << ',' << r.status << '\n';
  }
}

std::vector<ChannelFitRow> fit_all_channels(const RunConfig& cfg, const ScanDataset& dataset) {
  std::vector<ChannelFitRow> rows;
  for (const auto& series : dataset.channels) {
    ChannelFitRow row;
    row.channel = series.channel;
    std::vector<ScanPoint> pts(dataset.dx_mm.size());
    bool have_errs = true;
    double total = 0.0;
    for (std::size_t t = 0; t < pts.size(); ++t) {
      pts[t] = {dataset.dx_mm[t], series.mean[t], series.err[t]};
      if (!(series.err[t] > 0.0)) have_errs = false;
      total += series.mean[t];
    }
    if (total <= 0.0) {
      row.status = "failed:no-counts";
      rows.push_back(row);
      continue;
    }
    // Channels with an occasional zero spread across repeats fall back to
    // Poisson-style errors so the weights stay finite.
    if (!have_errs) {
      for (auto& pt : pts)
        pt.err = std::max(std::sqrt(std::max(pt.mean, 1.0)) /
                              std::sqrt(static_cast<double>(dataset.n_r)),
                          1e-3);
    }
    try {
      const BeatFitGuess guess = derive_fit_guess(cfg, series);
      row.params = fit_beat_curve(pts, series.channel.branch, guess);
      row.status = row.params.degenerate ? "degenerate" : "ok";
    } catch (const std::exception& e) {
      row.status = std::string("failed:") + e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

// Brackets the likelihood's local maximum nearest the seed by uphill walking
// in steps of a fraction of the fastest lobe, capped at one lobe width.
SearchWindow bracket_local_max(std::span<const double> counts, const BeatCurveModelView& view,
                               double seed_mm, double quarter_mm) {
  const double h = 0.25 * quarter_mm;
  const double cap = 5.0 * quarter_mm;
  const auto value = [&](double x) { return log_likelihood(x, counts, view).value; };
  double x = seed_mm;
  double fx = value(x);
  const double fplus = value(x + h), fminus = value(x - h);
  if (fplus <= fx && fminus <= fx) return {x - h, x + h};
  const double dir = fplus > fminus ? 1.0 : -1.0;
  double prev = x;
  while (std::abs(x - seed_mm) < cap) {
    const double next = x + dir * h;
    const double fn = value(next);
    if (fn < fx) return dir > 0 ? SearchWindow{prev, next} : SearchWindow{next, prev};
    prev = x;
    x = next;
    fx = fn;
  }
  throw NumericalError("no local likelihood maximum within one beat lobe of the seed at " +
                       std::to_string(seed_mm) + " mm");
}

FitOutputs run_fit(const RunConfig& cfg, const ScanDataset& dataset, const std::string& out_dir) {
  cfg.validate();
  const fs::path dir = prepare_dir(out_dir);
  FitOutputs out;
  out.fits = fit_all_channels(cfg, dataset);
  const fs::path p = dir / "fits.csv";
  write_fits_csv(p, out.fits, cfg);
  out.files.push_back(p.string());
  write_manifest(dir, cfg, "fit", out.files);
  return out;
}

CrbOutputs run_crb(const RunConfig& cfg, const std::vector<double>& dx_grid,
                   std::uint64_t n_events, const std::string& out_dir) {
  cfg.validate();
  const fs::path dir = prepare_dir(out_dir);
  FisherConfig fc;
  fc.params = cfg.source;
  fc.delta = cfg.delta_inv_mm();
  fc.grid_half_width = cfg.crb_grid_half_width;
  CrbOutputs out;
  out.curve = crb_curve(dx_grid, n_events, fc);

  const fs::path p = dir / "crb.csv";
  auto f = open_out(p);
  const double sqrt_n = std::sqrt(static_cast<double>(n_events));
  f << "# config_digest=" << cfg.digest() << "\n";
  f << "dx_mm,fisher_mm2,sqrtN_crb_mm,sqrtN_qcrb_mm\n";
  for (const auto& r : out.curve)
    f << fmt(r.dx_mm) << ',' << fmt(r.fisher) << ',' << fmt(sqrt_n * r.crb_mm) << ','
      << fmt(sqrt_n * r.qcrb_mm) << '\n';
  out.files.push_back(p.string());
  write_manifest(dir, cfg, "crb", out.files);
  return out;
}

ReportOutputs run_report(const RunConfig& cfg, const ScanDataset& dataset,
                         const std::string& out_dir) {
  cfg.validate();
  const fs::path dir = prepare_dir(out_dir);
  ReportOutputs out;
  out.fits = fit_all_channels(cfg, dataset);

  // Model: channels with a usable fit and enough counts to constrain it.
  // Sparse channels (well under a count per scan point) carry no displacement
  // information and only destabilize the likelihood.
  BeatCurveModel model;
  std::vector<std::size_t> kept;  // indices into dataset.channels
  for (std::size_t c = 0; c < out.fits.size(); ++c) {
    auto& row = out.fits[c];
    if (row.status.rfind("failed", 0) == 0) continue;
    double total = 0.0;
    for (double m : dataset.channels[c].mean) total += m;
    if (total < 0.5 * static_cast<double>(dataset.dx_mm.size())) {
      row.status = "excluded:low-counts";
      continue;
    }
    model.entries.push_back({row.channel, row.params.amplitude, row.params.visibility,
                             row.params.delta, row.params.delta_k});
    kept.push_back(c);
  }
  if (model.entries.empty())
    throw NumericalError("report: no channel produced a usable beat-curve fit");
  const BeatCurveModelView view{&model};

  // Slowest nonzero fitted beat bounds the least-squares seed scan: half a
  // period each side of the nominal position is free of aliasing.
  double dk_min = std::numeric_limits<double>::infinity();
  for (const auto& e : model.entries)
    if (e.delta_k > 1.0) dk_min = std::min(dk_min, e.delta_k);
  if (!std::isfinite(dk_min))
    throw NumericalError("report: no beating channel available for displacement estimation");
  const double seed_halfwidth = std::numbers::pi / dk_min;

  // Per-scan-point estimation: weighted least-squares seed, then
  // maximum-likelihood refinement within a quarter period of the fastest beat.
  std::vector<double> counts(kept.size()), errs(kept.size());
  for (std::size_t t = 0; t < dataset.dx_mm.size(); ++t) {
    EstimationRow row;
    row.dx_nominal_mm = dataset.dx_mm[t];
    for (std::size_t k = 0; k < kept.size(); ++k) {
      counts[k] = dataset.channels[kept[k]].mean[t];
      errs[k] = std::max(dataset.channels[kept[k]].err[t], 1e-6);
    }
    try {
      const double seed =
          least_squares_seed(counts, errs, model, dataset.dx_mm[t], seed_halfwidth);
      const SearchWindow base = default_search_window(seed, model);
      const double quarter = 0.5 * (base.hi_mm - base.lo_mm) * cfg.mle_window_quarter_periods;
      try {
        row.result =
            estimate_displacement(counts, errs, view, {seed - quarter, seed + quarter},
                                  dataset.n_r);
        row.status = "ok";
      } catch (const NumericalError&) {
        // The channel-independent likelihood tilts the beat comb, so the
        // maximum of the seed's lobe can sit outside the quarter-period
        // window. Climb to the nearest local maximum instead of widening the
        // window into alias lobes.
        const SearchWindow lobe = bracket_local_max(counts, view, seed, quarter);
        row.result = estimate_displacement(counts, errs, view, lobe, dataset.n_r);
        row.status = "ok(local)";
      }
    } catch (const std::exception& e) {
      row.status = std::string("failed:") + e.what();
    }
    out.estimates.push_back(row);
  }

  // Bounds on the same grid (ideal-grid Fisher information, as the model
  // curve of the uncertainty figure).
  FisherConfig fc;
  fc.params = cfg.source;
  fc.delta = cfg.delta_inv_mm();
  fc.grid_half_width = cfg.crb_grid_half_width;
  double n_typical = 0.0;
  for (std::size_t t = 0; t < dataset.dx_mm.size(); ++t)
    n_typical += dataset.total_events_at(t);
  n_typical /= std::max<std::size_t>(dataset.dx_mm.size(), 1);
  const std::uint64_t n_events = std::max<std::uint64_t>(1, std::llround(n_typical));
  out.bounds = crb_curve(dataset.dx_mm, n_events, fc);

  // beat_curves.csv: data plus fitted curve samples.
  {
    const fs::path p = dir / "beat_curves.csv";
    auto f = open_out(p);
    f << "# config_digest=" << cfg.digest() << "\n";
    f << "branch,i,j,dx_mm,mean,err,fit\n";
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const auto& series = dataset.channels[kept[k]];
      const auto& fitrow = out.fits[kept[k]];
      for (std::size_t t = 0; t < dataset.dx_mm.size(); ++t) {
        f << branch_code(series.channel.branch) << ',' << series.channel.i << ','
          << series.channel.j << ',' << fmt(dataset.dx_mm[t]) << ',' << fmt(series.mean[t])
          << ',' << fmt(series.err[t]) << ',' << fmt(fitrow.params.eval(dataset.dx_mm[t]))
          << '\n';
      }
    }
    out.files.push_back(p.string());
  }
  // fits.csv
  {
    const fs::path p = dir / "fits.csv";
    write_fits_csv(p, out.fits, cfg);
    out.files.push_back(p.string());
  }
  // estimation.csv
  {
    const fs::path p = dir / "estimation.csv";
    auto f = open_out(p);
    f << "# config_digest=" << cfg.digest() << "\n";
    f << "dx_mm,dx_ml_mm,dx_err_mm,N,log_likelihood,status\n";
    for (const auto& row : out.estimates) {
      f << fmt(row.dx_nominal_mm) << ',';
      if (row.result) {
        f << fmt(row.result->dx_ml_mm) << ',' << fmt(row.result->dx_err_mm) << ','
          << fmt(row.result->n_total) << ',' << fmt(row.result->log_likelihood_at_max) << ',';
      } else {
        f << "nan,nan,nan,nan,";
      }
      // Commas in error messages would break the row.
      std::string status = row.status;
      std::replace(status.begin(), status.end(), ',', ';');
      std::replace(status.begin(), status.end(), '\n', ' ');
      f << status << '\n';
    }
    out.files.push_back(p.string());
  }
  // uncertainty.csv: sqrt(N)-scaled comparison.
  {
    const fs::path p = dir / "uncertainty.csv";
    auto f = open_out(p);
    f << "# config_digest=" << cfg.digest() << "\n";
    f << "dx_mm,sqrtN_dxexp_mm,sqrtN_crb_mm,sqrtN_qcrb_mm\n";
    for (std::size_t t = 0; t < out.estimates.size(); ++t) {
      const auto& row = out.estimates[t];
      const auto& bound = out.bounds[t];
      const double sqrt_n =
          row.result ? std::sqrt(row.result->n_total) : std::sqrt(static_cast<double>(n_events));
      f << fmt(row.dx_nominal_mm) << ',';
      if (row.result)
        f << fmt(sqrt_n * row.result->dx_err_mm);
      else
        f << "nan";
      f << ',' << fmt(std::sqrt(static_cast<double>(n_events)) * bound.crb_mm) << ','
        << fmt(std::sqrt(static_cast<double>(n_events)) * bound.qcrb_mm) << '\n';
    }
    out.files.push_back(p.string());
  }
  write_manifest(dir, cfg, "report", out.files);
  return out;
}

ScanDataset load_scan_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset file: " + path);
  return read_scan_csv(f);
}

}  // namespace mrhom
