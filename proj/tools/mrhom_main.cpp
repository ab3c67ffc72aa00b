// mrhom: simulator and estimation toolkit for transverse-momentum-resolved
// Hong-Ou-Mandel interferometry.
//
// Subcommands: simulate, ingest, fit, crb, report.
// Exit codes: 0 ok, 1 validation, 2 I/O, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrhom/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> events;
  std::optional<int> repeats;
  std::optional<std::string> grid;
  bool exact_integral = false;
  std::optional<std::string> delta_mode;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file (flat dotted keys)");
  cmd->add_option("--out", args.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", args.seed, "Override seed");
  cmd->add_option("--events", args.events, "Override events per repeat");
  cmd->add_option("--repeats", args.repeats, "Override number of repeats");
  cmd->add_option("--grid", args.grid, "Override scan grid, start:stop:step (mm)");
  cmd->add_flag("--exact-integral", args.exact_integral,
                "Use the exact pixel integral instead of the sinc approximation");
  cmd->add_option("--delta-mode", args.delta_mode,
                  "Momentum sensitivity source: geometric or fitted")
      ->check(CLI::IsMember({"geometric", "fitted"}));
}

mrhom::RunConfig make_config(const CommonArgs& args) {
  mrhom::RunConfig cfg;
  if (!args.config_path.empty()) cfg = mrhom::RunConfig::from_file(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.events) cfg.events_per_repeat = *args.events;
  if (args.repeats) cfg.repeats = *args.repeats;
  if (args.grid) cfg.scan = mrhom::ScanGrid::parse(*args.grid);
  if (args.exact_integral) cfg.use_exact_integral = true;
  if (args.delta_mode) cfg.delta_mode = mrhom::delta_mode_from_name(*args.delta_mode);
  return cfg;
}

void warn_coverage(const mrhom::RunConfig& cfg) {
  const auto array = cfg.make_array();
  if (array.k_abs_max() < 3.0 * cfg.source.sigma_k_inv_mm())
    std::cerr << "warning: detector array spans " << array.k_abs_max()
              << " mm^-1 < 3 sigma_k = " << 3.0 * cfg.source.sigma_k_inv_mm()
              << " mm^-1; the momentum distribution is only partially covered\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Momentum-resolved Hong-Ou-Mandel simulation and estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs sim_args, ingest_args, fit_args, crb_args, report_args;
  std::string ingest_file, fit_dataset, report_dataset;
  std::uint64_t crb_events = 10000;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic coincidence scan dataset");
  add_common(sim, sim_args);
  sim->add_flag("--emit-timetags", "Also write per-repeat time-tag files");

  auto* ingest = app.add_subcommand("ingest", "Build coincidence matrices from a time-tag file");
  add_common(ingest, ingest_args);
  ingest->add_option("timetags", ingest_file, "Time-tag file (binary MRHT or CSV)")->required();

  auto* fit = app.add_subcommand("fit", "Fit beat curves to a scan dataset");
  add_common(fit, fit_args);
  fit->add_option("dataset", fit_dataset, "scan.csv produced by simulate")->required();

  auto* crb = app.add_subcommand("crb", "Tabulate the Cramer-Rao bound curve");
  add_common(crb, crb_args);
  crb->add_option("--crb-events", crb_events, "Event count N for the bounds")
      ->capture_default_str();

  auto* report = app.add_subcommand("report", "Fits, ML estimation and uncertainty comparison");
  add_common(report, report_args);
  report->add_option("dataset", report_dataset, "scan.csv produced by simulate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      auto cfg = make_config(sim_args);
      if (sim->count("--emit-timetags") > 0) cfg.emit_timetags = true;
      warn_coverage(cfg);
      const auto out = mrhom::run_simulate(cfg, sim_args.out_dir);
      std::cout << "simulate: " << out.dataset.dx_mm.size() << " scan points, "
                << out.dataset.channels.size() << " channels -> " << sim_args.out_dir
                << " (digest " << cfg.digest() << ")\n";
    } else if (ingest->parsed()) {
      const auto cfg = make_config(ingest_args);
      const auto out = mrhom::run_ingest(cfg, ingest_file, ingest_args.out_dir);
      std::cout << "ingest: " << out.result.classified_pairs << " classified, "
                << out.result.masked_dropped << " masked, " << out.result.ignored_pairs
                << " ignored -> " << ingest_args.out_dir << "\n";
    } else if (fit->parsed()) {
      const auto cfg = make_config(fit_args);
      const auto ds = mrhom::load_scan_dataset(fit_dataset);
      const auto out = mrhom::run_fit(cfg, ds, fit_args.out_dir);
      std::size_t ok = 0;
      for (const auto& r : out.fits) ok += r.status == "ok";
      std::cout << "fit: " << ok << "/" << out.fits.size() << " channels ok -> "
                << fit_args.out_dir << "\n";
    } else if (crb->parsed()) {
      const auto cfg = make_config(crb_args);
      const auto out = mrhom::run_crb(cfg, cfg.scan.points(), crb_events, crb_args.out_dir);
      std::cout << "crb: " << out.curve.size() << " grid points -> " << crb_args.out_dir << "\n";
    } else if (report->parsed()) {
      const auto cfg = make_config(report_args);
      const auto ds = mrhom::load_scan_dataset(report_dataset);
      const auto out = mrhom::run_report(cfg, ds, report_args.out_dir);
      std::size_t ok = 0;
      for (const auto& r : out.estimates) ok += r.status.rfind("ok", 0) == 0;
      std::cout << "report: " << ok << "/" << out.estimates.size()
                << " scan points estimated -> " << report_args.out_dir << "\n";
    }
  } catch (const mrhom::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mrhom::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mrhom::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
