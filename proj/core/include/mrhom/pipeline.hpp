#pragma once
#include <optional>
#include <string>
#include <vector>

#include "mrhom/config.hpp"
#include "mrhom/estimation.hpp"
#include "mrhom/fit.hpp"
#include "mrhom/montecarlo.hpp"

namespace mrhom {

// End-to-end runs behind the CLI subcommands. Every function writes plain
// CSV plus a manifest into out_dir; outputs embed the config digest and are
// byte-identical across re-runs with unchanged inputs.

struct SimulateOutputs {
  ScanDataset dataset;
  std::vector<std::string> files;
};
SimulateOutputs run_simulate(const RunConfig& cfg, const std::string& out_dir);

struct IngestOutputs {
  CoincidenceResult result;
  std::vector<std::string> files;
};
IngestOutputs run_ingest(const RunConfig& cfg, const std::string& timetag_path,
                         const std::string& out_dir);

struct ChannelFitRow {
  Channel channel;
  BeatFitParams params;
  std::string status;  // ok | degenerate | failed:<reason>
};
struct FitOutputs {
  std::vector<ChannelFitRow> fits;
  std::vector<std::string> files;
};
// Fits every channel of the dataset; initial guesses derive from the data
// and the configured geometry.
FitOutputs run_fit(const RunConfig& cfg, const ScanDataset& dataset, const std::string& out_dir);

struct CrbOutputs {
  std::vector<BoundResult> curve;
  std::vector<std::string> files;
};
CrbOutputs run_crb(const RunConfig& cfg, const std::vector<double>& dx_grid,
                   std::uint64_t n_events, const std::string& out_dir);

struct EstimationRow {
  double dx_nominal_mm = 0.0;
  std::optional<EstimationResult> result;
  std::string status;  // ok | failed:<reason>
};
struct ReportOutputs {
  std::vector<ChannelFitRow> fits;
  std::vector<EstimationRow> estimates;
  std::vector<BoundResult> bounds;
  std::vector<std::string> files;
};
// Fits the beat curves, runs the per-scan-point maximum-likelihood
// estimation, and tabulates sqrt(N)-scaled experimental uncertainty next to
// the CRB/qCRB curves.
ReportOutputs run_report(const RunConfig& cfg, const ScanDataset& dataset,
                         const std::string& out_dir);

ScanDataset load_scan_dataset(const std::string& path);

// Data-driven starting point for fit_beat_curve on one channel series.
BeatFitGuess derive_fit_guess(const RunConfig& cfg, const ChannelSeries& series);

// Default MLE search window: +/- one quarter period of the fastest fitted
// beat, centered on the seed displacement.
SearchWindow default_search_window(double seed_dx_mm, const BeatCurveModel& model);

// Weighted least-squares displacement seed: minimizes
// sum((counts - C_fit(dx))/errs)^2 over [center - halfwidth, center + halfwidth].
// Seeds the maximum-likelihood window; throws on a boundary minimizer.
double least_squares_seed(std::span<const double> counts, std::span<const double> errs,
                          const BeatCurveModel& model, double center_mm, double halfwidth_mm);

}  // namespace mrhom
