#include <benchmark/benchmark.h>

#include <vector>

#include "mrhom/estimation.hpp"
#include "mrhom/fit.hpp"
#include "mrhom/montecarlo.hpp"

using namespace mrhom;

namespace {

SimConfig paper_sim() {
  SimConfig s;
  s.source = SourceParams::from_waist(0.035, 0.3);
  s.array = DetectorArray::from_geometry(OpticalGeometry{}, 1.7);
  return s;
}

void BM_ProbabilityTable(benchmark::State& state) {
  const SimConfig sim = paper_sim();
  for (auto _ : state) {
    benchmark::DoNotOptimize(probability_table(0.5, sim.source, sim.array));
  }
}
BENCHMARK(BM_ProbabilityTable);

void BM_PixelExactQuadrature(benchmark::State& state) {
  const SimConfig sim = paper_sim();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        joint_prob_pixel_exact(Branch::antibunching, 2, 5, 0.5, sim.source, sim.array));
  }
}
BENCHMARK(BM_PixelExactQuadrature);

void BM_FisherInformationIdealGrid(benchmark::State& state) {
  FisherConfig cfg;
  cfg.params = SourceParams::from_waist(0.035, 0.3);
  cfg.delta = 1.7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fisher_information(0.5, cfg));
  }
}
BENCHMARK(BM_FisherInformationIdealGrid);

void BM_SampleCounts(benchmark::State& state) {
  const SimConfig sim = paper_sim();
  const std::uint64_t n = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_counts(0.5, n, sim, 42));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SampleCounts)->Arg(10000)->Arg(100000);

void BM_CoincidenceMatrices(benchmark::State& state) {
  const SimConfig sim = paper_sim();
  const auto [a, b] = sample_counts(0.5, 50000, sim, 7);
  CoincidenceWindows w;
  // Strip the unrepresentable same-pixel antibunching counts.
  CountMatrix a2 = a;
  for (int i = 0; i < a2.n_pixels; ++i) a2.at(i, i) = 0;
  const auto records = synth_timetags(a2, b, w, 3);
  const DetectorArray array = sim.array;
  for (auto _ : state) {
    benchmark::DoNotOptimize(coincidence_matrices(records, w, array));
  }
  state.SetItemsProcessed(state.iterations() * records.size());
}
BENCHMARK(BM_CoincidenceMatrices);

void BM_FitBeatCurve(benchmark::State& state) {
  BeatFitParams truth;
  truth.amplitude = 40.0;
  truth.visibility = 0.3;
  truth.delta = 1.7;
  truth.delta_k = 9.8;
  truth.branch = Branch::antibunching;
  std::vector<ScanPoint> pts(40);
  for (int t = 0; t < 40; ++t) {
    const double dx = 2.0 * t / 39.0;
    pts[t] = {dx, truth.eval(dx), 1.0};
  }
  BeatFitGuess guess;
  guess.amplitude = 35.0;
  guess.visibility = 0.25;
  guess.delta = 1.5;
  guess.delta_k = 9.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_beat_curve(pts, Branch::antibunching, guess));
  }
}
BENCHMARK(BM_FitBeatCurve);

void BM_MleEstimate(benchmark::State& state) {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};
  std::vector<CurveEval> at_truth;
  model.eval_all(0.5, at_truth);
  std::vector<double> counts(at_truth.size());
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] = 1e5 * at_truth[k].value;
  const SearchWindow window{0.45, 0.55};
  for (auto _ : state) {
    benchmark::DoNotOptimize(mle_estimate(counts, view, window));
  }
}
BENCHMARK(BM_MleEstimate);

}  // namespace

BENCHMARK_MAIN();
