#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mrhom/estimation.hpp"
#include "mrhom/fit.hpp"
#include "mrhom/montecarlo.hpp"
#include "mrhom/rng.hpp"

using namespace mrhom;

namespace {

std::vector<ScanPoint> sample_curve(double amp, double vis, double delta, double dk,
                                    Branch branch, int n_points, double dx_max, double err) {
  BeatFitParams truth;
  truth.amplitude = amp;
  truth.visibility = vis;
  truth.delta = delta;
  truth.delta_k = dk;
  truth.branch = branch;
  std::vector<ScanPoint> pts(n_points);
  for (int t = 0; t < n_points; ++t) {
    const double dx = dx_max * t / (n_points - 1);
    pts[t] = {dx, truth.eval(dx), err};
  }
  return pts;
}

SimConfig paper_sim(double visibility = 0.3) {
  SimConfig s;
  s.source = SourceParams::from_waist(0.035, visibility);
  s.array = DetectorArray::from_geometry(OpticalGeometry{}, 1.7);
  return s;
}

// Observed channel means aligned with a model's channel list.
std::vector<double> align_counts(const CountMatrix& a, const CountMatrix& b,
                                 const TableCurveModel& model) {
  std::vector<double> counts(model.size());
  for (std::size_t k = 0; k < model.size(); ++k) {
    const Channel c = model.channel_at(k);
    const CountMatrix& m = c.branch == Branch::antibunching ? a : b;
    counts[k] = static_cast<double>(m.at(c.i, c.j));
  }
  return counts;
}

}  // namespace

TEST_CASE("fit_beat_curve: exact recovery on noiseless model data") {
  for (Branch branch : {Branch::antibunching, Branch::bunching}) {
    const auto pts = sample_curve(40.0, 0.3, 1.7, 9.8, branch, 40, 2.0, 1.0);
    BeatFitGuess guess;
    guess.amplitude = 35.0;
    guess.visibility = 0.25;
    guess.delta = 1.5;
    guess.delta_k = 9.5;
    const BeatFitParams fit = fit_beat_curve(pts, branch, guess);
    CHECK(fit.amplitude == doctest::Approx(40.0).epsilon(1e-6));
    CHECK(fit.visibility == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(fit.delta == doctest::Approx(1.7).epsilon(1e-6));
    CHECK(fit.delta_k == doctest::Approx(9.8).epsilon(1e-6));
    CHECK(!fit.degenerate);
    CHECK(fit.residual_norm < 1e-6);
  }
}

TEST_CASE("fit_beat_curve: flat data reports amplitude and the degeneracy flag") {
  std::vector<ScanPoint> pts(20);
  for (int t = 0; t < 20; ++t) pts[t] = {t * 0.1, 25.0, 0.5};
  BeatFitGuess guess;
  guess.amplitude = 20.0;
  guess.visibility = 0.2;
  const BeatFitParams fit = fit_beat_curve(pts, Branch::antibunching, guess);
  CHECK(fit.amplitude == doctest::Approx(25.0).epsilon(1e-3));
  CHECK(fit.visibility < 0.01);
  CHECK(fit.degenerate);
}

TEST_CASE("fit_beat_curve: precondition violations") {
  const auto pts = sample_curve(40.0, 0.3, 1.7, 9.8, Branch::antibunching, 5, 2.0, 1.0);
  CHECK_THROWS_AS(fit_beat_curve(pts, Branch::antibunching, BeatFitGuess{}), ValidationError);
  auto bad = sample_curve(40.0, 0.3, 1.7, 9.8, Branch::antibunching, 12, 2.0, 1.0);
  bad[3].err = 0.0;
  CHECK_THROWS_AS(fit_beat_curve(bad, Branch::antibunching, BeatFitGuess{}), ValidationError);
}

TEST_CASE("fit_beat_curve: noisy data recovers parameters within 3 standard errors") {
  // Gaussian noise at the paper's count scale; coverage over seeded trials.
  Xoshiro256pp rng(2024);
  const double amp = 40.0, vis = 0.3, delta = 1.7, dk = 9.8;
  int covered[3] = {0, 0, 0};
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    auto pts = sample_curve(amp, vis, delta, dk, Branch::antibunching, 40, 2.0, 1.0);
    for (auto& p : pts) {
      // Box-Muller normal deviate.
      const double u1 = rng.uniform01(), u2 = rng.uniform01();
      const double z = std::sqrt(-2.0 * std::log(u1 + 1e-300)) *
                       std::cos(2.0 * std::numbers::pi * u2);
      const double sigma = std::sqrt(std::max(p.mean, 1.0)) / std::sqrt(10.0);
      p.mean += sigma * z;
      p.err = sigma;
    }
    BeatFitGuess guess;
    guess.amplitude = 38.0;
    guess.visibility = 0.28;
    guess.delta = 1.6;
    guess.delta_k = 9.6;
    const BeatFitParams fit = fit_beat_curve(pts, Branch::antibunching, guess);
    const double truth[3] = {vis, delta, dk};
    const double est[3] = {fit.visibility, fit.delta, fit.delta_k};
    for (int p = 0; p < 3; ++p) {
      const double se = fit.stderr_of(p + 1);
      if (se > 0.0 && std::abs(est[p] - truth[p]) <= 3.0 * se) ++covered[p];
    }
  }
  for (int p = 0; p < 3; ++p) CHECK(covered[p] >= static_cast<int>(0.9 * trials));
}

TEST_CASE("log_likelihood: trivial values and error paths") {
  BeatCurveModel model;
  model.entries.push_back({{Branch::antibunching, 2, 5}, 40.0, 0.3, 1.7, 29.6});
  const BeatCurveModelView view{&model};

  const double zero[] = {0.0};
  CHECK(log_likelihood(0.5, zero, view).value == 0.0);

  const double one[] = {1.0};
  const double expected = std::log(model.eval(0, 0.5).value);
  CHECK(log_likelihood(0.5, one, view).value == doctest::Approx(expected));

  // Nonpositive model value: amplitude 0 is invalid input to the log.
  BeatCurveModel bad;
  bad.entries.push_back({{Branch::antibunching, 2, 5}, 0.0, 0.3, 1.7, 29.6});
  const BeatCurveModelView bad_view{&bad};
  CHECK_THROWS_AS(log_likelihood(0.5, one, bad_view), NumericalError);

  const double two_counts[] = {1.0, 2.0};
  CHECK_THROWS_AS(log_likelihood(0.5, two_counts, view), ValidationError);
}

TEST_CASE("log_likelihood derivatives match finite differences") {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1000.0);
  const TableCurveModelView view{&model};
  const auto [a, b] = sample_counts(0.5, 20000, sim, 3);
  const std::vector<double> counts = align_counts(a, b, model);

  const double h = 1e-6;
  for (double dx : {0.35, 0.5, 0.72}) {
    const LogLikelihood l = log_likelihood(dx, counts, view);
    const double fp = log_likelihood(dx + h, counts, view).value;
    const double fm = log_likelihood(dx - h, counts, view).value;
    CHECK(l.d1 == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    CHECK(l.d2 == doctest::Approx((fp - 2 * l.value + fm) / (h * h)).epsilon(1e-3));
  }
}

TEST_CASE("mle_estimate: exact expected counts maximize the likelihood at the truth") {
  // With counts equal to their conditional expectation, the Eq.-(6) score
  // vanishes exactly at the generating displacement (Gibbs' inequality), so
  // the maximizer must hit it to refinement tolerance -- including with the
  // default masks in place.
  const SimConfig sim = paper_sim();
  const double dx_true = 0.5;
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};

  std::vector<CurveEval> at_truth;
  model.eval_all(dx_true, at_truth);
  std::vector<double> counts(at_truth.size());
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] = 1e5 * at_truth[k].value;

  const double est = mle_estimate(counts, view, {0.45, 0.55});
  CHECK(std::abs(est - dx_true) < 2e-6);
}

TEST_CASE("mle_estimate: window excluding the truth raises a boundary error") {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};
  std::vector<CurveEval> at_truth;
  model.eval_all(0.5, at_truth);
  std::vector<double> counts(at_truth.size());
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] = 1e5 * at_truth[k].value;
  CHECK_THROWS_AS(mle_estimate(counts, view, {0.55, 0.65}), NumericalError);
  CHECK_THROWS_AS(mle_estimate(counts, view, {0.55, 0.55}), ValidationError);
}

TEST_CASE("mle_estimate: consistency on sampled data at N = 1e6") {
  // Unmasked array: every pair keeps both branches.
  SimConfig sim = paper_sim();
  sim.array.bunching_mask.clear();
  const double dx_true = 0.5;
  const std::uint64_t n = 1000000;
  const TableCurveModel model(sim.source, sim.array, static_cast<double>(n));
  const TableCurveModelView view{&model};

  const auto [a, b] = sample_counts(dx_true, n, sim, 11);
  const std::vector<double> counts = align_counts(a, b, model);
  const double est = mle_estimate(counts, view, {0.2, 0.9});

  const double fisher = fisher_information_restricted(dx_true, sim.source, sim.array);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(n) * fisher);
  CHECK(std::abs(est - dx_true) < 5.0 * sigma);
}

TEST_CASE("estimator parity: mirrored data produce the mirrored likelihood") {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1000.0);
  const TableCurveModelView view{&model};
  const auto [a, b] = sample_counts(0.4, 30000, sim, 17);
  const std::vector<double> counts = align_counts(a, b, model);
  for (double dx : {0.1, 0.4, 0.8}) {
    CHECK(log_likelihood(dx, counts, view).value ==
          doctest::Approx(log_likelihood(-dx, counts, view).value).epsilon(1e-12));
  }
}

TEST_CASE("mle_uncertainty: homogeneity under count scaling") {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};

  std::vector<CurveEval> at_truth;
  model.eval_all(0.5, at_truth);
  std::vector<double> counts(at_truth.size()), errs(at_truth.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    counts[k] = 1e5 * at_truth[k].value;
    errs[k] = std::sqrt(std::max(counts[k], 1e-12));
  }
  const double dx_ml = mle_estimate(counts, view, {0.45, 0.55});
  const MleUncertainty u1 = mle_uncertainty(counts, errs, view, dx_ml, {0.45, 0.55});

  // Doubling counts (errors scale by sqrt(2)): sensitivities halve and the
  // propagated uncertainty scales by 1/sqrt(2).
  std::vector<double> counts2(counts), errs2(errs);
  for (auto& c : counts2) c *= 2.0;
  for (auto& e : errs2) e *= std::sqrt(2.0);
  const MleUncertainty u2 = mle_uncertainty(counts2, errs2, view, dx_ml, {0.45, 0.55});
  for (std::size_t k = 0; k < counts.size(); ++k)
    CHECK(u2.sensitivities[k] == doctest::Approx(0.5 * u1.sensitivities[k]).epsilon(1e-9));
  CHECK(u2.dx_err_mm == doctest::Approx(u1.dx_err_mm / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("mle_uncertainty: diagnostics reject bad inputs") {
  const SimConfig sim = paper_sim();
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};
  std::vector<CurveEval> at_truth;
  model.eval_all(0.5, at_truth);
  std::vector<double> counts(at_truth.size()), errs(at_truth.size(), 1.0);
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] = 1e4 * at_truth[k].value;

  // Off-stationary point.
  CHECK_THROWS_AS(mle_uncertainty(counts, errs, view, 0.48, {0.45, 0.55}), NumericalError);

  // Flat model (V = 0): no curvature anywhere.
  BeatCurveModel flat;
  flat.entries.push_back({{Branch::antibunching, 2, 5}, 40.0, 0.0, 1.7, 29.6});
  const BeatCurveModelView flat_view{&flat};
  const double c1[] = {40.0};
  const double e1[] = {2.0};
  CHECK_THROWS_AS(mle_uncertainty(c1, e1, flat_view, 0.5, {0.45, 0.55}), NumericalError);
}

TEST_CASE("MLE consistency and efficiency across N = 1e3, 1e4, 1e5") {
  // Variance * N * F -> 1 within 15%, bias shrinking, on the masked paper
  // array with conditional model curves.
  const SimConfig sim = paper_sim();
  const double dx_true = 0.5;
  const double fisher = fisher_information_restricted(dx_true, sim.source, sim.array);
  const TableCurveModel model(sim.source, sim.array, 1.0);
  const TableCurveModelView view{&model};
  const SearchWindow window{0.45, 0.55};

  const int datasets = 200;
  for (const std::uint64_t n : {1000ull, 10000ull, 100000ull}) {
    double sum = 0.0, sum2 = 0.0;
    for (int d = 0; d < datasets; ++d) {
      const auto [a, b] = sample_counts(dx_true, n, sim, 7000 + 13 * d + n);
      std::vector<double> counts(model.size());
      for (std::size_t k = 0; k < model.size(); ++k) {
        const Channel c = model.channel_at(k);
        const CountMatrix& m = c.branch == Branch::antibunching ? a : b;
        counts[k] = static_cast<double>(m.at(c.i, c.j));
      }
      const double est = mle_estimate(counts, view, window);
      sum += est;
      sum2 += est * est;
    }
    const double mean = sum / datasets;
    const double var = sum2 / datasets - mean * mean;
    const double expected_var = 1.0 / (static_cast<double>(n) * fisher);
    CHECK(std::abs(var / expected_var - 1.0) < 0.15);
    // Bias below a few standard errors of the mean.
    CHECK(std::abs(mean - dx_true) < 5.0 * std::sqrt(expected_var / datasets) + 1e-5);
  }
}
