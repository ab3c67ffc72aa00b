#pragma once
// Template implementations for the likelihood machinery declared in fit.hpp.

#include <algorithm>
#include <cmath>
#include <string>

#include "mrhom/errors.hpp"

namespace mrhom {

template <ChannelCurveModel M>
LogLikelihood log_likelihood(double dx_mm, std::span<const double> counts, const M& model) {
  if (counts.size() != model.size())
    throw ValidationError("log_likelihood: counts and model channel sets differ in size");
  thread_local std::vector<CurveEval> evals;
  model.eval_batch(dx_mm, evals);
  LogLikelihood out{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double c = counts[k];
    if (c == 0.0) continue;
    const double v = evals[k].value;
    if (!(v > 0.0))
      throw NumericalError("log_likelihood: model value for channel " + std::to_string(k) +
                           " is not positive at dx = " + std::to_string(dx_mm) + " mm");
    const double r1 = evals[k].d1 / v;
    out.value += c * std::log(v);
    out.d1 += c * r1;
    out.d2 += c * (evals[k].d2 / v - r1 * r1);
  }
  return out;
}

template <ChannelCurveModel M>
double mle_estimate(std::span<const double> counts, const M& model, const SearchWindow& window,
                    const MleOptions& opts) {
  if (!(window.hi_mm > window.lo_mm)) throw ValidationError("mle window is empty");
  const int n = std::max(opts.grid_points, 8);
  // Coarse scan.
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  const double step = (window.hi_mm - window.lo_mm) / (n - 1);
  for (int t = 0; t < n; ++t) {
    const double x = window.lo_mm + t * step;
    const double val = log_likelihood(x, counts, model).value;
    if (val > best_val) {
      best_val = val;
      best = t;
    }
  }
  if (best == 0 || best == n - 1)
    throw NumericalError("mle_estimate: likelihood maximized on the window boundary (" +
                         std::to_string(window.lo_mm + best * step) +
                         " mm); widen or recenter the search window");
  // Golden-section refinement inside the bracketing neighbours.
  double a = window.lo_mm + (best - 1) * step;
  double b = window.lo_mm + (best + 1) * step;
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = log_likelihood(x1, counts, model).value;
  double f2 = log_likelihood(x2, counts, model).value;
  while (b - a > opts.refine_tol_mm) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = log_likelihood(x2, counts, model).value;
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = log_likelihood(x1, counts, model).value;
    }
  }
  // Newton polish on the analytic score drives the gradient to machine
  // precision, so the stationarity precondition downstream is meaningful.
  double x = 0.5 * (a + b);
  for (int it = 0; it < 12; ++it) {
    const LogLikelihood l = log_likelihood(x, counts, model);
    if (!(l.d2 < 0.0)) break;
    const double delta_x = l.d1 / l.d2;
    const double next = std::clamp(x - delta_x, a, b);
    const bool done = std::abs(next - x) < 1e-15 * std::max(std::abs(x), 1.0);
    x = next;
    if (done) break;
  }
  return x;
}

template <ChannelCurveModel M>
MleUncertainty mle_uncertainty(std::span<const double> counts,
                               std::span<const double> count_errs, const M& model, double dx_ml_mm,
                               const SearchWindow& window) {
  if (count_errs.size() != counts.size())
    throw ValidationError("mle_uncertainty: counts and errors differ in size");
  // Stationarity is judged against the typical gradient magnitude over the window.
  double typical = 0.0;
  for (int t = 0; t <= 32; ++t) {
    const double x = window.lo_mm + (window.hi_mm - window.lo_mm) * t / 32.0;
    typical = std::max(typical, std::abs(log_likelihood(x, counts, model).d1));
  }
  const LogLikelihood at_max = log_likelihood(dx_ml_mm, counts, model);
  if (typical > 0.0 && std::abs(at_max.d1) > 1e-6 * typical)
    throw NumericalError("mle_uncertainty: dx_ml is not a stationary point (|dL/ddx| = " +
                         std::to_string(std::abs(at_max.d1)) + ", typical " +
                         std::to_string(typical) + ")");
  if (!(at_max.d2 < 0.0))
    throw NumericalError("mle_uncertainty: non-negative curvature at dx_ml (flat or degenerate "
                         "likelihood)");

  thread_local std::vector<CurveEval> evals;
  model.eval_batch(dx_ml_mm, evals);
  MleUncertainty out;
  out.curvature = at_max.d2;
  out.sensitivities.resize(counts.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double v = evals[k].value;
    if (!(v > 0.0))
      throw NumericalError("mle_uncertainty: model value not positive at the maximum");
    const double s = -(evals[k].d1 / v) / at_max.d2;
    out.sensitivities[k] = s;
    const double term = s * count_errs[k];
    acc += term * term;
  }
  out.dx_err_mm = std::sqrt(acc);
  return out;
}

template <ChannelCurveModel M>
EstimationResult estimate_displacement(std::span<const double> counts,
                                       std::span<const double> count_errs, const M& model,
                                       const SearchWindow& window, int n_r,
                                       const MleOptions& opts) {
  EstimationResult res;
  res.search_window = window;
  res.dx_ml_mm = mle_estimate(counts, model, window, opts);
  const MleUncertainty unc = mle_uncertainty(counts, count_errs, model, res.dx_ml_mm, window);
  res.dx_err_mm = unc.dx_err_mm;
  res.per_channel_sensitivities = unc.sensitivities;
  res.log_likelihood_at_max = log_likelihood(res.dx_ml_mm, counts, model).value;
  double total = 0.0;
  for (double c : counts) total += c;
  res.n_total = n_r * total;
  return res;
}

}  // namespace mrhom
