#pragma once
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrhom/model.hpp"

namespace mrhom {

// One scan sample of a channel: displacement, mean counts, standard error.
struct ScanPoint {
  double dx_mm;
  double mean;
  double err;
};

struct BeatFitGuess {
  double amplitude = 1.0;
  double visibility = 0.3;
  double delta = 1.7;    // mm^-1
  double delta_k = 9.8;  // mm^-1
};

// Fit result for C_fit(dx) = amplitude * (1 -/+ visibility * sinc^2(dx*delta/2)
// * cos(delta_k*dx)), minus for antibunching.
struct BeatFitParams {
  double amplitude = 0.0;
  double visibility = 0.0;
  double delta = 0.0;
  double delta_k = 0.0;
  Branch branch = Branch::antibunching;
  std::array<std::array<double, 4>, 4> covariance{};  // (N, V, delta, delta_k)
  double residual_norm = 0.0;                         // sqrt(sum of weighted squares)
  int iterations = 0;
  bool visibility_clamped = false;  // optimizer left [0, 1], value clamped
  bool degenerate = false;          // V ~ 0 leaves delta/delta_k unidentified

  double stderr_of(int param) const;  // sqrt of covariance diagonal
  double eval(double dx_mm) const;
};

struct BeatFitOptions {
  int max_iterations = 200;
  double step_tol = 1e-10;      // relative step-norm convergence threshold
  double gradient_tol = 1e-10;  // relative gradient-norm convergence threshold
  int multistarts = 8;          // jittered restarts around the initial guess
  bool weighted = true;         // 1/err^2 weights (unweighted mode for diagnostics)
};

// Weighted nonlinear least squares by damped Gauss-Newton with the analytic
// Jacobian. Throws NumericalError on non-convergence; a rank-deficient
// solution (visibility ~ 0) is reported through the `degenerate` flag.
BeatFitParams fit_beat_curve(std::span<const ScanPoint> points, Branch branch,
                             const BeatFitGuess& guess, const BeatFitOptions& opts = {});

// --- likelihood machinery --------------------------------------------------

struct CurveEval {
  double value;
  double d1;
  double d2;
};

// Eq.-(5)-family channel curves (typically the per-channel regression output).
struct BeatCurveModel {
  struct Entry {
    Channel channel;
    double amplitude, visibility, delta, delta_k;
  };
  std::vector<Entry> entries;

  std::size_t size() const { return entries.size(); }
  Channel channel_at(std::size_t k) const { return entries[k].channel; }
  CurveEval eval(std::size_t k, double dx_mm) const;
  static BeatCurveModel from_fits(std::span<const BeatFitParams> fits,
                                  std::span<const Channel> channels);
};

// Conditional channel means of the sinc pixel model: scale * p_ch(dx)/S(dx)
// over the unmasked channels of a physical array. This is the exact
// data-generating curve family for multinomial scans, so the MLE built on it
// is consistent.
class TableCurveModel {
 public:
  TableCurveModel(SourceParams params, DetectorArray array, double scale);

  std::size_t size() const { return channels_.size(); }
  Channel channel_at(std::size_t k) const { return channels_[k]; }
  // Evaluates all channels at once (the per-dx table is shared work).
  void eval_all(double dx_mm, std::vector<CurveEval>& out) const;

 private:
  SourceParams params_;
  DetectorArray array_;
  double scale_;
  std::vector<Channel> channels_;
};

// Generic per-channel model view used by the likelihood: channel identities
// plus batch evaluation at one dx.
template <typename M>
concept ChannelCurveModel = requires(const M& m, double dx, std::vector<CurveEval>& out) {
  { m.size() } -> std::convertible_to<std::size_t>;
  { m.channel_at(std::size_t{0}) } -> std::convertible_to<Channel>;
  m.eval_batch(dx, out);
};

// Adapters giving BeatCurveModel / TableCurveModel the batch interface.
struct BeatCurveModelView {
  const BeatCurveModel* model;
  std::size_t size() const { return model->size(); }
  Channel channel_at(std::size_t k) const { return model->channel_at(k); }
  void eval_batch(double dx, std::vector<CurveEval>& out) const {
    out.resize(model->size());
    for (std::size_t k = 0; k < model->size(); ++k) out[k] = model->eval(k, dx);
  }
};
struct TableCurveModelView {
  const TableCurveModel* model;
  std::size_t size() const { return model->size(); }
  Channel channel_at(std::size_t k) const { return model->channel_at(k); }
  void eval_batch(double dx, std::vector<CurveEval>& out) const { model->eval_all(dx, out); }
};

// Log-likelihood L(dx) = sum_ch counts_ch * ln C_fit_ch(dx) with its first
// two dx-derivatives. Throws NumericalError if any model value with nonzero
// count is not positive.
struct LogLikelihood {
  double value;
  double d1;
  double d2;
};
template <ChannelCurveModel M>
LogLikelihood log_likelihood(double dx_mm, std::span<const double> counts, const M& model);

struct SearchWindow {
  double lo_mm;
  double hi_mm;
};

struct MleOptions {
  int grid_points = 512;        // coarse scan resolution over the window
  double refine_tol_mm = 1e-6;  // golden-section refinement tolerance
};

// Maximizes the log-likelihood over the window: coarse grid scan followed by
// golden-section refinement. A maximizer on the window boundary raises
// NumericalError (mis-set window or sign ambiguity).
template <ChannelCurveModel M>
double mle_estimate(std::span<const double> counts, const M& model, const SearchWindow& window,
                    const MleOptions& opts = {});

struct MleUncertainty {
  double dx_err_mm = 0.0;
  std::vector<double> sensitivities;  // d(dx_ML)/dC per channel
  double curvature = 0.0;             // d2L/ddx2 at the maximum
};

// Error propagation through the stationarity condition:
//   d(dx_ML)/dC_ch = -(ln C_fit_ch)'(dx_ML) / L''(dx_ML),
//   dx_err = sqrt(sum (d(dx_ML)/dC_ch * count_errs_ch)^2).
// Requires an interior stationary point with negative curvature.
template <ChannelCurveModel M>
MleUncertainty mle_uncertainty(std::span<const double> counts,
                               std::span<const double> count_errs, const M& model, double dx_ml_mm,
                               const SearchWindow& window);

struct EstimationResult {
  double dx_ml_mm = 0.0;
  double dx_err_mm = 0.0;
  double n_total = 0.0;  // n_r * sum of channel mean counts
  double log_likelihood_at_max = 0.0;
  SearchWindow search_window{};
  std::vector<double> per_channel_sensitivities;
};

// Convenience wrapper running estimate + uncertainty and assembling the result.
template <ChannelCurveModel M>
EstimationResult estimate_displacement(std::span<const double> counts,
                                       std::span<const double> count_errs, const M& model,
                                       const SearchWindow& window, int n_r,
                                       const MleOptions& opts = {});

}  // namespace mrhom

#include "mrhom/fit_impl.hpp"
