#include "mrhom/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrhom/sinc.hpp"

namespace mrhom {

namespace {

constexpr int kNp = 4;  // (amplitude, visibility, delta, delta_k)

struct ModelEval {
  double value;
  double jac[kNp];
};

// C(dx) = N (1 + s*V*env(dx)*cos(dk*dx)),  s = branch sign.
ModelEval eval_model(const double* th, double sign, double dx) {
  const double amp = th[0], vis = th[1], delta = th[2], dk = th[3];
  const double u = 0.5 * dx * delta;
  const double si = sinc(u), sp = sinc_prime(u);
  const double env = si * si;
  const double cs = std::cos(dk * dx), sn = std::sin(dk * dx);
  ModelEval e;
  const double beat = env * cs;
  e.value = amp * (1.0 + sign * vis * beat);
  e.jac[0] = 1.0 + sign * vis * beat;
  e.jac[1] = amp * sign * beat;
  // d env / d delta = 2 si si' * (dx/2)
  e.jac[2] = amp * sign * vis * (si * sp * dx) * cs;
  e.jac[3] = amp * sign * vis * env * (-sn * dx);
  return e;
}

// Solves A x = b for a small symmetric system by Gaussian elimination with
// partial pivoting. Returns false if the pivot collapses.
bool solve4(double a[kNp][kNp], double b[kNp], double x[kNp]) {
  int perm[kNp] = {0, 1, 2, 3};
  for (int col = 0; col < kNp; ++col) {
    int piv = col;
    for (int r = col + 1; r < kNp; ++r)
      if (std::abs(a[perm[r]][col]) > std::abs(a[perm[piv]][col])) piv = r;
    std::swap(perm[col], perm[piv]);
    const double p = a[perm[col]][col];
    if (std::abs(p) < 1e-300) return false;
    for (int r = col + 1; r < kNp; ++r) {
      const double f = a[perm[r]][col] / p;
      for (int c = col; c < kNp; ++c) a[perm[r]][c] -= f * a[perm[col]][c];
      b[perm[r]] -= f * b[perm[col]];
    }
  }
  for (int col = kNp - 1; col >= 0; --col) {
    double acc = b[perm[col]];
    for (int c = col + 1; c < kNp; ++c) acc -= a[perm[col]][c] * x[c];
    const double p = a[perm[col]][col];
    if (std::abs(p) < 1e-300) return false;
    x[col] = acc / p;
  }
  return true;
}

bool invert4(const double a_in[kNp][kNp], double inv[kNp][kNp]) {
  for (int col = 0; col < kNp; ++col) {
    double a[kNp][kNp];
    double b[kNp] = {0, 0, 0, 0};
    double x[kNp];
    for (int r = 0; r < kNp; ++r)
      for (int c = 0; c < kNp; ++c) a[r][c] = a_in[r][c];
    b[col] = 1.0;
    if (!solve4(a, b, x)) return false;
    for (int r = 0; r < kNp; ++r) inv[r][col] = x[r];
  }
  return true;
}

double chi2(std::span<const ScanPoint> pts, const std::vector<double>& w, const double* th,
            double sign) {
  double acc = 0.0;
  for (std::size_t t = 0; t < pts.size(); ++t) {
    const double r = eval_model(th, sign, pts[t].dx_mm).value - pts[t].mean;
    acc += w[t] * r * r;
  }
  return acc;
}

struct LmResult {
  double theta[kNp];
  double cost;
  int iterations;
  bool converged;
};

LmResult lm_minimize(std::span<const ScanPoint> pts, const std::vector<double>& w, double sign,
                     const double* start, const BeatFitOptions& opts) {
  LmResult res{};
  double th[kNp];
  std::copy(start, start + kNp, th);
  double lambda = 1e-3;
  double cost = chi2(pts, w, th, sign);
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iterations && !converged; ++it) {
    double jtj[kNp][kNp] = {};
    double jtr[kNp] = {};
    for (std::size_t t = 0; t < pts.size(); ++t) {
      const ModelEval e = eval_model(th, sign, pts[t].dx_mm);
      const double r = e.value - pts[t].mean;
      for (int a = 0; a < kNp; ++a) {
        jtr[a] += w[t] * e.jac[a] * r;
        for (int b = a; b < kNp; ++b) jtj[a][b] += w[t] * e.jac[a] * e.jac[b];
      }
    }
    for (int a = 0; a < kNp; ++a)
      for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];

    // Relative gradient norm against the cost/parameter scale.
    double gnorm = 0.0, pscale = 0.0;
    for (int a = 0; a < kNp; ++a) {
      gnorm = std::max(gnorm, std::abs(jtr[a]) * std::max(std::abs(th[a]), 1e-12));
      pscale = std::max(pscale, std::abs(th[a]));
    }
    if (gnorm <= opts.gradient_tol * std::max(cost, 1e-300)) {
      converged = true;
      break;
    }

    bool stepped = false;
    for (int tries = 0; tries < 32 && !stepped; ++tries) {
      double a[kNp][kNp];
      double b[kNp], dx[kNp];
      for (int r = 0; r < kNp; ++r) {
        for (int c = 0; c < kNp; ++c) a[r][c] = jtj[r][c];
        a[r][r] *= (1.0 + lambda);
        b[r] = -jtr[r];
      }
      if (!solve4(a, b, dx)) {
        lambda *= 10.0;
        continue;
      }
      double trial[kNp];
      for (int p = 0; p < kNp; ++p) trial[p] = th[p] + dx[p];
      // Keep the parameters in their physical box during iteration.
      trial[0] = std::max(trial[0], 1e-12);
      trial[1] = std::clamp(trial[1], 0.0, 1.5);
      trial[2] = std::max(trial[2], 1e-9);
      trial[3] = std::max(trial[3], 0.0);
      const double trial_cost = chi2(pts, w, trial, sign);
      if (trial_cost <= cost) {
        double step_rel = 0.0;
        for (int p = 0; p < kNp; ++p)
          step_rel = std::max(step_rel,
                              std::abs(trial[p] - th[p]) / std::max(std::abs(th[p]), 1e-12));
        std::copy(trial, trial + kNp, th);
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (step_rel < opts.step_tol) converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) {
      // No downhill step available at any damping: a (possibly degenerate)
      // minimum.
      converged = true;
    }
  }
  std::copy(th, th + kNp, res.theta);
  res.cost = cost;
  res.iterations = it;
  res.converged = converged;
  return res;
}

}  // namespace

double BeatFitParams::stderr_of(int param) const {
  const double v = covariance[param][param];
  return v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
}

double BeatFitParams::eval(double dx_mm) const {
  const double th[kNp] = {amplitude, visibility, delta, delta_k};
  return eval_model(th, branch_sign(branch), dx_mm).value;
}

BeatFitParams fit_beat_curve(std::span<const ScanPoint> points, Branch branch,
                             const BeatFitGuess& guess, const BeatFitOptions& opts) {
  if (points.size() < 8)
    throw ValidationError("fit_beat_curve needs at least 8 scan points, got " +
                          std::to_string(points.size()));
  std::vector<double> w(points.size());
  for (std::size_t t = 0; t < points.size(); ++t) {
    if (opts.weighted) {
      if (!(points[t].err > 0.0))
        throw ValidationError("fit_beat_curve: non-positive error at scan point " +
                              std::to_string(t));
      w[t] = 1.0 / (points[t].err * points[t].err);
    } else {
      w[t] = 1.0;
    }
  }
  const double sign = branch_sign(branch);

  // Multi-start around the caller's guess to escape beat-aliasing optima.
  // Jitter factors are fixed, so the fit is deterministic.
  static constexpr double kAmpJit[] = {1.0, 1.0, 0.9, 1.1, 1.0, 1.0, 0.95, 1.05};
  static constexpr double kVisJit[] = {1.0, 0.7, 1.3, 1.0, 0.85, 1.15, 1.0, 1.0};
  static constexpr double kDeltaJit[] = {1.0, 0.8, 1.2, 1.0, 0.9, 1.1, 1.0, 1.0};
  static constexpr double kDkJit[] = {1.0, 1.0, 1.0, 0.95, 1.05, 0.98, 1.02, 0.9};

  LmResult best{};
  best.cost = std::numeric_limits<double>::infinity();
  bool any = false;
  const int starts = std::max(1, std::min(opts.multistarts, 8));
  for (int s = 0; s < starts; ++s) {
    const double start[kNp] = {guess.amplitude * kAmpJit[s],
                               std::clamp(guess.visibility * kVisJit[s], 0.0, 1.0),
                               guess.delta * kDeltaJit[s], guess.delta_k * kDkJit[s]};
    const LmResult r = lm_minimize(points, w, sign, start, opts);
    if (r.converged && r.cost < best.cost) {
      best = r;
      any = true;
    }
  }
  if (!any) throw NumericalError("fit_beat_curve failed to converge from any start");

  BeatFitParams out;
  out.amplitude = best.theta[0];
  out.visibility = best.theta[1];
  out.delta = best.theta[2];
  out.delta_k = best.theta[3];
  out.branch = branch;
  out.residual_norm = std::sqrt(best.cost);
  out.iterations = best.iterations;
  if (out.visibility > 1.0) {
    out.visibility = 1.0;
    out.visibility_clamped = true;
  }

  // Covariance from the undamped normal equations at the optimum.
  double jtj[kNp][kNp] = {};
  for (std::size_t t = 0; t < points.size(); ++t) {
    const ModelEval e = eval_model(best.theta, sign, points[t].dx_mm);
    for (int a = 0; a < kNp; ++a)
      for (int b = a; b < kNp; ++b) jtj[a][b] += w[t] * e.jac[a] * e.jac[b];
  }
  for (int a = 0; a < kNp; ++a)
    for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];
  double inv[kNp][kNp];
  if (invert4(jtj, inv)) {
    for (int a = 0; a < kNp; ++a)
      for (int b = 0; b < kNp; ++b) out.covariance[a][b] = inv[a][b];
  } else {
    out.degenerate = true;
    for (auto& row : out.covariance)
      row.fill(std::numeric_limits<double>::quiet_NaN());
  }
  // With no visible beat the envelope and frequency are unidentifiable.
  if (out.visibility < 1e-3) out.degenerate = true;
  return out;
}

CurveEval BeatCurveModel::eval(std::size_t k, double dx_mm) const {
  const Entry& e = entries[k];
  const double sv = branch_sign(e.channel.branch) * e.visibility;
  const Envelope env = beat_envelope(dx_mm, e.delta);
  const double cs = std::cos(e.delta_k * dx_mm), sn = std::sin(e.delta_k * dx_mm);
  CurveEval out;
  out.value = e.amplitude * (1.0 + sv * env.s * cs);
  out.d1 = e.amplitude * sv * (env.ds * cs - env.s * e.delta_k * sn);
  out.d2 = e.amplitude * sv *
           (env.d2s * cs - 2.0 * env.ds * e.delta_k * sn - env.s * e.delta_k * e.delta_k * cs);
  return out;
}

BeatCurveModel BeatCurveModel::from_fits(std::span<const BeatFitParams> fits,
                                         std::span<const Channel> channels) {
  if (fits.size() != channels.size())
    throw ValidationError("from_fits: fits and channels differ in size");
  BeatCurveModel m;
  m.entries.reserve(fits.size());
  for (std::size_t k = 0; k < fits.size(); ++k)
    m.entries.push_back(
        {channels[k], fits[k].amplitude, fits[k].visibility, fits[k].delta, fits[k].delta_k});
  return m;
}

TableCurveModel::TableCurveModel(SourceParams params, DetectorArray array, double scale)
    : params_(params), array_(std::move(array)), scale_(scale) {
  params_.validate();
  array_.validate();
  if (!(scale_ > 0.0)) throw ValidationError("TableCurveModel scale must be positive");
  const ChannelTable t = channel_table_with_derivs(0.0, params_, array_);
  channels_ = t.channels;
}

void TableCurveModel::eval_all(double dx_mm, std::vector<CurveEval>& out) const {
  const ChannelTable t = channel_table_with_derivs(dx_mm, params_, array_);
  out.resize(t.channels.size());
  const double S = t.sum, S1 = t.dsum, S2 = t.d2sum;
  const double invS = 1.0 / S;
  for (std::size_t k = 0; k < t.channels.size(); ++k) {
    const double p = t.p[k], p1 = t.d1[k], p2 = t.d2[k];
    // q = p/S and its two dx-derivatives.
    const double q = p * invS;
    const double q1 = (p1 - q * S1) * invS;
    const double q2 = (p2 - 2.0 * q1 * S1 - q * S2) * invS;
    out[k] = {scale_ * q, scale_ * q1, scale_ * q2};
  }
}

}  // namespace mrhom
