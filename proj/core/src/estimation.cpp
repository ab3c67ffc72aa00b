#include "mrhom/estimation.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mrhom/sinc.hpp"

namespace mrhom {

void FisherConfig::validate() const {
  params.validate();
  if (!(delta > 0.0)) throw ValidationError("fisher grid delta must be positive");
  if (grid_half_width < 1) throw ValidationError("grid_half_width must be >= 1");
  if (derivative_step_mm < 0.0) throw ValidationError("derivative_step must be positive");
}

double quantum_fisher_information(const SourceParams& params) {
  return 1.0 / (2.0 * params.sigma_x_mm * params.sigma_x_mm);
}

namespace {

// Accumulates (dP)^2 / P with the removable-singularity rule for P = 0.
double fisher_term(double p, double dp, double dx_mm) {
  if (p <= 0.0) {
    if (dp == 0.0) return 0.0;
    throw NumericalError("singular channel in Fisher sum (P = 0, dP != 0) at dx = " +
                         std::to_string(dx_mm) + " mm");
  }
  return dp * dp / p;
}

template <typename DerivFn>
double fisher_grid_sum(double dx_mm, const FisherConfig& cfg, DerivFn&& dprob) {
  cfg.validate();
  if (!std::isfinite(dx_mm)) throw ValidationError("dx must be finite");
  const int g = cfg.grid_half_width;
  const double delta = cfg.delta;
  const double v = cfg.params.visibility;
  const int npts = 2 * g + 1;
  std::vector<double> f(npts);
  for (int n = -g; n <= g; ++n) f[n + g] = momentum_pdf(n * delta, cfg.params);

  const Envelope env = beat_envelope(dx_mm, delta);
  double total = 0.0;
  for (int n = -g; n <= g; ++n) {
    for (int m = -g; m <= g; ++m) {
      const double c = f[n + g] * f[m + g] * delta * delta;
      const double dk = (n - m) * delta;
      const double cs = std::cos(dk * dx_mm), sn = std::sin(dk * dx_mm);
      const double good = env.s * cs;
      const double dgood = env.ds * cs - env.s * dk * sn;
      for (double sign : {-1.0, +1.0}) {
        const double p = 0.5 * c * (1.0 + sign * v * good);
        const double dp = dprob(c, sign, good, dgood, dk);
        total += fisher_term(p, dp, dx_mm);
      }
    }
  }
  return total;
}

}  // namespace

double fisher_information(double dx_mm, const FisherConfig& cfg) {
  return fisher_grid_sum(dx_mm, cfg,
                         [&](double c, double sign, double /*good*/, double dgood,
                             double /*dk*/) { return 0.5 * c * sign * cfg.params.visibility * dgood; });
}

double fisher_information_fd(double dx_mm, const FisherConfig& cfg) {
  cfg.validate();
  const double h = cfg.fd_step();
  const double delta = cfg.delta;
  const double v = cfg.params.visibility;
  const int g = cfg.grid_half_width;
  std::vector<double> f(2 * g + 1);
  for (int n = -g; n <= g; ++n) f[n + g] = momentum_pdf(n * delta, cfg.params);

  auto prob = [&](double c, double sign, double dk, double x) {
    const Envelope e = beat_envelope(x, delta);
    return 0.5 * c * (1.0 + sign * v * e.s * std::cos(dk * x));
  };
  const Envelope env = beat_envelope(dx_mm, delta);
  double total = 0.0;
  for (int n = -g; n <= g; ++n)
    for (int m = -g; m <= g; ++m) {
      const double c = f[n + g] * f[m + g] * delta * delta;
      const double dk = (n - m) * delta;
      for (double sign : {-1.0, +1.0}) {
        const double p = 0.5 * c * (1.0 + sign * v * env.s * std::cos(dk * dx_mm));
        const double dp = (prob(c, sign, dk, dx_mm + h) - prob(c, sign, dk, dx_mm - h)) / (2.0 * h);
        total += fisher_term(p, dp, dx_mm);
      }
    }
  return total;
}

double fisher_information_restricted(double dx_mm, const SourceParams& params,
                                     const DetectorArray& array) {
  if (!std::isfinite(dx_mm)) throw ValidationError("dx must be finite");
  const ChannelTable t = channel_table_with_derivs(dx_mm, params, array);
  if (!(t.sum > 0.0)) throw NumericalError("restricted Fisher information: empty table");
  // Conditional distribution q = p/S:  F = (1/S) sum (dp - p S'/S)^2 / p.
  const double ratio = t.dsum / t.sum;
  double total = 0.0;
  for (std::size_t k = 0; k < t.p.size(); ++k) {
    const double centered = t.d1[k] - t.p[k] * ratio;
    total += fisher_term(t.p[k], centered, dx_mm);
  }
  return total / t.sum;
}

double qcrb_mm(std::uint64_t n_events, const SourceParams& params) {
  if (n_events == 0) throw ValidationError("qcrb requires at least one event");
  return std::sqrt(2.0 / static_cast<double>(n_events)) * params.sigma_x_mm;
}

double crb_mm(std::uint64_t n_events, double fisher) {
  if (n_events == 0) throw ValidationError("crb requires at least one event");
  if (fisher < 0.0) throw ValidationError("Fisher information must be non-negative");
  if (fisher == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(static_cast<double>(n_events) * fisher);
}

std::vector<BoundResult> crb_curve(std::span<const double> dx_grid_mm, std::uint64_t n_events,
                                   const FisherConfig& cfg) {
  if (dx_grid_mm.empty()) throw ValidationError("crb_curve requires a non-empty dx grid");
  std::vector<BoundResult> out;
  out.reserve(dx_grid_mm.size());
  const double q = qcrb_mm(n_events, cfg.params);
  for (double dx : dx_grid_mm) {
    BoundResult r;
    r.dx_mm = dx;
    r.fisher = fisher_information(dx, cfg);
    r.crb_mm = crb_mm(n_events, r.fisher);
    r.qcrb_mm = q;
    r.n_events = n_events;
    out.push_back(r);
  }
  return out;
}

}  // namespace mrhom
