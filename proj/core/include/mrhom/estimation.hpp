#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "mrhom/model.hpp"

namespace mrhom {

// Grid prescription for the momentum-resolved Fisher information: pixel
// centers at {n*delta, m*delta} with n, m in [-grid_half_width, +grid_half_width],
// both branches, no masks.
struct FisherConfig {
  SourceParams params;
  double delta = 1.7;       // momentum sensitivity (mm^-1)
  int grid_half_width = 50; // pixels each side of k = 0
  double derivative_step_mm = 0.0;  // finite-difference cross-check step; 0 -> 1e-6*sigma_x

  double fd_step() const {
    return derivative_step_mm > 0.0 ? derivative_step_mm : 1e-6 * params.sigma_x_mm;
  }
  void validate() const;
};

// Quantum Fisher information H = 1/(2 sigma_x^2), in mm^-2.
double quantum_fisher_information(const SourceParams& params);

// F_delta(dx) = sum over branches and grid pairs of (dP/d dx)^2 / P, with P
// from the sinc pixel model and its analytic derivative. Channels with P = 0
// contribute zero when the derivative also vanishes; otherwise a
// NumericalError reports the singular channel.
double fisher_information(double dx_mm, const FisherConfig& cfg);

// Same sum with the derivative taken by central finite differences of the
// pixel probability (cross-check path).
double fisher_information_fd(double dx_mm, const FisherConfig& cfg);

// Fisher information of the conditional outcome distribution actually
// sampled by a physical array: masked channels removed, table renormalized.
// This is the quantity 1/sqrt(N F) that the spread of the maximum-likelihood
// estimate follows on masked-array datasets.
double fisher_information_restricted(double dx_mm, const SourceParams& params,
                                     const DetectorArray& array);

// Quantum Cramer-Rao bound sqrt(2/N) * sigma_x, in mm.
double qcrb_mm(std::uint64_t n_events, const SourceParams& params);

// Classical Cramer-Rao bound 1/sqrt(N F), in mm; +infinity when F = 0.
double crb_mm(std::uint64_t n_events, double fisher);

struct BoundResult {
  double dx_mm = 0.0;
  double fisher = 0.0;       // mm^-2
  double crb_mm = 0.0;       // may be +infinity where F vanishes
  double qcrb_mm = 0.0;
  std::uint64_t n_events = 0;
};

std::vector<BoundResult> crb_curve(std::span<const double> dx_grid_mm, std::uint64_t n_events,
                                   const FisherConfig& cfg);

}  // namespace mrhom
