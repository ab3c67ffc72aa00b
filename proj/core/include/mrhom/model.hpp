#pragma once
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrhom/errors.hpp"

namespace mrhom {

// Beam-splitter output classification of a two-photon event.
enum class Branch { antibunching, bunching };

// Sign of the interference term in the joint probability: antibunching
// carries the minus, bunching the plus.
inline double branch_sign(Branch b) { return b == Branch::antibunching ? -1.0 : +1.0; }
inline const char* branch_code(Branch b) { return b == Branch::antibunching ? "A" : "B"; }
Branch branch_from_code(const std::string& code);

// Source/biphoton parameters. The momentum-space width is tied to the waist
// by sigma_k = 1/(2 sigma_x); construction derives one from the other.
struct SourceParams {
  double sigma_x_mm = 0.035;  // transverse waist at detection
  double visibility = 1.0;    // interference visibility, in [0, 1]

  double sigma_k_inv_mm() const { return 1.0 / (2.0 * sigma_x_mm); }

  static SourceParams from_waist(double sigma_x_mm, double visibility);
  static SourceParams from_momentum_width(double sigma_k_inv_mm, double visibility);
  void validate() const;
};

// SPAD array geometry and the far-field position->momentum mapping.
struct OpticalGeometry {
  double wavelength_nm = 531.5;
  double focal_length_mm = 300.0;
  double pixel_pitch_um = 250.0;
  double pixel_width_um = 50.0;
  int n_pixels = 8;
  double center_index = -1.0;  // pixel index mapped to k = 0; < 0 means (n_pixels-1)/2

  double effective_center_index() const {
    return center_index < 0.0 ? 0.5 * (n_pixels - 1) : center_index;
  }
  // Adjacent-pixel momentum spacing 2*pi*pitch/(lambda*f), in mm^-1.
  double momentum_pitch_inv_mm() const;
  // Geometric momentum sensitivity 2*pi*width/(lambda*f), in mm^-1.
  double momentum_width_inv_mm() const;
  void validate() const;
};

// k_i = 2*pi*pitch*(i - center_index)/(lambda*f). Throws on out-of-range i.
double pixel_center_momentum(int i, const OpticalGeometry& geometry);

using PairMask = std::set<std::pair<int, int>>;  // pairs normalized to i <= j

// Momentum-space view of the detector: pixel center momenta, the momentum
// sensitivity delta, and per-branch channel exclusions.
struct DetectorArray {
  std::vector<double> k_centers;  // strictly increasing, equally spaced (mm^-1)
  double delta = 0.0;             // momentum sensitivity (mm^-1)
  PairMask bunching_mask;
  PairMask antibunching_mask;

  int n_pixels() const { return static_cast<int>(k_centers.size()); }
  double k_abs_max() const;
  const PairMask& mask(Branch b) const {
    return b == Branch::bunching ? bunching_mask : antibunching_mask;
  }
  bool is_masked(Branch b, int i, int j) const;
  void validate() const;

  // Same-pixel and adjacent pairs, invisible resp. crosstalk-dominated on the
  // bunching side.
  static PairMask default_bunching_mask(int n_pixels);
  static PairMask same_pixel_mask(int n_pixels);

  static DetectorArray from_geometry(const OpticalGeometry& geometry, double delta,
                                     bool apply_default_masks = true);
  // n pixels at uniform spacing, centered on k = 0 (spacing == delta gives a
  // gap-free array).
  static DetectorArray uniform(int n_pixels, double spacing, double delta);
};

// Transverse-momentum distribution f(k): Gaussian with width sigma_k,
// normalized to unit integral. Units: mm.
double momentum_pdf(double k_inv_mm, const SourceParams& params);

// Continuous two-photon probability density
//   P_{A/B}(k1, k2) = f(k1) f(k2) (1 -/+ V cos((k1-k2) dx)) / 2.
double joint_prob_continuous(Branch branch, double k1, double k2, double dx_mm,
                             const SourceParams& params);

// Pixel-integrated probability, exact: double integral of the continuous
// density over [k_i - delta/2, k_i + delta/2] x [k_j - delta/2, k_j + delta/2]
// by adaptive tensor Gauss-Legendre quadrature to the given relative error.
// Serves as the oracle for the sinc approximation. Throws NumericalError if
// the quadrature fails to converge.
double joint_prob_pixel_exact(Branch branch, int i, int j, double dx_mm,
                              const SourceParams& params, const DetectorArray& array,
                              double rel_tol = 1e-8);

// Pixel-integrated probability, sinc approximation:
//   (C/2) (1 -/+ V sinc^2(dx*delta/2) cos((k_i-k_j) dx)),  C = f(k_i) f(k_j) delta^2.
double joint_prob_pixel_sinc(Branch branch, int i, int j, double dx_mm,
                             const SourceParams& params, const DetectorArray& array);

// Sinc-approximation probability with analytic first and second dx-derivatives.
struct PixelProb {
  double p;
  double d1;
  double d2;
};
PixelProb joint_prob_pixel_sinc_derivs(Branch branch, int i, int j, double dx_mm,
                                       const SourceParams& params, const DetectorArray& array);

// One detectable outcome: a branch and an unordered pixel pair (i <= j).
struct Channel {
  Branch branch;
  int i;
  int j;
};
inline bool operator==(const Channel& a, const Channel& b) {
  return a.branch == b.branch && a.i == b.i && a.j == b.j;
}

// Discrete outcome distribution over unmasked channels. `prob` is
// renormalized to sum to 1; the pre-mask and post-mask raw sums are kept as
// coverage diagnostics. Unordered pairs with i < j carry both orderings of
// the underlying density.
struct ProbabilityTable {
  std::vector<Channel> channels;
  std::vector<double> prob;
  double premask_sum = 0.0;   // pre-mask, pre-normalization sum over all channels
  double unmasked_sum = 0.0;  // surviving channels, pre-normalization
  bool coverage_warning = false;  // array spans less than 3 sigma_k
};

ProbabilityTable probability_table(std::span<const Branch> branches, double dx_mm,
                                   const SourceParams& params, const DetectorArray& array,
                                   bool use_exact = false);
ProbabilityTable probability_table(double dx_mm, const SourceParams& params,
                                   const DetectorArray& array, bool use_exact = false);

// Unmasked channel probabilities (pre-normalization) with analytic dx
// derivatives up to second order, plus the sums S, S', S''. This is the
// common substrate for the restricted Fisher information and for
// conditional channel-mean model curves.
struct ChannelTable {
  std::vector<Channel> channels;
  std::vector<double> p, d1, d2;
  double sum = 0.0, dsum = 0.0, d2sum = 0.0;
};
ChannelTable channel_table_with_derivs(double dx_mm, const SourceParams& params,
                                       const DetectorArray& array);

}  // namespace mrhom
