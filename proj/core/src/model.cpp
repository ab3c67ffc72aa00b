#include "mrhom/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "mrhom/sinc.hpp"

namespace mrhom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

Branch branch_from_code(const std::string& code) {
  if (code == "A") return Branch::antibunching;
  if (code == "B") return Branch::bunching;
  throw ValidationError("unknown branch code '" + code + "' (expected A or B)");
}

SourceParams SourceParams::from_waist(double sigma_x_mm, double visibility) {
  SourceParams p;
  p.sigma_x_mm = sigma_x_mm;
  p.visibility = visibility;
  p.validate();
  return p;
}

SourceParams SourceParams::from_momentum_width(double sigma_k_inv_mm, double visibility) {
  require(sigma_k_inv_mm > 0.0, "sigma_k must be positive");
  return from_waist(1.0 / (2.0 * sigma_k_inv_mm), visibility);
}

void SourceParams::validate() const {
  require(std::isfinite(sigma_x_mm) && sigma_x_mm > 0.0, "sigma_x must be positive");
  require(visibility >= 0.0 && visibility <= 1.0, "visibility must lie in [0, 1]");
}

double OpticalGeometry::momentum_pitch_inv_mm() const {
  return kTwoPi * (pixel_pitch_um * 1e-3) / ((wavelength_nm * 1e-6) * focal_length_mm);
}

double OpticalGeometry::momentum_width_inv_mm() const {
  return kTwoPi * (pixel_width_um * 1e-3) / ((wavelength_nm * 1e-6) * focal_length_mm);
}

void OpticalGeometry::validate() const {
  require(wavelength_nm > 0.0, "wavelength must be positive");
  require(focal_length_mm > 0.0, "focal length must be positive");
  require(pixel_pitch_um > 0.0, "pixel pitch must be positive");
  require(pixel_width_um > 0.0, "pixel width must be positive");
  require(n_pixels >= 2, "need at least 2 pixels");
  require(momentum_pitch_inv_mm() > momentum_width_inv_mm(),
          "momentum pitch must exceed momentum sensitivity (pixel width < pitch)");
}

double pixel_center_momentum(int i, const OpticalGeometry& geometry) {
  if (i < 0 || i >= geometry.n_pixels)
    throw ValidationError("pixel index " + std::to_string(i) + " out of range [0, " +
                          std::to_string(geometry.n_pixels) + ")");
  return geometry.momentum_pitch_inv_mm() * (i - geometry.effective_center_index());
}

double DetectorArray::k_abs_max() const {
  double m = 0.0;
  for (double k : k_centers) m = std::max(m, std::abs(k));
  return m;
}

bool DetectorArray::is_masked(Branch b, int i, int j) const {
  if (i > j) std::swap(i, j);
  return mask(b).count({i, j}) > 0;
}

void DetectorArray::validate() const {
  require(n_pixels() >= 2, "detector array needs at least 2 pixels");
  require(delta > 0.0, "delta must be positive");
  const double spacing = k_centers[1] - k_centers[0];
  require(spacing > 0.0, "k_centers must be strictly increasing");
  for (int i = 1; i < n_pixels(); ++i) {
    const double d = k_centers[i] - k_centers[i - 1];
    require(d > 0.0, "k_centers must be strictly increasing");
    require(std::abs(d - spacing) <= 1e-12 * std::abs(spacing),
            "k_centers must be equally spaced");
  }
  for (const auto* m : {&bunching_mask, &antibunching_mask}) {
    for (const auto& [i, j] : *m) {
      require(i <= j, "mask pairs must be normalized to i <= j");
      require(i >= 0 && j < n_pixels(), "mask references invalid pixel index");
    }
  }
}

PairMask DetectorArray::default_bunching_mask(int n_pixels) {
  PairMask m;
  for (int i = 0; i < n_pixels; ++i) {
    m.insert({i, i});
    if (i + 1 < n_pixels) m.insert({i, i + 1});
  }
  return m;
}

PairMask DetectorArray::same_pixel_mask(int n_pixels) {
  PairMask m;
  for (int i = 0; i < n_pixels; ++i) m.insert({i, i});
  return m;
}

DetectorArray DetectorArray::from_geometry(const OpticalGeometry& geometry, double delta,
                                           bool apply_default_masks) {
  geometry.validate();
  DetectorArray a;
  a.k_centers.resize(geometry.n_pixels);
  for (int i = 0; i < geometry.n_pixels; ++i) a.k_centers[i] = pixel_center_momentum(i, geometry);
  a.delta = delta;
  if (apply_default_masks) a.bunching_mask = default_bunching_mask(geometry.n_pixels);
  a.validate();
  return a;
}

DetectorArray DetectorArray::uniform(int n_pixels, double spacing, double delta) {
  DetectorArray a;
  a.k_centers.resize(n_pixels);
  const double c = 0.5 * (n_pixels - 1);
  for (int i = 0; i < n_pixels; ++i) a.k_centers[i] = spacing * (i - c);
  a.delta = delta;
  a.validate();
  return a;
}

double momentum_pdf(double k_inv_mm, const SourceParams& params) {
  const double sk = params.sigma_k_inv_mm();
  const double z = k_inv_mm / sk;
  return std::exp(-0.5 * z * z) / (sk * std::sqrt(kTwoPi));
}

double joint_prob_continuous(Branch branch, double k1, double k2, double dx_mm,
                             const SourceParams& params) {
  const double ff = momentum_pdf(k1, params) * momentum_pdf(k2, params);
  return 0.5 * ff *
         (1.0 + branch_sign(branch) * params.visibility * std::cos((k1 - k2) * dx_mm));
}

namespace {

// 12-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 6> kGlNode = {
    0.1252334085114689, 0.3678314989981802, 0.5873179542866175,
    0.7699026741943047, 0.9041172563704749, 0.9815606342467192};
constexpr std::array<double, 6> kGlWeight = {
    0.2491470458134028, 0.2334925365383548, 0.2031674267230659,
    0.1600783285433462, 0.1069393259953184, 0.0471753363865118};

template <typename F>
double gl12_2d(const F& f, double x0, double x1, double y0, double y1) {
  const double cx = 0.5 * (x0 + x1), hx = 0.5 * (x1 - x0);
  const double cy = 0.5 * (y0 + y1), hy = 0.5 * (y1 - y0);
  double total = 0.0;
  for (int a = 0; a < 12; ++a) {
    const int ia = a % 6;
    const double xa = cx + (a < 6 ? -1.0 : 1.0) * hx * kGlNode[ia];
    double row = 0.0;
    for (int b = 0; b < 12; ++b) {
      const int ib = b % 6;
      const double yb = cy + (b < 6 ? -1.0 : 1.0) * hy * kGlNode[ib];
      row += kGlWeight[ib] * f(xa, yb);
    }
    total += kGlWeight[ia] * row;
  }
  return total * hx * hy;
}

template <typename F>
double adaptive_2d(const F& f, double x0, double x1, double y0, double y1, double tol_abs,
                   double rel_tol, int depth) {
  const double coarse = gl12_2d(f, x0, x1, y0, y1);
  const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
  const double fine = gl12_2d(f, x0, xm, y0, ym) + gl12_2d(f, xm, x1, y0, ym) +
                      gl12_2d(f, x0, xm, ym, y1) + gl12_2d(f, xm, x1, ym, y1);
  const double err = std::abs(fine - coarse);
  if (err <= std::max(rel_tol * std::abs(fine), tol_abs)) return fine;
  if (depth >= 12)
    throw NumericalError("pixel quadrature failed to converge to requested tolerance");
  const double sub_tol = 0.25 * tol_abs;
  return adaptive_2d(f, x0, xm, y0, ym, sub_tol, rel_tol, depth + 1) +
         adaptive_2d(f, xm, x1, y0, ym, sub_tol, rel_tol, depth + 1) +
         adaptive_2d(f, x0, xm, ym, y1, sub_tol, rel_tol, depth + 1) +
         adaptive_2d(f, xm, x1, ym, y1, sub_tol, rel_tol, depth + 1);
}

void check_pair(int i, int j, const DetectorArray& array) {
  if (i < 0 || j < 0 || i >= array.n_pixels() || j >= array.n_pixels())
    throw ValidationError("pixel pair (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") out of range for " + std::to_string(array.n_pixels()) +
                          "-pixel array");
}

}  // namespace

double joint_prob_pixel_exact(Branch branch, int i, int j, double dx_mm,
                              const SourceParams& params, const DetectorArray& array,
                              double rel_tol) {
  check_pair(i, j, array);
  const double ki = array.k_centers[i], kj = array.k_centers[j];
  const double h = 0.5 * array.delta;
  const auto f = [&](double k1, double k2) {
    return joint_prob_continuous(branch, k1, k2, dx_mm, params);
  };
  // Absolute floor keeps the relative control meaningful when the integrand
  // (branch A near dx = 0 at V = 1) is arbitrarily close to zero.
  const double scale =
      momentum_pdf(ki, params) * momentum_pdf(kj, params) * array.delta * array.delta;
  const double tol_abs = 1e-16 * std::max(scale, 1e-300);
  return adaptive_2d(f, ki - h, ki + h, kj - h, kj + h, tol_abs, rel_tol, 0);
}

double joint_prob_pixel_sinc(Branch branch, int i, int j, double dx_mm,
                             const SourceParams& params, const DetectorArray& array) {
  check_pair(i, j, array);
  const double ki = array.k_centers[i], kj = array.k_centers[j];
  const double c = momentum_pdf(ki, params) * momentum_pdf(kj, params) * array.delta * array.delta;
  const double u = 0.5 * dx_mm * array.delta;
  const double s = sinc(u) * sinc(u);
  return 0.5 * c *
         (1.0 + branch_sign(branch) * params.visibility * s * std::cos((ki - kj) * dx_mm));
}

PixelProb joint_prob_pixel_sinc_derivs(Branch branch, int i, int j, double dx_mm,
                                       const SourceParams& params, const DetectorArray& array) {
  check_pair(i, j, array);
  const double ki = array.k_centers[i], kj = array.k_centers[j];
  const double c = momentum_pdf(ki, params) * momentum_pdf(kj, params) * array.delta * array.delta;
  const double dk = ki - kj;
  const Envelope e = beat_envelope(dx_mm, array.delta);
  const double cs = std::cos(dk * dx_mm), sn = std::sin(dk * dx_mm);
  const double g = e.s * cs;
  const double g1 = e.ds * cs - e.s * dk * sn;
  const double g2 = e.d2s * cs - 2.0 * e.ds * dk * sn - e.s * dk * dk * cs;
  const double sv = branch_sign(branch) * params.visibility;
  PixelProb out;
  out.p = 0.5 * c * (1.0 + sv * g);
  out.d1 = 0.5 * c * sv * g1;
  out.d2 = 0.5 * c * sv * g2;
  return out;
}

namespace {

// Enumerate unordered channels (i <= j) for the requested branches, skipping
// masked pairs. Off-diagonal pairs carry both orderings of the density.
template <typename Fn>
void for_each_channel(std::span<const Branch> branches, const DetectorArray& array, Fn&& fn) {
  const int n = array.n_pixels();
  for (Branch b : branches)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const double mult = (i == j) ? 1.0 : 2.0;
        fn(b, i, j, mult, array.is_masked(b, i, j));
      }
}

}  // namespace

ProbabilityTable probability_table(std::span<const Branch> branches, double dx_mm,
                                   const SourceParams& params, const DetectorArray& array,
                                   bool use_exact) {
  params.validate();
  array.validate();
  ProbabilityTable table;
  table.coverage_warning = array.k_abs_max() < 3.0 * params.sigma_k_inv_mm();
  for_each_channel(branches, array, [&](Branch b, int i, int j, double mult, bool masked) {
    const double p = mult * (use_exact ? joint_prob_pixel_exact(b, i, j, dx_mm, params, array)
                                       : joint_prob_pixel_sinc(b, i, j, dx_mm, params, array));
    table.premask_sum += p;
    if (masked) return;
    table.channels.push_back({b, i, j});
    table.prob.push_back(p);
    table.unmasked_sum += p;
  });
  if (table.channels.empty())
    throw ValidationError("no channels survive the detector masks");
  if (!(table.unmasked_sum > 0.0))
    throw NumericalError("probability table is degenerate (zero total mass)");
  for (double& p : table.prob) p /= table.unmasked_sum;
  return table;
}

ProbabilityTable probability_table(double dx_mm, const SourceParams& params,
                                   const DetectorArray& array, bool use_exact) {
  static constexpr Branch kBoth[] = {Branch::antibunching, Branch::bunching};
  return probability_table(kBoth, dx_mm, params, array, use_exact);
}

ChannelTable channel_table_with_derivs(double dx_mm, const SourceParams& params,
                                       const DetectorArray& array) {
  params.validate();
  array.validate();
  static constexpr Branch kBoth[] = {Branch::antibunching, Branch::bunching};
  ChannelTable t;
  for_each_channel(kBoth, array, [&](Branch b, int i, int j, double mult, bool masked) {
    if (masked) return;
    const PixelProb pp = joint_prob_pixel_sinc_derivs(b, i, j, dx_mm, params, array);
    t.channels.push_back({b, i, j});
    t.p.push_back(mult * pp.p);
    t.d1.push_back(mult * pp.d1);
    t.d2.push_back(mult * pp.d2);
    t.sum += mult * pp.p;
    t.dsum += mult * pp.d1;
    t.d2sum += mult * pp.d2;
  });
  if (t.channels.empty()) throw ValidationError("no channels survive the detector masks");
  return t;
}

}  // namespace mrhom
