#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mrhom/model.hpp"
#include "mrhom/rng.hpp"
#include "mrhom/sinc.hpp"

using namespace mrhom;

namespace {

const SourceParams kPaperSource = SourceParams::from_waist(0.035, 0.3);

// Test-local Simpson quadrature, independent of the model code paths.
template <typename F>
double simpson(const F& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

DetectorArray paper_array(double delta = 1.7) {
  OpticalGeometry g;
  return DetectorArray::from_geometry(g, delta);
}

}  // namespace

TEST_CASE("sinc family matches finite differences and is smooth across the series branch") {
  const double h = 1e-6;
  for (double u : {1e-9, 1e-4, 0.03, 0.049, 0.051, 0.2, 1.0, 3.0, 10.0}) {
    const double fd1 = (sinc(u + h) - sinc(u - h)) / (2 * h);
    CHECK(sinc_prime(u) == doctest::Approx(fd1).epsilon(1e-6));
    const double fd2 = (sinc_prime(u + h) - sinc_prime(u - h)) / (2 * h);
    CHECK(sinc_second(u) == doctest::Approx(fd2).epsilon(1e-5));
  }
  CHECK(sinc(0.0) == 1.0);
  CHECK(sinc_prime(0.0) == 0.0);
  CHECK(sinc_second(0.0) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("momentum_pdf: shape and normalization") {
  const double sigma_k = kPaperSource.sigma_k_inv_mm();
  CHECK(sigma_k == doctest::Approx(1.0 / 0.07));

  // Closed-form evaluation at k = 0, cross-checked by quadrature below.
  CHECK(momentum_pdf(0.0, kPaperSource) == doctest::Approx(0.027927).epsilon(1e-4));
  CHECK(momentum_pdf(0.0, kPaperSource) ==
        doctest::Approx(1.0 / (sigma_k * std::sqrt(2 * std::numbers::pi))));

  CHECK(momentum_pdf(sigma_k, kPaperSource) / momentum_pdf(0.0, kPaperSource) ==
        doctest::Approx(std::exp(-0.5)));
  CHECK(momentum_pdf(-sigma_k, kPaperSource) ==
        doctest::Approx(momentum_pdf(sigma_k, kPaperSource)));

  // Normalization over the Appendix-style window [-50 delta, +50 delta].
  const double integral = simpson(
      [&](double k) { return momentum_pdf(k, kPaperSource); }, -50 * 1.7, 50 * 1.7, 4000);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pixel_center_momentum: far-field mapping") {
  OpticalGeometry g;
  g.validate();
  const double spacing = pixel_center_momentum(1, g) - pixel_center_momentum(0, g);
  CHECK(spacing == doctest::Approx(9.85).epsilon(1e-3));
  CHECK(g.momentum_pitch_inv_mm() == doctest::Approx(spacing));
  CHECK(g.momentum_width_inv_mm() == doctest::Approx(1.97).epsilon(1e-3));

  // Center pixel maps to k = 0 (half-integer center for 8 pixels).
  OpticalGeometry g9 = g;
  g9.n_pixels = 9;
  CHECK(pixel_center_momentum(4, g9) == doctest::Approx(0.0));

  CHECK_THROWS_AS(pixel_center_momentum(-1, g), ValidationError);
  CHECK_THROWS_AS(pixel_center_momentum(8, g), ValidationError);
}

TEST_CASE("source params invariants") {
  CHECK_THROWS_AS(SourceParams::from_waist(-1.0, 0.3), ValidationError);
  CHECK_THROWS_AS(SourceParams::from_waist(0.035, 1.5), ValidationError);
  const SourceParams p = SourceParams::from_momentum_width(1.0 / 0.07, 0.3);
  CHECK(p.sigma_x_mm == doctest::Approx(0.035));
}

TEST_CASE("joint_prob_continuous: limits and structure") {
  const SourceParams v0 = SourceParams::from_waist(0.035, 0.0);
  const SourceParams v1 = SourceParams::from_waist(0.035, 1.0);

  const double ff = momentum_pdf(3.0, v0) * momentum_pdf(-5.0, v0);
  CHECK(joint_prob_continuous(Branch::antibunching, 3.0, -5.0, 0.7, v0) ==
        doctest::Approx(0.5 * ff));
  CHECK(joint_prob_continuous(Branch::bunching, 3.0, -5.0, 0.7, v0) ==
        doctest::Approx(0.5 * ff));

  // Full HOM suppression at dx = 0 with V = 1.
  CHECK(joint_prob_continuous(Branch::antibunching, 3.0, -5.0, 0.0, v1) == doctest::Approx(0.0));

  // Phase pi flips the interference sign.
  const double k1 = 4.0, k2 = 1.0;
  const double dx = std::numbers::pi / (k1 - k2);
  const double ff2 = momentum_pdf(k1, kPaperSource) * momentum_pdf(k2, kPaperSource);
  CHECK(joint_prob_continuous(Branch::antibunching, k1, k2, dx, kPaperSource) ==
        doctest::Approx(0.5 * ff2 * 1.3));
  CHECK(joint_prob_continuous(Branch::bunching, k1, k2, dx, kPaperSource) ==
        doctest::Approx(0.5 * ff2 * 0.7));
}

TEST_CASE("joint_prob_continuous: randomized symmetry, completeness, parity, positivity") {
  Xoshiro256pp rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double k1 = 40.0 * (rng.uniform01() - 0.5);
    const double k2 = 40.0 * (rng.uniform01() - 0.5);
    const double dx = 3.0 * (rng.uniform01() - 0.5);
    const SourceParams p = SourceParams::from_waist(0.02 + 0.1 * rng.uniform01(),
                                                    rng.uniform01());
    for (Branch b : {Branch::antibunching, Branch::bunching}) {
      const double p12 = joint_prob_continuous(b, k1, k2, dx, p);
      // k1 <-> k2 symmetry and dx parity
      CHECK(p12 == doctest::Approx(joint_prob_continuous(b, k2, k1, dx, p)));
      CHECK(p12 == doctest::Approx(joint_prob_continuous(b, k1, k2, -dx, p)));
      CHECK(p12 >= 0.0);
    }
    // Branch completeness: P_A + P_B = f(k1) f(k2)
    const double total = joint_prob_continuous(Branch::antibunching, k1, k2, dx, p) +
                         joint_prob_continuous(Branch::bunching, k1, k2, dx, p);
    CHECK(total == doctest::Approx(momentum_pdf(k1, p) * momentum_pdf(k2, p)));
  }
}

TEST_CASE("joint_prob_pixel_sinc: closed-form checks") {
  const DetectorArray array = paper_array();
  const SourceParams p03 = kPaperSource;

  // First envelope zero kills the beat for both branches.
  const double dx0 = 2.0 * std::numbers::pi / array.delta;
  for (int i : {0, 3}) {
    for (int j : {2, 7}) {
      const double c = momentum_pdf(array.k_centers[i], p03) *
                       momentum_pdf(array.k_centers[j], p03) * array.delta * array.delta;
      const double pa = joint_prob_pixel_sinc(Branch::antibunching, i, j, dx0, p03, array);
      const double pb = joint_prob_pixel_sinc(Branch::bunching, i, j, dx0, p03, array);
      CHECK(pa == doctest::Approx(0.5 * c).epsilon(1e-12));
      CHECK(pb == doctest::Approx(0.5 * c).epsilon(1e-12));
    }
  }

  // Same pixel at dx = 0: cos = sinc = 1.
  const double cii = std::pow(momentum_pdf(array.k_centers[4], p03) * array.delta, 2);
  CHECK(joint_prob_pixel_sinc(Branch::antibunching, 4, 4, 0.0, p03, array) ==
        doctest::Approx(0.5 * cii * 0.7));
  CHECK(joint_prob_pixel_sinc(Branch::bunching, 4, 4, 0.0, p03, array) ==
        doctest::Approx(0.5 * cii * 1.3));

  // Beat period 2 pi / dk for |i-j| = 1 at the paper's fitted parameters.
  const double dk = array.k_centers[3] - array.k_centers[2];
  const double period = 2.0 * std::numbers::pi / dk;
  CHECK(period == doctest::Approx(2.0 * std::numbers::pi / 9.85).epsilon(1e-3));

  CHECK_THROWS_AS(joint_prob_pixel_sinc(Branch::bunching, 0, 9, 0.0, p03, array),
                  ValidationError);
}

TEST_CASE("joint_prob_pixel_sinc derivatives match finite differences") {
  const DetectorArray array = paper_array();
  const double h = 1e-6 * kPaperSource.sigma_x_mm;
  for (double dx : {0.0, 0.05, 0.31, 1.2}) {
    for (int i : {0, 2, 4}) {
      for (int j : {4, 6}) {
        for (Branch b : {Branch::antibunching, Branch::bunching}) {
          const PixelProb d = joint_prob_pixel_sinc_derivs(b, i, j, dx, kPaperSource, array);
          CHECK(d.p == doctest::Approx(joint_prob_pixel_sinc(b, i, j, dx, kPaperSource, array)));
          const double fd1 = (joint_prob_pixel_sinc(b, i, j, dx + h, kPaperSource, array) -
                              joint_prob_pixel_sinc(b, i, j, dx - h, kPaperSource, array)) /
                             (2 * h);
          const double scale = std::abs(d.p) * 100.0;  // derivative scale ~ p * (dk + delta)
          CHECK(d.d1 == doctest::Approx(fd1).epsilon(1e-6).scale(scale));
          const double fd2 =
              (joint_prob_pixel_sinc_derivs(b, i, j, dx + h, kPaperSource, array).d1 -
               joint_prob_pixel_sinc_derivs(b, i, j, dx - h, kPaperSource, array).d1) /
              (2 * h);
          CHECK(d.d2 == doctest::Approx(fd2).epsilon(1e-5).scale(scale * 100.0));
        }
      }
    }
  }
}

TEST_CASE("joint_prob_pixel_exact: separable and suppressed limits") {
  const DetectorArray array = paper_array();

  // V = 0: the double integral factorizes into 1D pixel masses.
  const SourceParams v0 = SourceParams::from_waist(0.035, 0.0);
  const auto pixel_mass = [&](int i) {
    const double k = array.k_centers[i];
    return simpson([&](double q) { return momentum_pdf(q, v0); }, k - array.delta / 2,
                   k + array.delta / 2, 200);
  };
  for (int i : {1, 4}) {
    for (int j : {4, 6}) {
      const double expected = 0.5 * pixel_mass(i) * pixel_mass(j);
      CHECK(joint_prob_pixel_exact(Branch::antibunching, i, j, 0.8, v0, array) ==
            doctest::Approx(expected).epsilon(1e-7));
    }
  }

  // dx = 0, branch A, V = 1: integrand identically zero.
  const SourceParams v1 = SourceParams::from_waist(0.035, 1.0);
  CHECK(joint_prob_pixel_exact(Branch::antibunching, 2, 5, 0.0, v1, array) == 0.0);
}

TEST_CASE("sinc approximation converges to the exact pixel integral as delta*sigma_x -> 0") {
  // Gap-free arrays scaled with delta; beat phases dx*delta <= 1.
  const double sigma_x = 0.035;
  const SourceParams params = SourceParams::from_waist(sigma_x, 0.3);
  std::vector<double> max_dev;
  for (double ds : {0.2, 0.1, 0.05, 0.025}) {
    const double delta = ds / sigma_x;
    const DetectorArray array = DetectorArray::uniform(8, delta, delta);
    double worst = 0.0;
    for (double phase : {0.25, 0.6, 1.0}) {
      const double dx = phase / delta;
      for (int i = 0; i < 8; ++i)
        for (int j = i; j < 8; ++j)
          for (Branch b : {Branch::antibunching, Branch::bunching}) {
            const double exact = joint_prob_pixel_exact(b, i, j, dx, params, array);
            const double approx = joint_prob_pixel_sinc(b, i, j, dx, params, array);
            worst = std::max(worst, std::abs(approx - exact) / exact);
          }
    }
    max_dev.push_back(worst);
  }
  for (std::size_t k = 1; k < max_dev.size(); ++k) CHECK(max_dev[k] < max_dev[k - 1]);
  // Quadratic in delta*sigma_x; the worst channel (extreme pair, dx*delta = 1)
  // sits at ~2e-3 for delta*sigma_x = 0.05 and drops under 1e-3 by 0.025.
  CHECK(max_dev[2] < 3e-3);
  CHECK(max_dev[3] < 1e-3);
}

TEST_CASE("probability_table: completeness on the Appendix grid") {
  // 101 equally spaced pixels, no masks: the pre-normalization sum is the
  // Riemann completeness of f f delta^2.
  const DetectorArray grid = DetectorArray::uniform(101, 1.7, 1.7);
  const ProbabilityTable t = probability_table(0.8, kPaperSource, grid);
  CHECK(t.premask_sum == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(!t.coverage_warning);

  double sum = 0.0;
  for (double p : t.prob) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("probability_table: V = 0 factorizes and is branch-uniform") {
  const SourceParams v0 = SourceParams::from_waist(0.035, 0.0);
  const DetectorArray array = paper_array();
  const ProbabilityTable t = probability_table(0.5, v0, array);
  for (std::size_t k = 0; k < t.channels.size(); ++k) {
    const Channel& c = t.channels[k];
    const double mult = c.i == c.j ? 1.0 : 2.0;
    const double expected = 0.5 * mult * momentum_pdf(array.k_centers[c.i], v0) *
                            momentum_pdf(array.k_centers[c.j], v0) * array.delta * array.delta /
                            t.unmasked_sum;
    CHECK(t.prob[k] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("probability_table: default masks drop bunching |i-j| <= 1") {
  const DetectorArray array = paper_array();
  const ProbabilityTable t = probability_table(0.5, kPaperSource, array);
  for (const Channel& c : t.channels) {
    if (c.branch == Branch::bunching) CHECK(c.j - c.i >= 2);
  }
  // Antibunching channels include the diagonal.
  bool has_diag = false;
  for (const Channel& c : t.channels)
    if (c.branch == Branch::antibunching && c.i == c.j) has_diag = true;
  CHECK(has_diag);
}

TEST_CASE("probability_table: error and warning paths") {
  // All channels masked away.
  DetectorArray tiny = DetectorArray::uniform(2, 9.85, 1.7);
  tiny.bunching_mask = {{0, 0}, {0, 1}, {1, 1}};
  tiny.antibunching_mask = {{0, 0}, {0, 1}, {1, 1}};
  CHECK_THROWS_AS(probability_table(0.1, kPaperSource, tiny), ValidationError);

  // Narrow array triggers the coverage warning (< 3 sigma_k).
  const DetectorArray narrow = DetectorArray::uniform(4, 2.0, 1.7);
  CHECK(probability_table(0.1, kPaperSource, narrow).coverage_warning);
}

TEST_CASE("probability_table seen by one branch only") {
  const DetectorArray array = paper_array();
  const Branch only_a[] = {Branch::antibunching};
  const ProbabilityTable t = probability_table(only_a, 0.3, kPaperSource, array);
  for (const Channel& c : t.channels) CHECK(c.branch == Branch::antibunching);
  double sum = 0.0;
  for (double p : t.prob) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pixel-sinc probabilities: branch completeness and parity") {
  const DetectorArray array = paper_array();
  Xoshiro256pp rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int i = static_cast<int>(rng.uniform01() * 8);
    const int j = static_cast<int>(rng.uniform01() * 8);
    const double dx = 4.0 * (rng.uniform01() - 0.5);
    const double c = momentum_pdf(array.k_centers[i], kPaperSource) *
                     momentum_pdf(array.k_centers[j], kPaperSource) * array.delta * array.delta;
    const double pa = joint_prob_pixel_sinc(Branch::antibunching, i, j, dx, kPaperSource, array);
    const double pb = joint_prob_pixel_sinc(Branch::bunching, i, j, dx, kPaperSource, array);
    CHECK(pa + pb == doctest::Approx(c).epsilon(1e-12));
    CHECK(pa >= 0.0);
    CHECK(pb >= 0.0);
    CHECK(pa == doctest::Approx(
                    joint_prob_pixel_sinc(Branch::antibunching, i, j, -dx, kPaperSource, array)));
  }
}

TEST_CASE("detector array validation") {
  DetectorArray a = DetectorArray::uniform(8, 9.85, 1.7);
  a.validate();

  DetectorArray bad = a;
  bad.k_centers[3] += 1e-6;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  DetectorArray bad_mask = a;
  bad_mask.bunching_mask = {{0, 9}};
  CHECK_THROWS_AS(bad_mask.validate(), ValidationError);

  DetectorArray bad_delta = a;
  bad_delta.delta = 0.0;
  CHECK_THROWS_AS(bad_delta.validate(), ValidationError);

  // Geometry with width >= pitch is rejected.
  OpticalGeometry g;
  g.pixel_width_um = 260.0;
  CHECK_THROWS_AS(g.validate(), ValidationError);
}
