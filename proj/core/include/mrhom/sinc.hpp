#pragma once
#include <cmath>

namespace mrhom {

// Unnormalized cardinal sine sin(u)/u with sinc(0) = 1, plus its first two
// derivatives. Series branches keep full double precision through u = 0,
// where the closed forms lose all significant digits to cancellation.

inline double sinc(double u) {
  const double a = std::abs(u);
  if (a < 5e-2) {
    const double u2 = u * u;
    return 1.0 - u2 / 6.0 + u2 * u2 / 120.0 - u2 * u2 * u2 / 5040.0;
  }
  return std::sin(u) / u;
}

inline double sinc_prime(double u) {
  const double a = std::abs(u);
  if (a < 5e-2) {
    const double u2 = u * u;
    return u * (-1.0 / 3.0 + u2 / 30.0 - u2 * u2 / 840.0);
  }
  return (std::cos(u) - sinc(u)) / u;
}

inline double sinc_second(double u) {
  const double a = std::abs(u);
  if (a < 5e-2) {
    const double u2 = u * u;
    return -1.0 / 3.0 + u2 / 10.0 - u2 * u2 / 168.0;
  }
  return (-std::sin(u) - 2.0 * sinc_prime(u)) / u;
}

// Beat envelope s(dx) = sinc^2(dx*delta/2) and d/d(dx), d^2/d(dx)^2.
struct Envelope {
  double s;
  double ds;
  double d2s;
};

inline Envelope beat_envelope(double dx, double delta) {
  const double u = 0.5 * dx * delta;
  const double si = sinc(u);
  const double sp = sinc_prime(u);
  const double spp = sinc_second(u);
  Envelope e;
  e.s = si * si;
  e.ds = delta * si * sp;
  e.d2s = 0.5 * delta * delta * (sp * sp + si * spp);
  return e;
}

}  // namespace mrhom
