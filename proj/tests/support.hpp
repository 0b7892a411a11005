#pragma once

// Test-only helpers: seeded random fields and a direct trigonometric-sum
// evaluator that does not go through the FFT path.

#include <cmath>
#include <random>

#include "ceuler/spectral_field.hpp"

namespace ceuler::testing {

inline Field random_field(Rank rank, int resolution, std::mt19937_64& rng, int max_abs = -1,
                          double amplitude = 1.0) {
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  Field f(rank, resolution);
  const int limit = max_abs < 0 ? resolution : max_abs;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.table()[i].max_abs() > limit) continue;
    for (int c = 0; c < f.components(); ++c) {
      f.cos_coefficients()(i, c) = dist(rng);
      if (i != 0) f.sin_coefficients()(i, c) = dist(rng);
    }
  }
  return f;
}

/// Direct evaluation of one component at a point.
inline double evaluate_at(const Field& f, int component, double x1, double x2, double x3) {
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& m = f.table()[i];
    const double phase = m[0] * x1 + m[1] * x2 + m[2] * x3;
    sum += f.cos_coefficients()(i, component) * std::cos(phase) +
           f.sin_coefficients()(i, component) * std::sin(phase);
  }
  return sum;
}

/// Trapezoid quadrature of fn(x) over T^3 on an n^3 grid.
template <typename Fn>
double torus_quadrature(int n, Fn&& fn) {
  const double h = 2.0 * M_PI / n;
  double sum = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) sum += fn(a * h, b * h, c * h);
  return sum * h * h * h;
}

inline double max_abs_difference(const Field& a, const Field& b) {
  return std::max((a.cos_coefficients() - b.cos_coefficients()).cwiseAbs().maxCoeff(),
                  (a.sin_coefficients() - b.sin_coefficients()).cwiseAbs().maxCoeff());
}

}  // namespace ceuler::testing
