#pragma once

// Physical-space evaluation of spectral fields and dealiased products.

#include <functional>

#include <Eigen/Core>

#include "ceuler/spectral_field.hpp"

namespace ceuler {

/// Values on the uniform N^3 grid x = 2 pi (i1, i2, i3) / N, one column per
/// component, row (i1 * N + i2) * N + i3.
using GridValues = Eigen::ArrayXXd;

/// Smallest 2^a q (a >= 1, q in {1, 3, 5}) that is >= 3M + 1, so that
/// quadratic products of fields at resolution M are alias-free after
/// truncation back to M. Even sizes make the half-period shift a symmetry of
/// the grid; the restricted odd part keeps FFTW_ESTIMATE plans fast.
int padded_grid_size(int resolution);

/// Requires n >= 2M + 1.
GridValues grid_eval(const Field& f, int n);

/// Discrete Fourier fit truncated to the box of the given resolution.
/// Requires n >= 2 * resolution + 1.
Field grid_fit(const GridValues& values, Rank rank, int resolution, int n);

/// Values on the padded grid of the field's own resolution.
inline GridValues padded_values(const Field& f) { return grid_eval(f, padded_grid_size(f.resolution())); }
inline Field fit_padded(const GridValues& values, Rank rank, int resolution) {
  return grid_fit(values, rank, resolution, padded_grid_size(resolution));
}

/// Dealiased pointwise product; f is scalar, g scalar or vector.
Field multiply(const Field& f, const Field& g);

/// Dealiased (a . grad) b; a vector, b scalar or vector.
Field advect(const Field& a, const Field& b);

/// fn applied pointwise to a scalar field on the padded grid, then refit.
Field apply_pointwise(const Field& f, const std::function<double(double)>& fn);

/// Integral over T^3 of grid samples (periodic trapezoid rule).
inline double integrate_grid(const Eigen::ArrayXd& values) { return kTorusVolume * values.mean(); }

}  // namespace ceuler
