#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ceuler/spectral_field.hpp"

namespace ceuler {

/// A field-valued function of time on [0, T].
class TimeSampledField {
 public:
  enum class Interpolation { linear, constant, analytic };
  using Callback = std::function<Field(double)>;

  TimeSampledField() = default;

  /// Times must be strictly increasing, start at 0 and end at T.
  /// With Interpolation::constant the value on [t_r, t_{r+1}) is fields[r].
  static TimeSampledField sampled(std::vector<double> times, std::vector<Field> fields,
                                  Interpolation rule = Interpolation::linear);

  /// Closed-form path; the callback may be queried slightly outside [0, T].
  static TimeSampledField analytic(double horizon, Callback callback);

  /// Piecewise-constant on the uniform grid t_r = r T / s.
  static TimeSampledField piecewise_constant(double horizon, std::vector<Field> values);

  Field operator()(double t) const { return at(t); }
  Field at(double t) const;

  double horizon() const { return horizon_; }
  Interpolation interpolation() const { return rule_; }
  bool empty() const { return !callback_ && fields_.empty(); }

  const std::vector<double>& times() const { return times_; }
  const std::vector<Field>& fields() const { return fields_; }

  /// Same rule, each value mapped by fn (for analytic fields the map is lazy).
  TimeSampledField map(std::function<Field(const Field&)> fn) const;

 private:
  double horizon_ = 0.0;
  Interpolation rule_ = Interpolation::linear;
  std::vector<double> times_;
  std::vector<Field> fields_;
  Callback callback_;
};

/// Samples a path at n + 1 uniform times, linearly interpolated.
TimeSampledField sample_uniform(const TimeSampledField::Callback& path, double horizon, int intervals);

/// L^2(J_T, H^k) norm by composite Gauss-Legendre quadrature over `panels`
/// equal panels (breakpoints of piecewise-constant paths should coincide
/// with panel boundaries).
double l2_time_norm(const TimeSampledField& f, int k, int panels);

}  // namespace ceuler
