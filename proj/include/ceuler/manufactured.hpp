#pragma once

#include "ceuler/dynamics.hpp"

namespace ceuler {

/// Closed-form solution of the uncontrolled system with a computed force:
///
///   u*(t, x) = U(t) e_1 + a(t) sin(x1 + x3) e_2
///   g*(t, x) = eps sin(x1 - X(t)),  X' = U
///
/// with U(t) = U0 + 0.2 sin 2t and a(t) = a0 cos t. g* solves the continuity
/// equation exactly; f = du*/dt + (u*.grad)u* + h(g*) grad g*.
class ManufacturedSolution {
 public:
  ManufacturedSolution(PressureLaw law, int resolution, double eps = 0.1, double U0 = 0.5,
                       double a0 = 0.3);

  Field u(double t) const;
  Field g(double t) const;
  Field force(double t) const;
  TimeSampledField force_path(double horizon) const;
  const PressureLaw& law() const { return law_; }
  int resolution() const { return resolution_; }

 private:
  double U(double t) const;
  double X(double t) const;

  PressureLaw law_;
  int resolution_;
  double eps_, U0_, a0_;
};

}  // namespace ceuler
