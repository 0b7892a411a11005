#include "ceuler/manufactured.hpp"

#include <cmath>

#include "ceuler/grid.hpp"

namespace ceuler {

ManufacturedSolution::ManufacturedSolution(PressureLaw law, int resolution, double eps, double U0,
                                           double a0)
    : law_(std::move(law)), resolution_(resolution), eps_(eps), U0_(U0), a0_(a0) {
  if (resolution < 1) throw InvalidArgument("manufactured solution needs resolution >= 1");
}

double ManufacturedSolution::U(double t) const { return U0_ + 0.2 * std::sin(2.0 * t); }
double ManufacturedSolution::X(double t) const { return U0_ * t + 0.1 * (1.0 - std::cos(2.0 * t)); }

Field ManufacturedSolution::u(double t) const {
  Field out(Rank::vector, resolution_);
  out.add_mode(Kind::cos, 0, {0, 0, 0}, U(t));
  out.add_mode(Kind::sin, 1, {1, 0, 1}, a0_ * std::cos(t));
  return out;
}

Field ManufacturedSolution::g(double t) const {
  // eps sin(x1 - X) = eps cos X sin x1 - eps sin X cos x1
  Field out(Rank::scalar, resolution_);
  out.add_mode(Kind::sin, 0, {1, 0, 0}, eps_ * std::cos(X(t)));
  out.add_mode(Kind::cos, 0, {1, 0, 0}, -eps_ * std::sin(X(t)));
  return out;
}

Field ManufacturedSolution::force(double t) const {
  const double a = a0_ * std::cos(t);
  const double da = -a0_ * std::sin(t);
  const double dU = 0.4 * std::cos(2.0 * t);
  Field out(Rank::vector, resolution_);
  out.add_mode(Kind::cos, 0, {0, 0, 0}, dU);
  out.add_mode(Kind::sin, 1, {1, 0, 1}, da);
  out.add_mode(Kind::cos, 1, {1, 0, 1}, U(t) * a);
  // h(g*) d1 g* is a function of x1 - X only; fit it from point values.
  const int n = padded_grid_size(resolution_);
  GridValues values = GridValues::Zero(static_cast<Eigen::Index>(n) * n * n, 3);
  const double shift = X(t);
  for (int i1 = 0; i1 < n; ++i1) {
    const double y = 2.0 * M_PI * i1 / n - shift;
    const double v = law_.h(eps_ * std::sin(y)) * eps_ * std::cos(y);
    values.col(0).segment(static_cast<Eigen::Index>(i1) * n * n, n * n).setConstant(v);
  }
  out += grid_fit(values, Rank::vector, resolution_, n);
  return out;
}

TimeSampledField ManufacturedSolution::force_path(double horizon) const {
  return TimeSampledField::analytic(horizon, [self = *this](double t) { return self.force(t); });
}

}  // namespace ceuler
