#pragma once

// Truncated real Fourier series on the 3-torus T^3 = R^3 / (2 pi Z)^3.
//
// A field is stored as cos/sin amplitude pairs over canonical-sign
// frequencies m with max_j |m_j| <= M:
//
//   f(x) = sum_m  a_m cos<m, x> + b_m sin<m, x>
//
// so the field is real by construction and the mean equals a_0. Everything in
// this header is templated on the scalar type; double is used for simulation,
// Rational for exact symbolic expansions.

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ceuler/errors.hpp"
#include "ceuler/frequency.hpp"

namespace ceuler {

enum class Rank { scalar = 1, vector = 3 };
enum class Kind { cos, sin };

inline constexpr double kTorusVolume = 8.0 * std::numbers::pi * std::numbers::pi * std::numbers::pi;

/// Canonical-sign frequencies in the box max_j |m_j| <= M, lexicographically
/// ordered, zero first. Shared between all fields of one resolution.
class FrequencyTable {
 public:
  struct Slot {
    std::ptrdiff_t index;  // -1 when outside the box
    int parity;            // +1 if the queried frequency is canonical, -1 if negated
  };

  static std::shared_ptr<const FrequencyTable> get(int resolution);

  explicit FrequencyTable(int resolution);

  int resolution() const { return resolution_; }
  std::size_t size() const { return frequencies_.size(); }
  const Frequency& operator[](std::size_t index) const { return frequencies_[index]; }
  const std::vector<Frequency>& frequencies() const { return frequencies_; }

  bool contains(const Frequency& m) const { return m.max_abs() <= resolution_; }
  Slot locate(const Frequency& m) const;

 private:
  int resolution_;
  std::vector<Frequency> frequencies_;
  std::vector<std::ptrdiff_t> lookup_;
};

template <typename Scalar>
class SpectralField {
 public:
  using Coefficients = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SpectralField() : SpectralField(Rank::scalar, 0) {}

  SpectralField(Rank rank, int resolution)
      : rank_(rank), table_(FrequencyTable::get(resolution)) {
    cos_ = Coefficients::Constant(table_->size(), components(), Scalar(0));
    sin_ = Coefficients::Constant(table_->size(), components(), Scalar(0));
  }

  static SpectralField zero(Rank rank, int resolution) { return SpectralField(rank, resolution); }

  Rank rank() const { return rank_; }
  int components() const { return static_cast<int>(rank_); }
  int resolution() const { return table_->resolution(); }
  const FrequencyTable& table() const { return *table_; }
  std::size_t size() const { return table_->size(); }

  /// Rows index canonical frequencies, columns index vector components.
  const Coefficients& cos_coefficients() const { return cos_; }
  const Coefficients& sin_coefficients() const { return sin_; }
  Coefficients& cos_coefficients() { return cos_; }
  Coefficients& sin_coefficients() { return sin_; }

  /// Amplitude of cos<m,x> (resp. sin<m,x>) for any sign of m; zero outside the box.
  Scalar amplitude(Kind kind, int component, const Frequency& m) const {
    auto slot = table_->locate(m);
    if (slot.index < 0) return Scalar(0);
    if (kind == Kind::cos) return cos_(slot.index, component);
    return slot.parity > 0 ? sin_(slot.index, component) : Scalar(-sin_(slot.index, component));
  }

  /// Adds amplitude * {cos,sin}<m,x> to the given component.
  void add_mode(Kind kind, int component, const Frequency& m, const Scalar& amplitude) {
    auto slot = table_->locate(m);
    if (slot.index < 0) {
      throw ResolutionError("frequency " + m.to_string() + " outside resolution " +
                            std::to_string(resolution()));
    }
    if (kind == Kind::cos) {
      cos_(slot.index, component) += amplitude;
    } else if (!m.is_zero()) {
      if (slot.parity > 0)
        sin_(slot.index, component) += amplitude;
      else
        sin_(slot.index, component) -= amplitude;
    }
  }

  Scalar mean(int component = 0) const { return cos_(0, component); }

  SpectralField component(int c) const {
    SpectralField out(Rank::scalar, resolution());
    out.cos_.col(0) = cos_.col(c);
    out.sin_.col(0) = sin_.col(c);
    return out;
  }

  void set_component(int c, const SpectralField& scalar) {
    require_same_resolution(scalar);
    cos_.col(c) = scalar.cos_.col(0);
    sin_.col(c) = scalar.sin_.col(0);
  }

  static SpectralField from_components(const SpectralField& x, const SpectralField& y,
                                       const SpectralField& z) {
    SpectralField out(Rank::vector, x.resolution());
    out.set_component(0, x);
    out.set_component(1, y);
    out.set_component(2, z);
    return out;
  }

  bool is_zero() const {
    for (Eigen::Index j = 0; j < cos_.cols(); ++j)
      for (Eigen::Index i = 0; i < cos_.rows(); ++i)
        if (cos_(i, j) != Scalar(0) || sin_(i, j) != Scalar(0)) return false;
    return true;
  }

  template <typename To>
  SpectralField<To> cast() const;

  SpectralField& operator+=(const SpectralField& o) {
    require_compatible(o);
    cos_ += o.cos_;
    sin_ += o.sin_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    require_compatible(o);
    cos_ -= o.cos_;
    sin_ -= o.sin_;
    return *this;
  }
  SpectralField& operator*=(const Scalar& s) {
    cos_ *= s;
    sin_ *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(SpectralField a, const Scalar& s) { return a *= s; }
  friend SpectralField operator*(const Scalar& s, SpectralField a) { return a *= s; }
  friend SpectralField operator-(SpectralField a) { return a *= Scalar(-1); }

  friend bool operator==(const SpectralField& a, const SpectralField& b) {
    return a.rank_ == b.rank_ && a.resolution() == b.resolution() && a.cos_ == b.cos_ &&
           a.sin_ == b.sin_;
  }

  void require_same_resolution(const SpectralField& o) const {
    if (o.resolution() != resolution())
      throw ResolutionError("resolution mismatch: " + std::to_string(resolution()) + " vs " +
                            std::to_string(o.resolution()));
  }
  void require_compatible(const SpectralField& o) const {
    require_same_resolution(o);
    if (o.rank_ != rank_) throw InvalidArgument("rank mismatch between fields");
  }

 private:
  template <typename>
  friend class SpectralField;

  Rank rank_;
  std::shared_ptr<const FrequencyTable> table_;
  Coefficients cos_;
  Coefficients sin_;
};

using Field = SpectralField<double>;

template <typename Scalar>
template <typename To>
SpectralField<To> SpectralField<Scalar>::cast() const {
  SpectralField<To> out(rank_, resolution());
  for (Eigen::Index j = 0; j < cos_.cols(); ++j) {
    for (Eigen::Index i = 0; i < cos_.rows(); ++i) {
      if constexpr (std::is_same_v<To, double> && !std::is_arithmetic_v<Scalar>) {
        out.cos_(i, j) = static_cast<double>(cos_(i, j).numerator()) /
                         static_cast<double>(cos_(i, j).denominator());
        out.sin_(i, j) = static_cast<double>(sin_(i, j).numerator()) /
                         static_cast<double>(sin_(i, j).denominator());
      } else {
        out.cos_(i, j) = static_cast<To>(cos_(i, j));
        out.sin_(i, j) = static_cast<To>(sin_(i, j));
      }
    }
  }
  return out;
}

/// Pure mode e_i cos<m,x> or e_i sin<m,x>; component < 0 requests a scalar field.
template <typename Scalar = double>
SpectralField<Scalar> make_mode(Kind kind, int component, const Frequency& m, int resolution) {
  if (!FrequencyTable::get(resolution)->contains(m))
    throw ResolutionError("frequency " + m.to_string() + " outside resolution " +
                          std::to_string(resolution));
  const bool scalar = component < 0;
  SpectralField<Scalar> out(scalar ? Rank::scalar : Rank::vector, resolution);
  out.add_mode(kind, scalar ? 0 : component, m, Scalar(1));
  return out;
}

/// Copy at another resolution: modes outside the new box are dropped, new ones are zero.
template <typename Scalar>
SpectralField<Scalar> resample(const SpectralField<Scalar>& f, int resolution) {
  if (resolution == f.resolution()) return f;
  SpectralField<Scalar> out(f.rank(), resolution);
  const auto& table = f.table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto slot = out.table().locate(table[i]);
    if (slot.index < 0) continue;
    out.cos_coefficients().row(slot.index) = f.cos_coefficients().row(i);
    out.sin_coefficients().row(slot.index) = f.sin_coefficients().row(i);
  }
  return out;
}

/// Exact term-by-term d/dx_axis (axis in 0..2).
template <typename Scalar>
SpectralField<Scalar> derivative(const SpectralField<Scalar>& f, int axis) {
  SpectralField<Scalar> out(f.rank(), f.resolution());
  const auto& table = f.table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const int k = table[i][axis];
    if (k == 0) continue;
    // d/dx (a cos + b sin) = k (b cos - a sin)
    out.cos_coefficients().row(i) = f.sin_coefficients().row(i) * Scalar(k);
    out.sin_coefficients().row(i) = f.cos_coefficients().row(i) * Scalar(-k);
  }
  return out;
}

/// Gradient of a scalar field.
template <typename Scalar>
SpectralField<Scalar> gradient(const SpectralField<Scalar>& f) {
  return SpectralField<Scalar>::from_components(derivative(f, 0), derivative(f, 1),
                                                derivative(f, 2));
}

template <typename Scalar>
SpectralField<Scalar> divergence(const SpectralField<Scalar>& v) {
  SpectralField<Scalar> out = derivative(v.component(0), 0);
  out += derivative(v.component(1), 1);
  out += derivative(v.component(2), 2);
  return out;
}

template <typename Scalar>
SpectralField<Scalar> laplacian(const SpectralField<Scalar>& f) {
  SpectralField<Scalar> out = f;
  const auto& table = f.table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Scalar w(-table[i].l2_squared());
    out.cos_coefficients().row(i) *= w;
    out.sin_coefficients().row(i) *= w;
  }
  return out;
}

/// Multiplies coefficient m by a function of m (row-wise, all components).
template <typename Scalar, typename Multiplier>
SpectralField<Scalar> apply_multiplier(const SpectralField<Scalar>& f, Multiplier&& multiplier) {
  SpectralField<Scalar> out = f;
  const auto& table = f.table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Scalar w = multiplier(table[i]);
    out.cos_coefficients().row(i) *= w;
    out.sin_coefficients().row(i) *= w;
  }
  return out;
}

/// Heat-semigroup smoothing: coefficient m is multiplied by exp(-mu |m|^2).
inline Field mollify(const Field& f, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("mollify requires mu > 0");
  return apply_multiplier(f, [mu](const Frequency& m) { return std::exp(-mu * m.l2_squared()); });
}

/// H^k norm with weight (1 + |m|^2)^k; k = 0 is the L^2(T^3) norm.
inline double sobolev_norm(const Field& f, int k) {
  const auto& table = f.table();
  double sum = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    double energy = f.cos_coefficients().row(i).squaredNorm();
    if (i != 0) energy = 0.5 * (energy + f.sin_coefficients().row(i).squaredNorm());
    if (energy == 0.0) continue;
    sum += std::pow(1.0 + table[i].l2_squared(), k) * energy;
  }
  return std::sqrt(kTorusVolume * sum);
}

/// L^2(T^3) inner product of two fields of equal rank.
template <typename Scalar>
Scalar inner_product_over_volume(const SpectralField<Scalar>& f, const SpectralField<Scalar>& g) {
  f.require_compatible(g);
  Scalar sum(0);
  for (int c = 0; c < f.components(); ++c) {
    sum += f.cos_coefficients()(0, c) * g.cos_coefficients()(0, c);
    Scalar rest(0);
    for (std::size_t i = 1; i < f.size(); ++i) {
      rest += f.cos_coefficients()(i, c) * g.cos_coefficients()(i, c) +
              f.sin_coefficients()(i, c) * g.sin_coefficients()(i, c);
    }
    sum += rest / Scalar(2);
  }
  return sum;  // multiply by the torus volume for the integral
}

inline double inner_product(const Field& f, const Field& g) {
  return kTorusVolume * inner_product_over_volume(f, g);
}

/// Mean-zero solution of laplacian(psi) = rhs. The mean of rhs must vanish up
/// to relative_tolerance times the rms of rhs.
inline Field poisson_solve(const Field& rhs, double relative_tolerance = 1e-10) {
  if (rhs.rank() != Rank::scalar) throw InvalidArgument("poisson_solve expects a scalar field");
  const double mean = rhs.mean();
  const double rms = sobolev_norm(rhs, 0) / std::sqrt(kTorusVolume);
  if (std::abs(mean) > relative_tolerance * rms) {
    throw SolvabilityError("Poisson right-hand side has nonzero mean " + std::to_string(mean) +
                           " (rms " + std::to_string(rms) + ")");
  }
  Field out = apply_multiplier(rhs, [](const Frequency& m) {
    return m.is_zero() ? 0.0 : -1.0 / static_cast<double>(m.l2_squared());
  });
  return out;
}

enum class Truncation { discard, strict };

namespace detail {

template <typename Scalar>
void accumulate_product_term(SpectralField<Scalar>& out, int component, const Frequency& m1,
                             Kind k1, const Scalar& a1, const Frequency& m2, Kind k2,
                             const Scalar& a2, Truncation policy) {
  // Product-to-sum:
  //   cos A cos B = (cos(A-B) + cos(A+B)) / 2
  //   sin A sin B = (cos(A-B) - cos(A+B)) / 2
  //   sin A cos B = (sin(A+B) + sin(A-B)) / 2
  //   cos A sin B = (sin(A+B) - sin(A-B)) / 2
  const Scalar half = a1 * a2 / Scalar(2);
  const Frequency sum = m1 + m2;
  const Frequency diff = m1 - m2;
  auto add = [&](Kind kind, const Frequency& m, const Scalar& v) {
    if (v == Scalar(0)) return;
    if (kind == Kind::sin && m.is_zero()) return;
    if (!out.table().contains(m)) {
      if (policy == Truncation::strict)
        throw ResolutionError("exact product leaves resolution at " + m.to_string());
      return;
    }
    out.add_mode(kind, component, m, v);
  };
  if (k1 == Kind::cos && k2 == Kind::cos) {
    add(Kind::cos, diff, half);
    add(Kind::cos, sum, half);
  } else if (k1 == Kind::sin && k2 == Kind::sin) {
    add(Kind::cos, diff, half);
    add(Kind::cos, sum, -half);
  } else if (k1 == Kind::sin && k2 == Kind::cos) {
    add(Kind::sin, sum, half);
    add(Kind::sin, diff, half);
  } else {
    add(Kind::sin, sum, half);
    add(Kind::sin, diff, -half);
  }
}

template <typename Scalar>
struct SparseTerm {
  std::size_t row;
  Kind kind;
  Scalar amplitude;
};

template <typename Scalar>
std::vector<SparseTerm<Scalar>> nonzero_terms(const SpectralField<Scalar>& f, int component) {
  std::vector<SparseTerm<Scalar>> terms;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Scalar& a = f.cos_coefficients()(i, component);
    const Scalar& b = f.sin_coefficients()(i, component);
    if (a != Scalar(0)) terms.push_back({i, Kind::cos, a});
    if (b != Scalar(0)) terms.push_back({i, Kind::sin, b});
  }
  return terms;
}

}  // namespace detail

/// Pointwise product of scalar fields by direct convolution of the nonzero
/// terms. Exact for exact scalars; intended for sparse fields.
template <typename Scalar>
SpectralField<Scalar> multiply_exact(const SpectralField<Scalar>& f, const SpectralField<Scalar>& g,
                                     Truncation policy = Truncation::discard) {
  f.require_same_resolution(g);
  SpectralField<Scalar> out(Rank::scalar, f.resolution());
  const auto tf = detail::nonzero_terms(f, 0);
  const auto tg = detail::nonzero_terms(g, 0);
  const auto& table = f.table();
  for (const auto& a : tf)
    for (const auto& b : tg)
      detail::accumulate_product_term(out, 0, table[a.row], a.kind, a.amplitude, table[b.row],
                                      b.kind, b.amplitude, policy);
  return out;
}

/// (a . grad) b by exact convolution; a is a vector field, b scalar or vector.
template <typename Scalar>
SpectralField<Scalar> advect_exact(const SpectralField<Scalar>& a, const SpectralField<Scalar>& b,
                                   Truncation policy = Truncation::discard) {
  a.require_same_resolution(b);
  if (a.rank() != Rank::vector) throw InvalidArgument("advect: transporting field must be a vector");
  SpectralField<Scalar> out(b.rank(), b.resolution());
  for (int c = 0; c < b.components(); ++c) {
    SpectralField<Scalar> acc(Rank::scalar, b.resolution());
    const auto bc = b.component(c);
    for (int j = 0; j < 3; ++j) {
      acc += multiply_exact(a.component(j), derivative(bc, j), policy);
    }
    out.set_component(c, acc);
  }
  return out;
}

}  // namespace ceuler
