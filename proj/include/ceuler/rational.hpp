#pragma once

// Exact rational scalar used for symbolic trigonometric expansions.

#include <cstdint>
#include <string>

#include <Eigen/Core>
#include <boost/rational.hpp>

namespace ceuler {

using Rational = boost::rational<std::int64_t>;

/// "p/q", or "p" when q == 1.
std::string to_string(const Rational& r);

/// Parses "p/q" or "p"; throws InvalidArgument otherwise.
Rational parse_rational(const std::string& text);

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace ceuler

namespace Eigen {

template <>
struct NumTraits<ceuler::Rational> : GenericNumTraits<ceuler::Rational> {
  using Real = ceuler::Rational;
  using NonInteger = ceuler::Rational;
  using Nested = ceuler::Rational;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 8,
    MulCost = 8
  };
  static inline Real epsilon() { return Real(0); }
  static inline Real dummy_precision() { return Real(0); }
  static inline int digits10() { return 0; }
};

}  // namespace Eigen
