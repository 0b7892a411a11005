#pragma once

#include <array>
#include <compare>
#include <cstdlib>
#include <ostream>
#include <string>

namespace ceuler {

/// Integer wavenumber on the 3-torus.
struct Frequency {
  std::array<int, 3> m{0, 0, 0};

  constexpr Frequency() = default;
  constexpr Frequency(int m1, int m2, int m3) : m{m1, m2, m3} {}

  constexpr int operator[](int axis) const { return m[axis]; }
  constexpr int& operator[](int axis) { return m[axis]; }

  /// l1 size, the size used by the saturation hierarchy.
  constexpr int l1() const { return std::abs(m[0]) + std::abs(m[1]) + std::abs(m[2]); }
  constexpr int l2_squared() const { return m[0] * m[0] + m[1] * m[1] + m[2] * m[2]; }
  constexpr int max_abs() const {
    int r = 0;
    for (int v : m) r = std::max(r, std::abs(v));
    return r;
  }
  constexpr bool is_zero() const { return m[0] == 0 && m[1] == 0 && m[2] == 0; }

  /// First nonzero component is positive (or the frequency is zero).
  constexpr bool is_canonical() const {
    for (int v : m) {
      if (v != 0) return v > 0;
    }
    return true;
  }
  constexpr Frequency canonical() const { return is_canonical() ? *this : -*this; }

  constexpr Frequency operator-() const { return {-m[0], -m[1], -m[2]}; }
  constexpr Frequency operator+(const Frequency& o) const {
    return {m[0] + o.m[0], m[1] + o.m[1], m[2] + o.m[2]};
  }
  constexpr Frequency operator-(const Frequency& o) const {
    return {m[0] - o.m[0], m[1] - o.m[1], m[2] - o.m[2]};
  }
  constexpr Frequency operator*(int s) const { return {s * m[0], s * m[1], s * m[2]}; }

  constexpr auto operator<=>(const Frequency&) const = default;

  std::string to_string() const {
    return "(" + std::to_string(m[0]) + "," + std::to_string(m[1]) + "," + std::to_string(m[2]) +
           ")";
  }
};

inline std::ostream& operator<<(std::ostream& os, const Frequency& f) { return os << f.to_string(); }

}  // namespace ceuler
