#include "ceuler/rational.hpp"

#include <charconv>

#include "ceuler/errors.hpp"

namespace ceuler {

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

Rational parse_rational(const std::string& text) {
  auto parse_int = [&](std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw InvalidArgument("malformed rational '" + text + "'");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return Rational(parse_int(text));
  const auto den = parse_int(std::string_view(text).substr(slash + 1));
  if (den == 0) throw InvalidArgument("zero denominator in '" + text + "'");
  return Rational(parse_int(std::string_view(text).substr(0, slash)), den);
}

}  // namespace ceuler
