#pragma once

#include <boost/multiprecision/cpp_int.hpp>

namespace nsa {

using BigNat = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Rational pow2_inv(unsigned k) {
  BigNat d = 1;
  d <<= k;
  return Rational(1, d);
}

inline Rational rat_abs(const Rational& q) { return q < 0 ? Rational(-q) : q; }

inline Rational clamp01(const Rational& q) {
  if (q < 0) return Rational(0);
  if (q > 1) return Rational(1);
  return q;
}

}  // namespace nsa
