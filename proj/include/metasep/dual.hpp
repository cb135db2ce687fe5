// metasep/dual.hpp

// Copyright 2026  The metasep authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef METASEP_DUAL_HPP_
#define METASEP_DUAL_HPP_

#include <cmath>

namespace metasep {

// First-order dual number: carries a value and one tangent component.
// Running the hand-written gradient code with Dual scalars seeded with a
// direction v yields the Hessian-vector product H·v in the tangent parts
// (forward-over-reverse), which is how the exact second-order meta-gradient
// is assembled without forming the Hessian.
struct Dual {
  double v = 0.0;  // value
  double t = 0.0;  // tangent

  Dual() = default;
  Dual(double value) : v(value), t(0.0) {}  // NOLINT(runtime/explicit)
  Dual(double value, double tangent) : v(value), t(tangent) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.t + b.t}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.t - b.t}; }
inline Dual operator-(Dual a) { return {-a.v, -a.t}; }
inline Dual operator*(Dual a, Dual b) {
  return {a.v * b.v, a.t * b.v + a.v * b.t};
}
inline Dual operator/(Dual a, Dual b) {
  double inv = 1.0 / b.v;
  double q = a.v * inv;
  return {q, (a.t - q * b.t) * inv};
}

inline Dual &operator+=(Dual &a, Dual b) { a = a + b; return a; }
inline Dual &operator-=(Dual &a, Dual b) { a = a - b; return a; }
inline Dual &operator*=(Dual &a, Dual b) { a = a * b; return a; }
inline Dual &operator/=(Dual &a, Dual b) { a = a / b; return a; }

// Comparisons act on values only; branch decisions are shared with the
// plain-double path so both paths trace the same program.
inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }
inline bool operator<=(Dual a, Dual b) { return a.v <= b.v; }
inline bool operator>=(Dual a, Dual b) { return a.v >= b.v; }

inline Dual log(Dual a) { return {std::log(a.v), a.t / a.v}; }
inline Dual exp(Dual a) {
  double e = std::exp(a.v);
  return {e, e * a.t};
}
inline Dual sqrt(Dual a) {
  double s = std::sqrt(a.v);
  return {s, s > 0.0 ? 0.5 * a.t / s : 0.0};
}
inline Dual tanh(Dual a) {
  double th = std::tanh(a.v);
  return {th, (1.0 - th * th) * a.t};
}

// Generic accessors so numeric code can branch on magnitudes for either
// scalar type.
inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

}  // namespace metasep

#endif  // METASEP_DUAL_HPP_
