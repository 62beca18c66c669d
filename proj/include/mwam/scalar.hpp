#pragma once

#include <quadmath.h>

#include <cmath>

namespace mwam {

/// 113-bit mantissa scalar for checks that double cannot resolve.
using quad = __float128;

namespace num {
inline double sqrt(double x) { return std::sqrt(x); }
inline quad sqrt(quad x) { return sqrtq(x); }
inline double abs(double x) { return std::abs(x); }
inline quad abs(quad x) { return x < 0 ? -x : x; }
}  // namespace num

}  // namespace mwam
