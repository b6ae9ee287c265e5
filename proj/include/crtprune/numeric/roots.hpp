#pragma once

#include "crtprune/error.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace crtprune::numeric {

inline constexpr int kMaxRootIterations = 200;

struct Bracket {
  double lo, hi;
  double f_lo, f_hi;
};

/// Hybrid bisection/secant root finder (Dekker-Brent) on a sign-changing bracket.
/// Stops when the bracket is narrower than `x_tol` (plus a few ulps) or f vanishes.
template <class F>
double find_root(F f, Bracket br, double x_tol = 0.0, int max_iter = kMaxRootIterations) {
  double a = br.lo, b = br.hi, fa = br.f_lo, fb = br.f_hi;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw ConvergenceError("find_root: bracket does not change sign");
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < max_iter; ++iter) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * x_tol;
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0.0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      // Secant step, accepted only if it stays well inside the bracket.
      const double s = fb / fa;
      double p = 2.0 * m * s;
      double q = 1.0 - s;
      if (p > 0) q = -q;
      else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol) ? d : (m > 0 ? tol : -tol);
    fb = f(b);
  }
  throw ConvergenceError("find_root: no convergence after " + std::to_string(max_iter) + " iterations");
}

/// Grows [x0, x0 + step] upward by doubling the step until f changes sign.
/// `f(x0)` must be finite; `limit` caps the search.
template <class F>
Bracket bracket_upward(F f, double x0, double step, double limit = 1e300) {
  const double f0 = f(x0);
  double lo = x0, flo = f0;
  for (int i = 0; i < 2100; ++i) {
    const double hi = std::min(x0 + step, limit);
    const double fhi = f(hi);
    if ((fhi > 0) != (f0 > 0) || fhi == 0.0) return {lo, hi, flo, fhi};
    if (hi >= limit) break;
    lo = hi;
    flo = fhi;
    step *= 2.0;
  }
  throw ConvergenceError("bracket_upward: no sign change found");
}

/// Mirror image of bracket_upward: walks toward smaller x, never below `limit`.
template <class F>
Bracket bracket_downward(F f, double x0, double step, double limit = -1e300) {
  const double f0 = f(x0);
  double hi = x0, fhi = f0;
  for (int i = 0; i < 2100; ++i) {
    const double lo = std::max(x0 - step, limit);
    const double flo = f(lo);
    if ((flo > 0) != (f0 > 0) || flo == 0.0) return {lo, hi, flo, fhi};
    if (lo <= limit) break;
    hi = lo;
    fhi = flo;
    step *= 2.0;
  }
  throw ConvergenceError("bracket_downward: no sign change found");
}

}  // namespace crtprune::numeric
