#pragma once

#include "crtprune/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <queue>
#include <string>
#include <vector>

namespace crtprune::numeric {

struct QuadratureOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  int max_intervals = 2000;
};

template <class T>
struct QuadratureResult {
  T value{};
  double error = 0.0;
  int intervals = 0;
};

namespace detail {

// 15-point Kronrod nodes on [0,1) half-interval and the embedded 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }

template <class T>
struct Segment {
  double a, b;
  T value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class T, class F>
Segment<T> gauss_kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const T fc = f(center);
  T kronrod = fc * kKronrodWeights[7];
  T gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const T sum = f(center - dx) + f(center + dx);
    kronrod += sum * kKronrodWeights[j];
    if (j % 2 == 1) gauss += sum * kGaussWeights[j / 2];
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, magnitude(kronrod - gauss)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
/// Works for real- and complex-valued integrands.
template <class F>
auto integrate(F f, double a, double b, const QuadratureOptions& opt = {}) {
  using T = std::decay_t<decltype(f(a))>;
  QuadratureResult<T> out;
  if (a == b) return out;
  if (!(std::isfinite(a) && std::isfinite(b))) throw IntegrationError("integrate: infinite bounds");

  std::priority_queue<detail::Segment<T>> heap;
  auto first = detail::gauss_kronrod15<T>(f, a, b);
  T total = first.value;
  double err = first.error;
  heap.push(first);
  int count = 1;
  while (err > std::max(opt.abs_tol, opt.rel_tol * detail::magnitude(total))) {
    if (count >= opt.max_intervals) {
      throw IntegrationError("integrate: tolerance not reached on [" + std::to_string(a) + ", " +
                             std::to_string(b) + "], error estimate " + std::to_string(err));
    }
    auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw IntegrationError("integrate: interval collapsed below machine resolution");
    }
    auto left = detail::gauss_kronrod15<T>(f, worst.a, mid);
    auto right = detail::gauss_kronrod15<T>(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++count;
    // Re-sum to avoid drift of the running totals.
    if (count % 64 == 0) {
      auto copy = heap;
      T t{};
      double e = 0.0;
      while (!copy.empty()) {
        t += copy.top().value;
        e += copy.top().error;
        copy.pop();
      }
      total = t;
      err = e;
    }
  }
  out.value = total;
  out.error = err;
  out.intervals = count;
  return out;
}

/// Integrates over consecutive breakpoints, adding the pieces.
template <class F>
auto integrate_piecewise(F f, const std::vector<double>& breaks, const QuadratureOptions& opt = {}) {
  using T = std::decay_t<decltype(f(breaks.front()))>;
  T total{};
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] > breaks[i]) total += integrate(f, breaks[i], breaks[i + 1], opt).value;
  }
  return total;
}

}  // namespace crtprune::numeric
