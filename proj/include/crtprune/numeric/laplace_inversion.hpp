#pragma once

// Distribution functions recovered from Laplace transforms.
//
// The CDF of a (possibly defective) law on (0, inf) with transform L is the
// inverse transform of L(s)/s. It is evaluated by the fixed Talbot contour,
// tabulated on a logarithmic grid, made monotone and interpolated with a
// monotone cubic in log t. Samples come from inverting that interpolant.
// A known atom at 0 is split off first.

#include "crtprune/error.hpp"
#include "crtprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace crtprune::numeric {

using cplx = std::complex<double>;

inline constexpr int kTalbotNodes = 20;

/// Fixed Talbot inversion of F at t > 0.
template <class F>
double talbot_invert(const F& transform, double t, int M = kTalbotNodes) {
  const double r = 2.0 * M / (5.0 * t);
  double sum = 0.5 * std::real(transform(cplx(r, 0.0))) * std::exp(r * t);
  for (int k = 1; k < M; ++k) {
    const double th = k * M_PI / M;
    const double cot = 1.0 / std::tan(th);
    const cplx s(r * th * cot, r * th);
    const double sig = th + (th * cot - 1.0) * cot;
    sum += std::real(std::exp(t * s) * transform(s) * cplx(1.0, sig));
  }
  return sum * r / M;
}

/// CDF at t of the law whose Laplace transform is `laplace`.
template <class L>
double talbot_cdf(const L& laplace, double t, int M = kTalbotNodes) {
  return talbot_invert([&](cplx s) { return laplace(s) / s; }, t, M);
}

/// Euler-accelerated Bromwich inversion (Abate-Whitt) of F at t > 0. Uses
/// only Re s > 0, so it is the fallback when the transform cannot be
/// continued far into the left half-plane.
template <class F>
double euler_invert(const F& transform, double t, int n = 15, int m = 11) {
  constexpr double A = 18.4;
  auto term = [&](int k) { return std::real(transform(cplx(A / (2.0 * t), k * M_PI / t))); };
  double sum = 0.5 * term(0);
  for (int k = 1; k <= n; ++k) sum += (k % 2 ? -1.0 : 1.0) * term(k);
  double acc = sum, binom = 1.0;
  for (int j = 1; j <= m; ++j) {
    const int k = n + j;
    sum += (k % 2 ? -1.0 : 1.0) * term(k);
    binom *= static_cast<double>(m - j + 1) / j;
    acc += binom * sum;
  }
  return std::exp(A / 2.0) / t * acc / std::pow(2.0, m);
}

struct LaplaceSpec {
  std::function<cplx(cplx)> transform;
  double total_mass = 1.0;  // L(0+); below 1 for a defective law
  double atom = 0.0;        // mass at 0, i.e. L(+inf)
};

struct InversionOptions {
  int per_decade = 24;
  double lower_tail = 1e-10;  // relative mass left below the grid
  double upper_tail = 1e-6;   // mass left above the grid
  double min_t = 1e-14;
  double max_t = 1e16;
  double check_tol = 1e-3;
};

/// Monotone piecewise-cubic CDF in y = log t.
class TabulatedCdf {
public:
  TabulatedCdf() = default;
  // F holds the diffuse part only; `atom` is the extra mass at 0.
  TabulatedCdf(std::vector<double> y, std::vector<double> F, double total, double atom = 0.0)
      : y_(std::move(y)), F_(std::move(F)), total_(total), atom_(atom) {
    init_slopes();
    init_tails();
  }

  double total_mass() const { return atom_ + total_; }
  double atom() const { return atom_; }
  double lower() const { return std::exp(y_.front()); }
  double upper() const { return std::exp(y_.back()); }

  double operator()(double t) const {
    if (t < 0.0) return 0.0;
    return atom_ + diffuse(t);
  }

  /// Inverse CDF; +inf for u beyond the total mass.
  double quantile(double u) const {
    if (u < atom_) return 0.0;
    return diffuse_quantile(u - atom_);
  }

  template <class Rng>
  double sample(Rng& g) const {
    return quantile(uniform_open(g));
  }

  /// int e^{-lam t} dF(t) over [0, inf).
  double laplace(double lam) const { return atom_ + diffuse_laplace(lam); }

private:
  double diffuse(double t) const {
    if (!(t > 0.0)) return 0.0;
    if (!std::isfinite(t)) return total_;
    const double y = std::log(t);
    if (y <= y_.front()) return F_.front() * std::exp(low_exp_ * (y - y_.front()));
    if (y >= y_.back()) return total_ - tail_top_ * std::exp(-high_exp_ * (y - y_.back()));
    const std::size_t i = interval(y);
    return hermite(i, y);
  }

  double diffuse_quantile(double u) const {
    if (u >= total_) return std::numeric_limits<double>::infinity();
    if (u <= F_.front()) {
      if (F_.front() <= 0.0) return std::exp(y_.front());
      return std::exp(y_.front() + std::log(u / F_.front()) / low_exp_);
    }
    if (u >= F_.back()) {
      const double rest = total_ - u;
      return std::exp(y_.back() + std::log(tail_top_ / rest) / high_exp_);
    }
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(F_.begin(), F_.end(), u) - F_.begin()) - 1;
    double lo = y_[i], hi = y_[i + 1];
    for (int it = 0; it < 100 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (hermite(i, mid) < u) lo = mid;
      else hi = mid;
    }
    return std::exp(0.5 * (lo + hi));
  }

  // lam * int e^{-lam t} F(t) dt over the diffuse part.
  double diffuse_laplace(double lam) const {
    // Integrate in y over the grid with Simpson on each cell, plus the tails.
    double s = 0.0;
    auto integrand = [&](double y) {
      const double t = std::exp(y);
      return lam * t * std::exp(-lam * t) * diffuse(t);
    };
    const double y0 = y_.front() - 30.0 / low_exp_;
    std::vector<double> ys{y0};
    ys.insert(ys.end(), y_.begin(), y_.end());
    const double y_stop = std::max(y_.back(), std::log(60.0 / lam));
    if (y_stop > y_.back()) ys.push_back(y_stop);
    for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
      const int sub = 8;
      const double h = (ys[i + 1] - ys[i]) / (2 * sub);
      double acc = integrand(ys[i]) + integrand(ys[i + 1]);
      for (int j = 1; j < 2 * sub; ++j) acc += integrand(ys[i] + j * h) * (j % 2 ? 4.0 : 2.0);
      s += acc * h / 3.0;
    }
    return s;
  }

  std::size_t interval(double y) const {
    auto it = std::upper_bound(y_.begin(), y_.end(), y);
    return static_cast<std::size_t>(it - y_.begin()) - 1;
  }

  double hermite(std::size_t i, double y) const {
    const double h = y_[i + 1] - y_[i];
    const double s = (y - y_[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * F_[i] + h10 * h * d_[i] + h01 * F_[i + 1] + h11 * h * d_[i + 1];
  }

  // Fritsch-Carlson slopes.
  void init_slopes() {
    const std::size_t n = y_.size();
    std::vector<double> delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (F_[i + 1] - F_[i]) / (y_[i + 1] - y_[i]);
    d_.assign(n, 0.0);
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      d_[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (delta[i] == 0.0) {
        d_[i] = d_[i + 1] = 0.0;
        continue;
      }
      const double a = d_[i] / delta[i], b = d_[i + 1] / delta[i];
      const double q = a * a + b * b;
      if (q > 9.0) {
        const double tau = 3.0 / std::sqrt(q);
        d_[i] = tau * a * delta[i];
        d_[i + 1] = tau * b * delta[i];
      }
    }
  }

  void init_tails() {
    const std::size_t n = y_.size();
    low_exp_ = 1.0;
    if (F_[0] > 0.0 && F_[1] > F_[0]) low_exp_ = std::max(0.05, std::log(F_[1] / F_[0]) / (y_[1] - y_[0]));
    tail_top_ = std::max(total_ - F_[n - 1], 0.0);
    const double prev = total_ - F_[n - 2];
    high_exp_ = 0.5;
    if (tail_top_ > 0.0 && prev > tail_top_) high_exp_ = std::max(0.05, std::log(prev / tail_top_) / (y_[n - 1] - y_[n - 2]));
  }

  std::vector<double> y_, F_, d_;
  double total_ = 1.0;
  double atom_ = 0.0;
  double low_exp_ = 1.0, high_exp_ = 0.5, tail_top_ = 0.0;
};

/// Tabulates the CDF, then re-computes the transform from the table at a few
/// points spread over the bulk of the law and throws InversionError unless
/// all of them agree with the input within `check_tol`.
inline TabulatedCdf invert_laplace(const LaplaceSpec& spec, const InversionOptions& opt = {}) {
  const double mass = spec.total_mass;
  if (!(mass > 0.0 && mass <= 1.0 + 1e-12)) throw InversionError("invert_laplace: total mass must lie in (0,1]");
  if (!(spec.atom >= 0.0 && spec.atom <= mass)) throw InversionError("invert_laplace: atom must lie in [0, total mass]");
  const double atom = spec.atom;
  const double diffuse_mass = mass - atom;
  if (!(diffuse_mass > 1e-12)) {
    return TabulatedCdf({-1.0, 0.0, 1.0, 2.0}, {0.0, 0.0, 0.0, 0.0}, 0.0, mass);
  }
  auto diffuse = [&](cplx s) { return spec.transform(s) - atom; };
  auto cdf = [&](double t) {
    double v = talbot_cdf(diffuse, t);
    if (!std::isfinite(v) || v < -1e-6 || v > diffuse_mass + 1e-6) {
      v = euler_invert([&](cplx s) { return diffuse(s) / s; }, t);
    }
    if (!std::isfinite(v)) throw InversionError("invert_laplace: non-finite contour value at t = " + std::to_string(t));
    return v;
  };
  const double step = std::log(10.0) / opt.per_decade;
  // Grid end points by decades from t = 1.
  double y_lo = 0.0, y_hi = 0.0;
  while (std::exp(y_lo) > opt.min_t && cdf(std::exp(y_lo)) > opt.lower_tail * diffuse_mass) y_lo -= std::log(10.0);
  while (std::exp(y_hi) < opt.max_t && diffuse_mass - cdf(std::exp(y_hi)) > opt.upper_tail) y_hi += std::log(10.0);
  std::vector<double> ys, Fs;
  for (double y = y_lo; y <= y_hi + 1e-9; y += step) {
    ys.push_back(y);
    Fs.push_back(std::clamp(cdf(std::exp(y)), 0.0, diffuse_mass));
  }
  for (std::size_t i = 1; i < Fs.size(); ++i) Fs[i] = std::max(Fs[i], Fs[i - 1]);
  if (Fs.size() < 4) throw InversionError("invert_laplace: degenerate grid");
  TabulatedCdf table(std::move(ys), std::move(Fs), diffuse_mass, atom);

  for (double p : {0.1, 0.5, 0.9}) {
    const double t = table.quantile(atom + p * diffuse_mass);
    if (!std::isfinite(t) || !(t > 0.0)) continue;
    const double lam = 1.0 / t;
    const double want = std::real(spec.transform(cplx(lam, 0.0)));
    const double got = table.laplace(lam);
    if (!(std::abs(want - got) <= opt.check_tol)) {
      throw InversionError("invert_laplace: self-consistency failed at lam = " + std::to_string(lam) +
                           " (transform " + std::to_string(want) + ", table " + std::to_string(got) + ")");
    }
  }
  return table;
}

}  // namespace crtprune::numeric
