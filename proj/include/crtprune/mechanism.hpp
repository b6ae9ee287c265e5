#pragma once

/*
 * Branching mechanisms
 *
 *   psi(lam) = alpha_tilde*lam + beta*lam^2
 *              + int_(0,inf) pi(dl) [exp(-lam*l) - 1 + lam*l*1{l<=1}]
 *
 * with the Levy measure pi drawn from a small closed family:
 *
 *   - ZeroMeasure                      (quadratic mechanisms)
 *   - PowerLawDensity k l^(-1-a) e^(-r l) dl, a < 2, r >= 0
 *       covers stable (r = 0), the exponential density (a = -1, r = 1),
 *       u log u type mechanisms (a = 1) and every exponential tilt of them
 *   - AtomicMeasure                    finitely many atoms
 *   - TabulatedDensity                 piecewise-linear density on a table
 *
 * The family is closed under the tilt pi(dl) -> exp(-theta l) pi(dl), so
 * shift() always returns a mechanism of the same kind.
 */

#include "crtprune/error.hpp"
#include "crtprune/numeric/quadrature.hpp"
#include "crtprune/numeric/roots.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace crtprune::mech {

using cplx = std::complex<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kEulerGamma = 0.577215664901532860606512090082402;
inline constexpr double kCriticalTol = 1e-12;

struct ZeroMeasure {};

/// k * l^(-1-a) * exp(-r l) dl on (0, inf).
struct PowerLawDensity {
  double weight = 1.0;  // k
  double index = 1.5;   // a
  double cutoff = 0.0;  // r
};

struct Atom {
  double position;
  double mass;
};

struct AtomicMeasure {
  std::vector<Atom> atoms;
};

/// Piecewise-linear density on [positions.front(), positions.back()],
/// multiplied by exp(-tilt * l). A table whose last density is non-zero is
/// treated as truncating an unknown tail.
struct TabulatedDensity {
  std::vector<double> positions;
  std::vector<double> densities;
  double tilt = 0.0;
  // Lowest argument at which psi is evaluated; moves with every shift.
  double domain_floor = 0.0;
};

using LevyMeasureSpec = std::variant<ZeroMeasure, PowerLawDensity, AtomicMeasure, TabulatedDensity>;

/// Levy measure of psi(u) = c u^alpha, alpha in (1,2).
inline PowerLawDensity stable_measure(double c, double alpha) {
  return {c * alpha * (alpha - 1.0) / std::tgamma(2.0 - alpha), alpha, 0.0};
}

/// exp(-l) dl.
inline PowerLawDensity exp_density() { return {1.0, -1.0, 1.0}; }

enum class Criticality { sub, critical, super };

inline const char* to_string(Criticality c) {
  switch (c) {
    case Criticality::sub: return "sub";
    case Criticality::critical: return "critical";
    case Criticality::super: return "super";
  }
  return "?";
}

namespace detail {

inline numeric::QuadratureOptions tight() { return {1e-14, 1e-13, 4000}; }

inline void validate(const ZeroMeasure&) {}

inline void validate(const PowerLawDensity& p) {
  if (!(p.weight > 0.0)) throw DomainError("power-law measure: weight must be positive");
  if (!(p.index < 2.0)) throw DomainError("power-law measure: index must be < 2");
  if (!(p.cutoff >= 0.0)) throw DomainError("power-law measure: cutoff must be >= 0");
  if (p.cutoff == 0.0 && !(p.index > 0.0)) {
    throw DomainError("power-law measure: index <= 0 needs a positive cutoff");
  }
}

inline void validate(const AtomicMeasure& m) {
  for (const auto& a : m.atoms) {
    if (!(a.position > 0.0) || !(a.mass > 0.0) || !std::isfinite(a.position) || !std::isfinite(a.mass)) {
      throw DomainError("atomic measure: atom positions and masses must be finite and positive");
    }
  }
}

inline void validate(const TabulatedDensity& t) {
  if (t.positions.size() < 2 || t.positions.size() != t.densities.size()) {
    throw DomainError("tabulated density: need at least two (position, density) pairs");
  }
  if (!(t.positions.front() >= 0.0)) throw DomainError("tabulated density: positions must be >= 0");
  for (std::size_t i = 0; i < t.positions.size(); ++i) {
    if (i > 0 && !(t.positions[i] > t.positions[i - 1])) {
      throw DomainError("tabulated density: positions must be strictly increasing");
    }
    if (!(t.densities[i] >= 0.0) || !std::isfinite(t.densities[i])) {
      throw DomainError("tabulated density: densities must be finite and non-negative");
    }
  }
}

inline bool is_zero(const LevyMeasureSpec& pi) {
  if (std::holds_alternative<ZeroMeasure>(pi)) return true;
  if (auto* a = std::get_if<AtomicMeasure>(&pi)) return a->atoms.empty();
  if (auto* t = std::get_if<TabulatedDensity>(&pi)) {
    return std::all_of(t->densities.begin(), t->densities.end(), [](double d) { return d == 0.0; });
  }
  return false;
}

// e^{-x} - 1 + x without cancellation for small |x|.
template <class T>
T exp_remainder(T x) {
  if (std::abs(x) < 1e-3) {
    return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)));
  }
  return std::exp(-x) - 1.0 + x;
}

inline double tabulated_value(const TabulatedDensity& t, double l) {
  const auto& x = t.positions;
  if (l < x.front() || l > x.back()) return 0.0;
  auto it = std::upper_bound(x.begin(), x.end(), l);
  std::size_t i = (it == x.end()) ? x.size() - 1 : static_cast<std::size_t>(it - x.begin());
  if (i == 0) i = 1;
  const double w = (l - x[i - 1]) / (x[i] - x[i - 1]);
  return ((1.0 - w) * t.densities[i - 1] + w * t.densities[i]) * std::exp(-t.tilt * l);
}

inline std::vector<double> tabulated_breaks(const TabulatedDensity& t, double from, double to) {
  std::vector<double> b;
  b.push_back(std::max(from, t.positions.front()));
  for (double x : t.positions) {
    if (x > b.front() && x < to) b.push_back(x);
  }
  if (1.0 > b.front() && 1.0 < to) b.push_back(1.0);
  b.push_back(std::min(to, t.positions.back()));
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

/// Integral of l^(-a) e^(-r l) over (1, inf), r > 0, via l = 1/t.
inline double powerlaw_tail_integral(double a, double r) {
  auto f = [&](double t) { return std::pow(t, a - 2.0) * std::exp(-r / t); };
  return numeric::integrate(f, 0.0, 1.0, tight()).value;
}

}  // namespace detail

class BranchingMechanism {
public:
  BranchingMechanism(double alpha_tilde, double beta, LevyMeasureSpec pi)
      : alpha_tilde_(alpha_tilde), beta_(beta), pi_(std::move(pi)) {
    if (!std::isfinite(alpha_tilde_)) throw DomainError("alpha_tilde must be finite");
    if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw DomainError("beta must be finite and >= 0");
    std::visit([](const auto& m) { detail::validate(m); }, pi_);
    if (beta_ == 0.0 && detail::is_zero(pi_)) {
      throw DomainError("degenerate mechanism: need beta > 0 or a non-zero Levy measure");
    }
    init_domain();
    init_tail_constants();
    slope_at_zero_ = alpha_tilde_ - tail_first_moment_;
    init_roots();
  }

  double alpha_tilde() const { return alpha_tilde_; }
  double beta() const { return beta_; }
  const LevyMeasureSpec& levy() const { return pi_; }

  /// psi'(0+); may be -inf.
  double slope_at_zero() const { return slope_at_zero_; }

  Criticality criticality() const {
    if (std::abs(slope_at_zero_) <= kCriticalTol) return Criticality::critical;
    return slope_at_zero_ > 0 ? Criticality::sub : Criticality::super;
  }
  bool is_critical() const { return criticality() == Criticality::critical; }

  /// Drift plus Brownian part only.
  bool is_quadratic() const { return detail::is_zero(pi_) && beta_ > 0.0; }

  double q0() const { return q0_; }
  double qstar() const { return qstar_; }

  /// Lower end of the admissible argument range (theta_infinity).
  double lower_bound() const { return lower_; }
  bool lower_bound_included() const { return lower_included_; }
  /// False when the tail of a tabulated measure is unknown.
  bool lower_bound_determined() const { return lower_determined_; }

  bool in_domain(double lam) const {
    return lam > lower_ || (lam == lower_ && lower_included_);
  }

  /// int_(1,inf) l pi(dl); +inf allowed.
  double tail_first_moment() const { return tail_first_moment_; }

  double operator()(double lam) const {
    if (lam == 0.0) return 0.0;
    return alpha_tilde_ * lam + beta_ * lam * lam + levy_integral(lam);
  }
  cplx operator()(cplx lam) const {
    return alpha_tilde_ * lam + beta_ * lam * lam + levy_integral(lam);
  }

  double derivative(double lam) const {
    if (std::holds_alternative<TabulatedDensity>(pi_)) {
      const double h = 1e-6 * std::max(1.0, std::abs(lam));
      if (in_domain(lam - h)) return ((*this)(lam + h) - (*this)(lam - h)) / (2.0 * h);
      return ((*this)(lam + h) - (*this)(lam)) / h;
    }
    return alpha_tilde_ + 2.0 * beta_ * lam + levy_derivative(lam);
  }
  cplx derivative(cplx lam) const { return alpha_tilde_ + 2.0 * beta_ * lam + levy_derivative(lam); }

  // ----- measure-level quantities used by samplers and shift() -----------

  /// pi((eps, inf)).
  double mass_above(double eps) const {
    return std::visit(
        [&](const auto& m) -> double {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return 0.0;
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            // Below 1 directly; above 1 through l = 1/t.
            auto head = [&](double l) { return m.weight * std::pow(l, -1.0 - m.index) * std::exp(-m.cutoff * l); };
            auto tail = [&](double t) { return m.weight * std::pow(t, m.index - 1.0) * std::exp(-m.cutoff / t); };
            const double h = eps < 1.0 ? numeric::integrate(head, eps, 1.0, detail::tight()).value : 0.0;
            return h + numeric::integrate(tail, 0.0, std::min(1.0, 1.0 / eps), detail::tight()).value;
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            double s = 0.0;
            for (const auto& a : m.atoms) {
              if (a.position > eps) s += a.mass;
            }
            return s;
          } else {
            auto f = [&](double l) { return detail::tabulated_value(m, l); };
            return numeric::integrate_piecewise(f, detail::tabulated_breaks(m, eps, kInf), detail::tight());
          }
        },
        pi_);
  }

  /// int_(eps, 1] l pi(dl).
  double small_jump_drift(double eps) const {
    if (eps >= 1.0) return 0.0;
    return std::visit(
        [&](const auto& m) -> double {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return 0.0;
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            auto f = [&](double l) { return m.weight * std::pow(l, -m.index) * std::exp(-m.cutoff * l); };
            return numeric::integrate(f, eps, 1.0, detail::tight()).value;
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            double s = 0.0;
            for (const auto& a : m.atoms) {
              if (a.position > eps && a.position <= 1.0) s += a.position * a.mass;
            }
            return s;
          } else {
            auto f = [&](double l) { return l * detail::tabulated_value(m, l); };
            return numeric::integrate_piecewise(f, detail::tabulated_breaks(m, eps, 1.0), detail::tight());
          }
        },
        pi_);
  }

  /// int_(0,1] l (1 - e^{-theta l}) pi(dl): the drift correction of a shift.
  double shift_drift(double theta) const {
    return std::visit(
        [&](const auto& m) -> double {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return 0.0;
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            // l = v^p flattens the l^(1-a) behaviour at the origin.
            const double p = std::max(1.0, 1.0 / (2.0 - m.index));
            auto f = [&](double v) {
              const double l = std::pow(v, p);
              return m.weight * p * std::pow(v, p - 1.0) * std::pow(l, -m.index) * std::exp(-m.cutoff * l) *
                     (-std::expm1(-theta * l));
            };
            return numeric::integrate(f, 0.0, 1.0, detail::tight()).value;
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            double s = 0.0;
            for (const auto& a : m.atoms) {
              if (a.position <= 1.0) s += a.mass * a.position * (-std::expm1(-theta * a.position));
            }
            return s;
          } else {
            auto f = [&](double l) { return l * (-std::expm1(-theta * l)) * detail::tabulated_value(m, l); };
            return numeric::integrate_piecewise(f, detail::tabulated_breaks(m, 0.0, 1.0), detail::tight());
          }
        },
        pi_);
  }

  /// exp(-theta l) pi(dl).
  LevyMeasureSpec tilted_measure(double theta) const {
    return std::visit(
        [&](const auto& m) -> LevyMeasureSpec {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return m;
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            PowerLawDensity out = m;
            out.cutoff = m.cutoff + theta;
            if (std::abs(out.cutoff) < 1e-15 * std::max(1.0, std::abs(theta))) out.cutoff = 0.0;
            return out;
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            AtomicMeasure out = m;
            for (auto& a : out.atoms) a.mass *= std::exp(-theta * a.position);
            return out;
          } else {
            TabulatedDensity out = m;
            out.tilt += theta;
            out.domain_floor -= theta;
            return out;
          }
        },
        pi_);
  }

private:
  void init_domain() {
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, PowerLawDensity>) {
            lower_ = -m.cutoff;
            lower_included_ = m.index > 0.0;
          } else if constexpr (std::is_same_v<M, TabulatedDensity>) {
            if (m.densities.back() == 0.0) {
              lower_ = -kInf;
              lower_included_ = false;
            } else {
              lower_ = m.domain_floor;
              lower_included_ = true;
              lower_determined_ = false;
            }
          } else {
            lower_ = -kInf;
            lower_included_ = false;
          }
        },
        pi_);
  }

  void init_tail_constants() {
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, PowerLawDensity>) {
            if (m.cutoff > 0.0) {
              powerlaw_tail_ = detail::powerlaw_tail_integral(m.index, m.cutoff);
              tail_first_moment_ = m.weight * powerlaw_tail_;
            } else if (m.index > 1.0) {
              powerlaw_tail_ = 1.0 / (m.index - 1.0);
              tail_first_moment_ = m.weight * powerlaw_tail_;
            } else {
              powerlaw_tail_ = kInf;
              tail_first_moment_ = kInf;
            }
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            for (const auto& a : m.atoms) {
              if (a.position > 1.0) tail_first_moment_ += a.position * a.mass;
            }
          } else if constexpr (std::is_same_v<M, TabulatedDensity>) {
            if (m.positions.back() > 1.0) {
              auto f = [&](double l) { return l * detail::tabulated_value(m, l); };
              tail_first_moment_ =
                  numeric::integrate_piecewise(f, detail::tabulated_breaks(m, 1.0, kInf), detail::tight());
            }
          }
        },
        pi_);
  }

  void init_roots() {
    if (criticality() != Criticality::super) return;
    auto dpsi = [&](double x) { return derivative(x); };
    const double start = std::isfinite(slope_at_zero_) ? 0.0 : 1e-300;
    auto br = numeric::bracket_upward(dpsi, start, 1.0);
    qstar_ = numeric::find_root(dpsi, br);
    auto f = [&](double x) { return (*this)(x); };
    auto br0 = numeric::bracket_upward(f, qstar_, std::max(1.0, qstar_));
    q0_ = numeric::find_root(f, br0);
  }

  template <class T>
  T levy_integral(T lam) const {
    return std::visit(
        [&](const auto& m) -> T {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return T(0.0);
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            return powerlaw_integral(m, lam);
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            T s(0.0);
            for (const auto& a : m.atoms) {
              s += a.mass * (a.position <= 1.0 ? detail::exp_remainder(lam * a.position)
                                               : std::exp(-lam * a.position) - 1.0);
            }
            return s;
          } else {
            auto f = [&](double l) -> T {
              const T core = l <= 1.0 ? detail::exp_remainder(lam * l) : std::exp(-lam * l) - 1.0;
              return core * detail::tabulated_value(m, l);
            };
            return numeric::integrate_piecewise(f, detail::tabulated_breaks(m, 0.0, kInf), detail::tight());
          }
        },
        pi_);
  }

  template <class T>
  T levy_derivative(T lam) const {
    return std::visit(
        [&](const auto& m) -> T {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ZeroMeasure>) {
            return T(0.0);
          } else if constexpr (std::is_same_v<M, PowerLawDensity>) {
            return powerlaw_derivative(m, lam);
          } else if constexpr (std::is_same_v<M, AtomicMeasure>) {
            T s(0.0);
            for (const auto& a : m.atoms) {
              s += a.mass * a.position * ((a.position <= 1.0 ? 1.0 : 0.0) - std::exp(-lam * a.position));
            }
            return s;
          } else {
            auto f = [&](double l) -> T {
              return l * ((l <= 1.0 ? 1.0 : 0.0) - std::exp(-lam * l)) * detail::tabulated_value(m, l);
            };
            return numeric::integrate_piecewise(f, detail::tabulated_breaks(m, 0.0, kInf), detail::tight());
          }
        },
        pi_);
  }

  // Closed forms for k l^(-1-a) e^(-r l).
  template <class T>
  T powerlaw_integral(const PowerLawDensity& m, T lam) const {
    const double k = m.weight, a = m.index, r = m.cutoff;
    if (r > 0.0) {
      if (std::abs(lam) < 0.1 * r) {
        // Moment series: sum_{n>=2} (-lam)^n m_n / n!  -  lam * int_(1,inf) l pi.
        double c = std::tgamma(2.0 - a) * std::pow(r, a - 2.0) / 2.0;
        T term = lam * lam * c;
        T sum = term;
        for (int n = 2; n < 60; ++n) {
          term = -lam * term * ((n - a) / (r * (n + 1)));
          sum += term;
          if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return k * (sum - lam * powerlaw_tail_);
      }
      const T z = lam + r;
      if (a == 1.0) {
        if (z == T(0.0)) return k * (-lam - lam * powerlaw_tail_);
        return k * (z * std::log(z / r) - lam - lam * powerlaw_tail_);
      }
      if (a == 0.0) return k * (lam / r - std::log(z / r) - lam * powerlaw_tail_);
      const double g = std::tgamma(-a);
      return k * (g * (std::pow(z, a) - std::pow(r, a) - a * std::pow(r, a - 1.0) * lam) - lam * powerlaw_tail_);
    }
    if (lam == T(0.0)) return T(0.0);
    if (a > 1.0) return k * (std::tgamma(-a) * std::pow(lam, a) - lam / (a - 1.0));
    if (a == 1.0) return k * (lam * std::log(lam) + (kEulerGamma - 1.0) * lam);
    return k * (std::tgamma(-a) * std::pow(lam, a) + lam / (1.0 - a));
  }

  template <class T>
  T powerlaw_derivative(const PowerLawDensity& m, T lam) const {
    const double k = m.weight, a = m.index, r = m.cutoff;
    if (r > 0.0) {
      if (std::abs(lam) < 0.1 * r) {
        double c = std::tgamma(2.0 - a) * std::pow(r, a - 2.0) / 2.0;
        T pw = lam;  // (-1)^n lam^(n-1) for n = 2
        T sum = 2.0 * c * pw;
        for (int n = 2; n < 60; ++n) {
          c *= (n - a) / (r * (n + 1));
          pw *= -lam;
          const T term = double(n + 1) * c * pw;
          sum += term;
          if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return k * (sum - powerlaw_tail_);
      }
      const T z = lam + r;
      if (a == 1.0) return k * (std::log(z / r) - powerlaw_tail_);
      if (a == 0.0) return k * (1.0 / r - 1.0 / z - powerlaw_tail_);
      return k * (std::tgamma(-a) * a * (std::pow(z, a - 1.0) - std::pow(r, a - 1.0)) - powerlaw_tail_);
    }
    if (a > 1.0) return k * (std::tgamma(-a) * a * std::pow(lam, a - 1.0) - 1.0 / (a - 1.0));
    if (lam == T(0.0)) return T(-kInf);
    if (a == 1.0) return k * (std::log(lam) + kEulerGamma);
    return k * (std::tgamma(-a) * a * std::pow(lam, a - 1.0) + 1.0 / (1.0 - a));
  }

  double alpha_tilde_;
  double beta_;
  LevyMeasureSpec pi_;
  double lower_ = -kInf;
  bool lower_included_ = false;
  bool lower_determined_ = true;
  double powerlaw_tail_ = 0.0;
  double tail_first_moment_ = 0.0;
  double slope_at_zero_ = 0.0;
  double q0_ = 0.0;
  double qstar_ = 0.0;
};

// ----- named mechanisms ---------------------------------------------------

/// beta * u^2.
inline BranchingMechanism quadratic(double beta) { return {0.0, beta, ZeroMeasure{}}; }

/// c * u^alpha, alpha in (1,2).
inline BranchingMechanism stable(double c, double alpha) {
  const auto pi = stable_measure(c, alpha);
  return {pi.weight / (alpha - 1.0), 0.0, pi};
}

/// (u + 1/e) log(u + 1/e) + 1/e.
inline BranchingMechanism log_mechanism() {
  // pi(dl) = l^-2 e^{-l/e} dl; the drift makes psi'(0) = 0.
  const PowerLawDensity pi{1.0, 1.0, std::exp(-1.0)};
  BranchingMechanism probe(0.0, 0.0, pi);
  return {-probe.slope_at_zero(), 0.0, pi};
}

/// u - 1 + 1/(1+u).
inline BranchingMechanism exp_jump_mechanism() { return {2.0 / std::exp(1.0), 0.0, exp_density()}; }

// ----- operations ----------------------------------------------------------

inline double eval_psi(const BranchingMechanism& m, double lam) {
  if (!m.in_domain(lam)) {
    throw DomainError("eval_psi: argument " + std::to_string(lam) + " below the domain of the mechanism");
  }
  return m(lam);
}

/// psi_theta(lam) = psi(lam + theta) - psi(theta), as a mechanism in its own right.
/// At theta = theta_infinity the result may be non-conservative; it is still
/// returned, for evaluation only.
inline BranchingMechanism shift(const BranchingMechanism& m, double theta) {
  if (theta == 0.0) return m;
  if (!m.in_domain(theta)) {
    throw DomainError("shift: theta = " + std::to_string(theta) + " is outside Theta'");
  }
  const double drift = m.alpha_tilde() + 2.0 * m.beta() * theta + m.shift_drift(theta);
  return {drift, m.beta(), m.tilted_measure(theta)};
}

/// Largest r >= 0 with psi(r) = lam.
inline double psi_inverse(const BranchingMechanism& m, double lam) {
  if (!(lam >= 0.0)) throw DomainError("psi_inverse: lam must be >= 0");
  if (lam == 0.0) return m.q0();
  if (lam == kInf) return kInf;
  const double start = m.criticality() == Criticality::super ? m.qstar() : 0.0;
  auto f = [&](double r) { return m(r) - lam; };
  auto br = numeric::bracket_upward(f, start, std::max(1.0, start));
  return numeric::find_root(f, br);
}

/// Analytic continuation of psi_inverse off the positive axis: Newton steps
/// along the arc |w| e^{i phi}, phi from 0 to arg w. Used by contour
/// inversion; w must not lie on the negative real axis.
inline cplx psi_inverse(const BranchingMechanism& m, cplx w) {
  if (w.imag() == 0.0 && w.real() >= 0.0) return psi_inverse(m, w.real());
  const double rad = std::abs(w);
  const double target_arg = std::arg(w);
  cplx u = psi_inverse(m, rad);
  double phi = 0.0;
  double step = target_arg / 16.0;
  int guard = 0;
  while (phi != target_arg) {
    if (++guard > 4000) throw ConvergenceError("psi_inverse: continuation stalled");
    double next = phi + step;
    if ((step > 0 && next > target_arg) || (step < 0 && next < target_arg)) next = target_arg;
    const cplx wt = std::polar(rad, next);
    const double tol = 1e-14 * std::max(1.0, rad);
    cplx v = u;
    bool ok = false;
    for (int it = 0; it < 12; ++it) {
      const cplx res = m(v) - wt;
      if (!std::isfinite(res.real()) || !std::isfinite(res.imag())) break;
      if (std::abs(res) <= tol) {
        ok = true;
        break;
      }
      v -= res / m.derivative(v);
    }
    if (!ok && std::abs(m(v) - wt) <= 1e-11 * std::max(1.0, rad)) ok = true;
    if (ok) {
      u = v;
      phi = next;
      step *= 1.5;
    } else {
      step *= 0.5;
      if (std::abs(step) < 1e-12) throw ConvergenceError("psi_inverse: continuation step underflow");
    }
  }
  return u;
}

inline void require_critical(const BranchingMechanism& m, const char* op) {
  if (!m.is_critical()) throw DomainError(std::string(op) + ": mechanism must be critical");
}

/// The non-negative solution of psi(bar) = psi(theta).
inline double bar_theta(const BranchingMechanism& m, double theta) {
  require_critical(m, "bar_theta");
  if (theta >= 0.0) return theta;
  if (!m.in_domain(theta)) throw DomainError("bar_theta: theta outside Theta'");
  return psi_inverse(m, std::max(0.0, m(theta)));  // psi >= 0 for a critical psi; clamp rounding
}

/// limit of bar_theta at theta_infinity.
inline double bar_theta_infinity(const BranchingMechanism& m) {
  require_critical(m, "bar_theta_infinity");
  if (!std::isfinite(m.lower_bound()) || !m.lower_bound_included()) return kInf;
  return psi_inverse(m, m(m.lower_bound()));
}

/// Inside-domain point close to an excluded lower bound.
inline double domain_limit(const BranchingMechanism& m) {
  const double lo = m.lower_bound();
  if (!std::isfinite(lo)) return -1e300;
  if (m.lower_bound_included()) return lo;
  return lo + 1e-15 * std::max(1.0, std::abs(lo));
}

/// The negative r' with psi(r') = psi(r), for 0 < r < bar_theta_infinity.
inline double check_theta(const BranchingMechanism& m, double r) {
  require_critical(m, "check_theta");
  if (!(r > 0.0)) throw DomainError("check_theta: r must be positive");
  if (!(r < bar_theta_infinity(m))) throw DomainError("check_theta: r must be below bar_theta_infinity");
  const double target = m(r);
  auto f = [&](double x) { return m(x) - target; };
  auto br = numeric::bracket_downward(f, 0.0, r, domain_limit(m));
  return numeric::find_root(f, br);
}

enum class Decision { yes, no, undetermined };

inline const char* to_string(Decision d) {
  switch (d) {
    case Decision::yes: return "yes";
    case Decision::no: return "no";
    case Decision::undetermined: return "undetermined";
  }
  return "?";
}

/// Decides int_0^eps du/|psi(u)| = inf numerically, via u = e^{-s}: the
/// integrand s -> e^{-s}/|psi(e^{-s})| is compared against 1/s.
inline Decision numeric_conservativity(const BranchingMechanism& m) {
  auto h = [&](double s) { return s * std::exp(-s) / std::abs(m(std::exp(-s))); };
  const double mid = h(350.0), far = h(700.0);
  if (!std::isfinite(mid) || !std::isfinite(far)) return Decision::undetermined;
  if (far >= 0.5 * mid) return Decision::yes;
  if (far <= 1e-3 * mid) return Decision::no;
  return Decision::undetermined;
}

/// Whether psi_theta is conservative, for theta in Theta'.
inline Decision is_conservative_shift(const BranchingMechanism& m, double theta) {
  if (!m.in_domain(theta)) return Decision::no;
  if (theta > m.lower_bound()) return Decision::yes;
  const auto shifted = shift(m, theta);
  if (std::isfinite(shifted.slope_at_zero())) return Decision::yes;
  return numeric_conservativity(shifted);
}

struct MechanismClassification {
  Criticality criticality = Criticality::critical;
  double slope_at_zero = 0.0;
  double q0 = 0.0;
  double qstar = 0.0;
  double theta_inf = -kInf;
  bool theta_inf_determined = true;
  bool theta_inf_in_domain = false;        // theta_inf in Theta'
  Decision theta_inf_conservative = Decision::no;  // theta_inf in Theta
  Decision conservative = Decision::yes;   // psi itself
  std::optional<double> bar_theta_inf;     // critical mechanisms only
};

inline MechanismClassification classify(const BranchingMechanism& m) {
  MechanismClassification c;
  c.criticality = m.criticality();
  c.slope_at_zero = m.slope_at_zero();
  c.q0 = m.q0();
  c.qstar = m.qstar();
  c.theta_inf = m.lower_bound();
  c.theta_inf_determined = m.lower_bound_determined();
  c.theta_inf_in_domain = std::isfinite(m.lower_bound()) && m.lower_bound_included();
  if (!c.theta_inf_determined) {
    c.theta_inf_conservative = Decision::undetermined;
  } else if (c.theta_inf_in_domain) {
    c.theta_inf_conservative = is_conservative_shift(m, m.lower_bound());
  }
  c.conservative = std::isfinite(m.slope_at_zero()) ? Decision::yes : numeric_conservativity(m);
  if (m.is_critical() && c.theta_inf_determined) c.bar_theta_inf = bar_theta_infinity(m);
  return c;
}

}  // namespace crtprune::mech
