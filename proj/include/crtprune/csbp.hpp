#pragma once

#include "crtprune/error.hpp"
#include "crtprune/mechanism.hpp"
#include "crtprune/numeric/quadrature.hpp"
#include "crtprune/numeric/roots.hpp"
#include "crtprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace crtprune::csbp {

using mech::BranchingMechanism;

// ---------------------------------------------------------------------------
// Laplace functionals

namespace detail {

// int_{q0 + e^{s_lo}}^{q0 + e^{s_hi}} dr / psi(r), written in s = log(r - q0).
inline double log_flow_integral(const BranchingMechanism& m, double s_lo, double s_hi) {
  const double q0 = m.q0();
  auto f = [&](double s) {
    const double e = std::exp(s);
    return e / m(q0 + e);
  };
  return numeric::integrate(f, s_lo, s_hi, {1e-15, 1e-12, 4000}).value;
}

inline constexpr double kLogFloor = -700.0;

}  // namespace detail

/// u(a, lam): the solution of int_u^lam dr/psi(r) = a.
inline double solve_u(const BranchingMechanism& m, double a, double lam) {
  if (!(a >= 0.0)) throw DomainError("solve_u: a must be >= 0");
  if (!(lam > 0.0)) throw DomainError("solve_u: lam must be positive");
  if (m.criticality() == mech::Criticality::super && !(lam > m.q0())) {
    throw DomainError("solve_u: lam must exceed q0 for a super-critical mechanism");
  }
  if (a == 0.0) return lam;
  const double q0 = m.q0();
  const double s_top = std::log(lam - q0);
  auto g = [&](double s) { return detail::log_flow_integral(m, s, s_top) - a; };
  // The integrand is positive, so g increases as s decreases.
  double step = 1.0;
  double hi = s_top, lo = s_top - step;
  double g_lo = g(lo);
  while (g_lo < 0.0) {
    if (lo <= detail::kLogFloor) return q0 + std::exp(detail::kLogFloor);
    hi = lo;
    step *= 2.0;
    lo = std::max(s_top - step, detail::kLogFloor);
    g_lo = g(lo);
  }
  const double s = numeric::find_root(g, {lo, hi, g_lo, g(hi)}, 1e-13);
  return q0 + std::exp(s);
}

/// E_x[exp(-lam Z_a)].
inline double laplace_Za(const BranchingMechanism& m, double x, double a, double lam) {
  if (x == 0.0) return 1.0;
  return std::exp(-x * solve_u(m, a, lam));
}

/// P_x(Z eventually hits 0).
inline double extinction_prob(const BranchingMechanism& m, double x) { return std::exp(-x * m.q0()); }

/// E_x[exp(-lam sigma)], sigma = int_0^inf Z_a da.
inline double total_mass_laplace(const BranchingMechanism& m, double x, double lam) {
  if (x == 0.0) return 1.0;
  return std::exp(-x * mech::psi_inverse(m, lam));
}

// ---------------------------------------------------------------------------
// Quadratic transitions (exact)

/// Z_t given Z_0 = x for psi = alpha l + beta l^2: a Poisson number of
/// exponential clusters.
template <class Rng>
double sample_quadratic_transition(double alpha, double beta, double x, double t, Rng& g) {
  if (x == 0.0) return 0.0;
  const double decay = std::exp(-alpha * t);
  const double scale = alpha == 0.0 ? beta * t : beta * (-std::expm1(-alpha * t)) / alpha;
  const auto n = poisson(g, x * decay / scale);
  if (n == 0) return 0.0;
  return gamma_variate(g, static_cast<double>(n), scale);
}

/// Critical case psi = beta l^2.
template <class Rng>
double sample_quadratic_transition(double beta, double x, double t, Rng& g) {
  return sample_quadratic_transition(0.0, beta, x, t, g);
}

// ---------------------------------------------------------------------------
// Paths

struct CsbpPath {
  std::vector<double> grid;
  std::vector<double> values;
  std::optional<double> extinct_at;
  bool exploded = false;
  double x0 = 0.0;
};

inline std::vector<double> uniform_grid(double tmax, double step) {
  if (!(tmax > 0.0) || !(step > 0.0)) throw ConfigError("uniform_grid: tmax and step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(tmax / step - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = std::min(tmax, static_cast<double>(i) * step);
  return g;
}

namespace detail {

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty() || !(grid.front() >= 0.0)) throw ConfigError("path grid must start at a time >= 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("path grid must be strictly increasing");
  }
}

}  // namespace detail

/// Exact path on the grid for a mechanism without jumps.
template <class Rng>
CsbpPath sample_quadratic_path(const BranchingMechanism& m, double x, const std::vector<double>& grid, Rng& g) {
  if (!mech::detail::is_zero(m.levy())) throw DomainError("sample_quadratic_path: mechanism has jumps");
  detail::check_grid(grid);
  CsbpPath p{grid, std::vector<double>(grid.size(), 0.0), std::nullopt, false, x};
  double z = x;
  if (z == 0.0) p.extinct_at = grid.front();
  p.values[0] = z;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (z > 0.0) {
      z = sample_quadratic_transition(m.alpha_tilde(), m.beta(), z, grid[i] - grid[i - 1], g);
      if (z == 0.0) p.extinct_at = grid[i];
    }
    p.values[i] = z;
  }
  return p;
}

/// Draws jump sizes from pi restricted to (eps, inf).
class JumpSampler {
public:
  JumpSampler(const BranchingMechanism& m, double eps) : pi_(m.levy()), eps_(eps) {
    std::visit([&](const auto& mm) { init(mm); }, pi_);
  }

  /// pi((eps, inf)).
  double rate() const { return rate_; }

  template <class Rng>
  double operator()(Rng& g) const {
    return std::visit([&](const auto& mm) { return draw(mm, g); }, pi_);
  }

private:
  void init(const mech::ZeroMeasure&) {}

  void init(const mech::PowerLawDensity& p) {
    auto head = [&](double l) { return p.weight * std::pow(l, -1.0 - p.index) * std::exp(-p.cutoff * l); };
    auto tail = [&](double t) { return p.weight * std::pow(t, p.index - 1.0) * std::exp(-p.cutoff / t); };
    head_ = eps_ < 1.0 ? numeric::integrate(head, eps_, 1.0, mech::detail::tight()).value : 0.0;
    tail_ = numeric::integrate(tail, 0.0, std::min(1.0, 1.0 / eps_), mech::detail::tight()).value;
    rate_ = head_ + tail_;
  }

  void init(const mech::AtomicMeasure& a) {
    for (const auto& at : a.atoms) {
      if (at.position > eps_) {
        rate_ += at.mass;
        cum_.push_back(rate_);
        pos_.push_back(at.position);
      }
    }
  }

  void init(const mech::TabulatedDensity& t) {
    // Fine cumulative table; linear inversion inside each cell.
    const double lo = std::max(eps_, t.positions.front());
    const double hi = t.positions.back();
    if (!(hi > lo)) return;
    const int cells = 20000;
    const double h = (hi - lo) / cells;
    pos_.push_back(lo);
    cum_.push_back(0.0);
    double acc = 0.0, prev = mech::detail::tabulated_value(t, lo);
    for (int i = 1; i <= cells; ++i) {
      const double l = lo + i * h;
      const double v = mech::detail::tabulated_value(t, l);
      acc += 0.5 * (prev + v) * h;
      prev = v;
      pos_.push_back(l);
      cum_.push_back(acc);
    }
    rate_ = acc;
  }

  template <class Rng>
  double draw(const mech::ZeroMeasure&, Rng&) const {
    return 0.0;
  }

  template <class Rng>
  double draw(const mech::PowerLawDensity& p, Rng& g) const {
    // Pick the region by its mass, then rejection-sample inside it.
    if (uniform_open(g) * rate_ < head_) {
      // l^(-1-a) on (eps, 1], thinned by e^{-r (l - eps)}.
      const double e = -p.index;
      for (;;) {
        const double u = uniform_open(g);
        double l;
        if (std::abs(e) < 1e-12) {
          l = std::exp(std::log(eps_) * (1.0 - u));
        } else {
          const double lo = std::pow(eps_, e);
          l = std::pow(lo + u * (1.0 - lo), 1.0 / e);
        }
        if (p.cutoff == 0.0 || uniform_open(g) <= std::exp(-p.cutoff * (l - eps_))) return l;
      }
    }
    const double start = std::max(1.0, eps_);
    if (p.cutoff == 0.0) return start * std::pow(uniform_open(g), -1.0 / p.index);  // Pareto(a)
    for (;;) {
      if (p.index < 0.0) {
        const double l = gamma_variate(g, -p.index, 1.0 / p.cutoff);
        if (l > start) return l;
      } else {
        const double l = start + standard_exponential(g) / p.cutoff;
        if (uniform_open(g) <= std::pow(l / start, -1.0 - p.index)) return l;
      }
    }
  }

  template <class Rng>
  double draw(const mech::AtomicMeasure&, Rng& g) const {
    const double u = uniform_open(g) * rate_;
    const auto i = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
    return pos_[std::min(i, pos_.size() - 1)];
  }

  template <class Rng>
  double draw(const mech::TabulatedDensity&, Rng& g) const {
    const double u = uniform_open(g) * rate_;
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cum_.begin());
    if (i == 0) i = 1;
    if (i >= cum_.size()) i = cum_.size() - 1;
    const double w = (u - cum_[i - 1]) / std::max(cum_[i] - cum_[i - 1], 1e-300);
    return pos_[i - 1] + w * (pos_[i] - pos_[i - 1]);
  }

  mech::LevyMeasureSpec pi_;
  double eps_;
  double rate_ = 0.0, head_ = 0.0, tail_ = 0.0;
  std::vector<double> cum_, pos_;
};

struct PathOptions {
  double step = 0.01;    // Euler step h, in (0, 1]
  double eps = 1e-4;     // jump truncation, in [0, 0.1]; 0 only for finite pi
  double explode_at = 1e150;
};

namespace detail {

inline void check_options(const BranchingMechanism& m, const PathOptions& o) {
  if (!(o.step > 0.0 && o.step <= 1.0)) throw ConfigError("path step must lie in (0, 1]");
  if (!(o.eps >= 0.0 && o.eps <= 0.1)) throw ConfigError("jump truncation eps must lie in [0, 0.1]");
  if (o.eps == 0.0 && !mech::detail::is_zero(m.levy()) && !std::isfinite(m.mass_above(0.0))) {
    throw ConfigError("eps = 0 needs a finite Levy measure");
  }
}

}  // namespace detail

/// Euler / compound-Poisson path: over a step h,
///   Z += -(alpha_tilde + int_(eps,1] l pi) Z h + sqrt(2 beta Z h) N + jumps,
/// with Poisson(Z pi((eps,inf)) h) jumps drawn from pi on (eps, inf).
/// Negative values are clamped to 0, which is absorbing.
class EulerScheme {
public:
  EulerScheme(const BranchingMechanism& m, PathOptions opt = {})
      : opt_(opt), beta_(m.beta()), jumps_(m, opt.eps) {
    detail::check_options(m, opt);
    drift_ = m.alpha_tilde() + m.small_jump_drift(opt.eps);
  }

  const PathOptions& options() const { return opt_; }

  template <class Rng>
  double step(double z, double h, Rng& g) const {
    if (z <= 0.0) return 0.0;
    double next = z - drift_ * z * h;
    if (beta_ > 0.0) next += std::sqrt(2.0 * beta_ * z * h) * standard_normal(g);
    if (jumps_.rate() > 0.0) {
      const auto n = poisson(g, z * jumps_.rate() * h);
      for (std::uint64_t k = 0; k < n; ++k) next += jumps_(g);
    }
    return next > 0.0 ? next : 0.0;
  }

  template <class Rng>
  CsbpPath path(double x, const std::vector<double>& grid, Rng& g) const {
    detail::check_grid(grid);
    CsbpPath p{grid, std::vector<double>(grid.size(), 0.0), std::nullopt, false, x};
    double z = x;
    if (z == 0.0) p.extinct_at = grid.front();
    p.values[0] = z;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double span = grid[i] - grid[i - 1];
      const int sub = std::max(1, static_cast<int>(std::ceil(span / opt_.step - 1e-9)));
      const double h = span / sub;
      for (int k = 0; k < sub && z > 0.0 && !p.exploded; ++k) {
        z = step(z, h, g);
        if (z == 0.0) p.extinct_at = grid[i - 1] + (k + 1) * h;
        if (!(z < opt_.explode_at)) {
          p.exploded = true;
          z = mech::kInf;
        }
      }
      p.values[i] = z;
    }
    return p;
  }

private:
  PathOptions opt_;
  double beta_;
  JumpSampler jumps_;
  double drift_ = 0.0;
};

template <class Rng>
CsbpPath sample_general_path(const BranchingMechanism& m, double x, const std::vector<double>& grid, Rng& g,
                             const PathOptions& opt = {}) {
  return EulerScheme(m, opt).path(x, grid, g);
}

/// Path of a super-critical CSBP conditioned on extinction: simulated under psi_{q0}.
template <class Rng>
CsbpPath sample_path_given_extinction(const BranchingMechanism& m, double x, const std::vector<double>& grid,
                                      Rng& g, const PathOptions& opt = {}) {
  const auto sub = mech::shift(m, m.q0());
  if (mech::detail::is_zero(sub.levy())) return sample_quadratic_path(sub, x, grid, g);
  return sample_general_path(sub, x, grid, g, opt);
}

// ---------------------------------------------------------------------------
// Girsanov weights

struct GirsanovWeight {
  double q = 0.0;
  double value = 1.0;
  double integral_term = 0.0;
};

/// Trapezoid rule for int_0^a Z_s ds on the path grid.
inline double path_integral(const CsbpPath& p) {
  double s = 0.0;
  for (std::size_t i = 1; i < p.grid.size(); ++i) {
    s += 0.5 * (p.values[i] + p.values[i - 1]) * (p.grid[i] - p.grid[i - 1]);
  }
  return s;
}

/// exp(q x - q Z_a - psi(q) int_0^a Z) at the last grid time.
inline GirsanovWeight girsanov_weight(const CsbpPath& p, const BranchingMechanism& m, double q) {
  if (q < 0.0 && !(q > m.lower_bound())) {
    throw DomainError("girsanov_weight: int l e^{|q| l} pi(dl) over (1, inf) must be finite");
  }
  GirsanovWeight w;
  w.q = q;
  if (q == 0.0) return w;
  if (p.exploded) {
    w.value = 0.0;
    w.integral_term = mech::kInf;
    return w;
  }
  w.integral_term = path_integral(p);
  w.value = std::exp(q * p.x0 - q * p.values.back() - m(q) * w.integral_term);
  return w;
}

}  // namespace crtprune::csbp
