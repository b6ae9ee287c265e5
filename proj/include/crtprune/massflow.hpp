#pragma once

/*
 * The pruned-mass process (sigma_theta) of a critical mechanism psi.
 *
 * sigma_theta is the total mass of the tree pruned at intensity theta; it is
 * non-increasing in theta and explodes below the explosion time A. Under P_x
 * the law of sigma_theta is that of the total mass of a psi_theta CSBP, and
 * going down in theta is a subordinator:
 *
 *   E[exp(-lam sigma_q) | sigma_theta] = exp(-sigma_theta psi_theta(psi_q^{-1}(lam))),
 *   psi_q^{-1}(lam) = psi^{-1}(lam + psi(q)) - q,   q <= theta.
 *
 * Mechanisms without jumps use exact first-passage samplers throughout; other
 * mechanisms go through numeric Laplace inversion.
 */

#include "crtprune/error.hpp"
#include "crtprune/harness/stats.hpp"
#include "crtprune/mechanism.hpp"
#include "crtprune/numeric/distributions.hpp"
#include "crtprune/numeric/laplace_inversion.hpp"
#include "crtprune/numeric/roots.hpp"
#include "crtprune/random.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace crtprune::mass {

using mech::BranchingMechanism;
using mech::cplx;
using mech::kInf;

/// A total mass that may be infinite. Infinity is a flag, never a float.
struct TotalMass {
  double value = 0.0;
  bool finite = true;

  static TotalMass of(double v) { return {v, true}; }
  static TotalMass infinite() { return {0.0, false}; }
};

// ---------------------------------------------------------------------------
// Closed-form laws

inline bool jumps_free(const BranchingMechanism& m) { return mech::detail::is_zero(m.levy()); }

inline void check_in_theta(const BranchingMechanism& m, double t, const char* what) {
  if (!m.in_domain(t)) throw DomainError(std::string(what) + " outside Theta");
}

/// psi_q^{-1}(lam) = psi^{-1}(lam + psi(q)) - q.
inline double psi_q_inverse(const BranchingMechanism& m, double q, double lam) {
  return mech::psi_inverse(m, lam + m(q)) - q;
}
inline cplx psi_q_inverse(const BranchingMechanism& m, double q, cplx lam) {
  return mech::psi_inverse(m, lam + m(q)) - q;
}

/// psi_theta(psi_q^{-1}(lam)): exponent of the growth subordinator from theta down to q.
inline double growth_exponent(const BranchingMechanism& m, double theta, double q, double lam) {
  return m(psi_q_inverse(m, q, lam) + theta) - m(theta);
}
inline cplx growth_exponent(const BranchingMechanism& m, double theta, double q, cplx lam) {
  return m(psi_q_inverse(m, q, lam) + theta) - m(theta);
}

inline void check_growth_args(const BranchingMechanism& m, double theta, double q) {
  mech::require_critical(m, "mass process");
  check_in_theta(m, q, "q");
  check_in_theta(m, theta, "theta");
  if (!(q <= theta)) throw DomainError("growth: need q <= theta");
}

/// P(sigma_q < inf | sigma_theta) = exp(-sigma_theta psi_theta(bar q - q)).
inline double prob_finite_given(const BranchingMechanism& m, double theta, double q, double sigma_theta) {
  check_growth_args(m, theta, q);
  if (sigma_theta == 0.0 || q == theta) return 1.0;
  const double d = mech::bar_theta(m, q) - q;
  return std::exp(-sigma_theta * (m(d + theta) - m(theta)));
}

/// E[exp(-lam sigma_q) | sigma_theta], infinite sigma_q counted as 0.
inline double conditional_laplace_growth(const BranchingMechanism& m, double theta, double q, double sigma_theta,
                                         double lam) {
  check_growth_args(m, theta, q);
  if (sigma_theta == 0.0) return 1.0;
  return std::exp(-sigma_theta * growth_exponent(m, theta, q, lam));
}

/// N[A > theta] = bar theta - theta.
inline double law_of_A_survival(const BranchingMechanism& m, double theta) {
  mech::require_critical(m, "law_of_A_survival");
  if (theta >= 0.0) return 0.0;
  if (theta == m.lower_bound() && m.lower_bound_included()) return mech::bar_theta_infinity(m) - theta;
  check_in_theta(m, theta, "theta");
  return mech::bar_theta(m, theta) - theta;
}

inline bool theta_inf_in_theta(const BranchingMechanism& m) {
  return std::isfinite(m.lower_bound()) && m.lower_bound_included() &&
         mech::is_conservative_shift(m, m.lower_bound()) == mech::Decision::yes;
}

/// Density of A under N on (theta_inf, 0): 1 - psi'(r)/psi'(bar r).
inline double density_of_A(const BranchingMechanism& m, double r) {
  mech::require_critical(m, "density_of_A");
  if (theta_inf_in_theta(m)) throw DomainError("density_of_A: theta_inf lies in Theta, A has an atom there");
  if (!(r < 0.0)) throw DomainError("density_of_A: r must be negative");
  check_in_theta(m, r, "r");
  return 1.0 - m.derivative(r) / m.derivative(mech::bar_theta(m, r));
}

/// N[exp(-lam sigma_A) | A = theta], theta in (theta_inf, 0).
inline double sigmaA_laplace(const BranchingMechanism& m, double theta, double lam) {
  mech::require_critical(m, "sigmaA_laplace");
  if (!(theta < 0.0) || !(theta > m.lower_bound())) throw DomainError("sigmaA_laplace: theta must lie in (theta_inf, 0)");
  if (lam == 0.0) return 1.0;
  return m.derivative(mech::bar_theta(m, theta)) / m.derivative(mech::psi_inverse(m, lam + m(theta)));
}
inline cplx sigmaA_laplace(const BranchingMechanism& m, double theta, double bar, cplx lam) {
  return m.derivative(bar) / m.derivative(mech::psi_inverse(m, lam + m(theta)));
}

/// N[(1 - exp(-lam sigma_A)) 1{A = theta_inf}] when theta_inf lies in Theta.
inline double sigmaA_atom_laplace(const BranchingMechanism& m, double lam) {
  mech::require_critical(m, "sigmaA_atom_laplace");
  if (!theta_inf_in_theta(m)) throw DomainError("sigmaA_atom_laplace: theta_inf is not in Theta");
  return mech::psi_inverse(m, lam + m(m.lower_bound())) - mech::bar_theta_infinity(m);
}

/// E[exp(-lam sigma*_theta)] = psi'(theta) / psi'(psi^{-1}(lam + psi(theta))), theta > 0.
inline double sigma_star_laplace(const BranchingMechanism& m, double theta, double lam) {
  mech::require_critical(m, "sigma_star_laplace");
  if (!(theta > 0.0)) throw DomainError("sigma_star_laplace: theta must be positive");
  if (lam == 0.0) return 1.0;
  return m.derivative(theta) / m.derivative(mech::psi_inverse(m, lam + m(theta)));
}

/// Two-time transform N[exp(-lam sigma_{A+s} - kappa sigma_{A+s+t}) | A = theta]
/// for psi = beta u^2.
inline double postexplosion_laplace(double beta, double theta, double s, double t, double lam, double kappa) {
  const double c = std::abs(theta) + s;
  const double b2 = beta * c * c;
  const double root = std::sqrt(lam + b2);
  const double bt = std::sqrt(beta * t * t);
  return std::sqrt(b2) / root * (bt + root) / std::sqrt(kappa + (bt + root) * (bt + root));
}

/// Density of U in the R_A = R*_U representation: 1 - psi'(r)/psi'(check r), r in (0, bar theta_inf).
inline double gA_density(const BranchingMechanism& m, double r) {
  mech::require_critical(m, "gA_density");
  if (theta_inf_in_theta(m)) throw DomainError("gA_density: theta_inf lies in Theta");
  return 1.0 - m.derivative(r) / m.derivative(mech::check_theta(m, r));
}

/// int_0^r gA_density = r - check r.
inline double gA_mass(const BranchingMechanism& m, double r) {
  if (r == 0.0) return 0.0;
  return r - mech::check_theta(m, r);
}

// ---------------------------------------------------------------------------
// Samplers

namespace detail {

inline numeric::TabulatedCdf invert(std::function<cplx(cplx)> transform, double total, double atom = 0.0) {
  return numeric::invert_laplace({std::move(transform), total, atom});
}

// psi(u) = d u + int (e^{-u l} - 1) pi(dl) when beta = 0 and int (1 ^ l) pi < inf.
inline std::optional<double> bv_drift(const BranchingMechanism& m) {
  if (m.beta() != 0.0) return std::nullopt;
  const auto& pi = m.levy();
  if (const auto* p = std::get_if<mech::PowerLawDensity>(&pi); p && p->index < 1.0) {
    return m.alpha_tilde() + m.small_jump_drift(0.0);
  }
  if (std::holds_alternative<mech::AtomicMeasure>(pi)) return m.alpha_tilde() + m.small_jump_drift(0.0);
  return std::nullopt;
}

inline bool finite_levy(const BranchingMechanism& m) {
  const auto& pi = m.levy();
  if (const auto* p = std::get_if<mech::PowerLawDensity>(&pi)) return p->index < 0.0;
  return std::holds_alternative<mech::AtomicMeasure>(pi);
}

// Total mass of e^{-t l} pi(dl) for a finite pi.
inline double tilted_mass(const BranchingMechanism& m, double t) {
  const auto& pi = m.levy();
  if (const auto* p = std::get_if<mech::PowerLawDensity>(&pi)) {
    return p->weight * std::tgamma(-p->index) * std::pow(p->cutoff + t, p->index);
  }
  double s = 0.0;
  for (const auto& a : std::get<mech::AtomicMeasure>(pi).atoms) s += a.mass * std::exp(-t * a.position);
  return s;
}

// E[exp(-lam X)] = psi'(a)/psi'(...) tends to psi'(a)/d: the atom at 0 for bounded variation.
inline double derivative_ratio_atom(const BranchingMechanism& m, double a) {
  const auto d = bv_drift(m);
  return d ? std::clamp(m.derivative(a) / *d, 0.0, 1.0) : 0.0;
}

}  // namespace detail

/// sigma_0 under P_x for a conservative psi. Without jumps it is the first
/// passage of x/sqrt(2 beta) by a Brownian motion with drift
/// alpha/sqrt(2 beta); otherwise the law with transform exp(-x psi^{-1}) is
/// inverted once and reused.
class Sigma0Sampler {
public:
  Sigma0Sampler(const BranchingMechanism& m, double x) : m_(m), x_(x) {
    if (!(x >= 0.0)) throw DomainError("sigma0: x must be >= 0");
    if (x > 0.0 && !jumps_free(m)) {
      const BranchingMechanism mm = m;
      table_ = detail::invert([mm, x](cplx s) { return std::exp(-x * mech::psi_inverse(mm, s)); },
                              std::exp(-x * m.q0()));
    }
  }

  template <class Rng>
  TotalMass operator()(Rng& g) const {
    if (x_ == 0.0) return TotalMass::of(0.0);
    double v;
    if (table_) {
      v = table_->sample(g);
    } else {
      const double s = std::sqrt(2.0 * m_.beta());
      v = numeric::sample_first_passage(x_ / s, m_.alpha_tilde() / s, g);
    }
    return std::isfinite(v) ? TotalMass::of(v) : TotalMass::infinite();
  }

private:
  BranchingMechanism m_;
  double x_;
  std::optional<numeric::TabulatedCdf> table_;
};

template <class Rng>
TotalMass sample_sigma0(const BranchingMechanism& m, double x, Rng& g) {
  return Sigma0Sampler(m, x)(g);
}

/// sigma_q given sigma_theta = s, q <= theta, for fixed (theta, q, s). Without jumps
/// sigma_q = s + first passage of s sqrt(2 beta)(theta - q) by a Brownian
/// motion with drift q sqrt(2 beta). Otherwise sigma_q - s has transform
/// exp(-s (psi_theta(psi_q^{-1}(lam)) - lam)), inverted once.
class GrowthSampler {
public:
  GrowthSampler(const BranchingMechanism& m, double theta, double q, double s)
      : beta_(m.beta()), theta_(theta), q_(q), s_(s) {
    check_growth_args(m, theta, q);
    if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError("growth: sigma_theta must be finite and >= 0");
    if (s > 0.0 && q < theta && !jumps_free(m)) {
      const BranchingMechanism mm = m;
      auto tr = [mm, theta, q, s](cplx z) { return std::exp(-s * (growth_exponent(mm, theta, q, z) - z)); };
      // A compound-Poisson growth stays put with probability exp(-s (|pi_q| - |pi_theta|)).
      double atom = 0.0;
      if (detail::bv_drift(m) && detail::finite_levy(m)) {
        atom = std::exp(-s * (detail::tilted_mass(m, q) - detail::tilted_mass(m, theta)));
      }
      table_ = detail::invert(tr, prob_finite_given(m, theta, q, s), atom);
    }
  }

  template <class Rng>
  TotalMass operator()(Rng& g) const {
    if (s_ == 0.0 || q_ == theta_) return TotalMass::of(s_);
    double extra;
    if (table_) {
      extra = table_->sample(g);
    } else {
      const double c = std::sqrt(2.0 * beta_);
      extra = numeric::sample_first_passage(s_ * c * (theta_ - q_), q_ * c, g);
    }
    if (!std::isfinite(extra)) return TotalMass::infinite();
    return TotalMass::of(s_ + extra);
  }

private:
  double beta_, theta_, q_, s_;
  std::optional<numeric::TabulatedCdf> table_;
};

template <class Rng>
TotalMass sample_growth(const BranchingMechanism& m, double theta, double q, TotalMass sigma_theta, Rng& g) {
  if (!sigma_theta.finite) {
    check_growth_args(m, theta, q);
    return sigma_theta;
  }
  return GrowthSampler(m, theta, q, sigma_theta.value)(g);
}

struct ExplosionTime {
  double value = 0.0;
  bool at_theta_inf = false;  // the atom of A at theta_inf
};

/// A given sigma_0 under N: P(A <= q | sigma_0) = exp(-sigma_0 psi(bar q - q)).
template <class Rng>
ExplosionTime sample_A_given_sigma0(const BranchingMechanism& m, double sigma0, Rng& g) {
  mech::require_critical(m, "sample_A_given_sigma0");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw DomainError("sample_A_given_sigma0: sigma0 must be positive and finite");
  const double y = -std::log(uniform_open(g)) / sigma0;
  if (jumps_free(m)) return {-std::sqrt(y / (4.0 * m.beta())), false};
  auto h = [&](double q) { return m(mech::bar_theta(m, q) - q) - y; };
  if (theta_inf_in_theta(m)) {
    const double lo = m.lower_bound();
    const double top = m(mech::bar_theta_infinity(m) - lo);
    if (y >= top) return {lo, true};
    return {numeric::find_root(h, {lo, 0.0, top - y, -y}), false};
  }
  auto br = numeric::bracket_downward(h, 0.0, 1.0, mech::domain_limit(m));
  return {numeric::find_root(h, br), false};
}

/// sigma_A given A = theta, drawn by numeric inversion of its transform.
class SigmaAGivenA {
public:
  SigmaAGivenA(const BranchingMechanism& m, double theta) {
    mech::require_critical(m, "SigmaAGivenA");
    if (!(theta < 0.0) || !(theta > m.lower_bound())) throw DomainError("SigmaAGivenA: theta must lie in (theta_inf, 0)");
    const double bar = mech::bar_theta(m, theta);
    const BranchingMechanism mm = m;
    table_ = detail::invert([mm, theta, bar](cplx s) { return sigmaA_laplace(mm, theta, bar, s); }, 1.0,
                            detail::derivative_ratio_atom(m, bar));
  }

  template <class Rng>
  double operator()(Rng& g) const {
    return table_.sample(g);
  }

  const numeric::TabulatedCdf& cdf() const { return table_; }

private:
  numeric::TabulatedCdf table_;
};

/// Size-biased pruned mass sigma*_theta, theta > 0. Without jumps
/// 2 beta sigma* = 1/tau_theta = G^2/theta^2, unless `by_inversion` asks for
/// the generic route.
class SigmaStarSampler {
public:
  SigmaStarSampler(const BranchingMechanism& m, double theta, bool by_inversion = false) : m_(m), theta_(theta) {
    mech::require_critical(m, "SigmaStarSampler");
    if (!(theta > 0.0)) throw DomainError("SigmaStarSampler: theta must be positive");
    if (by_inversion || !jumps_free(m)) {
      const BranchingMechanism mm = m;
      const double d = m.derivative(theta);
      table_ = detail::invert(
          [mm, theta, d](cplx s) { return d / mm.derivative(mech::psi_inverse(mm, s + mm(theta))); }, 1.0,
          detail::derivative_ratio_atom(m, theta));
    }
  }

  template <class Rng>
  double operator()(Rng& g) const {
    if (table_) return table_->sample(g);
    return 1.0 / (2.0 * m_.beta() * numeric::sample_tau(theta_, g));
  }

private:
  BranchingMechanism m_;
  double theta_;
  std::optional<numeric::TabulatedCdf> table_;
};

template <class Rng>
double sample_sigma_star(const BranchingMechanism& m, double theta, Rng& g) {
  return SigmaStarSampler(m, theta)(g);
}

// ---------------------------------------------------------------------------
// Trajectories

struct MassTrajectory {
  std::vector<double> thetas;
  std::vector<TotalMass> sigmas;
  std::optional<double> A;       // inf{theta : sigma_theta < inf}, if bracketed
  double A_resolution = 0.0;     // width of the final bracket around A
  bool under_excursion = false;  // N^psi rather than P_x^psi
};

/// (sigma_{A+s}, s in offsets) given A = a < 0, for psi = beta u^2:
/// 2 beta sigma_{A+s} = 1/(V + tau_s), V = tau_{|a|}, tau with independent increments.
template <class Rng>
MassTrajectory sample_post_explosion(const BranchingMechanism& m, double a, const std::vector<double>& offsets, Rng& g) {
  mech::require_critical(m, "sample_post_explosion");
  if (!jumps_free(m)) throw DomainError("sample_post_explosion: quadratic mechanisms only");
  if (!(a < 0.0)) throw DomainError("sample_post_explosion: A must be negative");
  MassTrajectory out;
  out.under_excursion = true;
  out.A = a;
  double tau = numeric::sample_tau(-a, g);
  double prev = 0.0;
  for (double s : offsets) {
    if (!(s >= prev)) throw ConfigError("sample_post_explosion: offsets must be non-decreasing and >= 0");
    if (s > prev) tau += numeric::sample_tau(s - prev, g);
    prev = s;
    out.thetas.push_back(a + s);
    out.sigmas.push_back(TotalMass::of(1.0 / (2.0 * m.beta() * tau)));
  }
  return out;
}

/// (sigma_theta) on an increasing grid under P_x: sigma at the top of the
/// grid, then growth downwards. When the grid brackets A, A is drawn from
/// P(A <= q | sigma_hi) = P(sigma_q < inf | sigma_hi) restricted to (lo, hi],
/// to within `resolution`.
template <class Rng>
MassTrajectory sample_trajectory(const BranchingMechanism& m, double x, const std::vector<double>& grid, Rng& g,
                                 double resolution = 1e-10) {
  mech::require_critical(m, "sample_trajectory");
  if (grid.empty()) throw ConfigError("sample_trajectory: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("sample_trajectory: grid must be increasing");
  }
  for (double t : grid) check_in_theta(m, t, "grid point");
  MassTrajectory out;
  out.thetas = grid;
  out.sigmas.resize(grid.size());
  const std::size_t n = grid.size();
  out.sigmas[n - 1] = Sigma0Sampler(mech::shift(m, grid[n - 1]), x)(g);
  for (std::size_t i = n - 1; i-- > 0;) out.sigmas[i] = sample_growth(m, grid[i + 1], grid[i], out.sigmas[i + 1], g);

  std::size_t first_finite = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.sigmas[i].finite) {
      first_finite = i;
      break;
    }
  }
  if (first_finite == 0 || first_finite == n) return out;  // A not bracketed by the grid
  const double lo = grid[first_finite - 1], hi = grid[first_finite];
  const double s_hi = out.sigmas[first_finite].value;
  const double f_lo = prob_finite_given(m, hi, lo, s_hi);
  const double target = f_lo + uniform_open(g) * (1.0 - f_lo);
  auto f = [&](double q) { return prob_finite_given(m, hi, q, s_hi) - target; };
  out.A = numeric::find_root(f, {lo, hi, f_lo - target, 1.0 - target}, resolution);
  out.A_resolution = resolution;
  return out;
}

// ---------------------------------------------------------------------------
// Restricted-window sampling and reweighting

struct WindowedSample {
  double value = 0.0;
  double window_hi = 0.0;    // sampled on (0, window_hi)
  double window_mass = 0.0;  // unnormalised mass of the window
};

/// U with density 1 - psi'(r)/psi'(check r) on (0, bar theta_inf). The
/// density is not normalisable in general, so U is drawn on (0, B] with
/// B = min(bound, bar theta_inf) and the window is reported.
template <class Rng>
WindowedSample sample_U_for_gA(const BranchingMechanism& m, double bound, Rng& g) {
  mech::require_critical(m, "sample_U_for_gA");
  if (theta_inf_in_theta(m)) throw DomainError("sample_U_for_gA: theta_inf lies in Theta");
  if (!(bound > 0.0)) throw DomainError("sample_U_for_gA: window bound must be positive");
  const double top = std::min(bound, mech::bar_theta_infinity(m));
  if (!std::isfinite(top)) throw DomainError("sample_U_for_gA: window must be bounded");
  const double hi = (top == bound) ? top : top * (1.0 - 1e-12);
  WindowedSample out;
  out.window_hi = hi;
  out.window_mass = gA_mass(m, hi);
  const double target = uniform_open(g) * out.window_mass;
  if (jumps_free(m)) {
    out.value = target / 2.0;
    return out;
  }
  auto f = [&](double r) { return gA_mass(m, r) - target; };
  out.value = numeric::find_root(f, {0.0, hi, -target, out.window_mass - target}, 1e-14);
  return out;
}

struct ReweightResult {
  stats::Estimate estimate;
  double ess = 0.0;
};

/// E^{psi_q}[F(sigma)] from samples under P_x^psi, with weights
/// exp(q x - psi(q) sigma) 1{sigma < inf}. Throws DegenerateWeights when the
/// effective sample size falls below `min_ess`.
inline ReweightResult girsanov_mass_reweight(const std::vector<TotalMass>& samples, const BranchingMechanism& m,
                                             double x, double q, const std::function<double(double)>& F,
                                             double min_ess = 100.0) {
  if (samples.empty()) throw EmptySample("girsanov_mass_reweight: no samples");
  if (!(q > 0.0) || !(m(q) >= 0.0)) throw DomainError("girsanov_mass_reweight: need q > 0 with psi(q) >= 0");
  std::vector<double> vals(samples.size());
  double sw = 0.0, sw2 = 0.0;
  const double pq = m(q);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = samples[i].finite ? std::exp(q * x - pq * samples[i].value) : 0.0;
    sw += w;
    sw2 += w * w;
    vals[i] = w == 0.0 ? 0.0 : w * F(samples[i].value);
  }
  ReweightResult r;
  r.ess = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
  if (r.ess < min_ess) throw DegenerateWeights("girsanov_mass_reweight: effective sample size " + std::to_string(r.ess));
  r.estimate = stats::mean_se(vals);
  return r;
}

}  // namespace crtprune::mass
