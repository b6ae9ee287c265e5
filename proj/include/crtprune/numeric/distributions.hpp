#pragma once

#include "crtprune/random.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>

namespace crtprune::numeric {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// P(tau_theta <= x) for the stable-1/2 subordinator, i.e. the first passage
/// of level theta by a standard Brownian motion.
inline double tau_cdf(double theta, double x) {
  if (theta == 0.0) return 1.0;
  if (!(x > 0.0)) return 0.0;
  return std::erfc(theta / std::sqrt(2.0 * x));
}

/// tau_theta = theta^2 / G^2.
template <class Rng>
double sample_tau(double theta, Rng& g) {
  const double z = standard_normal(g);
  return theta * theta / (z * z);
}

/// Regularized lower incomplete gamma, shape k, rate r.
inline double gamma_cdf(double shape, double rate, double x) {
  if (!(x > 0.0)) return 0.0;
  return boost::math::gamma_p(shape, rate * x);
}

/// First passage time of level `level` > 0 by a Brownian motion with drift
/// `drift` (unit variance). Returns +inf when the level is never reached
/// (probability 1 - e^{2 drift level} for negative drift).
template <class Rng>
double sample_first_passage(double level, double drift, Rng& g) {
  if (level == 0.0) return 0.0;
  if (drift == 0.0) return sample_tau(level, g);
  if (drift < 0.0) {
    if (uniform_open(g) > std::exp(2.0 * drift * level)) return std::numeric_limits<double>::infinity();
    drift = -drift;
  }
  // Inverse Gaussian(mean level/drift, shape level^2), Michael-Schucany-Haas.
  const double mu = level / drift, lam = level * level;
  const double z = standard_normal(g);
  const double y = z * z;
  // Larger root first; the smaller one is mu^2 / larger, free of cancellation.
  const double big = mu + mu * mu * y / (2.0 * lam) + mu / (2.0 * lam) * std::sqrt(4.0 * mu * lam * y + mu * mu * y * y);
  const double small = mu * mu / big;
  if (uniform_open(g) <= mu / (mu + small)) return small;
  return big;
}

}  // namespace crtprune::numeric
