#pragma once

#include "crtprune/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace crtprune::stats {

inline constexpr double kKsCoefficient = 1.63;  // alpha ~ 0.01

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

inline Estimate mean_se(const std::vector<double>& xs) {
  if (xs.empty()) throw EmptySample("mean_se: no samples");
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

/// |estimate - reference| <= k * se.
inline bool within_se(const Estimate& e, double reference, double k = 3.0) {
  return std::abs(e.value - reference) <= k * e.se;
}

/// Mean of exp(-lam x) per lam with its standard error. Infinite samples must
/// be removed by the caller.
inline std::vector<Estimate> empirical_laplace(const std::vector<double>& samples, const std::vector<double>& lams) {
  if (samples.empty()) throw EmptySample("empirical_laplace: no samples");
  std::vector<Estimate> out;
  std::vector<double> v(samples.size());
  for (double lam : lams) {
    for (std::size_t i = 0; i < samples.size(); ++i) v[i] = std::exp(-lam * samples[i]);
    out.push_back(mean_se(v));
  }
  return out;
}

struct KsResult {
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::size_t n = 0;
};

inline double ks_threshold(std::size_t n) { return kKsCoefficient / std::sqrt(static_cast<double>(n)); }

inline double ks_threshold(std::size_t n, std::size_t m) {
  const double a = static_cast<double>(n), b = static_cast<double>(m);
  return kKsCoefficient * std::sqrt((a + b) / (a * b));
}

/// One-sample KS distance. `cdf_left` gives F(x-) and only matters when the
/// reference law has atoms; ties are handled as blocks.
inline KsResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf,
                        const std::function<double(double)>& cdf_left = nullptr) {
  if (samples.empty()) throw EmptySample("ks_test: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const double v = samples[i];
    const double f = cdf(v);
    const double fl = cdf_left ? cdf_left(v) : f;
    d = std::max({d, static_cast<double>(j) / n - f, fl - static_cast<double>(i) / n});
    i = j;
  }
  KsResult r;
  r.statistic = d;
  r.n = samples.size();
  r.threshold = ks_threshold(samples.size());
  r.pass = d <= r.threshold;
  return r;
}

/// Two-sample KS distance; infinite values are allowed and compare equal.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw EmptySample("ks_two_sample: no samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  r.n = a.size() + b.size();
  r.threshold = ks_threshold(a.size(), b.size());
  r.pass = d <= r.threshold;
  return r;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool pass = true;
};

/// Two-sample chi-square homogeneity test on count histograms over the same
/// bins. Trailing bins are pooled until each pooled bin holds at least
/// `min_count` observations in total.
inline ChiSquareResult chi_square_homogeneity(const std::vector<double>& a, const std::vector<double>& b,
                                              double alpha = 0.01, double min_count = 10.0) {
  const std::size_t k = std::max(a.size(), b.size());
  auto at = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
  std::vector<std::pair<double, double>> bins;
  double ca = 0.0, cb = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    ca += at(a, i);
    cb += at(b, i);
    if (ca + cb >= min_count) {
      bins.emplace_back(ca, cb);
      ca = cb = 0.0;
    }
  }
  if (ca + cb > 0.0) {
    if (bins.empty()) bins.emplace_back(ca, cb);
    else {
      bins.back().first += ca;
      bins.back().second += cb;
    }
  }
  double na = 0.0, nb = 0.0;
  for (auto [x, y] : bins) {
    na += x;
    nb += y;
  }
  if (na == 0.0 || nb == 0.0) throw EmptySample("chi_square_homogeneity: empty histogram");
  ChiSquareResult r;
  const double n = na + nb;
  for (auto [x, y] : bins) {
    const double col = x + y;
    const double ea = col * na / n, eb = col * nb / n;
    r.statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  r.dof = static_cast<int>(bins.size()) - 1;
  if (r.dof <= 0) {
    r.p_value = 1.0;
  } else {
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  r.pass = r.p_value > alpha;
  return r;
}

}  // namespace crtprune::stats
