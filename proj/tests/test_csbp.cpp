#include "crtprune/csbp.hpp"
#include "crtprune/harness/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace crtprune;
using namespace crtprune::csbp;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, i / double(n - 1)));
  return g;
}

// CDF of Z_t for psi = beta l^2, summed over the Poisson number of clusters.
double quadratic_marginal_cdf(double beta, double x, double t, double z) {
  const double mu = x / (beta * t), s = beta * t;
  double p = std::exp(-mu), total = p;
  for (int n = 1; n < 400; ++n) {
    p *= mu / n;
    if (z > 0) total += p * boost::math::gamma_p(n, z / s);
    if (p < 1e-18 && n > mu) break;
  }
  return total;
}

}  // namespace

TEST(SolveU, QuadraticClosedForm) {
  const double beta = 0.7;
  const auto m = mech::quadratic(beta);
  for (double a : log_grid(1e-3, 1e2, 8)) {
    for (double lam : log_grid(1e-3, 1e3, 8)) {
      const double ref = lam / (1.0 + beta * lam * a);
      EXPECT_NEAR(solve_u(m, a, lam), ref, 1e-9 * ref) << a << " " << lam;
    }
  }
}

TEST(SolveU, StableClosedForm) {
  const double c = 1.2, al = 1.4;
  const auto m = mech::stable(c, al);
  for (double a : log_grid(1e-3, 1e2, 6)) {
    for (double lam : log_grid(1e-2, 1e3, 6)) {
      const double ref = std::pow(std::pow(lam, 1 - al) + c * (al - 1) * a, 1 / (1 - al));
      EXPECT_NEAR(solve_u(m, a, lam), ref, 1e-9 * ref);
    }
  }
}

TEST(SolveU, ZeroTimeAndFlow) {
  const auto m = mech::exp_jump_mechanism();
  EXPECT_EQ(solve_u(m, 0.0, 2.5), 2.5);
  for (double lam : {0.1, 1.0, 10.0}) {
    for (auto [a, b] : std::vector<std::pair<double, double>>{{0.3, 0.7}, {2.0, 1.5}}) {
      const double lhs = solve_u(m, a + b, lam);
      EXPECT_NEAR(lhs, solve_u(m, a, solve_u(m, b, lam)), 1e-8 * lhs);
      EXPECT_LT(lhs, solve_u(m, a, lam));
    }
  }
}

TEST(SolveU, SubAndSuperCritical) {
  // psi = l + l^2: u = lam e^{-a} / (1 + lam (1 - e^{-a})).
  const BranchingMechanism sub(1.0, 1.0, mech::ZeroMeasure{});
  for (double a : {0.1, 1.0, 10.0}) {
    const double lam = 2.0;
    const double ref = lam * std::exp(-a) / (1.0 + lam * (1.0 - std::exp(-a)));
    EXPECT_NEAR(solve_u(sub, a, lam), ref, 1e-9 * ref);
  }
  const auto sup = mech::shift(mech::quadratic(1.0), -1.0);  // l^2 - 2 l, q0 = 2
  EXPECT_THROW(solve_u(sup, 1.0, 1.5), DomainError);
  // u = q0 lam / (lam - (lam - q0) e^{-2 a}) for beta l^2 - 2 l.
  const double lam = 3.0, a = 0.4;
  EXPECT_NEAR(solve_u(sup, a, lam), 2.0 * lam / (lam - (lam - 2.0) * std::exp(-2.0 * a)), 1e-9);
}

TEST(Laplace, ClosedForms) {
  const auto q = mech::quadratic(0.5);
  EXPECT_EQ(laplace_Za(q, 0.0, 1.0, 1.0), 1.0);
  EXPECT_NEAR(laplace_Za(q, 2.0, 1.5, 3.0), std::exp(-2.0 * 3.0 / (1.0 + 0.5 * 3.0 * 1.5)), 1e-12);
  EXPECT_GT(laplace_Za(q, 1.0, 1e8, 1.0), 1.0 - 1e-6);
  EXPECT_EQ(extinction_prob(q, 3.0), 1.0);
  EXPECT_NEAR(extinction_prob(mech::shift(mech::quadratic(1.0), -1.0), 1.0), std::exp(-2.0), 1e-12);
  EXPECT_NEAR(total_mass_laplace(q, 1.3, 2.0), std::exp(-1.3 * 2.0), 1e-12);
  EXPECT_EQ(total_mass_laplace(q, 1.0, 0.0), 1.0);
  EXPECT_NEAR(total_mass_laplace(mech::shift(mech::quadratic(1.0), -1.0), 0.7, 0.0), std::exp(-1.4), 1e-12);
}

TEST(Laplace, TotalMassMonotone) {
  const auto m = mech::log_mechanism();
  double prev = 1.0;
  for (double lam : log_grid(1e-3, 1e3, 20)) {
    const double v = total_mass_laplace(m, 1.0, lam);
    EXPECT_LT(v, prev);
    EXPECT_LT(total_mass_laplace(m, 2.0, lam), v);
    prev = v;
  }
}

TEST(QuadraticTransition, MomentsAndZeroMass) {
  auto g = make_stream(11, stream_tag("csbp-test"), 0);
  const int n = 100000;
  std::vector<double> z(n);
  for (auto& v : z) v = sample_quadratic_transition(1.0, 1.0, 1.0, g);
  const auto mean = stats::mean_se(z);
  EXPECT_TRUE(stats::within_se(mean, 1.0)) << mean.value << " " << mean.se;
  std::vector<double> zero(n);
  for (int i = 0; i < n; ++i) zero[i] = z[i] == 0.0;
  EXPECT_TRUE(stats::within_se(stats::mean_se(zero), std::exp(-1.0)));
  const auto lap = stats::empirical_laplace(z, {0.1, 1.0, 10.0});
  const std::vector<double> lams{0.1, 1.0, 10.0};
  for (std::size_t i = 0; i < lams.size(); ++i) {
    EXPECT_TRUE(stats::within_se(lap[i], std::exp(-lams[i] / (1.0 + lams[i])))) << lams[i];
  }
  EXPECT_EQ(sample_quadratic_transition(1.0, 0.0, 1.0, g), 0.0);
}

TEST(QuadraticTransition, DriftMatchesSolveU) {
  const BranchingMechanism m(-0.8, 0.6, mech::ZeroMeasure{});
  auto g = make_stream(12, stream_tag("csbp-test"), 0);
  const int n = 100000;
  std::vector<double> z(n);
  for (auto& v : z) v = sample_quadratic_transition(m.alpha_tilde(), m.beta(), 0.5, 0.8, g);
  for (double lam : {3.0, 10.0}) {
    const auto e = stats::empirical_laplace(z, {lam})[0];
    EXPECT_TRUE(stats::within_se(e, laplace_Za(m, 0.5, 0.8, lam))) << lam;
  }
}

TEST(EulerPath, MatchesExactQuadraticMarginal) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(13, stream_tag("csbp-test"), 0);
  const EulerScheme scheme(m, {1e-3, 1e-4});
  const auto grid = uniform_grid(1.0, 1.0);
  std::vector<double> z(10000);
  for (auto& v : z) v = scheme.path(1.0, grid, g).values.back();
  auto cdf = [&](double v) { return quadratic_marginal_cdf(1.0, 1.0, 1.0, v); };
  auto left = [&](double v) { return v <= 0.0 ? 0.0 : cdf(v); };
  const auto ks = stats::ks_test(z, cdf, left);
  EXPECT_LE(ks.statistic, 0.02);
}

TEST(EulerPath, ZeroStartStaysZero) {
  auto g = make_stream(14, 0, 0);
  const auto p = sample_general_path(mech::exp_jump_mechanism(), 0.0, uniform_grid(1.0, 0.1), g);
  for (double v : p.values) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(p.extinct_at.has_value());
}

TEST(EulerPath, CriticalJumpMechanismKeepsMean) {
  const auto m = mech::exp_jump_mechanism();
  auto g = make_stream(15, 0, 0);
  const EulerScheme scheme(m, {0.01, 0.0});
  const auto grid = uniform_grid(1.0, 0.5);
  std::vector<double> z(20000);
  for (auto& v : z) {
    const auto p = scheme.path(1.0, grid, g);
    EXPECT_FALSE(p.exploded);
    v = p.values.back();
  }
  EXPECT_TRUE(stats::within_se(stats::mean_se(z), 1.0));
}

TEST(EulerPath, OptionValidation) {
  const auto m = mech::stable(1.0, 1.5);
  EXPECT_THROW(EulerScheme(m, {0.0, 1e-4}), ConfigError);
  EXPECT_THROW(EulerScheme(m, {0.01, 0.5}), ConfigError);
  EXPECT_THROW(EulerScheme(m, {0.01, 0.0}), ConfigError);
  EXPECT_NO_THROW(EulerScheme(m, {0.01, 1e-3}));
}

TEST(JumpSampler, PowerLawTailFraction) {
  for (const auto& m : {mech::stable(1.0, 1.5), mech::log_mechanism(), mech::exp_jump_mechanism()}) {
    const JumpSampler js(m, 1e-3);
    const double above_one = m.mass_above(1.0) / js.rate();
    auto g = make_stream(16, 0, 0);
    const int n = 100000;
    std::vector<double> hit(n);
    for (auto& h : hit) h = js(g) > 1.0;
    EXPECT_TRUE(stats::within_se(stats::mean_se(hit), above_one, 4.0));
    EXPECT_NEAR(js.rate(), m.mass_above(1e-3), 1e-9 * js.rate());
  }
}

TEST(JumpSampler, AtomsAndTable) {
  const BranchingMechanism atoms(0.0, 0.0, mech::AtomicMeasure{{{0.5, 1.0}, {2.0, 3.0}}});
  const JumpSampler js(atoms, 1e-4);
  EXPECT_DOUBLE_EQ(js.rate(), 4.0);
  auto g = make_stream(17, 0, 0);
  std::vector<double> big(40000);
  for (auto& b : big) b = js(g) == 2.0;
  EXPECT_TRUE(stats::within_se(stats::mean_se(big), 0.75));

  const BranchingMechanism tab(1.0, 0.0, mech::TabulatedDensity{{0.0, 2.0}, {1.0, 0.0}});
  const JumpSampler jt(tab, 1e-4);
  std::vector<double> xs(40000);
  for (auto& x : xs) x = jt(g);
  // Triangular density on [0,2]: mean 2/3.
  EXPECT_TRUE(stats::within_se(stats::mean_se(xs), 2.0 / 3.0, 4.0));
}

TEST(Girsanov, TrivialAndDomain) {
  auto g = make_stream(18, 0, 0);
  const auto m = mech::quadratic(1.0);
  const auto p = sample_quadratic_path(m, 1.0, uniform_grid(1.0, 0.1), g);
  EXPECT_EQ(girsanov_weight(p, m, 0.0).value, 1.0);
  const auto iv = mech::exp_jump_mechanism();
  EXPECT_THROW(girsanov_weight(p, iv, -1.5), DomainError);
  const auto w = girsanov_weight(p, m, 0.5);
  EXPECT_LE(w.value, std::exp(0.5));
}

TEST(Girsanov, QuadraticMartingale) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(19, 0, 0);
  const auto grid = uniform_grid(1.0, 0.01);
  std::vector<double> w(50000);
  for (auto& v : w) v = girsanov_weight(sample_quadratic_path(m, 1.0, grid, g), m, 0.5).value;
  const auto e = stats::mean_se(w);
  EXPECT_TRUE(stats::within_se(e, 1.0)) << e.value << " +- " << e.se;
}

TEST(Girsanov, ExtinctionConditioningUsesShift) {
  const auto sup = mech::shift(mech::quadratic(1.0), -1.0);
  auto g = make_stream(20, 0, 0);
  const auto p = sample_path_given_extinction(sup, 1.0, uniform_grid(30.0, 1.0), g);
  EXPECT_FALSE(p.exploded);
  // Under the conditioned law the process is sub-critical: extinct by a = 30 with high probability.
  EXPECT_TRUE(p.extinct_at.has_value() || p.values.back() < 1.0);
}
