#include "crtprune/csbp.hpp"
#include "crtprune/harness/stats.hpp"
#include "crtprune/massflow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace crtprune;
using namespace crtprune::mass;

namespace {

const double kE = std::exp(1.0);

double psi_iv(double u) { return u - 1.0 + 1.0 / (1.0 + u); }

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// bar(q) for the exp-jump mechanism from its closed form.
double bar_iv(double q) {
  return bisect([q](double t) { return psi_iv(t) - psi_iv(q); }, 0.0, 1e3);
}

std::vector<double> finite_values(const std::vector<TotalMass>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) {
    if (x.finite) out.push_back(x.value);
  }
  return out;
}

}  // namespace

TEST(ProbFinite, Examples) {
  const auto q = mech::quadratic(0.5);
  EXPECT_EQ(prob_finite_given(q, 0.3, 0.3, 2.0), 1.0);
  EXPECT_EQ(prob_finite_given(q, 0.0, -1.0, 0.0), 1.0);
  for (double qq : {-0.2, -1.0, -3.0}) {
    EXPECT_NEAR(prob_finite_given(q, 0.0, qq, 1.7), std::exp(-4 * 0.5 * qq * qq * 1.7), 1e-12);
  }
  EXPECT_THROW(prob_finite_given(q, 0.0, 0.5, 1.0), DomainError);
  EXPECT_THROW(prob_finite_given(mech::exp_jump_mechanism(), 0.0, -1.5, 1.0), DomainError);
}

TEST(ConditionalGrowth, QuadraticClosedForm) {
  const double beta = 0.8, s = 1.3;
  const auto m = mech::quadratic(beta);
  for (double lam : {0.01, 1.0, 7.0}) {
    EXPECT_NEAR(conditional_laplace_growth(m, 1.0, 0.0, s, lam), std::exp(-s * (lam + 2 * std::sqrt(beta * lam))), 1e-12);
  }
  EXPECT_NEAR(conditional_laplace_growth(m, 0.5, 0.2, s, 1e-12), 1.0, 1e-5);
}

TEST(ConditionalGrowth, ExpJumpClosedForm) {
  // psi_q^{-1} for psi = u^2/(1+u): roots of u^2 = w (1 + u).
  const auto m = mech::exp_jump_mechanism();
  const double theta = 0.4, q = -0.3, lam = 2.0, s = 0.9;
  const double w = lam + psi_iv(q);
  const double inv = 0.5 * (w + std::sqrt(w * w + 4 * w)) - q;
  const double ref = std::exp(-s * (psi_iv(inv + theta) - psi_iv(theta)));
  EXPECT_NEAR(conditional_laplace_growth(m, theta, q, s, lam), ref, 1e-12);
}

TEST(Growth, QuadraticFiniteFrequencyAndMonotone) {
  const auto m = mech::quadratic(0.5);
  auto g = make_stream(1, stream_tag("mass-test"), 0);
  const double s0 = 0.6;
  const int n = 50000;
  std::vector<double> fin(n);
  for (auto& f : fin) {
    const auto r = sample_growth(m, 0.0, -1.0, TotalMass::of(s0), g);
    if (r.finite) EXPECT_GE(r.value, s0);
    f = r.finite;
  }
  EXPECT_TRUE(stats::within_se(stats::mean_se(fin), std::exp(-2.0 * s0)));
}

TEST(Growth, QuadraticLaplace) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(2, stream_tag("mass-test"), 0);
  const GrowthSampler gs(m, 0.5, -0.2, 1.1);
  const int n = 50000;
  std::vector<double> v(n);
  for (auto& x : v) {
    const auto r = gs(g);
    x = r.finite ? std::exp(-0.7 * r.value) : 0.0;
  }
  EXPECT_TRUE(stats::within_se(stats::mean_se(v), conditional_laplace_growth(m, 0.5, -0.2, 1.1, 0.7)));
}

TEST(Growth, ExpJumpByInversion) {
  const auto m = mech::exp_jump_mechanism();
  auto g = make_stream(3, stream_tag("mass-test"), 0);
  const double theta = 0.0, q = -0.4, s = 0.8;
  const GrowthSampler gs(m, theta, q, s);
  const int n = 20000;
  std::vector<double> fin(n), lap(n);
  for (int i = 0; i < n; ++i) {
    const auto r = gs(g);
    fin[i] = r.finite;
    lap[i] = r.finite ? std::exp(-1.5 * r.value) : 0.0;
    if (r.finite) ASSERT_GE(r.value, s);
  }
  EXPECT_TRUE(stats::within_se(stats::mean_se(fin), prob_finite_given(m, theta, q, s)));
  EXPECT_TRUE(stats::within_se(stats::mean_se(lap), conditional_laplace_growth(m, theta, q, s, 1.5)));
}

TEST(Growth, TowerProperty) {
  // Averaging the conditional transform over sigma_theta under P_x gives E_x exp(-lam sigma_q).
  const auto m = mech::quadratic(0.5);
  const double x = 1.0, theta = 0.5, q = -0.25, lam = 0.8;
  const Sigma0Sampler top(mech::shift(m, theta), x);
  auto g = make_stream(4, stream_tag("mass-test"), 0);
  std::vector<double> v(50000);
  for (auto& e : v) e = conditional_laplace_growth(m, theta, q, top(g).value, lam);
  const double ref = std::exp(-x * psi_q_inverse(m, q, lam));
  EXPECT_TRUE(stats::within_se(stats::mean_se(v), ref));
}

TEST(LawOfA, Survival) {
  EXPECT_NEAR(law_of_A_survival(mech::quadratic(1.0), -1.0), 2.0, 1e-12);
  EXPECT_EQ(law_of_A_survival(mech::quadratic(1.0), 0.0), 0.0);
  EXPECT_NEAR(law_of_A_survival(mech::exp_jump_mechanism(), -0.5), bar_iv(-0.5) + 0.5, 1e-10);
  const auto iii = mech::log_mechanism();
  EXPECT_NEAR(law_of_A_survival(iii, -1.0 / kE), 1.0, 1e-9);  // bar theta_inf - theta_inf = 1
}

TEST(LawOfA, DensityAgreesWithSurvival) {
  EXPECT_NEAR(density_of_A(mech::quadratic(0.7), -0.3), 2.0, 1e-12);
  const auto m = mech::exp_jump_mechanism();
  for (double th : {-0.2, -0.5, -0.9}) {
    const double integral =
        numeric::integrate([&](double r) { return density_of_A(m, r); }, th, 0.0, {1e-10, 1e-10, 2000}).value;
    EXPECT_NEAR(integral, law_of_A_survival(m, th), 1e-6) << th;
  }
  EXPECT_THROW(density_of_A(mech::log_mechanism(), -0.1), DomainError);
  // Close to 0 the ratio tends to -1 for a mechanism with psi''(0) > 0.
  EXPECT_NEAR(density_of_A(m, -1e-5), 2.0, 1e-3);
}

TEST(SampleA, QuadraticClosedFormAndKs) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(5, stream_tag("mass-test"), 0);
  std::vector<double> a(10000);
  for (auto& v : a) v = sample_A_given_sigma0(m, 1.0, g).value;
  auto cdf = [&](double q) { return q >= 0 ? 1.0 : std::exp(-1.0 * 4.0 * q * q); };
  EXPECT_TRUE(stats::ks_test(a, cdf).pass);
}

TEST(SampleA, ExpJumpKs) {
  const auto m = mech::exp_jump_mechanism();
  auto g = make_stream(6, stream_tag("mass-test"), 0);
  for (double s0 : {0.5, 2.0}) {
    std::vector<double> a(5000);
    for (auto& v : a) {
      const auto e = sample_A_given_sigma0(m, s0, g);
      ASSERT_FALSE(e.at_theta_inf);
      ASSERT_LT(e.value, 0.0);
      ASSERT_GT(e.value, -1.0);
      v = e.value;
    }
    auto cdf = [&](double q) { return q >= 0 ? 1.0 : std::exp(-s0 * psi_iv(bar_iv(q) - q)); };
    const auto ks = stats::ks_test(a, cdf);
    EXPECT_TRUE(ks.pass) << ks.statistic;
  }
}

TEST(SampleA, AtomAtThetaInf) {
  const auto m = mech::log_mechanism();
  auto g = make_stream(7, stream_tag("mass-test"), 0);
  const double s0 = 1.0;
  const int n = 20000;
  std::vector<double> atom(n);
  for (auto& v : atom) v = sample_A_given_sigma0(m, s0, g).at_theta_inf;
  // P(A = theta_inf | sigma_0) = exp(-sigma_0 psi(bar theta_inf - theta_inf)) = exp(-sigma_0 psi(1)).
  EXPECT_TRUE(stats::within_se(stats::mean_se(atom), std::exp(-s0 * m(1.0))));
}

TEST(SigmaA, LaplaceExamples) {
  EXPECT_NEAR(sigmaA_laplace(mech::quadratic(1.0), -1.0, 3.0), 0.5, 1e-12);
  EXPECT_EQ(sigmaA_laplace(mech::exp_jump_mechanism(), -0.5, 0.0), 1.0);
  const double beta = 0.4, th = -0.8;
  for (double lam : {0.1, 2.0, 30.0}) {
    EXPECT_NEAR(sigmaA_laplace(mech::quadratic(beta), th, lam),
                std::sqrt(beta * th * th) / std::sqrt(lam + beta * th * th), 1e-12);
  }
  EXPECT_THROW(sigmaA_laplace(mech::exp_jump_mechanism(), -1.0, 1.0), DomainError);
}

TEST(SigmaA, InversionMatchesGammaLaw) {
  const double beta = 1.0, th = -0.7;
  const SigmaAGivenA sa(mech::quadratic(beta), th);
  auto g = make_stream(8, stream_tag("mass-test"), 0);
  std::vector<double> v(10000);
  for (auto& x : v) x = sa(g);
  const auto ks = stats::ks_test(v, [&](double x) { return numeric::gamma_cdf(0.5, beta * th * th, x); });
  EXPECT_TRUE(ks.pass) << ks.statistic;
}

TEST(SigmaA, AtomEvaluator) {
  const auto m = mech::log_mechanism();
  EXPECT_NEAR(sigmaA_atom_laplace(m, 0.0), 0.0, 1e-12);
  EXPECT_GT(sigmaA_atom_laplace(m, 1.0), 0.0);
  EXPECT_THROW(sigmaA_atom_laplace(mech::exp_jump_mechanism(), 1.0), DomainError);
}

TEST(SigmaStar, QuadraticLaplace) {
  const double beta = 0.5, th = 1.5;
  const auto m = mech::quadratic(beta);
  auto g = make_stream(9, stream_tag("mass-test"), 0);
  std::vector<double> v(50000);
  for (auto& x : v) x = sample_sigma_star(m, th, g);
  for (double lam : {0.3, 3.0}) {
    const auto e = stats::empirical_laplace(v, {lam})[0];
    EXPECT_TRUE(stats::within_se(e, th / std::sqrt(lam / beta + th * th))) << lam;
    EXPECT_NEAR(sigma_star_laplace(m, th, lam), th / std::sqrt(lam / beta + th * th), 1e-12);
  }
}

TEST(SigmaStar, ExpJumpByInversion) {
  const auto m = mech::exp_jump_mechanism();
  const SigmaStarSampler ss(m, 0.7);
  auto g = make_stream(10, stream_tag("mass-test"), 0);
  std::vector<double> v(20000);
  for (auto& x : v) x = ss(g);
  for (double lam : {0.5, 4.0}) {
    EXPECT_TRUE(stats::within_se(stats::empirical_laplace(v, {lam})[0], sigma_star_laplace(m, 0.7, lam)));
  }
}

TEST(SigmaStar, HeavyPruningShrinksMass) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(11, stream_tag("mass-test"), 0);
  std::vector<double> v(2000);
  for (auto& x : v) x = sample_sigma_star(m, 200.0, g);
  std::sort(v.begin(), v.end());
  EXPECT_LT(v[1900], 1e-3);
}

TEST(PostExplosion, MarginalAndTwoTimeLaplace) {
  const double beta = 0.5, a = -0.6;
  const auto m = mech::quadratic(beta);
  auto g = make_stream(12, stream_tag("mass-test"), 0);
  const double s = 0.3, t = 0.5;
  const int n = 50000;
  std::vector<double> joint(n), first(n);
  for (int i = 0; i < n; ++i) {
    const auto tr = sample_post_explosion(m, a, {0.0, s, s + t}, g);
    ASSERT_GE(tr.sigmas[0].value, tr.sigmas[1].value);
    ASSERT_GE(tr.sigmas[1].value, tr.sigmas[2].value);
    first[i] = tr.sigmas[0].value;
    joint[i] = std::exp(-1.2 * tr.sigmas[1].value - 0.7 * tr.sigmas[2].value);
  }
  EXPECT_TRUE(stats::within_se(stats::mean_se(joint), postexplosion_laplace(beta, a, s, t, 1.2, 0.7)));
  EXPECT_TRUE(stats::ks_test(std::vector<double>(first.begin(), first.begin() + 10000),
                             [&](double x) { return numeric::gamma_cdf(0.5, beta * a * a, x); })
                  .pass);
  // At t = 0 the kernel reduces to the one-time transform.
  EXPECT_NEAR(postexplosion_laplace(beta, a, s, 0.0, 1.2, 0.0),
              sigmaA_laplace(m, a - s, 1.2), 1e-12);
}

TEST(WindowedU, QuadraticIsUniform) {
  const auto m = mech::quadratic(2.0);
  auto g = make_stream(13, stream_tag("mass-test"), 0);
  std::vector<double> v(10000);
  for (auto& x : v) {
    const auto w = sample_U_for_gA(m, 3.0, g);
    EXPECT_EQ(w.window_hi, 3.0);
    EXPECT_NEAR(w.window_mass, 6.0, 1e-12);
    x = w.value;
  }
  EXPECT_TRUE(stats::ks_test(v, [](double x) { return std::clamp(x / 3.0, 0.0, 1.0); }).pass);
  EXPECT_THROW(sample_U_for_gA(mech::log_mechanism(), 1.0, g), DomainError);
}

TEST(WindowedU, ExpJumpMassMatchesDensity) {
  const auto m = mech::exp_jump_mechanism();
  for (double r : {0.2, 1.0, 3.0}) {
    const double integral =
        numeric::integrate([&](double u) { return gA_density(m, u); }, 0.0, r, {1e-10, 1e-10, 2000}).value;
    EXPECT_NEAR(integral, gA_mass(m, r), 1e-6);
    // Change of variable r = bar q against the law of A.
    EXPECT_NEAR(gA_mass(m, r), law_of_A_survival(m, mech::check_theta(m, r)), 1e-9);
  }
  auto g = make_stream(14, stream_tag("mass-test"), 0);
  std::vector<double> v(5000);
  for (auto& x : v) x = sample_U_for_gA(m, 2.0, g).value;
  const double total = gA_mass(m, 2.0);
  EXPECT_TRUE(stats::ks_test(v, [&](double x) { return x <= 0 ? 0.0 : gA_mass(m, std::min(x, 2.0)) / total; }).pass);
}

TEST(Reweight, NormalisationAndLaplace) {
  const auto m = mech::quadratic(0.5);
  const double x = 1.0, q = 0.8;
  const Sigma0Sampler s0(m, x);
  auto g = make_stream(15, stream_tag("mass-test"), 0);
  std::vector<TotalMass> xs(50000);
  for (auto& v : xs) v = s0(g);
  const auto one = girsanov_mass_reweight(xs, m, x, q, [](double) { return 1.0; });
  EXPECT_TRUE(stats::within_se(one.estimate, 1.0));
  const double lam = 0.6;
  const auto lap = girsanov_mass_reweight(xs, m, x, q, [&](double s) { return std::exp(-lam * s); });
  EXPECT_TRUE(stats::within_se(lap.estimate, csbp::total_mass_laplace(mech::shift(m, q), x, lam)));
  EXPECT_THROW(girsanov_mass_reweight(xs, m, x, q, [](double) { return 1.0; }, 1e9), DegenerateWeights);
}

TEST(Reweight, ExtinctionConditioning) {
  // Super-critical psi = u^2 - 2u: reweighting at q0 = 2 gives the law of sigma given extinction.
  const auto sup = mech::shift(mech::quadratic(1.0), -1.0);
  const double x = 0.5;
  const Sigma0Sampler s0(sup, x);
  auto g = make_stream(16, stream_tag("mass-test"), 0);
  std::vector<TotalMass> xs(50000);
  for (auto& v : xs) v = s0(g);
  const double lam = 1.0;
  const auto r = girsanov_mass_reweight(xs, sup, x, sup.q0(), [&](double s) { return std::exp(-lam * s); });
  EXPECT_TRUE(stats::within_se(r.estimate, csbp::total_mass_laplace(mech::shift(sup, sup.q0()), x, lam)));
}

TEST(Sigma0, QuadraticExactAndLaplace) {
  const auto m = mech::quadratic(0.5);
  auto g = make_stream(17, stream_tag("mass-test"), 0);
  EXPECT_EQ(sample_sigma0(m, 0.0, g).value, 0.0);
  std::vector<double> v(10000);
  for (auto& x : v) x = sample_sigma0(m, 1.0, g).value;
  EXPECT_TRUE(stats::within_se(stats::empirical_laplace(v, {1.0})[0], std::exp(-std::sqrt(2.0))));
  // sigma_0 = tau_{x/sqrt(2 beta)} = tau_1.
  EXPECT_TRUE(stats::ks_test(v, [](double t) { return numeric::tau_cdf(1.0, t); }).pass);
}

TEST(Sigma0, GeneralByInversion) {
  const auto m = mech::log_mechanism();
  const Sigma0Sampler s0(m, 1.0);
  auto g = make_stream(18, stream_tag("mass-test"), 0);
  std::vector<double> v(20000);
  for (auto& x : v) x = s0(g).value;
  for (double lam : {0.3, 3.0}) {
    EXPECT_TRUE(stats::within_se(stats::empirical_laplace(v, {lam})[0], csbp::total_mass_laplace(m, 1.0, lam)));
  }
}

TEST(Trajectory, MonotoneWithRefinedA) {
  const auto m = mech::quadratic(1.0);
  auto g = make_stream(19, stream_tag("mass-test"), 0);
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(-2.0 + 0.15 * i);
  const double x = 1.0, q = -0.5;
  const int n = 20000;
  std::vector<double> below(n);
  for (int k = 0; k < n; ++k) {
    const auto tr = sample_trajectory(m, x, grid, g);
    bool seen_finite = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (seen_finite) ASSERT_TRUE(tr.sigmas[i].finite);
      if (tr.sigmas[i].finite) {
        if (i + 1 < grid.size()) ASSERT_GE(tr.sigmas[i].value, tr.sigmas[i + 1].value);
        seen_finite = true;
      }
    }
    if (tr.A) {
      ASSERT_LE(tr.A_resolution, 1e-4);
    }
    below[k] = tr.A ? (*tr.A <= q) : tr.sigmas.front().finite;
  }
  // Under P_x: P(A <= q) = P(sigma_q < inf) = exp(-2 x |q|).
  EXPECT_TRUE(stats::within_se(stats::mean_se(below), std::exp(-2.0 * x * std::abs(q))));
}

TEST(SigmaStar, BoundedVariationAtomAtZero) {
  // psi = u^2/(1+u) has drift 1 at infinity, so P(sigma* = 0) = psi'(theta).
  const double th = 0.7;
  const SigmaStarSampler ss(mech::exp_jump_mechanism(), th);
  auto g = make_stream(20, stream_tag("mass-test"), 0);
  std::vector<double> zero(20000);
  for (auto& z : zero) z = ss(g) == 0.0;
  EXPECT_TRUE(stats::within_se(stats::mean_se(zero), (th * th + 2 * th) / ((1 + th) * (1 + th))));
}
