#include "crtprune/mechanism_io.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crtprune;
using namespace crtprune::mech;

namespace {

std::string cfg(const char* name) { return std::string(CRTPRUNE_SOURCE_DIR) + "/mechanisms/" + name; }

}  // namespace

TEST(MechanismFile, ShippedFilesMatchBuiltins) {
  const auto q = load_mechanism(cfg("quadratic.cfg"));
  EXPECT_EQ(q.beta(), 0.5);
  const auto st = load_mechanism(cfg("stable.cfg"));
  const auto lg = load_mechanism(cfg("log.cfg"));
  const auto ej = load_mechanism(cfg("expjump.cfg"));
  for (double u : {-0.3, 0.0, 0.2, 1.0, 7.5}) {
    EXPECT_NEAR(q(u), 0.5 * u * u, 1e-15);
    if (u >= 0) EXPECT_NEAR(st(u), std::pow(u, 1.5), 1e-9 * std::max(1.0, st(u)));
    EXPECT_NEAR(lg(u), log_mechanism()(u), 1e-10 * std::max(1.0, std::abs(lg(u))));
    EXPECT_NEAR(ej(u), u - 1 + 1 / (1 + u), 1e-12 * std::max(1.0, ej(u)));
  }
  EXPECT_TRUE(ej.is_critical());
  EXPECT_TRUE(lg.is_critical());
}

TEST(MechanismFile, KindsAndTilt) {
  const auto a = parse_mechanism("alpha_tilde = 1\nbeta = 0\npi.kind = atoms\npi.params = 0.5:2, 3:0.25\n");
  EXPECT_NEAR(a(1.0), 1.0 + 2 * (std::exp(-0.5) - 1 + 0.5) + 0.25 * (std::exp(-3.0) - 1), 1e-14);
  // A tilted exp density equals an exp density with a larger rate.
  const auto t1 = parse_mechanism("alpha_tilde = critical\npi.kind = exp\npi.params = 1, 1\npi.tilt = 0.5\n");
  const auto t2 = parse_mechanism("alpha_tilde = critical\npi.kind = power\npi.params = 1, -1, 1.5\n");
  EXPECT_NEAR(t1(2.0), t2(2.0), 1e-12);
  EXPECT_TRUE(t1.is_critical());
  const auto tab = parse_mechanism("beta = 1\npi.kind = tabulated\npi.params = 0.1:1, 1:1, 2:0\n");
  // Composite Simpson over the linear pieces of the density.
  auto dens = [](double l) { return l <= 1.0 ? 1.0 : 2.0 - l; };
  double ref = 0.0;
  for (auto [a, b] : {std::pair{0.1, 1.0}, std::pair{1.0, 2.0}}) {
    const bool compensated = b <= 1.0;
    auto integrand = [&](double l) { return (std::exp(-l) - 1 + (compensated ? l : 0.0)) * dens(l); };
    const int n = 2000;
    const double h = (b - a) / n;
    double acc = integrand(a) + integrand(b);
    for (int i = 1; i < n; ++i) acc += integrand(a + i * h) * (i % 2 ? 4 : 2);
    ref += acc * h / 3;
  }
  EXPECT_NEAR(tab(1.0), 1.0 + ref, 1e-10);
}

TEST(MechanismFile, Errors) {
  EXPECT_THROW(parse_mechanism("beta = x\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("beta = 1\nbeta = 2\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("gamma = 1\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("pi.kind = cauchy\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("pi.kind = power\npi.params = 1, 2.5, 0\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("pi.kind = exp\npi.params = 1\n"), ConfigError);
  EXPECT_THROW(parse_mechanism("beta 1\n"), ConfigError);
  EXPECT_THROW(load_mechanism("/nonexistent.cfg"), ConfigError);
}

TEST(MechanismFile, ClassificationJson) {
  const auto j = classification_json(load_mechanism(cfg("log.cfg")));
  EXPECT_EQ(j["criticality"], "critical");
  EXPECT_NEAR(j["theta_inf"].get<double>(), -std::exp(-1.0), 1e-10);
  EXPECT_EQ(j["theta_inf_in_theta"], "yes");
  const auto q = classification_json(quadratic(1.0));
  EXPECT_TRUE(q["theta_inf"].is_null());
  EXPECT_EQ(q["theta_inf_text"], "-inf");
  EXPECT_NO_THROW((void)q.dump());
}
