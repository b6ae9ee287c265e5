#pragma once

// Validation suites. Each check draws replicate i from the stream
// (master_seed, check tag, i), so results do not depend on the worker count.

#include "crtprune/crtfrag.hpp"
#include "crtprune/csbp.hpp"
#include "crtprune/error.hpp"
#include "crtprune/gwprune.hpp"
#include "crtprune/harness/stats.hpp"
#include "crtprune/massflow.hpp"
#include "crtprune/mechanism.hpp"
#include "crtprune/mechanism_io.hpp"
#include "crtprune/numeric/distributions.hpp"
#include "crtprune/random.hpp"

#include "json.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace crtprune::harness {

using json = nlohmann::json;

struct Tolerance {
  double se_multiplier = 3.0;
  double ks_coefficient = stats::kKsCoefficient;
  double chi_alpha = 0.01;
  double residual = 1e-10;
  double relative = 1e-8;
  double tv = 1e-12;
  double fragment_ks = 0.05;
};

struct SimConfig {
  std::uint64_t master_seed = 42;
  std::size_t replicates = 100000;
  unsigned workers = 1;
  std::string mech_path;
  Tolerance tol;
  std::size_t crt_grid = 1u << 14;
  std::size_t crt_leaves = 1000;
  std::size_t crt_trees = 2000;
  std::vector<double> crt_thetas{0.5, 1.0, 2.0};
  bool timing = false;

  /// Sample size of the KS checks.
  std::size_t ks_n() const { return std::max<std::size_t>(replicates / 10, 100); }
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct ValidationReport {
  std::string id;
  std::string reference;  // formula the check compares against
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::size_t n = 0;
  std::optional<double> runtime;
  json reference_values = json::array();
  json details = json::object();
  CsvTable csv;
};

inline json to_json(const ValidationReport& r, bool timing) {
  json j;
  j["id"] = r.id;
  j["reference"] = r.reference;
  j["statistic"] = std::isfinite(r.statistic) ? json(r.statistic) : json(nullptr);
  j["threshold"] = r.threshold;
  j["pass"] = r.pass;
  j["n"] = r.n;
  j["runtime_s"] = (timing && r.runtime) ? json(*r.runtime) : json(nullptr);
  j["reference_values"] = r.reference_values;
  if (!r.details.empty()) j["details"] = r.details;
  return j;
}

inline std::string to_jsonl(const std::vector<ValidationReport>& reports, bool timing) {
  std::string out;
  for (const auto& r : reports) out += to_json(r, timing).dump() + "\n";
  return out;
}

inline void write_csv(const CsvTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << "\n";
  out.precision(17);
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Worker pool

/// out[i] = f(i) for i < n, computed by `workers` threads in blocks.
template <class F>
auto parallel_map(std::size_t n, unsigned workers, F&& f) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  using T = std::invoke_result_t<F&, std::size_t>;
  std::vector<T> out(n);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  constexpr std::size_t kBlock = 64;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t lo = next.fetch_add(kBlock);
      if (lo >= n) return;
      const std::size_t hi = std::min(n, lo + kBlock);
      try {
        for (std::size_t i = lo; i < hi; ++i) out[i] = f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned k = std::min<unsigned>(workers, static_cast<unsigned>((n + kBlock - 1) / kBlock));
  for (unsigned w = 0; w < k; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// Replicate i of check `tag` gets its own stream.
template <class F>
auto replicate(const SimConfig& cfg, const char* tag, std::size_t n, F&& f) {
  const std::uint64_t module = stream_tag(tag);
  return parallel_map(n, cfg.workers, [&](std::size_t i) {
    Rng g = make_stream(cfg.master_seed, module, i);
    return f(g, i);
  });
}

// ---------------------------------------------------------------------------
// Report builders

namespace detail {

// Laplace-type check: estimates against references, statistic = max |z|.
struct LaplaceRow {
  double lam;
  stats::Estimate est;
  double ref;
};

inline ValidationReport laplace_report(std::string id, std::string reference, const std::vector<LaplaceRow>& rows,
                                       std::size_t n, const SimConfig& cfg, const char* key = "lambda") {
  ValidationReport r;
  r.id = std::move(id);
  r.reference = std::move(reference);
  r.n = n;
  r.threshold = cfg.tol.se_multiplier;
  r.csv.header = {key, "estimate", "se", "reference"};
  double worst = 0.0;
  for (const auto& row : rows) {
    const double diff = std::abs(row.est.value - row.ref);
    const double z = row.est.se > 0.0 ? diff / row.est.se : (diff == 0.0 ? 0.0 : mech::kInf);
    worst = std::max(worst, z);
    r.reference_values.push_back({{key, row.lam}, {"reference", row.ref}, {"estimate", row.est.value}, {"se", row.est.se}});
    r.csv.rows.push_back({row.lam, row.est.value, row.est.se, row.ref});
  }
  r.statistic = worst;
  r.pass = worst <= r.threshold;
  return r;
}

inline ValidationReport ks_report(std::string id, std::string reference, std::vector<double> samples,
                                  const std::function<double(double)>& cdf, const SimConfig& cfg) {
  const auto ks = stats::ks_test(samples, cdf);
  ValidationReport r;
  r.id = std::move(id);
  r.reference = std::move(reference);
  r.n = samples.size();
  r.statistic = ks.statistic;
  r.threshold = cfg.tol.ks_coefficient / std::sqrt(static_cast<double>(samples.size()));
  r.pass = r.statistic <= r.threshold;
  std::sort(samples.begin(), samples.end());
  r.csv.header = {"p", "sample_quantile", "reference_cdf"};
  for (int k = 1; k < 100; ++k) {
    const double q = samples[static_cast<std::size_t>(k / 100.0 * static_cast<double>(samples.size() - 1))];
    const double f = cdf(q);
    r.csv.rows.push_back({k / 100.0, q, f});
    if (k % 10 == 0) r.reference_values.push_back({{"x", q}, {"reference_cdf", f}});
  }
  return r;
}

inline ValidationReport residual_report(std::string id, std::string reference, double worst, double tol,
                                        std::size_t n, json values = json::array()) {
  ValidationReport r;
  r.id = std::move(id);
  r.reference = std::move(reference);
  r.n = n;
  r.statistic = worst;
  r.threshold = tol;
  r.pass = worst <= tol;
  r.reference_values = std::move(values);
  return r;
}

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// mechanism

struct NamedMechanism {
  std::string name;
  mech::BranchingMechanism m;
  double theta_lo;  // left end of the tested theta range
};

inline std::vector<NamedMechanism> reference_mechanisms() {
  return {{"quadratic", mech::quadratic(0.5), -3.0},
          {"stable", mech::stable(1.0, 1.5), 0.0},
          {"log", mech::log_mechanism(), -std::exp(-1.0)},
          {"expjump", mech::exp_jump_mechanism(), -0.99}};
}

inline std::vector<ValidationReport> mechanism_suite(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  for (const auto& ex : reference_mechanisms()) {
    double worst = 0.0;
    bool identity = true;
    json vals = json::array();
    for (int i = 0; i < 50; ++i) {
      const double th = ex.theta_lo + (3.0 - ex.theta_lo) * i / 49.0;
      const double bar = mech::bar_theta(ex.m, th);
      if (th >= 0.0 && bar != th) identity = false;
      const double res = std::abs(ex.m(bar) - ex.m(th)) / std::max(1.0, std::abs(ex.m(th)));
      worst = std::max(worst, res);
      if (i % 10 == 0) vals.push_back({{"theta", th}, {"bar_theta", bar}, {"psi_theta", ex.m(th)}});
    }
    auto r = detail::residual_report("mech.bar_theta." + ex.name, "psi(bar theta) = psi(theta), bar theta = theta for theta >= 0",
                                     identity ? worst : mech::kInf, cfg.tol.residual, 50, vals);
    r.details["identity_for_nonnegative_theta"] = identity;
    out.push_back(std::move(r));
  }
  // Endpoints of Theta: R, [0, inf), [-1/e, inf), (-1, inf).
  struct Want {
    double lo;
    bool closed;
  };
  const Want want[] = {{-mech::kInf, false}, {0.0, true}, {-std::exp(-1.0), true}, {-1.0, false}};
  const auto ex = reference_mechanisms();
  double worst = 0.0;
  json vals = json::array();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const auto c = mech::classify(ex[i].m);
    const bool in_theta = c.theta_inf_in_domain && c.theta_inf_conservative == mech::Decision::yes;
    double err = std::isinf(want[i].lo) ? (std::isinf(c.theta_inf) ? 0.0 : mech::kInf) : std::abs(c.theta_inf - want[i].lo);
    if (in_theta != want[i].closed) err = mech::kInf;
    worst = std::max(worst, err);
    vals.push_back({{"mechanism", ex[i].name},
                    {"theta_inf", std::isfinite(want[i].lo) ? json(want[i].lo) : json("-inf")},
                    {"closed", want[i].closed},
                    {"computed", std::isfinite(c.theta_inf) ? json(c.theta_inf) : json("-inf")}});
  }
  out.push_back(detail::residual_report("mech.theta_domain", "Theta = R, [0,inf), [-1/e,inf), (-1,inf)", worst,
                                        cfg.tol.residual, ex.size(), vals));

  if (!cfg.mech_path.empty()) {
    const auto m = mech::load_mechanism(cfg.mech_path);
    auto r = detail::residual_report("mech.file.classification", "classification of the mechanism file", 0.0, 0.0, 1);
    r.details = mech::classification_json(m);
    if (m.is_critical() && m.lower_bound_determined()) {
      const double lo = std::isfinite(m.lower_bound()) ? mech::domain_limit(m) : -3.0;
      double w = 0.0;
      for (int i = 0; i < 50; ++i) {
        const double th = lo + (3.0 - lo) * i / 49.0;
        const double bar = mech::bar_theta(m, th);
        w = std::max(w, std::abs(m(bar) - m(th)) / std::max(1.0, std::abs(m(th))));
      }
      r.statistic = w;
      r.threshold = cfg.tol.residual;
      r.n = 50;
      r.reference = "psi(bar theta) = psi(theta) on the mechanism file";
    }
    r.pass = r.statistic <= r.threshold;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// csbp

inline std::vector<ValidationReport> csbp_flow_checks(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const auto as = detail::log_grid(1e-2, 1e2, 20), lams = detail::log_grid(1e-2, 1e2, 20);
  {
    const double beta = 0.5;
    const auto q = mech::quadratic(beta);
    const auto st = mech::stable(1.0, 1.5);
    double worst = 0.0;
    json vals = json::array();
    for (double a : as) {
      for (double lam : lams) {
        const double uq = lam / (1.0 + beta * a * lam);
        const double us = std::pow(std::pow(lam, -0.5) + 0.5 * a, -2.0);
        worst = std::max({worst, std::abs(csbp::solve_u(q, a, lam) / uq - 1.0), std::abs(csbp::solve_u(st, a, lam) / us - 1.0)});
      }
    }
    vals.push_back({{"quadratic", "lam/(1 + beta a lam)"}, {"beta", beta}});
    vals.push_back({{"stable", "(lam^(-1/2) + a/2)^(-2)"}, {"psi", "u^1.5"}});
    out.push_back(detail::residual_report("csbp.u.closed_form", "u(a,lam) closed forms, 20x20 log grid", worst,
                                          cfg.tol.relative, as.size() * lams.size(), vals));
  }
  {
    double worst = 0.0;
    for (const auto& ex : reference_mechanisms()) {
      for (std::size_t i = 0; i < as.size(); i += 3) {
        for (std::size_t j = 0; j < lams.size(); j += 3) {
          const double a = as[i], b = as[(i + 7) % as.size()], lam = lams[j];
          const double lhs = csbp::solve_u(ex.m, a + b, lam);
          const double rhs = csbp::solve_u(ex.m, a, csbp::solve_u(ex.m, b, lam));
          worst = std::max(worst, std::abs(lhs / rhs - 1.0));
        }
      }
    }
    out.push_back(detail::residual_report("csbp.u.flow", "u(a+b,lam) = u(a,u(b,lam))", worst, cfg.tol.relative, 4 * 49));
  }
  return out;
}

inline std::vector<ValidationReport> csbp_quadratic_checks(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const std::size_t n = cfg.replicates;
  {
    const double beta = 0.5, x = 1.0, t = 1.0;
    const auto z = replicate(cfg, "csbp.quadratic", n, [&](Rng& g, std::size_t) {
      return csbp::sample_quadratic_transition(beta, x, t, g);
    });
    std::vector<detail::LaplaceRow> rows;
    for (double lam : {0.1, 1.0, 10.0}) {
      rows.push_back({lam, stats::empirical_laplace(z, {lam})[0], std::exp(-x * lam / (1.0 + beta * t * lam))});
    }
    out.push_back(detail::laplace_report("csbp.quadratic.laplace", "E exp(-lam Z_t) = exp(-x u(t,lam))", rows, n, cfg));
    std::vector<double> zero(n);
    for (std::size_t i = 0; i < n; ++i) zero[i] = z[i] == 0.0;
    out.push_back(detail::laplace_report("csbp.quadratic.extinction", "P(Z_t = 0) = exp(-x/(beta t))",
                                         {{t, stats::mean_se(zero), std::exp(-x / (beta * t))}}, n, cfg, "t"));
  }
  return out;
}

inline std::vector<ValidationReport> csbp_girsanov_checks(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const std::size_t n = cfg.replicates;
  {
    // Martingale exp(q x - q Z_a - psi(q) int_0^a Z) at q = 0.5 and at q0 of a super-critical shift.
    struct Case {
      std::string name;
      mech::BranchingMechanism m;
      double q;
      double step;
    };
    const auto quad = mech::quadratic(0.5);
    const auto iv = mech::exp_jump_mechanism();
    const auto quad_sup = mech::shift(quad, -1.0);
    const auto iv_sup = mech::shift(iv, -0.5);
    const std::vector<Case> cases{{"quadratic.q=0.5", quad, 0.5, 0.01},
                                  {"quadratic.q0", quad_sup, quad_sup.q0(), 0.01},
                                  {"expjump.q=0.5", iv, 0.5, 0.002},
                                  {"expjump.q0", iv_sup, iv_sup.q0(), 0.002}};
    for (const auto& c : cases) {
      const bool exact = mech::detail::is_zero(c.m.levy());
      const auto grid = csbp::uniform_grid(1.0, c.step);
      csbp::PathOptions opt;
      opt.step = c.step;
      opt.eps = 0.0;
      const std::optional<csbp::EulerScheme> euler =
          exact ? std::nullopt : std::optional<csbp::EulerScheme>(csbp::EulerScheme(c.m, opt));
      const std::string tag = "csbp.girsanov." + c.name;
      const auto w = replicate(cfg, tag.c_str(), n, [&](Rng& g, std::size_t) {
        const auto p = exact ? csbp::sample_quadratic_path(c.m, 1.0, grid, g) : euler->path(1.0, grid, g);
        return csbp::girsanov_weight(p, c.m, c.q).value;
      });
      auto r = detail::laplace_report(tag, "E[M_a] = 1 for M_a = exp(q x - q Z_a - psi(q) int_0^a Z_s ds)",
                                      {{c.q, stats::mean_se(w), 1.0}}, n, cfg, "q");
      r.details["path"] = exact ? "exact" : "euler";
      r.details["step"] = c.step;
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// mass

namespace detail {

// psi(u) = u^2/(1+u) and its inverse, in closed form.
inline double psi_iv(double u) { return u * u / (1.0 + u); }
inline double psi_iv_inverse(double w) { return 0.5 * (w + std::sqrt(w * w + 4.0 * w)); }

}  // namespace detail

inline std::vector<ValidationReport> mass_suite(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const std::size_t n = cfg.replicates, nk = cfg.ks_n();
  const double beta = 0.5;
  const auto quad = mech::quadratic(beta);
  const auto iv = mech::exp_jump_mechanism();
  {
    const double x = 1.0;
    const mass::Sigma0Sampler s0(quad, x);
    const auto s = replicate(cfg, "mass.total", n, [&](Rng& g, std::size_t) { return s0(g).value; });
    std::vector<detail::LaplaceRow> rows;
    for (double lam : {0.1, 1.0, 10.0}) rows.push_back({lam, stats::empirical_laplace(s, {lam})[0], std::exp(-x * std::sqrt(lam / beta))});
    out.push_back(detail::laplace_report("mass.total.laplace", "E exp(-lam sigma) = exp(-x sqrt(lam/beta))", rows, n, cfg));
  }
  for (double s0 : {0.5, 1.0, 2.0}) {
    const std::string sfx = ".s0=" + json(s0).dump();
    {
      const std::string tag = "mass.lawA.quadratic" + sfx;
      const auto a = replicate(cfg, tag.c_str(), nk, [&](Rng& g, std::size_t) { return mass::sample_A_given_sigma0(quad, s0, g).value; });
      // q_bar = -q, psi(-2q) = 4 beta q^2.
      out.push_back(detail::ks_report(tag, "P(A <= q | sigma_0) = exp(-sigma_0 psi(bar q - q))", a,
                                      [&](double q) { return q >= 0 ? 1.0 : std::exp(-s0 * 4.0 * beta * q * q); }, cfg));
    }
    {
      const std::string tag = "mass.lawA.expjump" + sfx;
      const auto a = replicate(cfg, tag.c_str(), nk, [&](Rng& g, std::size_t) { return mass::sample_A_given_sigma0(iv, s0, g).value; });
      out.push_back(detail::ks_report(tag, "P(A <= q | sigma_0) = exp(-sigma_0 psi(bar q - q))", a,
                                      [&](double q) {
                                        if (q >= 0) return 1.0;
                                        if (q <= -1) return 0.0;
                                        const double bar = detail::psi_iv_inverse(detail::psi_iv(q));
                                        return std::exp(-s0 * detail::psi_iv(bar - q));
                                      },
                                      cfg));
    }
  }
  const double theta = -1.0;
  const mass::SigmaAGivenA sa(quad, theta);
  const auto sigma_a = replicate(cfg, "mass.sigmaA", nk, [&](Rng& g, std::size_t) { return sa(g); });
  {
    auto r = detail::ks_report("mass.sigmaA.gamma", "sigma_A | A = theta ~ Gamma(shape 1/2, rate beta theta^2)", sigma_a,
                               [&](double x) { return numeric::gamma_cdf(0.5, beta * theta * theta, x); }, cfg);
    r.details["theta"] = theta;
    r.details["route"] = "laplace inversion";
    out.push_back(std::move(r));
  }
  {
    const double bar = mech::bar_theta(quad, theta);
    const mass::SigmaStarSampler ss(quad, bar);
    const auto star = replicate(cfg, "mass.sigmastar.exact", nk, [&](Rng& g, std::size_t) { return ss(g); });
    const auto ks = stats::ks_two_sample(sigma_a, star);
    ValidationReport r;
    r.id = "mass.sigmaA_vs_sigmastar";
    r.reference = "sigma_A | A = theta has the law of sigma*_{bar theta}";
    r.n = nk;
    r.statistic = ks.statistic;
    r.threshold = cfg.tol.ks_coefficient * std::sqrt(2.0 / static_cast<double>(nk));
    r.pass = r.statistic <= r.threshold;
    r.reference_values.push_back({{"theta", theta}, {"bar_theta", bar}});
    out.push_back(std::move(r));
  }
  for (double th : {0.5, 1.0, 2.0}) {
    const std::string tag = "mass.sigmastar.tau.theta=" + json(th).dump();
    const mass::SigmaStarSampler ss(quad, th, /*by_inversion=*/true);
    const auto v = replicate(cfg, tag.c_str(), nk, [&](Rng& g, std::size_t) { return 2.0 * beta * ss(g); });
    // P(1/tau_theta <= y) = P(tau_theta >= 1/y).
    auto r = detail::ks_report(tag, "2 beta sigma*_theta ~ 1/tau_theta", v,
                               [&](double y) { return y <= 0 ? 0.0 : 1.0 - numeric::tau_cdf(th, 1.0 / y); }, cfg);
    r.details["route"] = "laplace inversion";
    out.push_back(std::move(r));
  }
  {
    const double a = -1.0;
    struct Point {
      double s, t, lam, kappa;
    };
    const Point pts[] = {{0.0, 0.5, 1.0, 1.0}, {0.2, 0.3, 0.5, 2.0}, {0.5, 1.0, 2.0, 0.5}, {1.0, 0.5, 0.1, 5.0}, {0.3, 2.0, 3.0, 1.0}};
    std::vector<detail::LaplaceRow> rows;
    json vals = json::array();
    for (std::size_t k = 0; k < std::size(pts); ++k) {
      const auto& p = pts[k];
      const std::string tag = "mass.postexplosion." + std::to_string(k);
      const auto v = replicate(cfg, tag.c_str(), n, [&](Rng& g, std::size_t) {
        const auto tr = mass::sample_post_explosion(quad, a, {p.s, p.s + p.t}, g);
        return std::exp(-p.lam * tr.sigmas[0].value - p.kappa * tr.sigmas[1].value);
      });
      rows.push_back({static_cast<double>(k), stats::mean_se(v), mass::postexplosion_laplace(beta, a, p.s, p.t, p.lam, p.kappa)});
      vals.push_back({{"s", p.s}, {"t", p.t}, {"lambda", p.lam}, {"kappa", p.kappa}});
    }
    auto r = detail::laplace_report("mass.postexplosion.kernel",
                                    "N[exp(-lam sigma_{A+s} - kappa sigma_{A+s+t}) | A = theta], two-time kernel", rows, n, cfg,
                                    "point");
    r.details["points"] = vals;
    r.details["A"] = a;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// gw

inline std::vector<ValidationReport> gw_suite(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const double p = 0.8;
  const auto law = gw::binary_critical();
  {
    const double tv = gw::total_variation(gw::pruned_shape_law(law, p, 3), gw::gw_shape_law(gw::thinned_offspring_law(law, p), 3));
    out.push_back(detail::residual_report("gw.special_markov.enumeration",
                                          "pruned GW(f) = GW(f(1 - p + p s)) on trees of depth <= 3", tv, cfg.tol.tv, 1,
                                          json::array({{{"p", p}, {"law", "binary-critical"}}})));
  }
  {
    const auto rep = gw::special_markov_check(law, p, cfg.replicates, cfg.master_seed, {}, cfg.tol.chi_alpha);
    ValidationReport r;
    r.id = "gw.special_markov.progeny";
    r.reference = "total progeny of pruned GW(f) vs GW(f(1 - p + p s)), chi-square homogeneity";
    r.n = cfg.replicates;
    r.statistic = rep.chi_square.p_value;
    r.threshold = cfg.tol.chi_alpha;
    r.pass = rep.chi_square.pass;
    r.details["chi_square"] = rep.chi_square.statistic;
    r.details["dof"] = rep.chi_square.dof;
    r.reference_values = json::array({{{"p", p}, {"law", "binary-critical"}}});
    r.csv.header = {"size", "pruned", "direct"};
    const std::size_t k = std::max(rep.pruned_histogram.size(), rep.direct_histogram.size());
    for (std::size_t i = 1; i < k; ++i) {
      const double a = i < rep.pruned_histogram.size() ? rep.pruned_histogram[i] : 0.0;
      const double b = i < rep.direct_histogram.size() ? rep.direct_histogram[i] : 0.0;
      if (a + b > 0) r.csv.rows.push_back({static_cast<double>(i), a, b});
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// crt

/// Per-tree fractions, one row per tree, one column per theta.
inline std::vector<std::vector<double>> fragment_fractions(const SimConfig& cfg, std::size_t n_grid, std::size_t leaves,
                                                           std::size_t trees) {
  return replicate(cfg, "crt.fragment", trees, [&](Rng& g, std::size_t) {
    return crt::fragment_replicate(n_grid, leaves, cfg.crt_thetas, g);
  });
}

inline std::vector<double> fragment_ks(const SimConfig& cfg, const std::vector<std::vector<double>>& rows) {
  std::vector<double> d;
  for (std::size_t k = 0; k < cfg.crt_thetas.size(); ++k) {
    std::vector<double> col(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][k];
    const double th = cfg.crt_thetas[k];
    d.push_back(stats::ks_test(col, [th](double y) { return crt::fragment_reference_cdf(th, y); }).statistic);
  }
  return d;
}

inline std::vector<ValidationReport> crt_suite(const SimConfig& cfg) {
  std::vector<ValidationReport> out;
  const auto fine = fragment_fractions(cfg, cfg.crt_grid, cfg.crt_leaves, cfg.crt_trees);
  const auto coarse = fragment_fractions(cfg, cfg.crt_grid / 2, cfg.crt_leaves / 2, cfg.crt_trees);
  const auto d_fine = fragment_ks(cfg, fine), d_coarse = fragment_ks(cfg, coarse);
  for (std::size_t k = 0; k < cfg.crt_thetas.size(); ++k) {
    const double th = cfg.crt_thetas[k];
    auto r = detail::residual_report("crt.fragment.theta=" + json(th).dump(),
                                     "root fragment ~ 1/(1 + tau_theta): CDF 2 Phi(theta/sqrt(1/y - 1)) - 1", d_fine[k],
                                     cfg.tol.fragment_ks, cfg.crt_trees);
    for (double y : {0.1, 0.25, 0.5, 0.75, 0.9}) r.reference_values.push_back({{"y", y}, {"cdf", crt::fragment_reference_cdf(th, y)}});
    r.details["grid"] = cfg.crt_grid;
    r.details["leaves"] = cfg.crt_leaves;
    r.details["coarse_ks"] = d_coarse[k];
    r.csv.header = {"tree", "fraction"};
    for (std::size_t i = 0; i < fine.size(); ++i) r.csv.rows.push_back({static_cast<double>(i), fine[i][k]});
    out.push_back(std::move(r));
  }
  {
    // The largest KS distance over theta must drop when grid and leaf count double.
    const double worst_fine = *std::max_element(d_fine.begin(), d_fine.end());
    const double worst_coarse = *std::max_element(d_coarse.begin(), d_coarse.end());
    ValidationReport r;
    r.id = "crt.fragment.refinement";
    r.reference = "KS distance to 1/(1 + tau_theta) decreases under refinement";
    r.n = cfg.crt_trees;
    r.statistic = worst_fine;
    r.threshold = worst_coarse;
    r.pass = worst_fine < worst_coarse;
    r.details["coarse"] = {{"grid", cfg.crt_grid / 2}, {"leaves", cfg.crt_leaves / 2}, {"ks", d_coarse}};
    r.details["fine"] = {{"grid", cfg.crt_grid}, {"leaves", cfg.crt_leaves}, {"ks", d_fine}};
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"mechanism", "csbp", "mass", "gw", "crt", "all"};
  return names;
}

struct CheckGroup {
  std::string suite;
  std::vector<ValidationReport> (*run)(const SimConfig&);
};

/// Check groups in report order; each group is timed on its own.
inline const std::vector<CheckGroup>& check_groups() {
  static const std::vector<CheckGroup> groups{
      {"mechanism", mechanism_suite},     {"csbp", csbp_flow_checks}, {"csbp", csbp_quadratic_checks},
      {"csbp", csbp_girsanov_checks},     {"mass", mass_suite},       {"gw", gw_suite},
      {"crt", crt_suite}};
  return groups;
}

inline std::vector<ValidationReport> run_suite(const std::string& name, const SimConfig& cfg) {
  if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end()) {
    throw ConfigError("unknown suite '" + name + "'");
  }
  if (cfg.workers == 0) throw ConfigError("run_suite: workers must be >= 1");
  if (cfg.replicates < 2) throw ConfigError("run_suite: need at least 2 replicates");
  std::vector<ValidationReport> out;
  for (const auto& group : check_groups()) {
    if (name != "all" && name != group.suite) continue;
    const auto t0 = std::chrono::steady_clock::now();
    auto reports = group.run(cfg);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& r : reports) {
      r.runtime = dt;
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline bool all_pass(const std::vector<ValidationReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const ValidationReport& r) { return r.pass; });
}

/// Writes one CSV per report with a table, named after the report id.
inline void write_csv_dir(const std::vector<ValidationReport>& reports, const std::string& dir) {
  for (const auto& r : reports) {
    if (r.csv.header.empty()) continue;
    write_csv(r.csv, dir + "/" + r.id + ".csv");
  }
}

}  // namespace crtprune::harness
