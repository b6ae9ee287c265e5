// crt-prune: command-line front end to the samplers and the validation suites.

#include "crtprune/crtfrag.hpp"
#include "crtprune/csbp.hpp"
#include "crtprune/gwprune.hpp"
#include "crtprune/harness/stats.hpp"
#include "crtprune/harness/suite.hpp"
#include "crtprune/massflow.hpp"
#include "crtprune/mechanism_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

using namespace crtprune;
using json = nlohmann::json;
using harness::CsvTable;
using harness::SimConfig;

namespace {

std::vector<double> parse_theta_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw ConfigError("--theta-grid expects a:b:n");
  const double a = std::stod(parts[0]), b = std::stod(parts[1]);
  const int n = std::stoi(parts[2]);
  if (n < 1) throw ConfigError("--theta-grid: n must be >= 1");
  if (n == 1) return {a};
  if (!(b > a)) throw ConfigError("--theta-grid: need a < b");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
  return g;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void emit_csv(const CsvTable& t, const std::string& path) {
  if (path == "-") {
    std::cout.precision(17);
    for (std::size_t i = 0; i < t.header.size(); ++i) std::cout << (i ? "," : "") << t.header[i];
    std::cout << "\n";
    for (const auto& r : t.rows) {
      for (std::size_t i = 0; i < r.size(); ++i) std::cout << (i ? "," : "") << r[i];
      std::cout << "\n";
    }
    return;
  }
  harness::write_csv(t, path);
}

// ---------------------------------------------------------------------------

struct CsbpArgs {
  std::string mech, csv = "csbp_marginals.csv";
  double x = 1.0, tmax = 1.0, step = 0.01, eps = 1e-4;
  std::size_t n = 1000;
  std::uint64_t seed = 42;
  unsigned workers = 1;
};

int run_csbp(const CsbpArgs& a) {
  const auto m = mech::load_mechanism(a.mech);
  const auto grid = csbp::uniform_grid(a.tmax, a.step);
  const bool exact = mech::detail::is_zero(m.levy());
  csbp::PathOptions opt;
  opt.step = a.step;
  opt.eps = a.eps;
  std::unique_ptr<csbp::EulerScheme> euler;
  if (!exact) euler = std::make_unique<csbp::EulerScheme>(m, opt);
  SimConfig cfg;
  cfg.master_seed = a.seed;
  cfg.workers = a.workers;
  const auto paths = harness::replicate(cfg, "cli.csbp", a.n, [&](Rng& g, std::size_t) {
    return exact ? csbp::sample_quadratic_path(m, a.x, grid, g) : euler->path(a.x, grid, g);
  });
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    json j;
    j["path"] = i;
    j["x"] = a.x;
    j["final"] = p.values.back();
    j["max"] = *std::max_element(p.values.begin(), p.values.end());
    j["integral"] = csbp::path_integral(p);
    j["extinct_at"] = p.extinct_at ? json(*p.extinct_at) : json(nullptr);
    j["exploded"] = p.exploded;
    std::cout << j.dump() << "\n";
  }
  CsvTable t;
  t.header = {"t", "mean", "sd", "p_zero", "reference_mean"};
  // E Z_t = x exp(-slope t) for a (sub)critical mechanism with finite slope.
  const double slope = m.slope_at_zero();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> v(paths.size()), z(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
      v[i] = paths[i].values[k];
      z[i] = v[i] == 0.0;
    }
    const auto e = stats::mean_se(v);
    const double sd = e.se * std::sqrt(static_cast<double>(v.size()));
    const double ref = std::isfinite(slope) ? a.x * std::exp(-slope * grid[k]) : NAN;
    t.rows.push_back({grid[k], e.value, sd, stats::mean_se(z).value, ref});
  }
  emit_csv(t, a.csv);
  return 0;
}

// ---------------------------------------------------------------------------

struct MassArgs {
  std::string mode, mech, grid = "-1:-0.1:10", csv = "-";
  double x = 1.0, sigma0 = 1.0, A = -1.0, lam = 1.0;
  std::size_t n = 10000;
  std::uint64_t seed = 42;
  unsigned workers = 1;
};

int run_mass(const MassArgs& a) {
  const auto m = mech::load_mechanism(a.mech);
  const auto grid = parse_theta_grid(a.grid);
  SimConfig cfg;
  cfg.master_seed = a.seed;
  cfg.workers = a.workers;
  CsvTable t;
  json summary;
  summary["mode"] = a.mode;
  summary["mechanism"] = mech::classification_json(m);
  summary["n"] = a.n;
  summary["lambda"] = a.lam;
  json refs = json::array();

  if (a.mode == "simulate") {
    const auto tr = harness::replicate(cfg, "cli.mass.simulate", a.n,
                                       [&](Rng& g, std::size_t) { return mass::sample_trajectory(m, a.x, grid, g); });
    t.header = {"theta", "p_finite", "p_finite_reference", "laplace", "laplace_se", "laplace_reference"};
    for (std::size_t k = 0; k < grid.size(); ++k) {
      std::vector<double> fin(a.n), lap(a.n);
      for (std::size_t i = 0; i < a.n; ++i) {
        const auto& s = tr[i].sigmas[k];
        fin[i] = s.finite;
        lap[i] = s.finite ? std::exp(-a.lam * s.value) : 0.0;
      }
      const auto shifted = mech::shift(m, grid[k]);
      // P_x(sigma_theta < inf) = exp(-x (bar theta - theta)); transform exp(-x psi_theta^{-1}(lam)).
      const double pf = std::exp(-a.x * (mech::bar_theta(m, grid[k]) - grid[k]));
      const double lr = csbp::total_mass_laplace(shifted, a.x, a.lam);
      const auto e = stats::mean_se(lap);
      t.rows.push_back({grid[k], stats::mean_se(fin).value, pf, e.value, e.se, lr});
      refs.push_back({{"theta", grid[k]}, {"p_finite", pf}, {"laplace", lr}});
    }
    summary["x"] = a.x;
  } else if (a.mode == "lawA") {
    auto A = harness::replicate(cfg, "cli.mass.lawA", a.n,
                                [&](Rng& g, std::size_t) { return mass::sample_A_given_sigma0(m, a.sigma0, g).value; });
    std::sort(A.begin(), A.end());
    auto ref = [&](double q) { return q >= 0.0 ? 1.0 : std::exp(-a.sigma0 * m(mech::bar_theta(m, q) - q)); };
    t.header = {"theta", "empirical_cdf", "reference_cdf"};
    for (double q : grid) {
      const double emp = static_cast<double>(std::upper_bound(A.begin(), A.end(), q) - A.begin()) / a.n;
      t.rows.push_back({q, emp, ref(q)});
      refs.push_back({{"theta", q}, {"cdf", ref(q)}});
    }
    const auto ks = stats::ks_test(A, ref);
    summary["sigma0"] = a.sigma0;
    summary["ks"] = {{"statistic", ks.statistic}, {"threshold", ks.threshold}, {"pass", ks.pass}};
  } else if (a.mode == "sigmaA" || a.mode == "star") {
    const bool star = a.mode == "star";
    t.header = {"theta", "laplace", "laplace_se", "laplace_reference", "mean"};
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double th = grid[k];
      std::vector<double> v;
      const std::string tag = "cli.mass." + a.mode + "." + std::to_string(k);
      if (star) {
        const mass::SigmaStarSampler s(m, th);
        v = harness::replicate(cfg, tag.c_str(), a.n, [&](Rng& g, std::size_t) { return s(g); });
      } else {
        const mass::SigmaAGivenA s(m, th);
        v = harness::replicate(cfg, tag.c_str(), a.n, [&](Rng& g, std::size_t) { return s(g); });
      }
      const auto e = stats::empirical_laplace(v, {a.lam})[0];
      const double r = star ? mass::sigma_star_laplace(m, th, a.lam) : mass::sigmaA_laplace(m, th, a.lam);
      t.rows.push_back({th, e.value, e.se, r, stats::mean_se(v).value});
      refs.push_back({{"theta", th}, {"laplace", r}});
    }
  } else if (a.mode == "postexplosion") {
    std::vector<double> offsets;
    for (double s : grid) offsets.push_back(s);
    const auto tr = harness::replicate(cfg, "cli.mass.postexplosion", a.n, [&](Rng& g, std::size_t) {
      return mass::sample_post_explosion(m, a.A, offsets, g);
    });
    t.header = {"s", "laplace", "laplace_se", "laplace_reference"};
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      std::vector<double> v(a.n);
      for (std::size_t i = 0; i < a.n; ++i) v[i] = std::exp(-a.lam * tr[i].sigmas[k].value);
      const auto e = stats::mean_se(v);
      const double r = mass::postexplosion_laplace(m.beta(), a.A, offsets[k], 0.0, a.lam, 0.0);
      t.rows.push_back({offsets[k], e.value, e.se, r});
      refs.push_back({{"s", offsets[k]}, {"laplace", r}});
    }
    summary["A"] = a.A;
  } else {
    throw ConfigError("unknown mass mode '" + a.mode + "'");
  }
  summary["reference_values"] = refs;
  emit_csv(t, a.csv);
  std::cerr << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GwArgs {
  std::string law = "binary-critical", csv = "-";
  double param = 0.5, p = 0.8;
  std::size_t n = 100000;
  std::uint64_t seed = 42;
};

int run_gw(const GwArgs& a) {
  const auto law = gw::named_law(a.law, a.param);
  const auto r = gw::special_markov_check(law, a.p, a.n, a.seed);
  CsvTable t;
  t.header = {"size", "pruned", "direct"};
  const std::size_t k = std::max(r.pruned_histogram.size(), r.direct_histogram.size());
  for (std::size_t i = 1; i < k; ++i) {
    const double x = i < r.pruned_histogram.size() ? r.pruned_histogram[i] : 0.0;
    const double y = i < r.direct_histogram.size() ? r.direct_histogram[i] : 0.0;
    if (x + y > 0) t.rows.push_back({static_cast<double>(i), x, y});
  }
  emit_csv(t, a.csv);
  json j;
  j["law"] = a.law;
  j["retention"] = a.p;
  j["n"] = a.n;
  j["chi_square"] = {{"statistic", r.chi_square.statistic},
                     {"dof", r.chi_square.dof},
                     {"p_value", r.chi_square.p_value},
                     {"pass", r.chi_square.pass}};
  j["exact_tv"] = num(r.exact_tv);
  j["exact_depth"] = r.exact_depth;
  j["tv_tolerance"] = r.tv_tolerance;
  j["pass"] = r.pass;
  std::cerr << j.dump(2) << "\n";
  return r.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct CrtArgs {
  std::size_t n_grid = 1u << 14, leaves = 1000, trees = 2000;
  std::vector<double> thetas{0.5, 1.0, 2.0};
  std::uint64_t seed = 42;
  unsigned workers = 1;
  std::string csv = "-";
  double ks_max = 0.05;
};

int run_crt(const CrtArgs& a) {
  SimConfig cfg;
  cfg.master_seed = a.seed;
  cfg.workers = a.workers;
  cfg.crt_thetas = a.thetas;
  const auto rows = harness::fragment_fractions(cfg, a.n_grid, a.leaves, a.trees);
  const auto d = harness::fragment_ks(cfg, rows);
  CsvTable t;
  t.header = {"tree"};
  for (double th : a.thetas) t.header.push_back("theta=" + json(th).dump());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> r{static_cast<double>(i)};
    r.insert(r.end(), rows[i].begin(), rows[i].end());
    t.rows.push_back(std::move(r));
  }
  emit_csv(t, a.csv);
  json j;
  j["n_grid"] = a.n_grid;
  j["leaves"] = a.leaves;
  j["trees"] = a.trees;
  j["reference"] = "P(F <= y) = erf(theta / sqrt(2 (1/y - 1)))";
  bool pass = true;
  for (std::size_t k = 0; k < a.thetas.size(); ++k) {
    j["ks"].push_back({{"theta", a.thetas[k]}, {"statistic", d[k]}, {"threshold", a.ks_max}, {"pass", d[k] <= a.ks_max}});
    pass = pass && d[k] <= a.ks_max;
  }
  j["pass"] = pass;
  std::cerr << j.dump(2) << "\n";
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string suite = "all", out = "-", csv_dir;
  SimConfig cfg;
};

int run_validate(const ValidateArgs& a) {
  const auto reports = harness::run_suite(a.suite, a.cfg);
  const std::string text = harness::to_jsonl(reports, a.cfg.timing);
  if (a.out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + a.out + "'");
    f << text;
  }
  if (!a.csv_dir.empty()) harness::write_csv_dir(reports, a.csv_dir);
  std::size_t failed = 0;
  for (const auto& r : reports) {
    if (!r.pass) {
      ++failed;
      std::cerr << "FAIL " << r.id << " statistic=" << r.statistic << " threshold=" << r.threshold << "\n";
    }
  }
  std::cerr << reports.size() - failed << "/" << reports.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pruning of CSBPs, Galton-Watson trees and the Brownian CRT"};
  app.require_subcommand(1);

  auto* mech_cmd = app.add_subcommand("mech", "branching mechanisms");
  mech_cmd->require_subcommand(1);
  std::string mech_file;
  auto* inspect = mech_cmd->add_subcommand("inspect", "print the classification of a mechanism file as JSON");
  inspect->add_option("file", mech_file, "mechanism file")->required();

  auto* csbp_cmd = app.add_subcommand("csbp", "continuous-state branching processes");
  csbp_cmd->require_subcommand(1);
  CsbpArgs ca;
  auto* sim = csbp_cmd->add_subcommand("simulate", "simulate paths; JSON-lines on stdout, marginals to --csv");
  sim->add_option("--mech", ca.mech)->required();
  sim->add_option("--x", ca.x, "initial mass");
  sim->add_option("--tmax", ca.tmax);
  sim->add_option("--step", ca.step, "grid and Euler step");
  sim->add_option("--eps", ca.eps, "jump truncation");
  sim->add_option("--n", ca.n);
  sim->add_option("--seed", ca.seed);
  sim->add_option("--workers", ca.workers);
  sim->add_option("--csv", ca.csv, "marginal statistics, '-' for stdout");

  auto* mass_cmd = app.add_subcommand("mass", "total mass of the pruned trees; CSV on stdout, JSON summary on stderr");
  MassArgs ma;
  mass_cmd->add_option("mode", ma.mode, "simulate | lawA | sigmaA | star | postexplosion")
      ->required()
      ->check(CLI::IsMember({"simulate", "lawA", "sigmaA", "star", "postexplosion"}));
  mass_cmd->add_option("--mech", ma.mech)->required();
  mass_cmd->add_option("--theta-grid", ma.grid, "a:b:n");
  mass_cmd->add_option("--x", ma.x, "initial mass (simulate)");
  mass_cmd->add_option("--sigma0", ma.sigma0, "sigma_0 (lawA)");
  mass_cmd->add_option("--A", ma.A, "explosion time (postexplosion)");
  mass_cmd->add_option("--lambda", ma.lam, "Laplace argument");
  mass_cmd->add_option("--n", ma.n);
  mass_cmd->add_option("--seed", ma.seed);
  mass_cmd->add_option("--workers", ma.workers);
  mass_cmd->add_option("--csv", ma.csv);

  auto* gw_cmd = app.add_subcommand("gw", "Galton-Watson trees");
  gw_cmd->require_subcommand(1);
  GwArgs ga;
  auto* prune = gw_cmd->add_subcommand("prune", "pruned vs thinned GW; CSV histogram on stdout, JSON on stderr");
  prune->add_option("--law", ga.law, "binary-critical | geometric");
  prune->add_option("--param", ga.param, "geometric success parameter");
  prune->add_option("--p", ga.p, "retention probability");
  prune->add_option("--n", ga.n);
  prune->add_option("--seed", ga.seed);
  prune->add_option("--csv", ga.csv);

  auto* crt_cmd = app.add_subcommand("crt", "Brownian CRT");
  crt_cmd->require_subcommand(1);
  CrtArgs ra;
  auto* frag = crt_cmd->add_subcommand("fragment", "tagged fragment; CSV on stdout, KS report on stderr");
  frag->add_option("--n-grid", ra.n_grid);
  frag->add_option("--leaves", ra.leaves);
  frag->add_option("--trees", ra.trees);
  frag->add_option("--theta", ra.thetas)->delimiter(',');
  frag->add_option("--seed", ra.seed);
  frag->add_option("--workers", ra.workers);
  frag->add_option("--csv", ra.csv);
  frag->add_option("--ks-max", ra.ks_max);

  auto* val = app.add_subcommand("validate", "run validation suites; exit code 0 iff all checks pass");
  ValidateArgs va;
  val->add_option("--suite", va.suite)->check(CLI::IsMember(harness::suite_names()));
  val->add_option("--mech", va.cfg.mech_path, "mechanism file checked by the mechanism suite");
  val->add_option("--seed", va.cfg.master_seed);
  val->add_option("--n", va.cfg.replicates);
  val->add_option("--workers", va.cfg.workers);
  val->add_option("--out", va.out, "JSON-lines report, '-' for stdout");
  val->add_option("--csv-dir", va.csv_dir);
  val->add_option("--crt-grid", va.cfg.crt_grid);
  val->add_option("--crt-leaves", va.cfg.crt_leaves);
  val->add_option("--crt-trees", va.cfg.crt_trees);
  val->add_flag("--timing", va.cfg.timing, "include wall time in the report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mech_cmd->parsed()) {
      std::cout << mech::classification_json(mech::load_mechanism(mech_file)).dump(2) << "\n";
      return 0;
    }
    if (csbp_cmd->parsed()) return run_csbp(ca);
    if (mass_cmd->parsed()) return run_mass(ma);
    if (gw_cmd->parsed()) return run_gw(ga);
    if (crt_cmd->parsed()) return run_crt(ra);
    if (val->parsed()) return run_validate(va);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
