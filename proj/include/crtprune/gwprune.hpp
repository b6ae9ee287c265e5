#pragma once

// Galton-Watson trees with pruning clocks.
//
// Every non-root node carries an edge clock (towards its parent) and a node
// clock. Pruning at theta removes a node, and everything above it, once
// either clock is <= theta. One clock realization therefore gives a
// decreasing family of root components in theta.

#include "crtprune/error.hpp"
#include "crtprune/harness/stats.hpp"
#include "crtprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace crtprune::gw {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

/// Offspring distribution as a finite probability vector, p[k] = P(k children).
struct OffspringLaw {
  std::vector<double> p;

  double mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) m += static_cast<double>(k) * p[k];
    return m;
  }

  double pgf(double s) const {
    double v = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) v = v * s + p[k];
    return v;
  }
};

inline void validate(const OffspringLaw& law) {
  if (law.p.empty()) throw ConfigError("offspring law: empty probability vector");
  double s = 0.0;
  for (double x : law.p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("offspring law: probabilities must be finite and >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError("offspring law: probabilities must sum to 1");
}

/// p0 = p2 = 1/2.
inline OffspringLaw binary_critical() { return {{0.5, 0.0, 0.5}}; }

/// P(k) = (1 - r) r^k, truncated where the remaining tail is below 1e-17 and
/// renormalised.
inline OffspringLaw geometric(double r) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("geometric law: ratio must lie in [0,1)");
  OffspringLaw law;
  double tail = 1.0;
  for (double pk = 1.0 - r; tail > 1e-17 && law.p.size() < 4096; pk *= r) {
    law.p.push_back(pk);
    tail -= pk;
  }
  double s = 0.0;
  for (double x : law.p) s += x;
  for (double& x : law.p) x /= s;
  return law;
}

/// "binary-critical", or "geometric" with its ratio as `param`.
inline OffspringLaw named_law(const std::string& name, double param = 0.5) {
  if (name == "binary-critical") return binary_critical();
  if (name == "geometric") return geometric(param);
  throw ConfigError("unknown offspring law '" + name + "'");
}

/// f_p(s) = f(1 - p + p s): every child survives independently with probability p.
inline OffspringLaw thinned_offspring_law(const OffspringLaw& law, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("thinned_offspring_law: retention must lie in [0,1]");
  OffspringLaw out;
  out.p.assign(law.p.size(), 0.0);
  if (p == 1.0) return law;
  const double q = 1.0 - p;
  for (std::size_t k = 0; k < law.p.size(); ++k) {
    if (law.p[k] == 0.0) continue;
    // Binomial(k, p) weights.
    double c = 1.0;
    for (std::size_t j = 0; j <= k; ++j) {
      out.p[j] += law.p[k] * c * std::pow(p, static_cast<double>(j)) * std::pow(q, static_cast<double>(k - j));
      c = c * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
  }
  while (out.p.size() > 1 && out.p.back() == 0.0) out.p.pop_back();
  return out;
}

/// Smallest root of f(s) = s on [0,1].
inline double extinction_probability(const OffspringLaw& law) {
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double next = law.pgf(s);
    if (std::abs(next - s) < 1e-15) return next;
    s = next;
  }
  return s;
}

struct GwNode {
  std::int64_t parent = -1;
  std::uint32_t children = 0;
  std::size_t first_child = 0;  // children are contiguous
  std::uint32_t depth = 0;
  double size = 0.0;            // Delta
  double node_clock = kNever;   // Exp(Delta)
  double edge_clock = kNever;   // Exp(edge_rate), none for the root
};

struct MarkedGWTree {
  std::vector<GwNode> nodes;  // breadth-first order
  int depth_cap = 30;
  bool truncated = false;  // some node at depth_cap had children cut away
};

struct GwOptions {
  int depth_cap = 30;
  std::size_t node_budget = 10'000'000;
  double edge_rate = 1.0;  // 2 beta times the edge length
  std::function<double(Rng&)> node_size;  // empty: every Delta is 0
};

inline std::size_t draw_offspring(const OffspringLaw& law, double u) {
  double c = 0.0;
  for (std::size_t k = 0; k < law.p.size(); ++k) {
    c += law.p[k];
    if (u < c) return k;
  }
  std::size_t k = law.p.size() - 1;
  while (k > 0 && law.p[k] == 0.0) --k;
  return k;
}

/// Generation-by-generation sampler; children of nodes at depth_cap are
/// not generated.
inline MarkedGWTree sample_gw(const OffspringLaw& law, Rng& g, const GwOptions& opt = {}) {
  validate(law);
  if (opt.depth_cap < 0) throw ConfigError("sample_gw: depth_cap must be >= 0");
  if (!(opt.edge_rate >= 0.0)) throw ConfigError("sample_gw: edge_rate must be >= 0");
  MarkedGWTree t;
  t.depth_cap = opt.depth_cap;
  auto mark = [&](GwNode& n) {
    if (opt.node_size) {
      n.size = opt.node_size(g);
      if (!(n.size >= 0.0)) throw ConfigError("sample_gw: node sizes must be >= 0");
      if (n.size > 0.0) n.node_clock = standard_exponential(g) / n.size;
    }
  };
  t.nodes.emplace_back();
  mark(t.nodes[0]);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const std::size_t k = draw_offspring(law, uniform_open(g));
    if (k == 0) continue;
    if (t.nodes[i].depth >= static_cast<std::uint32_t>(opt.depth_cap)) {
      t.truncated = true;
      continue;
    }
    if (t.nodes.size() + k > opt.node_budget) {
      throw SizeError("sample_gw: node budget of " + std::to_string(opt.node_budget) + " exceeded");
    }
    t.nodes[i].children = static_cast<std::uint32_t>(k);
    t.nodes[i].first_child = t.nodes.size();
    const std::uint32_t d = t.nodes[i].depth + 1;
    for (std::size_t c = 0; c < k; ++c) {
      GwNode n;
      n.parent = static_cast<std::int64_t>(i);
      n.depth = d;
      n.edge_clock = opt.edge_rate > 0.0 ? standard_exponential(g) / opt.edge_rate : kNever;
      mark(n);
      t.nodes.push_back(n);
    }
  }
  return t;
}

struct PrunedForestStat {
  double theta = 0.0;
  std::size_t root_component_size = 0;
  std::size_t total_progeny = 0;
};

/// Root component at theta. The root always belongs; any other node belongs
/// when its parent does and both its clocks exceed theta.
inline PrunedForestStat prune_at(const MarkedGWTree& t, double theta) {
  if (!(theta >= 0.0)) throw DomainError("prune_at: theta must be >= 0");
  PrunedForestStat s;
  s.theta = theta;
  s.total_progeny = t.nodes.size();
  if (t.nodes.empty()) return s;
  std::vector<char> in(t.nodes.size(), 0);
  in[0] = 1;
  s.root_component_size = 1;
  for (std::size_t i = 1; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (in[static_cast<std::size_t>(n.parent)] && n.edge_clock > theta && n.node_clock > theta) {
      in[i] = 1;
      ++s.root_component_size;
    }
  }
  return s;
}

/// The kept nodes at theta, in breadth-first order.
inline std::vector<std::size_t> component_at(const MarkedGWTree& t, double theta) {
  std::vector<std::size_t> out;
  if (t.nodes.empty()) return out;
  std::vector<char> in(t.nodes.size(), 0);
  in[0] = 1;
  out.push_back(0);
  for (std::size_t i = 1; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (in[static_cast<std::size_t>(n.parent)] && n.edge_clock > theta && n.node_clock > theta) {
      in[i] = 1;
      out.push_back(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact laws of depth-truncated ordered trees

namespace detail {

// Ordered tree shapes as bracket strings: a node is "(" children ")".
using ShapeLaw = std::map<std::string, double>;

inline ShapeLaw sequence_law(const ShapeLaw& sub, std::size_t k, std::size_t budget) {
  ShapeLaw acc{{"", 1.0}};
  for (std::size_t i = 0; i < k; ++i) {
    ShapeLaw next;
    for (const auto& [a, pa] : acc) {
      for (const auto& [b, pb] : sub) next[a + b] += pa * pb;
    }
    if (next.size() > budget) throw SizeError("tree enumeration: too many shapes");
    acc = std::move(next);
  }
  return acc;
}

}  // namespace detail

/// Law of the first `depth` generations of a GW(law) tree.
inline detail::ShapeLaw gw_shape_law(const OffspringLaw& law, int depth, std::size_t budget = 200000) {
  validate(law);
  detail::ShapeLaw cur{{"()", 1.0}};
  for (int d = 0; d < depth; ++d) {
    detail::ShapeLaw next;
    for (std::size_t k = 0; k < law.p.size(); ++k) {
      if (law.p[k] == 0.0) continue;
      for (const auto& [s, ps] : detail::sequence_law(cur, k, budget)) next["(" + s + ")"] += law.p[k] * ps;
    }
    if (next.size() > budget) throw SizeError("tree enumeration: too many shapes");
    cur = std::move(next);
  }
  return cur;
}

/// Law of the root component of a GW(law) tree, first `depth` generations,
/// when each edge survives with probability p. Every subset of children is
/// enumerated explicitly.
inline detail::ShapeLaw pruned_shape_law(const OffspringLaw& law, double p, int depth, std::size_t budget = 200000) {
  validate(law);
  detail::ShapeLaw cur{{"()", 1.0}};
  for (int d = 0; d < depth; ++d) {
    detail::ShapeLaw next;
    for (std::size_t k = 0; k < law.p.size(); ++k) {
      if (law.p[k] == 0.0) continue;
      if (k > 20) throw SizeError("tree enumeration: offspring support too wide");
      for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
        const auto kept = static_cast<std::size_t>(__builtin_popcount(mask));
        const double w = std::pow(p, static_cast<double>(kept)) * std::pow(1.0 - p, static_cast<double>(k - kept));
        if (w == 0.0) continue;
        for (const auto& [s, ps] : detail::sequence_law(cur, kept, budget)) next["(" + s + ")"] += law.p[k] * w * ps;
      }
    }
    if (next.size() > budget) throw SizeError("tree enumeration: too many shapes");
    cur = std::move(next);
  }
  return cur;
}

inline double total_variation(const detail::ShapeLaw& a, const detail::ShapeLaw& b) {
  double s = 0.0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    s += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) s += std::abs(v);
  }
  return 0.5 * s;
}

// ---------------------------------------------------------------------------

struct SpecialMarkovReport {
  double retention = 1.0;
  std::size_t n = 0;
  stats::ChiSquareResult chi_square;
  std::vector<double> pruned_histogram;  // index = root component size
  std::vector<double> direct_histogram;
  double exact_tv = 0.0;  // NaN when enumeration was not possible
  double tv_tolerance = 1e-12;
  int exact_depth = 3;
  bool pass = false;
};

/// Pruned GW(law) against GW(thinned law): chi-square on the size histogram
/// and the exact total variation of the first three generations. Replicate i
/// draws from streams (seed, "gw-pruned", i) and (seed, "gw-direct", i).
inline SpecialMarkovReport special_markov_check(const OffspringLaw& law, double p, std::size_t n, std::uint64_t seed,
                                                const GwOptions& opt = {}, double alpha = 0.01) {
  validate(law);
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("special_markov_check: retention must lie in (0,1]");
  if (n == 0) throw ConfigError("special_markov_check: n must be positive");
  if (opt.node_size) throw ConfigError("special_markov_check: edge clocks only");
  SpecialMarkovReport r;
  r.retention = p;
  r.n = n;
  const double theta = -std::log(p) / opt.edge_rate;
  const OffspringLaw thinned = thinned_offspring_law(law, p);
  auto bump = [](std::vector<double>& h, std::size_t k) {
    if (h.size() <= k) h.resize(k + 1, 0.0);
    h[k] += 1.0;
  };
  const std::uint64_t pruned_tag = stream_tag("gw-pruned"), direct_tag = stream_tag("gw-direct");
  for (std::size_t i = 0; i < n; ++i) {
    Rng g1 = make_stream(seed, pruned_tag, i);
    bump(r.pruned_histogram, prune_at(sample_gw(law, g1, opt), theta).root_component_size);
    Rng g2 = make_stream(seed, direct_tag, i);
    bump(r.direct_histogram, sample_gw(thinned, g2, opt).nodes.size());
  }
  r.chi_square = stats::chi_square_homogeneity(r.pruned_histogram, r.direct_histogram, alpha);
  try {
    r.exact_tv = total_variation(pruned_shape_law(law, p, r.exact_depth), gw_shape_law(thinned, r.exact_depth));
  } catch (const SizeError&) {
    r.exact_tv = std::numeric_limits<double>::quiet_NaN();
  }
  r.pass = r.chi_square.pass && (std::isnan(r.exact_tv) || r.exact_tv <= r.tv_tolerance);
  return r;
}

}  // namespace crtprune::gw
