#pragma once

// Tagged fragment of the Brownian CRT under Poisson cuts.
//
// The tree is coded by g = 2e for a normalised excursion e on a grid of n
// steps. Cuts fall on the tree at rate theta per unit length, so the first
// cut on an edge of length l arrives at theta ~ Exp(l). Only the subtree
// spanned by the root and m uniform leaves is built; the fraction of leaves
// still joined to the root estimates sigma_theta / sigma_0 given sigma_0 = 1.

#include "crtprune/error.hpp"
#include "crtprune/numeric/distributions.hpp"
#include "crtprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace crtprune::crt {

struct GridExcursion {
  std::size_t n = 0;
  std::vector<double> values;  // e(k/n), k = 0..n
  bool normalized = true;
};

/// Vervaat transform of a discrete Brownian bridge.
///
/// W_k = sum of k N(0, 1/n) steps, b_k = W_k - (k/n) W_n, then the bridge
/// is rotated cyclically to start at its first argmin k*:
/// e_k = b_{(k* + k) mod n} - b_{k*}, e_n = 0. A bridge whose minimum is hit
/// twice is resampled.
inline GridExcursion sample_excursion(std::size_t n, Rng& g) {
  if (n < 256 || (n & (n - 1)) != 0) throw ConfigError("sample_excursion: n must be a power of two >= 2^8");
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> w(n + 1);
  GridExcursion out;
  out.n = n;
  out.values.assign(n + 1, 0.0);
  for (;;) {
    w[0] = 0.0;
    for (std::size_t k = 1; k <= n; ++k) w[k] = w[k - 1] + sd * standard_normal(g);
    const double end = w[n];
    std::size_t arg = 0;
    double lo = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      w[k] -= static_cast<double>(k) / static_cast<double>(n) * end;
      if (w[k] < lo) {
        lo = w[k];
        arg = k;
      }
    }
    bool ok = true;
    for (std::size_t k = 1; k < n; ++k) {
      const double v = w[(arg + k) % n] - lo;
      if (!(v > 0.0)) {
        ok = false;
        break;
      }
      out.values[k] = v;
    }
    if (ok) break;
  }
  out.values[0] = out.values[n] = 0.0;
  return out;
}

/// Sparse-table range minimum over a fixed array.
class RangeMin {
public:
  explicit RangeMin(const std::vector<double>& v) : log_(v.size() + 1, 0) {
    for (std::size_t i = 2; i <= v.size(); ++i) log_[i] = log_[i / 2] + 1;
    const std::size_t levels = static_cast<std::size_t>(log_[v.size()]) + 1;
    table_.assign(levels, {});
    table_[0] = v;
    for (std::size_t j = 1; j < levels; ++j) {
      const std::size_t half = std::size_t{1} << (j - 1);
      const std::size_t len = v.size() - (std::size_t{1} << j) + 1;
      table_[j].resize(len);
      for (std::size_t i = 0; i < len; ++i) table_[j][i] = std::min(table_[j - 1][i], table_[j - 1][i + half]);
    }
  }

  /// min v[lo..hi], inclusive.
  double operator()(std::size_t lo, std::size_t hi) const {
    if (lo > hi) std::swap(lo, hi);
    const int j = log_[hi - lo + 1];
    return std::min(table_[j][lo], table_[j][hi - (std::size_t{1} << j) + 1]);
  }

private:
  std::vector<int> log_;
  std::vector<std::vector<double>> table_;
};

/// Vertex 0 is the root at height 0, vertices 1..m the leaves in time order,
/// the rest branch points. parent[0] = -1.
struct SpannedTree {
  std::vector<std::size_t> leaf_index;  // grid indices, increasing
  std::vector<double> height;
  std::vector<std::int64_t> parent;
  std::vector<double> edge_length;  // to the parent
  std::vector<double> cut_clock;    // first cut on the edge to the parent
  std::size_t leaves() const { return leaf_index.size(); }
  std::size_t leaf_vertex(std::size_t i) const { return 1 + i; }
};

/// Spanned tree for leaves at the given grid indices (strictly inside (0, n)).
/// Cut clocks are left at +inf; see draw_cut_clocks.
inline SpannedTree spanned_tree_at(const GridExcursion& exc, const RangeMin& rmq, std::vector<std::size_t> idx) {
  const std::size_t m = idx.size();
  if (m < 2) throw ConfigError("spanned tree: need at least two leaves");
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] == 0 || idx[i] >= exc.n) throw ConfigError("spanned tree: leaf index outside the open grid");
    if (i > 0 && idx[i] == idx[i - 1]) throw DegenerateError("spanned tree: two leaves share a grid time");
  }
  SpannedTree t;
  t.leaf_index = idx;
  const std::size_t nv = 1 + m + (m - 1);
  t.height.assign(nv, 0.0);
  t.parent.assign(nv, -1);
  for (std::size_t i = 0; i < m; ++i) t.height[1 + i] = 2.0 * exc.values[idx[i]];
  // Branch point i sits between leaves i and i+1 at height 2 min e on [t_i, t_{i+1}].
  const std::size_t base = 1 + m;
  for (std::size_t i = 0; i + 1 < m; ++i) t.height[base + i] = 2.0 * rmq(idx[i], idx[i + 1]);

  // Cartesian tree over the branch points, lowest on top.
  std::vector<std::size_t> stack;
  std::vector<std::int64_t> bparent(m - 1, -1);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    std::int64_t last = -1;
    while (!stack.empty() && t.height[base + stack.back()] > t.height[base + i]) {
      last = static_cast<std::int64_t>(stack.back());
      stack.pop_back();
    }
    if (last >= 0) bparent[static_cast<std::size_t>(last)] = static_cast<std::int64_t>(i);
    if (!stack.empty()) bparent[i] = static_cast<std::int64_t>(stack.back());
    stack.push_back(i);
  }
  for (std::size_t i = 0; i + 1 < m; ++i) {
    t.parent[base + i] = bparent[i] >= 0 ? static_cast<std::int64_t>(base + static_cast<std::size_t>(bparent[i])) : 0;
  }
  // A leaf hangs from the higher of its two neighbouring branch points.
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t p;
    if (i == 0) p = base;
    else if (i + 1 == m) p = base + m - 2;
    else p = t.height[base + i - 1] >= t.height[base + i] ? base + i - 1 : base + i;
    t.parent[1 + i] = static_cast<std::int64_t>(p);
  }
  t.edge_length.assign(nv, 0.0);
  for (std::size_t v = 1; v < nv; ++v) {
    t.edge_length[v] = std::max(0.0, t.height[v] - t.height[static_cast<std::size_t>(t.parent[v])]);
  }
  t.cut_clock.assign(nv, std::numeric_limits<double>::infinity());
  return t;
}

/// Independent Exp(length) first-cut times; zero-length edges are never cut.
inline void draw_cut_clocks(SpannedTree& t, Rng& g) {
  for (std::size_t v = 1; v < t.height.size(); ++v) {
    const double e = standard_exponential(g);
    t.cut_clock[v] = t.edge_length[v] > 0.0 ? e / t.edge_length[v] : std::numeric_limits<double>::infinity();
  }
}

/// m distinct uniform grid times in (0, n); collisions are redrawn.
inline std::vector<std::size_t> uniform_leaf_indices(std::size_t n, std::size_t m, Rng& g) {
  if (m + 1 >= n) throw DegenerateError("uniform leaves: more leaves than interior grid points");
  std::vector<std::size_t> idx;
  std::vector<char> used(n, 0);
  idx.reserve(m);
  while (idx.size() < m) {
    const auto k = 1 + static_cast<std::size_t>(uniform_open(g) * static_cast<double>(n - 1));
    if (k >= n || used[k]) continue;
    used[k] = 1;
    idx.push_back(k);
  }
  return idx;
}

/// m uniform leaves, then cut clocks.
inline SpannedTree build_spanned_tree(const GridExcursion& exc, const RangeMin& rmq, std::size_t m, Rng& g) {
  auto t = spanned_tree_at(exc, rmq, uniform_leaf_indices(exc.n, m, g));
  draw_cut_clocks(t, g);
  return t;
}

inline SpannedTree build_spanned_tree(const GridExcursion& exc, std::size_t m, Rng& g) {
  return build_spanned_tree(exc, RangeMin(exc.values), m, g);
}

/// Sum of edge lengths between two vertices.
inline double tree_distance(const SpannedTree& t, std::size_t a, std::size_t b) {
  auto depth = [&](std::size_t v) {
    std::size_t d = 0;
    while (t.parent[v] >= 0) {
      v = static_cast<std::size_t>(t.parent[v]);
      ++d;
    }
    return d;
  };
  std::size_t da = depth(a), db = depth(b);
  double s = 0.0;
  while (da > db) {
    s += t.edge_length[a];
    a = static_cast<std::size_t>(t.parent[a]);
    --da;
  }
  while (db > da) {
    s += t.edge_length[b];
    b = static_cast<std::size_t>(t.parent[b]);
    --db;
  }
  while (a != b) {
    s += t.edge_length[a] + t.edge_length[b];
    a = static_cast<std::size_t>(t.parent[a]);
    b = static_cast<std::size_t>(t.parent[b]);
  }
  return s;
}

/// Smallest cut clock on each leaf's path to the root.
inline std::vector<double> leaf_disconnection_times(const SpannedTree& t) {
  const std::size_t nv = t.height.size();
  // Parents of branch points and leaves are never leaves, so resolve top-down lazily.
  std::vector<double> first(nv, -1.0);
  first[0] = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> path;
  for (std::size_t v = 1; v < nv; ++v) {
    std::size_t u = v;
    while (first[u] < 0.0) {
      path.push_back(u);
      u = static_cast<std::size_t>(t.parent[u]);
    }
    double acc = first[u];
    while (!path.empty()) {
      const std::size_t w = path.back();
      path.pop_back();
      acc = std::min(acc, t.cut_clock[w]);
      first[w] = acc;
    }
  }
  std::vector<double> out(t.leaves());
  for (std::size_t i = 0; i < t.leaves(); ++i) out[i] = first[t.leaf_vertex(i)];
  return out;
}

struct FragmentPoint {
  double theta = 0.0;
  double fraction = 1.0;
};

/// Fraction of leaves whose root path has no cut with clock <= theta.
inline std::vector<FragmentPoint> tagged_fragment_process(const SpannedTree& t, const std::vector<double>& thetas) {
  auto times = leaf_disconnection_times(t);
  std::sort(times.begin(), times.end());
  std::vector<FragmentPoint> out;
  for (double th : thetas) {
    if (!(th >= 0.0)) throw DomainError("tagged_fragment_process: theta must be >= 0");
    const auto cut = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), th) - times.begin());
    out.push_back({th, static_cast<double>(times.size() - cut) / static_cast<double>(times.size())});
  }
  return out;
}

/// P(1/(1 + tau_theta) <= y) = 2 Phi(theta / sqrt(x)) - 1 with x = 1/y - 1.
inline double fragment_reference_cdf(double theta, double y) {
  if (y <= 0.0) return 0.0;
  if (y >= 1.0) return 1.0;
  if (theta == 0.0) return 0.0;
  const double x = 1.0 / y - 1.0;
  return std::erf(theta / std::sqrt(2.0 * x));
}

/// One replicate: excursion, spanned tree with cuts, fractions at each theta.
inline std::vector<double> fragment_replicate(std::size_t n_grid, std::size_t leaves, const std::vector<double>& thetas,
                                              Rng& g) {
  const auto exc = sample_excursion(n_grid, g);
  const auto tree = build_spanned_tree(exc, leaves, g);
  std::vector<double> out;
  for (const auto& p : tagged_fragment_process(tree, thetas)) out.push_back(p.fraction);
  return out;
}

}  // namespace crtprune::crt
