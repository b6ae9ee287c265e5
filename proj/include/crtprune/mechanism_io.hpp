#pragma once

// Mechanism files: one `key = value` per line, `#` starts a comment.
//
//   alpha_tilde = 0          # or `critical` to solve psi'(0) = 0
//   beta        = 0.5
//   pi.kind     = power      # zero | stable | exp | power | atoms | tabulated
//   pi.params   = 1, 1.5, 0  # see below
//   pi.tilt     = 0          # optional e^{-tilt l} factor
//
// pi.params by kind: stable "c, alpha" (measure of c u^alpha); exp "k, r"
// (k e^{-r l}); power "k, a, r" (k l^{-1-a} e^{-r l}); atoms and tabulated
// "l:w, l:w, ...".

#include "crtprune/error.hpp"
#include "crtprune/mechanism.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace crtprune::mech {

namespace io_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("mechanism file: '" + key + "' expects a number, got '" + text + "'");
  }
  if (trim(text.substr(used)) != "") throw ConfigError("mechanism file: trailing text in '" + key + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

inline std::vector<double> numbers(const std::string& key, const std::string& s) {
  std::vector<double> v;
  for (const auto& p : split(s, ',')) v.push_back(number(key, p));
  return v;
}

inline std::vector<std::pair<double, double>> pairs(const std::string& key, const std::string& s) {
  std::vector<std::pair<double, double>> v;
  for (const auto& p : split(s, ',')) {
    const auto colon = p.find(':');
    if (colon == std::string::npos) throw ConfigError("mechanism file: '" + key + "' expects l:w pairs");
    v.emplace_back(number(key, p.substr(0, colon)), number(key, p.substr(colon + 1)));
  }
  return v;
}

inline void expect_count(const std::vector<double>& v, std::size_t n, const std::string& kind) {
  if (v.size() != n) {
    throw ConfigError("mechanism file: pi.kind = " + kind + " takes " + std::to_string(n) + " parameters");
  }
}

}  // namespace io_detail

inline BranchingMechanism parse_mechanism(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = io_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("mechanism file: line " + std::to_string(lineno) + " has no '='");
    const auto key = io_detail::trim(line.substr(0, eq));
    if (kv.count(key)) throw ConfigError("mechanism file: duplicate key '" + key + "'");
    kv[key] = io_detail::trim(line.substr(eq + 1));
  }
  static const char* known[] = {"alpha_tilde", "beta", "pi.kind", "pi.params", "pi.tilt"};
  for (const auto& [k, v] : kv) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw ConfigError("mechanism file: unknown key '" + k + "'");
    }
  }
  auto get = [&](const std::string& k, const std::string& dflt) { return kv.count(k) ? kv.at(k) : dflt; };

  const std::string kind = get("pi.kind", "zero");
  const std::string params = get("pi.params", "");
  LevyMeasureSpec pi;
  if (kind == "zero") {
    if (!params.empty()) throw ConfigError("mechanism file: pi.kind = zero takes no parameters");
    pi = ZeroMeasure{};
  } else if (kind == "stable") {
    const auto v = io_detail::numbers("pi.params", params);
    io_detail::expect_count(v, 2, kind);
    if (!(v[1] > 1.0 && v[1] < 2.0)) throw ConfigError("mechanism file: stable index must lie in (1,2)");
    pi = stable_measure(v[0], v[1]);
  } else if (kind == "exp") {
    const auto v = io_detail::numbers("pi.params", params);
    io_detail::expect_count(v, 2, kind);
    pi = PowerLawDensity{v[0], -1.0, v[1]};
  } else if (kind == "power") {
    const auto v = io_detail::numbers("pi.params", params);
    io_detail::expect_count(v, 3, kind);
    pi = PowerLawDensity{v[0], v[1], v[2]};
  } else if (kind == "atoms") {
    AtomicMeasure a;
    for (auto [l, w] : io_detail::pairs("pi.params", params)) a.atoms.push_back({l, w});
    pi = a;
  } else if (kind == "tabulated") {
    TabulatedDensity t;
    for (auto [l, w] : io_detail::pairs("pi.params", params)) {
      t.positions.push_back(l);
      t.densities.push_back(w);
    }
    pi = t;
  } else {
    throw ConfigError("mechanism file: unknown pi.kind '" + kind + "'");
  }

  const double beta = io_detail::number("beta", get("beta", "0"));
  const double tilt = io_detail::number("pi.tilt", get("pi.tilt", "0"));
  try {
    if (tilt != 0.0) pi = BranchingMechanism(0.0, 0.0, pi).tilted_measure(tilt);
    const std::string at = get("alpha_tilde", "0");
    if (at == "critical") {
      const BranchingMechanism probe(0.0, beta, pi);
      return {-probe.slope_at_zero(), beta, pi};
    }
    return {io_detail::number("alpha_tilde", at), beta, pi};
  } catch (const DomainError& e) {
    throw ConfigError(std::string("mechanism file: ") + e.what());
  }
}

inline BranchingMechanism parse_mechanism(const std::string& text) {
  std::istringstream in(text);
  return parse_mechanism(in);
}

inline BranchingMechanism load_mechanism(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mechanism file '" + path + "'");
  return parse_mechanism(in);
}

namespace io_detail {

inline nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace io_detail

/// Classification as a JSON object; infinite values appear as null with a
/// companion string field.
inline nlohmann::json classification_json(const BranchingMechanism& m) {
  const auto c = classify(m);
  nlohmann::json j;
  j["alpha_tilde"] = m.alpha_tilde();
  j["beta"] = m.beta();
  j["criticality"] = to_string(c.criticality);
  j["slope_at_zero"] = io_detail::finite_or_null(c.slope_at_zero);
  j["q0"] = io_detail::finite_or_null(c.q0);
  j["qstar"] = io_detail::finite_or_null(c.qstar);
  j["theta_inf"] = io_detail::finite_or_null(c.theta_inf);
  if (!std::isfinite(c.theta_inf)) j["theta_inf_text"] = "-inf";
  j["theta_inf_determined"] = c.theta_inf_determined;
  j["theta_inf_in_theta_prime"] = c.theta_inf_in_domain;
  j["theta_inf_in_theta"] = to_string(c.theta_inf_conservative);
  j["conservative"] = to_string(c.conservative);
  if (c.bar_theta_inf) {
    j["bar_theta_inf"] = io_detail::finite_or_null(*c.bar_theta_inf);
    if (!std::isfinite(*c.bar_theta_inf)) j["bar_theta_inf_text"] = "inf";
  }
  return j;
}

}  // namespace crtprune::mech
