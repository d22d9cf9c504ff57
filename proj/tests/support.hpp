#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "erg/config.hpp"
#include "erg/game_model.hpp"
#include "erg/grid.hpp"

namespace erg::test {

inline std::filesystem::path spec_dir() { return ERG_SPEC_DIR; }

inline std::vector<std::filesystem::path> registered_specs() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(spec_dir())) {
    if (e.path().extension() == ".yaml") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline ProblemSpec load(const std::string& name) { return load_spec(spec_dir() / (name + ".yaml")); }

/// dX = -kappa X dt + sigma dB, cost X^2, no controls.
inline ProblemSpec ou_spec(double lo = -5.0, double hi = 5.0, std::size_t nodes = 401) {
  return parse_spec("family: ou_quadratic\nparameters: {kappa: 1.0, sigma: 1.0, q: 1.0}\n"
                    "truncation: {lower: " + std::to_string(lo) + ", upper: " + std::to_string(hi) +
                    ", nodes: " + std::to_string(nodes) + "}\n");
}

/// b = -x, sigma = s, f = c: every solution is explicit.
inline ProblemSpec constant_payoff_spec(double c, double sigma = 0.5, std::size_t nodes = 81) {
  return parse_spec("family: affine\nparameters: {C: -1.0, S: " + std::to_string(sigma) +
                    ", payoff: {constant: " + std::to_string(c) + "}}\n"
                    "constants: {K: 2.0, C_b: 1.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: " + std::to_string(sigma) +
                    "}\ncontrols: {u: {points: [0.0, 1.0]}, v: {points: [0.0, 1.0]}}\n"
                    "truncation: {lower: -3.0, upper: 3.0, nodes: " + std::to_string(nodes) + "}\n");
}

/// Simpson's rule with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// lambda * int_0^inf e^{-lambda s} E X_s^2 ds for the OU cost with X_0 = 0.
inline double ou_discounted_moment(double lambda) {
  const double horizon = 60.0 / lambda;
  return simpson([&](double s) { return lambda * std::exp(-lambda * s) * 0.5 * (1.0 - std::exp(-2.0 * s)); }, 0.0,
                 horizon, 200000);
}

/// (1/T) int_0^T E X_s^2 ds for the same process.
inline double ou_time_average(double T) {
  return simpson([](double s) { return 0.5 * (1.0 - std::exp(-2.0 * s)); }, 0.0, T) / T;
}

}  // namespace erg::test
