#pragma once

// Robust pollution accumulation: dY = (u - vY) dt + sigma(Y) dB with
// consumption u in [0, gamma], decay rate v in [a, b] chosen by nature, and
// welfare g(u) - d max(Y, 0) maximized by u.

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "erg/ergodic.hpp"
#include "erg/game_model.hpp"
#include "erg/grid.hpp"

namespace erg {

struct PollutionParams {
  double gamma = 4.0;
  double a = 1.0, b = 2.0;
  double d = 1.0;
  double sigma0 = 0.3, sigma1 = 0.0;
  /// g(u) = g_scale u^g_power; the closed form needs (2, 1/2).
  double g_scale = 2.0, g_power = 0.5;
  std::size_t u_count = 50, v_count = 11;
  std::size_t nodes = 401;
  /// Upper grid end as a multiple of the confinement radius.
  double box_factor = 3.0;

  [[nodiscard]] bool closed_form_variant() const noexcept { return g_scale == 2.0 && g_power == 0.5; }
  void check() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

struct ClosedFormSolution {
  double rho = 0.0;
  /// w(x) = slope * x.
  double slope = 0.0;
  double u_star = 0.0;
  double v_star = 0.0;

  [[nodiscard]] GridFunction w(const StateGrid& grid) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Closed form for g = 2 sqrt(u), f = d x; throws PreconditionError otherwise.
[[nodiscard]] ClosedFormSolution closed_form(const PollutionParams& p);
/// Same value with u restricted to the points of `u_grid` (v = a kept):
/// max_u [g(u) - (d/a) u] + ... evaluated on the grid.
[[nodiscard]] ClosedFormSolution closed_form_on_grid(const PollutionParams& p, const ControlGrid& u_grid);

/// ProblemSpec for the parameters: U = [gamma/1000, gamma], V = [a, b],
/// welfare maximized by u, grid [0, box_factor * R].
[[nodiscard]] ProblemSpec make_pollution_spec(const PollutionParams& p);

struct PipelineConfig {
  Ladder ladder = default_ladder();
  SolveOptions solve;
  /// Closed-loop simulation settings.
  double dt = 0.01;
  double horizon = 100.0;
  std::size_t paths = 200;
  double x0 = 1.0;
  std::uint64_t seed = 1;
  bool simulate = true;
};

struct PollutionReport {
  PollutionParams params;
  std::optional<ClosedFormSolution> exact;
  double rho_numeric = 0.0;
  double rho_supinf = 0.0, rho_infsup = 0.0;
  double isaacs_gap = 0.0;
  double u_cell = 0.0;
  /// Extracted u* at the node nearest the closed-form stationary point and
  /// the worst |u*(y) - exact| over interior nodes.
  double u_star_at_x0 = 0.0;
  double u_star_max_error = 0.0;
  bool u_star_within_cell = false;
  /// v* equals the grid point nearest a at every node with y > h.
  bool v_star_is_a = false;
  std::size_t v_star_mismatches = 0;
  double slope_numeric = 0.0;
  double simulated_mean = 0.0, simulated_stderr = 0.0;
  bool simulated = false;
  std::optional<ErgodicSolution> ergodic;
  /// Comparison rows: quantity, numeric, exact, tolerance, passed.
  nlohmann::json table = nlohmann::json::array();

  [[nodiscard]] bool closed_form_passed(double rho_tol = 0.02) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] PollutionReport run_pipeline(const PollutionParams& params, const PipelineConfig& cfg);

}  // namespace erg
