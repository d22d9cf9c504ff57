#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "erg/grid.hpp"
#include "erg/hjbi.hpp"

namespace erg {

using Ladder = std::vector<double>;

/// lambda_k = 2^-k, k = 1..8.
[[nodiscard]] Ladder default_ladder();
/// lambda_k = base^-k for k = first..last.
[[nodiscard]] Ladder geometric_ladder(double base, int first, int last);

struct LadderRung {
  double lambda = 0.0;
  /// lambda * w_lambda at the origin-nearest node.
  double rho = 0.0;
  /// Grid Lipschitz seminorm of phi_lambda = w_lambda - w_lambda(0).
  double lipschitz = 0.0;
  /// sup |phi_lambda - phi_previous| (0 on the first rung).
  double phi_increment = 0.0;
  SolveDiagnostics diagnostics;
};

struct ErgodicSolution {
  double rho = 0.0;
  GridFunction w;
  Ordering ordering = Ordering::infsup;
  std::vector<LadderRung> ladder;
  /// |rho_{m-1} - rho_m|, the error bar on rho.
  double tail_increment = 0.0;
  /// 2 rho_m - rho_{m-1}; reported separately, never used as rho.
  std::optional<double> rho_richardson;
  /// Last two rho increments are non-increasing.
  bool cauchy = true;
  double lipschitz_bound = 0.0;
  /// L_m / max_{k<m} L_k - 1: growth of the seminorm at the tail.
  double lipschitz_growth = 0.0;
  /// max |w(x)| / |x| over nodes away from the anchor.
  double growth_constant = 0.0;
  bool all_converged = true;

  [[nodiscard]] bool lipschitz_bounded(double slack = 0.10) const noexcept { return lipschitz_growth <= slack; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Vanishing-discount construction: solves the discounted equation along the
/// ladder (rungs warm-started from the previous one) and reports
/// rho = lambda_m w_{lambda_m}(0), w = phi_{lambda_m}.
[[nodiscard]] ErgodicSolution vanishing_discount(const DiscreteOperator& op, const Ladder& ladder, Ordering ordering,
                                                 const SolveOptions& options = {});

/// Exact pair (rho, w) packaged as an ErgodicSolution (used as a reference).
[[nodiscard]] ErgodicSolution reference_solution(double rho, GridFunction w, Ordering ordering);

struct LongTimeRow {
  double T = 0.0;
  double value_at_origin = 0.0;  // V(T, 0) / T
  double deviation = 0.0;        // |V(T, 0) / T - rho|
  double w_bound = 0.0;          // sup_x |V(T,x) - rho T - w(x)| / (1 + |x|)
};

struct LongTimeReport {
  std::vector<LongTimeRow> rows;
  double dt = 0.0;
  /// w_bound never grows by more than the slack between consecutive T.
  bool bounded = false;
  double slack = 0.10;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Marches V_t = minimax Q(V) from `initial` and compares V(T, .) with rho T + w.
[[nodiscard]] LongTimeReport long_time_check(const DiscreteOperator& op, const ErgodicSolution& ergodic,
                                             const GridFunction& initial, const Vec& T_list, double dt,
                                             double slack = 0.10);

struct AbelianTauberianReport {
  double lambda_side = 0.0;  // lambda_m w_{lambda_m}(0)
  double time_side = 0.0;    // V(T_max, 0) / T_max
  double gap = 0.0;
  double tail_increment = 0.0;
  double T_max = 0.0;
  double tolerance = 0.0;  // 5 max(tail, 1 / T_max)
  bool passed = false;
  std::vector<LongTimeRow> time_rows;
  std::vector<std::pair<double, double>> lambda_rows;

  [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] AbelianTauberianReport abelian_tauberian_check(const DiscreteOperator& op, const Ladder& ladder,
                                                             const Vec& T_list, Ordering ordering, double dt,
                                                             const SolveOptions& options = {});
/// Same, reusing a finished ladder.
[[nodiscard]] AbelianTauberianReport abelian_tauberian_check(const DiscreteOperator& op, const ErgodicSolution& ergodic,
                                                             const Vec& T_list, double dt);

struct DppReport {
  double T = 0.0;
  double dt = 0.0;
  double h = 0.0;
  /// sup over assessed nodes of |V(T) - rho T - w|.
  double distance = 0.0;
  /// sup |w| over the same nodes.
  double w_sup = 0.0;
  double relative = 0.0;
  /// (h + dt) * c_budget.
  double budget = 0.0;
  double c_budget = 0.0;
  /// Nodes closer than this to the box are excluded (reflection layer).
  double band = 0.0;
  std::size_t assessed_nodes = 0;

  [[nodiscard]] bool within_budget() const noexcept { return distance <= budget; }
  [[nodiscard]] nlohmann::json to_json() const;
};

struct DppOptions {
  /// Negative: 1 * sup |w|.
  double c_budget = -1.0;
  /// Negative: 3 sigma_bound sqrt(T), the diffusion length over the horizon.
  double band = -1.0;
};

/// Runs the parabolic scheme from w for time T and measures its distance to
/// w + rho T on nodes outside the boundary band.
[[nodiscard]] DppReport dpp_check(const DiscreteOperator& op, const ErgodicSolution& ergodic, double T, double dt,
                                  const DppOptions& options = {});

struct UniquenessReport {
  double rho_a = 0.0, rho_b = 0.0;
  double rho_gap = 0.0;
  double tolerance = 0.0;  // tail_a + tail_b + 10 tol
  double w_gap = 0.0;      // sup |w_a - w_b|
  bool passed = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Two independent ladders with different initial guesses.
[[nodiscard]] UniquenessReport uniqueness_probe(const DiscreteOperator& op, const Ladder& ladder_a,
                                                const Ladder& ladder_b, Ordering ordering, double initial_a = 0.0,
                                                double initial_b = 100.0, const SolveOptions& options = {});

}  // namespace erg
