#pragma once

// Monotone upwind discretization of the Isaacs operator
//   minimax_{u,v} [ 1/2 tr(sigma sigma^T D^2 w) + <b, Dw> + f ]
// on a StateGrid, and solvers for the discounted and parabolic equations.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "erg/game_model.hpp"
#include "erg/grid.hpp"

namespace erg {

/// infsup: the minimizing player optimizes in the outer position (upper value).
/// supinf: the maximizing player is outer (lower value).
enum class Ordering { infsup, supinf };

[[nodiscard]] std::string_view to_string(Ordering o);
[[nodiscard]] Ordering parse_ordering(std::string_view s);

/// Which player sits in the outer optimization for this spec and ordering.
[[nodiscard]] Player outer_player(const ProblemSpec& spec, Ordering o) noexcept;
[[nodiscard]] inline bool outer_minimizes(Ordering o) noexcept { return o == Ordering::infsup; }

/// Result of a minimax over the control-grid product at one node.
struct NodeChoice {
  double value = 0.0;
  std::size_t iu = 0, iv = 0;
};

/// Minimax of val(iu, iv) for the given roles. Lowest index wins ties in
/// both the inner and the outer optimization.
template <class Val>
NodeChoice minimax(std::size_t nu, std::size_t nv, bool outer_is_u, bool outer_min, Val&& val) {
  const std::size_t n_outer = outer_is_u ? nu : nv;
  const std::size_t n_inner = outer_is_u ? nv : nu;
  NodeChoice best;
  for (std::size_t o = 0; o < n_outer; ++o) {
    double inner = 0.0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < n_inner; ++k) {
      const double q = outer_is_u ? val(o, k) : val(k, o);
      if (k == 0 || (outer_min ? q > inner : q < inner)) {
        inner = q;
        arg = k;
      }
    }
    if (o == 0 || (outer_min ? inner < best.value : inner > best.value)) {
      best.value = inner;
      best.iu = outer_is_u ? o : arg;
      best.iv = outer_is_u ? arg : o;
    }
  }
  return best;
}

/// Precomputed stencil weights per (node, control pair). For node i and pair
/// p = iu * |V| + iv the discrete Hamiltonian is
///   Q_p(w)_i = sum_s a_{i,p,s} (w_{nbr(i,s)} - w_i) + f_{i,p}.
/// Boundary nodes reflect: weight toward a ghost node is folded onto the
/// mirror interior neighbour and outward drift is dropped.
class DiscreteOperator {
 public:
  DiscreteOperator(const ProblemSpec& spec, const StateGrid& grid);

  [[nodiscard]] const ProblemSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const StateGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::size_t nodes() const noexcept { return grid_.size(); }
  [[nodiscard]] std::size_t pairs() const noexcept { return nu_ * nv_; }
  [[nodiscard]] std::size_t nu() const noexcept { return nu_; }
  [[nodiscard]] std::size_t nv() const noexcept { return nv_; }
  [[nodiscard]] std::size_t slots() const noexcept { return slots_; }
  [[nodiscard]] std::size_t pair(std::size_t iu, std::size_t iv) const noexcept { return iu * nv_ + iv; }

  [[nodiscard]] std::size_t neighbor(std::size_t i, std::size_t s) const noexcept { return nbr_[i * slots_ + s]; }
  [[nodiscard]] double weight(std::size_t i, std::size_t p, std::size_t s) const noexcept {
    return table_[(i * pairs() + p) * stride() + 1 + s];
  }
  [[nodiscard]] double payoff(std::size_t i, std::size_t p) const noexcept { return table_[(i * pairs() + p) * stride()]; }
  [[nodiscard]] double rowsum(std::size_t i, std::size_t p) const noexcept { return rowsum_[i * pairs() + p]; }
  [[nodiscard]] double max_rowsum() const noexcept { return max_rowsum_; }

  /// Fills diff[s] = w_{nbr(i,s)} - w_i.
  void differences(const Vec& w, std::size_t i, double* diff) const noexcept {
    for (std::size_t s = 0; s < slots_; ++s) diff[s] = w[nbr_[i * slots_ + s]] - w[i];
  }
  [[nodiscard]] double q(const double* diff, std::size_t i, std::size_t p) const noexcept {
    const double* row = &table_[(i * pairs() + p) * stride()];
    double v = row[0];
    for (std::size_t s = 0; s < slots_; ++s) v += row[1 + s] * diff[s];
    return v;
  }
  [[nodiscard]] double q(const Vec& w, std::size_t i, std::size_t p) const noexcept;

  /// Minimax of Q_p(w)_i over pairs.
  [[nodiscard]] NodeChoice minimax_q(const Vec& w, std::size_t i, Ordering o) const;
  /// Minimax of the normalized update (sum_s a_s w_s + f) / (lambda + A_p); the
  /// discounted fixed point is w_i = minimax_update.
  [[nodiscard]] NodeChoice minimax_update(const Vec& w, std::size_t i, Ordering o, double lambda) const;

  [[nodiscard]] bool outer_is_u(Ordering o) const noexcept { return outer_player(spec_, o) == Player::u; }

 private:
  [[nodiscard]] std::size_t stride() const noexcept { return slots_ + 1; }

  ProblemSpec spec_;
  StateGrid grid_;
  std::size_t nu_, nv_, slots_;
  std::vector<std::size_t> nbr_;
  Vec table_;
  Vec rowsum_;
  double max_rowsum_ = 0.0;
};

/// Discrete Hamiltonian values Q_p(w)_i, row-major [node][pair].
[[nodiscard]] Vec hamiltonian_table(const DiscreteOperator& op, const GridFunction& w);

enum class SolveMethod { policy_iteration, gauss_seidel, jacobi };

[[nodiscard]] std::string_view to_string(SolveMethod m);

struct SolveOptions {
  double tol = 1e-8;
  /// 0 selects the default 10^6 / lambda sweeps.
  std::size_t max_iter = 0;
  SolveMethod method = SolveMethod::policy_iteration;
  std::optional<Vec> initial;
};

struct SolveDiagnostics {
  std::size_t iterations = 0;
  /// Inner linear solves (policy iteration only).
  std::size_t linear_solves = 0;
  /// max_i |w_i - minimax update_i(w)|, recomputed on the returned iterate.
  double residual = 0.0;
  bool converged = false;
  std::string method;
  /// Set when policy iteration stalled and value iteration finished the job.
  bool fell_back = false;
  double isaacs_gap = 0.0;
  /// Seconds; kept out of result files so they stay byte-reproducible.
  double wall_time = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct DiscountedSolution {
  GridFunction w;
  SolveDiagnostics diagnostics;
};

/// Solves lambda w = minimax Q(w) on the operator's grid; throws
/// PreconditionError for lambda <= 0.
[[nodiscard]] DiscountedSolution solve_discounted(const DiscreteOperator& op, double lambda, Ordering ordering,
                                                  const SolveOptions& options = {});
/// Convenience overload that assembles the operator.
[[nodiscard]] DiscountedSolution solve_discounted(const ProblemSpec& spec, const StateGrid& grid, double lambda,
                                                  Ordering ordering, const SolveOptions& options = {});

/// Residual max_i |w_i - minimax update_i(w)| of the discounted equation.
[[nodiscard]] double discounted_residual(const DiscreteOperator& op, const Vec& w, double lambda, Ordering ordering);

/// Largest admissible explicit time step, 1 / max_{i,p} A_{i,p}.
[[nodiscard]] double max_stable_dt(const DiscreteOperator& op) noexcept;

struct ParabolicSolution {
  /// Times at which snapshots were stored (always includes 0 and T).
  Vec times;
  std::vector<GridFunction> snapshots;
  double dt = 0.0;
  std::size_t steps = 0;

  /// Snapshot at the stored time nearest t.
  [[nodiscard]] const GridFunction& at(double t) const;
};

/// Explicit monotone marching of V_t = minimax Q(V), V(0) = initial, up to T.
/// dt is shrunk to T / ceil(T / dt); throws CflError when it exceeds
/// max_stable_dt.
[[nodiscard]] ParabolicSolution solve_parabolic(const DiscreteOperator& op, const GridFunction& initial, double T,
                                                double dt, Ordering ordering, const Vec& save_times = {});

/// max_i |infsup_i - supinf_i| of Q(w) over the control-grid product.
[[nodiscard]] double isaacs_gap(const DiscreteOperator& op, const GridFunction& w);
/// Per-node gap.
[[nodiscard]] Vec isaacs_gap_field(const DiscreteOperator& op, const GridFunction& w);

}  // namespace erg
