#include "erg/hjbi.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "erg/error.hpp"
#include "erg/parallel.hpp"

namespace erg {

std::string_view to_string(Ordering o) { return o == Ordering::infsup ? "infsup" : "supinf"; }

Ordering parse_ordering(std::string_view s) {
  if (s == "infsup") return Ordering::infsup;
  if (s == "supinf") return Ordering::supinf;
  throw PreconditionError("ordering must be infsup or supinf, got '" + std::string(s) + "'");
}

Player outer_player(const ProblemSpec& spec, Ordering o) noexcept {
  return o == Ordering::infsup ? spec.inf_player() : spec.sup_player();
}

std::string_view to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::policy_iteration:
      return "policy_iteration";
    case SolveMethod::gauss_seidel:
      return "gauss_seidel";
    case SolveMethod::jacobi:
      return "jacobi";
  }
  return "unknown";
}

// ------------------------------------------------------------ operator

namespace {

constexpr std::size_t kMaxSlots = 8;

// Mirror reflection of an index that stepped one node outside [0, n).
std::size_t reflect(std::ptrdiff_t t, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (t < 0) t = -t;
  if (t > last) t = 2 * last - t;
  return static_cast<std::size_t>(t);
}

// Slot offsets: axis neighbours first, then diagonals (--, -+, +-, ++).
constexpr std::array<std::array<int, 2>, kMaxSlots> kOffsets{{
    {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};

}  // namespace

DiscreteOperator::DiscreteOperator(const ProblemSpec& spec, const StateGrid& grid)
    : spec_(spec), grid_(grid), nu_(spec.u_grid.size()), nv_(spec.v_grid.size()) {
  spec_.check();
  const std::size_t n = grid_.dim();
  if (spec_.state_dim() != n) throw PreconditionError("grid dimension does not match the state dimension");
  const std::size_t d = spec_.noise_dim();
  slots_ = n == 1 ? 2 : 8;

  nbr_.resize(grid_.size() * slots_);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const auto m = grid_.multi(i);
    for (std::size_t s = 0; s < slots_; ++s) {
      const std::size_t t0 = reflect(static_cast<std::ptrdiff_t>(m[0]) + kOffsets[s][0], grid_.nodes(0));
      const std::size_t t1 = n == 1 ? 0 : reflect(static_cast<std::ptrdiff_t>(m[1]) + kOffsets[s][1], grid_.nodes(1));
      nbr_[i * slots_ + s] = grid_.flat(t0, t1);
    }
  }

  std::array<bool, 2> floor_face{false, false};
  if (spec_.state_floor) {
    for (std::size_t k = 0; k < n; ++k) {
      const double fl = (*spec_.state_floor)[k];
      floor_face[k] = std::isfinite(fl) && std::abs(grid_.lower(k) - fl) <= 1e-12 * (1.0 + std::abs(fl));
    }
  }

  table_.assign(grid_.size() * pairs() * stride(), 0.0);
  rowsum_.assign(grid_.size() * pairs(), 0.0);
  Vec x(n), b(n), sig(n * d);
  std::array<double, 4> a{};
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    grid_.coords(i, x);
    const auto m = grid_.multi(i);
    const bool interior = !grid_.on_boundary(i);
    for (std::size_t iu = 0; iu < nu_; ++iu) {
      for (std::size_t iv = 0; iv < nv_; ++iv) {
        const auto u = spec_.u_grid.point(iu);
        const auto v = spec_.v_grid.point(iv);
        spec_.coeffs->drift(x, u, v, b);
        spec_.coeffs->diffusion(x, u, v, sig);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += sig[r * d + k] * sig[c * d + k];
            a[r * 2 + c] = s;
          }
        }
        const std::size_t p = pair(iu, iv);
        double* row = &table_[(i * pairs() + p) * stride()];
        row[0] = spec_.coeffs->payoff(x, u, v);
        double* w = row + 1;
        const double cross = n == 2 && interior ? std::abs(a[1]) / (2.0 * grid_.h(0) * grid_.h(1)) : 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double hk = grid_.h(k);
          const double diff = a[k * 2 + k] / (2.0 * hk * hk) - cross;
          if (diff < -1e-12 * (a[k * 2 + k] / (hk * hk))) {
            std::ostringstream msg;
            msg << "diffusion stencil not diagonally dominant at node " << i << " (axis " << k
                << "): |a12| / (h1 h2) exceeds a_kk / h_k^2";
            throw MonotonicityError(msg.str());
          }
          const bool at_lower = m[k] == 0;
          const bool at_upper = m[k] + 1 == grid_.nodes(k);
          const double up = std::max(b[k], 0.0) / hk;
          const double down = std::max(-b[k], 0.0) / hk;
          // On a state-constraint face only the inward one-sided drift term is kept.
          const double dk = at_lower && floor_face[k] ? 0.0 : std::max(diff, 0.0);
          w[2 * k] = dk + (at_lower ? 0.0 : down);
          w[2 * k + 1] = dk + (at_upper ? 0.0 : up);
        }
        if (n == 2 && interior) {
          if (a[1] > 0.0) {
            w[4] = cross;
            w[7] = cross;
          } else if (a[1] < 0.0) {
            w[5] = cross;
            w[6] = cross;
          }
        }
        double sum = 0.0;
        for (std::size_t s = 0; s < slots_; ++s) sum += w[s];
        rowsum_[i * pairs() + p] = sum;
        max_rowsum_ = std::max(max_rowsum_, sum);
      }
    }
  }
}

double DiscreteOperator::q(const Vec& w, std::size_t i, std::size_t p) const noexcept {
  std::array<double, kMaxSlots> diff{};
  differences(w, i, diff.data());
  return q(diff.data(), i, p);
}

NodeChoice DiscreteOperator::minimax_q(const Vec& w, std::size_t i, Ordering o) const {
  std::array<double, kMaxSlots> diff{};
  differences(w, i, diff.data());
  return minimax(nu_, nv_, outer_is_u(o), outer_minimizes(o),
                 [&](std::size_t iu, std::size_t iv) { return q(diff.data(), i, pair(iu, iv)); });
}

NodeChoice DiscreteOperator::minimax_update(const Vec& w, std::size_t i, Ordering o, double lambda) const {
  std::array<double, kMaxSlots> nb{};
  for (std::size_t s = 0; s < slots_; ++s) nb[s] = w[nbr_[i * slots_ + s]];
  return minimax(nu_, nv_, outer_is_u(o), outer_minimizes(o), [&](std::size_t iu, std::size_t iv) {
    const std::size_t p = pair(iu, iv);
    const double* row = &table_[(i * pairs() + p) * stride()];
    double num = row[0];
    for (std::size_t s = 0; s < slots_; ++s) num += row[1 + s] * nb[s];
    return num / (lambda + rowsum_[i * pairs() + p]);
  });
}

Vec hamiltonian_table(const DiscreteOperator& op, const GridFunction& w) {
  Vec out(op.nodes() * op.pairs());
  std::array<double, kMaxSlots> diff{};
  for (std::size_t i = 0; i < op.nodes(); ++i) {
    op.differences(w.values, i, diff.data());
    for (std::size_t p = 0; p < op.pairs(); ++p) out[i * op.pairs() + p] = op.q(diff.data(), i, p);
  }
  return out;
}

nlohmann::json SolveDiagnostics::to_json() const {
  return {{"iterations", iterations}, {"linear_solves", linear_solves}, {"residual", residual},
          {"converged", converged},   {"method", method},               {"fell_back", fell_back},
          {"isaacs_gap", isaacs_gap}};
}

// ------------------------------------------------------------ discounted

double discounted_residual(const DiscreteOperator& op, const Vec& w, double lambda, Ordering ordering) {
  double r = 0.0;
  for (std::size_t i = 0; i < op.nodes(); ++i) {
    r = std::max(r, std::abs(w[i] - op.minimax_update(w, i, ordering, lambda).value));
  }
  return r;
}

namespace {

// Gauss-Seidel or Jacobi value iteration from `w`; returns sweeps used.
std::size_t value_iteration(const DiscreteOperator& op, double lambda, Ordering ordering, double tol,
                            std::size_t max_iter, bool jacobi, Vec& w, bool& converged) {
  converged = false;
  Vec next(w.size());
  std::size_t sweep = 0;
  while (sweep < max_iter) {
    ++sweep;
    double change = 0.0;
    if (jacobi) {
      parallel_for(op.nodes(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) next[i] = op.minimax_update(w, i, ordering, lambda).value;
      });
      for (std::size_t i = 0; i < w.size(); ++i) change = std::max(change, std::abs(next[i] - w[i]));
      w.swap(next);
    } else {
      for (std::size_t i = 0; i < op.nodes(); ++i) {
        const double v = op.minimax_update(w, i, ordering, lambda).value;
        change = std::max(change, std::abs(v - w[i]));
        w[i] = v;
      }
    }
    if (change <= tol && discounted_residual(op, w, lambda, ordering) <= tol) {
      converged = true;
      break;
    }
  }
  return sweep;
}

// Hoffman-Karp policy iteration: the outer player improves its policy against
// the inner player's exact best response, computed by Howard iteration.
class PolicyIteration {
 public:
  PolicyIteration(const DiscreteOperator& op, double lambda, Ordering ordering)
      : op_(op),
        lambda_(lambda),
        outer_u_(op.outer_is_u(ordering)),
        outer_min_(outer_minimizes(ordering)),
        n_outer_(outer_u_ ? op.nu() : op.nv()),
        n_inner_(outer_u_ ? op.nv() : op.nu()),
        po_(op.nodes(), 0),
        pi_(op.nodes(), 0) {
    if (op_.grid().dim() == 2) setup_sparse();
  }

  bool run(Vec& w, std::size_t max_outer, SolveDiagnostics& diag) {
    initial_policy(w);
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
      ++diag.iterations;
      if (!best_response(w, diag)) return false;
      if (!improve_outer(w)) return true;
    }
    return false;
  }

 private:
  std::size_t pair_of(std::size_t o, std::size_t k) const { return outer_u_ ? op_.pair(o, k) : op_.pair(k, o); }

  bool better(double cand, double cur, bool minimizing, double thr) const {
    return minimizing ? cand < cur - thr : cand > cur + thr;
  }

  double threshold(const Vec& w, std::size_t i, std::size_t p) const {
    double s = std::abs(op_.payoff(i, p)) + (lambda_ + op_.rowsum(i, p)) * std::abs(w[i]);
    for (std::size_t k = 0; k < op_.slots(); ++k) s += op_.weight(i, p, k) * std::abs(w[op_.neighbor(i, k)]);
    return 1e-13 * s;
  }

  void initial_policy(const Vec& w) {
    std::array<double, kMaxSlots> diff{};
    for (std::size_t i = 0; i < op_.nodes(); ++i) {
      op_.differences(w, i, diff.data());
      const auto c = minimax(op_.nu(), op_.nv(), outer_u_, outer_min_,
                             [&](std::size_t iu, std::size_t iv) { return op_.q(diff.data(), i, op_.pair(iu, iv)); });
      po_[i] = outer_u_ ? c.iu : c.iv;
      pi_[i] = outer_u_ ? c.iv : c.iu;
    }
  }

  // Howard iteration for the inner player with the outer policy frozen.
  bool best_response(Vec& w, SolveDiagnostics& diag) {
    const bool inner_min = !outer_min_;
    std::array<double, kMaxSlots> diff{};
    for (std::size_t it = 0; it < 1000; ++it) {
      evaluate(w);
      ++diag.linear_solves;
      bool changed = false;
      for (std::size_t i = 0; i < op_.nodes(); ++i) {
        op_.differences(w, i, diff.data());
        const std::size_t cur_p = pair_of(po_[i], pi_[i]);
        const double cur = op_.q(diff.data(), i, cur_p);
        std::size_t best_k = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < n_inner_; ++k) {
          const double q = op_.q(diff.data(), i, pair_of(po_[i], k));
          if (k == 0 || better(q, best, inner_min, 0.0)) {
            best = q;
            best_k = k;
          }
        }
        if (best_k != pi_[i] && better(best, cur, inner_min, threshold(w, i, cur_p))) {
          pi_[i] = best_k;
          changed = true;
        }
      }
      if (!changed) return true;
    }
    return false;
  }

  bool improve_outer(const Vec& w) {
    const bool inner_min = !outer_min_;
    std::array<double, kMaxSlots> diff{};
    bool changed = false;
    for (std::size_t i = 0; i < op_.nodes(); ++i) {
      op_.differences(w, i, diff.data());
      double cur = 0.0;
      std::size_t best_o = 0, best_k_for_o = 0;
      double best = 0.0;
      for (std::size_t o = 0; o < n_outer_; ++o) {
        double inner = 0.0;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < n_inner_; ++k) {
          const double q = op_.q(diff.data(), i, pair_of(o, k));
          if (k == 0 || better(q, inner, inner_min, 0.0)) {
            inner = q;
            arg = k;
          }
        }
        if (o == po_[i]) cur = inner;
        if (o == 0 || better(inner, best, outer_min_, 0.0)) {
          best = inner;
          best_o = o;
          best_k_for_o = arg;
        }
      }
      if (best_o != po_[i] && better(best, cur, outer_min_, threshold(w, i, pair_of(po_[i], pi_[i])))) {
        po_[i] = best_o;
        pi_[i] = best_k_for_o;
        changed = true;
      }
    }
    return changed;
  }

  // Solves (lambda + A_p) w_i - sum_s a_{p,s} w_{nbr(i,s)} = f_p for the current pairs.
  void evaluate(Vec& w) {
    if (op_.grid().dim() == 1) {
      evaluate_tridiagonal(w);
    } else {
      evaluate_sparse(w);
    }
  }

  void evaluate_tridiagonal(Vec& w) {
    const std::size_t n = op_.nodes();
    Vec lo(n, 0.0), di(n, 0.0), up(n, 0.0), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = pair_of(po_[i], pi_[i]);
      di[i] = lambda_ + op_.rowsum(i, p);
      rhs[i] = op_.payoff(i, p);
      for (std::size_t s = 0; s < 2; ++s) {
        const std::size_t j = op_.neighbor(i, s);
        (j < i ? lo[i] : up[i]) -= op_.weight(i, p, s);
      }
    }
    // Thomas algorithm; the system is strictly diagonally dominant.
    for (std::size_t i = 1; i < n; ++i) {
      const double m = lo[i] / di[i - 1];
      di[i] -= m * up[i - 1];
      rhs[i] -= m * rhs[i - 1];
    }
    w[n - 1] = rhs[n - 1] / di[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) w[i] = (rhs[i] - up[i] * w[i + 1]) / di[i];
  }

  void setup_sparse() {
    const std::size_t n = op_.nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * (op_.slots() + 1));
    for (std::size_t i = 0; i < n; ++i) {
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
      for (std::size_t s = 0; s < op_.slots(); ++s) {
        trip.emplace_back(static_cast<int>(i), static_cast<int>(op_.neighbor(i, s)), 0.0);
      }
    }
    matrix_.resize(static_cast<int>(n), static_cast<int>(n));
    matrix_.setFromTriplets(trip.begin(), trip.end());
    matrix_.makeCompressed();
    lu_.analyzePattern(matrix_);
  }

  void evaluate_sparse(Vec& w) {
    const std::size_t n = op_.nodes();
    Eigen::VectorXd rhs(static_cast<int>(n));
    for (int k = 0; k < matrix_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(matrix_, k); it; ++it) it.valueRef() = 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = pair_of(po_[i], pi_[i]);
      const auto ii = static_cast<int>(i);
      matrix_.coeffRef(ii, ii) += lambda_ + op_.rowsum(i, p);
      rhs[ii] = op_.payoff(i, p);
      for (std::size_t s = 0; s < op_.slots(); ++s) {
        const double a = op_.weight(i, p, s);
        if (a != 0.0) matrix_.coeffRef(ii, static_cast<int>(op_.neighbor(i, s))) -= a;
      }
    }
    lu_.factorize(matrix_);
    if (lu_.info() != Eigen::Success) throw Error("sparse LU factorization failed in policy evaluation");
    const Eigen::VectorXd sol = lu_.solve(rhs);
    for (std::size_t i = 0; i < n; ++i) w[i] = sol[static_cast<int>(i)];
  }

  const DiscreteOperator& op_;
  double lambda_;
  bool outer_u_, outer_min_;
  std::size_t n_outer_, n_inner_;
  std::vector<std::size_t> po_, pi_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

}  // namespace

DiscountedSolution solve_discounted(const DiscreteOperator& op, double lambda, Ordering ordering,
                                    const SolveOptions& options) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("discount rate lambda must be positive");
  if (!(options.tol > 0.0)) throw PreconditionError("tolerance must be positive");
  const auto start = std::chrono::steady_clock::now();
  Vec w = options.initial ? *options.initial : Vec(op.nodes(), 0.0);
  if (w.size() != op.nodes()) throw PreconditionError("initial guess has the wrong size");
  const std::size_t max_iter =
      options.max_iter > 0 ? options.max_iter
                           : static_cast<std::size_t>(std::min(1e6 / lambda, 1e12));

  SolveDiagnostics diag;
  diag.method = std::string(to_string(options.method));
  bool converged = false;
  if (options.method == SolveMethod::policy_iteration) {
    PolicyIteration pi(op, lambda, ordering);
    const bool ok = pi.run(w, 500, diag);
    converged = ok && discounted_residual(op, w, lambda, ordering) <= options.tol;
    if (!converged) {
      diag.fell_back = true;
      diag.iterations += value_iteration(op, lambda, ordering, options.tol, max_iter, false, w, converged);
    }
  } else {
    diag.iterations = value_iteration(op, lambda, ordering, options.tol, max_iter,
                                      options.method == SolveMethod::jacobi, w, converged);
  }
  GridFunction sol(op.grid(), std::move(w));
  diag.residual = discounted_residual(op, sol.values, lambda, ordering);
  diag.converged = converged && diag.residual <= options.tol;
  diag.isaacs_gap = isaacs_gap(op, sol);
  diag.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(sol), diag};
}

DiscountedSolution solve_discounted(const ProblemSpec& spec, const StateGrid& grid, double lambda, Ordering ordering,
                                    const SolveOptions& options) {
  if (!(lambda > 0.0)) throw PreconditionError("discount rate lambda must be positive");
  const DiscreteOperator op(spec, grid);
  return solve_discounted(op, lambda, ordering, options);
}

// ------------------------------------------------------------ parabolic

double max_stable_dt(const DiscreteOperator& op) noexcept {
  return op.max_rowsum() > 0.0 ? 1.0 / op.max_rowsum() : std::numeric_limits<double>::infinity();
}

const GridFunction& ParabolicSolution::at(double t) const {
  if (times.empty()) throw PreconditionError("empty parabolic solution");
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  }
  return snapshots[best];
}

ParabolicSolution solve_parabolic(const DiscreteOperator& op, const GridFunction& initial, double T, double dt,
                                  Ordering ordering, const Vec& save_times) {
  if (!(T > 0.0) || !(dt > 0.0)) throw PreconditionError("T and dt must be positive");
  if (!(initial.grid == op.grid())) throw PreconditionError("initial data lives on a different grid");
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double step = T / static_cast<double>(steps);
  const double limit = max_stable_dt(op);
  if (step > limit * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "explicit step dt = " << step << " violates the monotonicity bound dt <= " << limit;
    throw CflError(msg.str(), limit);
  }

  std::vector<std::size_t> save_steps{0, steps};
  for (double t : save_times) {
    if (t < 0.0 || t > T * (1.0 + 1e-12)) throw PreconditionError("save time outside [0, T]");
    save_steps.push_back(static_cast<std::size_t>(std::llround(t / step)));
  }
  std::sort(save_steps.begin(), save_steps.end());
  save_steps.erase(std::unique(save_steps.begin(), save_steps.end()), save_steps.end());

  ParabolicSolution out;
  out.dt = step;
  out.steps = steps;
  Vec v = initial.values, next(v.size());
  std::size_t cursor = 0;
  auto maybe_save = [&](std::size_t k) {
    while (cursor < save_steps.size() && save_steps[cursor] == k) {
      out.times.push_back(static_cast<double>(k) * step);
      out.snapshots.emplace_back(op.grid(), v);
      ++cursor;
    }
  };
  maybe_save(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    parallel_for(op.nodes(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) next[i] = v[i] + step * op.minimax_q(v, i, ordering).value;
    });
    v.swap(next);
    maybe_save(k);
  }
  out.times.back() = T;
  return out;
}

// ------------------------------------------------------------ Isaacs gap

Vec isaacs_gap_field(const DiscreteOperator& op, const GridFunction& w) {
  if (!w.all_finite()) throw PreconditionError("isaacs_gap needs a finite grid function");
  Vec gap(op.nodes());
  for (std::size_t i = 0; i < op.nodes(); ++i) {
    gap[i] = std::abs(op.minimax_q(w.values, i, Ordering::infsup).value -
                      op.minimax_q(w.values, i, Ordering::supinf).value);
  }
  return gap;
}

double isaacs_gap(const DiscreteOperator& op, const GridFunction& w) {
  const Vec g = isaacs_gap_field(op, w);
  return g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
}

}  // namespace erg
