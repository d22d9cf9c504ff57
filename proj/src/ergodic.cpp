#include "erg/ergodic.hpp"

#include <algorithm>
#include <cmath>

#include "erg/error.hpp"

namespace erg {

Ladder default_ladder() { return geometric_ladder(2.0, 1, 8); }

Ladder geometric_ladder(double base, int first, int last) {
  if (!(base > 1.0) || last < first) throw PreconditionError("geometric ladder needs base > 1 and last >= first");
  Ladder out;
  for (int k = first; k <= last; ++k) out.push_back(std::pow(base, -k));
  return out;
}

namespace {

GridFunction normalized(const GridFunction& w) {
  GridFunction phi = w;
  const double anchor = w[w.grid.origin_index()];
  for (double& v : phi.values) v -= anchor;
  return phi;
}

void finalize(ErgodicSolution& sol) {
  const auto& L = sol.ladder;
  const std::size_t m = L.size();
  sol.rho = L.back().rho;
  sol.tail_increment = m >= 2 ? std::abs(L[m - 1].rho - L[m - 2].rho) : 0.0;
  if (m >= 2) sol.rho_richardson = 2.0 * L[m - 1].rho - L[m - 2].rho;
  if (m >= 3) {
    const double inc_prev = std::abs(L[m - 2].rho - L[m - 3].rho);
    sol.cauchy = sol.tail_increment <= inc_prev * (1.0 + 1e-9) + 1e-14;
  }
  double lmax = 0.0, earlier = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    lmax = std::max(lmax, L[k].lipschitz);
    if (k + 1 < m) earlier = std::max(earlier, L[k].lipschitz);
  }
  sol.lipschitz_bound = lmax;
  sol.lipschitz_growth = m >= 2 && earlier > 0.0 ? L.back().lipschitz / earlier - 1.0 : 0.0;
  double growth = 0.0;
  const std::size_t anchor = sol.w.grid.origin_index();
  for (std::size_t i = 0; i < sol.w.size(); ++i) {
    const double r = sol.w.grid.norm(i);
    if (i != anchor && r > 0.0) growth = std::max(growth, std::abs(sol.w[i]) / r);
  }
  sol.growth_constant = growth;
}

}  // namespace

ErgodicSolution vanishing_discount(const DiscreteOperator& op, const Ladder& ladder, Ordering ordering,
                                   const SolveOptions& options) {
  if (ladder.empty()) throw PreconditionError("ladder must not be empty");
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (!(ladder[k] > 0.0)) throw PreconditionError("ladder entries must be positive");
    if (k > 0 && !(ladder[k] < ladder[k - 1])) throw PreconditionError("ladder must be strictly decreasing");
  }
  const std::size_t anchor = op.grid().origin_index();
  ErgodicSolution sol{0.0, GridFunction(op.grid(), 0.0), ordering};
  std::optional<GridFunction> prev_phi;
  SolveOptions opts = options;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const double lambda = ladder[k];
    auto res = solve_discounted(op, lambda, ordering, opts);
    LadderRung rung;
    rung.lambda = lambda;
    rung.rho = lambda * res.w[anchor];
    GridFunction phi = normalized(res.w);
    rung.lipschitz = phi.lipschitz();
    rung.phi_increment = prev_phi ? sup_distance(phi, *prev_phi) : 0.0;
    rung.diagnostics = res.diagnostics;
    sol.all_converged = sol.all_converged && res.diagnostics.converged;
    sol.ladder.push_back(rung);
    // Warm start: rho_lambda / lambda' + phi approximates the next solution.
    if (k + 1 < ladder.size()) {
      Vec guess = phi.values;
      for (double& v : guess) v += rung.rho / ladder[k + 1];
      opts.initial = std::move(guess);
    }
    prev_phi = std::move(phi);
  }
  sol.w = std::move(*prev_phi);
  finalize(sol);
  return sol;
}

ErgodicSolution reference_solution(double rho, GridFunction w, Ordering ordering) {
  ErgodicSolution sol{rho, std::move(w), ordering};
  LadderRung rung;
  rung.rho = rho;
  rung.lipschitz = sol.w.lipschitz();
  sol.ladder.push_back(rung);
  finalize(sol);
  sol.rho_richardson.reset();
  return sol;
}

nlohmann::json ErgodicSolution::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : ladder) {
    rows.push_back({{"lambda", r.lambda},
                    {"rho", r.rho},
                    {"lipschitz", r.lipschitz},
                    {"phi_increment", r.phi_increment},
                    {"solver", r.diagnostics.to_json()}});
  }
  nlohmann::json j{{"rho", rho},
                   {"ordering", std::string(to_string(ordering))},
                   {"tail_increment", tail_increment},
                   {"cauchy", cauchy},
                   {"lipschitz_bound", lipschitz_bound},
                   {"lipschitz_growth", lipschitz_growth},
                   {"growth_constant", growth_constant},
                   {"all_converged", all_converged},
                   {"ladder", rows}};
  j["rho_richardson_extrapolated"] = rho_richardson ? nlohmann::json(*rho_richardson) : nlohmann::json();
  return j;
}

// ------------------------------------------------------------ long time

namespace {

double weighted_deviation(const GridFunction& V, const GridFunction& w, double rho, double T) {
  double m = 0.0;
  for (std::size_t i = 0; i < V.size(); ++i) {
    m = std::max(m, std::abs(V[i] - rho * T - w[i]) / (1.0 + V.grid.norm(i)));
  }
  return m;
}

}  // namespace

LongTimeReport long_time_check(const DiscreteOperator& op, const ErgodicSolution& ergodic, const GridFunction& initial,
                               const Vec& T_list, double dt, double slack) {
  if (T_list.empty()) throw PreconditionError("T_list must not be empty");
  if (!std::is_sorted(T_list.begin(), T_list.end())) throw PreconditionError("T_list must be increasing");
  const double T_max = T_list.back();
  const auto par = solve_parabolic(op, initial, T_max, dt, ergodic.ordering, T_list);
  LongTimeReport rep;
  rep.dt = par.dt;
  rep.slack = slack;
  const std::size_t anchor = op.grid().origin_index();
  for (double T : T_list) {
    const GridFunction& V = par.at(T);
    LongTimeRow row;
    row.T = T;
    row.value_at_origin = V[anchor] / T;
    row.deviation = std::abs(row.value_at_origin - ergodic.rho);
    row.w_bound = weighted_deviation(V, ergodic.w, ergodic.rho, T);
    rep.rows.push_back(row);
  }
  rep.bounded = true;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    // Rounding in V(T) accumulates like eps * rho T * steps; ignore growth below that.
    const double floor = 1e-9 * (1.0 + std::abs(ergodic.rho) * rep.rows[k].T);
    if (rep.rows[k].w_bound > (1.0 + slack) * rep.rows[k - 1].w_bound + floor) rep.bounded = false;
  }
  return rep;
}

nlohmann::json LongTimeReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_j.push_back(
        {{"T", r.T}, {"V_over_T_at_origin", r.value_at_origin}, {"deviation", r.deviation}, {"w_bound", r.w_bound}});
  }
  return {{"dt", dt}, {"bounded", bounded}, {"slack", slack}, {"rows", rows_j}};
}

// ------------------------------------------------------------ Abelian-Tauberian

AbelianTauberianReport abelian_tauberian_check(const DiscreteOperator& op, const ErgodicSolution& ergodic,
                                               const Vec& T_list, double dt) {
  const GridFunction zero(op.grid(), 0.0);
  const auto lt = long_time_check(op, ergodic, zero, T_list, dt);
  AbelianTauberianReport rep;
  rep.lambda_side = ergodic.rho;
  rep.time_side = lt.rows.back().value_at_origin;
  rep.gap = std::abs(rep.lambda_side - rep.time_side);
  rep.tail_increment = ergodic.tail_increment;
  rep.T_max = T_list.back();
  rep.tolerance = 5.0 * std::max(rep.tail_increment, 1.0 / rep.T_max);
  rep.passed = rep.gap <= rep.tolerance;
  rep.time_rows = lt.rows;
  for (const auto& r : ergodic.ladder) rep.lambda_rows.emplace_back(r.lambda, r.rho);
  return rep;
}

AbelianTauberianReport abelian_tauberian_check(const DiscreteOperator& op, const Ladder& ladder, const Vec& T_list,
                                               Ordering ordering, double dt, const SolveOptions& options) {
  const auto erg = vanishing_discount(op, ladder, ordering, options);
  return abelian_tauberian_check(op, erg, T_list, dt);
}

nlohmann::json AbelianTauberianReport::to_json() const {
  nlohmann::json lam = nlohmann::json::array();
  for (const auto& [l, r] : lambda_rows) lam.push_back({{"lambda", l}, {"rho_lambda", r}});
  nlohmann::json tim = nlohmann::json::array();
  for (const auto& r : time_rows) tim.push_back({{"T", r.T}, {"V_over_T", r.value_at_origin}});
  return {{"lambda_side", lambda_side}, {"time_side", time_side}, {"gap", gap},        {"tail_increment", tail_increment},
          {"T_max", T_max},             {"tolerance", tolerance}, {"passed", passed}, {"lambda_rows", lam},
          {"time_rows", tim}};
}

// ------------------------------------------------------------ DPP

DppReport dpp_check(const DiscreteOperator& op, const ErgodicSolution& ergodic, double T, double dt,
                    const DppOptions& options) {
  if (!(ergodic.w.grid == op.grid())) throw PreconditionError("ergodic solution lives on a different grid");
  const auto par = solve_parabolic(op, ergodic.w, T, dt, ergodic.ordering);
  const GridFunction& V = par.snapshots.back();
  DppReport rep;
  rep.T = T;
  rep.dt = par.dt;
  rep.h = op.grid().h_max();
  rep.band = options.band >= 0.0 ? options.band : 3.0 * op.spec().sigma_bound * std::sqrt(T);
  for (std::size_t i = 0; i < V.size(); ++i) {
    if (op.grid().distance_to_boundary(i) < rep.band - 1e-12) continue;
    ++rep.assessed_nodes;
    rep.distance = std::max(rep.distance, std::abs(V[i] - ergodic.rho * T - ergodic.w[i]));
    rep.w_sup = std::max(rep.w_sup, std::abs(ergodic.w[i]));
  }
  if (rep.assessed_nodes == 0) throw PreconditionError("boundary band leaves no node to assess");
  rep.relative = rep.w_sup > 0.0 ? rep.distance / rep.w_sup : rep.distance;
  rep.c_budget = options.c_budget >= 0.0 ? options.c_budget : rep.w_sup;
  rep.budget = (rep.h + rep.dt) * rep.c_budget;
  return rep;
}

nlohmann::json DppReport::to_json() const {
  return {{"T", T},           {"dt", dt},         {"h", h},
          {"distance", distance}, {"w_sup", w_sup}, {"relative", relative},
          {"budget", budget}, {"c_budget", c_budget}, {"within_budget", within_budget()},
          {"band", band},     {"assessed_nodes", assessed_nodes}};
}

// ------------------------------------------------------------ uniqueness

UniquenessReport uniqueness_probe(const DiscreteOperator& op, const Ladder& ladder_a, const Ladder& ladder_b,
                                  Ordering ordering, double initial_a, double initial_b, const SolveOptions& options) {
  // A tilted plane so that the two starts also induce different initial policies.
  auto start = [&](double c) {
    Vec g(op.nodes());
    for (std::size_t i = 0; i < op.nodes(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < op.grid().dim(); ++k) s += op.grid().coord(i, k);
      g[i] = c * (1.0 + s);
    }
    return g;
  };
  SolveOptions oa = options, ob = options;
  oa.initial = start(initial_a);
  ob.initial = start(initial_b);
  const auto a = vanishing_discount(op, ladder_a, ordering, oa);
  const auto b = vanishing_discount(op, ladder_b, ordering, ob);
  UniquenessReport rep;
  rep.rho_a = a.rho;
  rep.rho_b = b.rho;
  rep.rho_gap = std::abs(a.rho - b.rho);
  rep.tolerance = a.tail_increment + b.tail_increment + 10.0 * options.tol;
  rep.w_gap = sup_distance(a.w, b.w);
  rep.passed = rep.rho_gap <= rep.tolerance;
  return rep;
}

nlohmann::json UniquenessReport::to_json() const {
  return {{"rho_a", rho_a}, {"rho_b", rho_b},   {"rho_gap", rho_gap},
          {"tolerance", tolerance}, {"w_gap", w_gap}, {"passed", passed}};
}

}  // namespace erg
