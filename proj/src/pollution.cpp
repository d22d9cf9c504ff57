#include "erg/pollution.hpp"

#include <algorithm>
#include <cmath>

#include "erg/error.hpp"
#include "erg/sde_sim.hpp"
#include "erg/strategy.hpp"

namespace erg {

void PollutionParams::check() const {
  if (!(gamma > 0.0)) throw PreconditionError("gamma must be positive");
  if (!(a > 0.0 && a <= b)) throw PreconditionError("decay rates need 0 < a <= b");
  if (!(d > 0.0)) throw PreconditionError("d must be positive");
  if (!(g_scale > 0.0 && g_power > 0.0 && g_power < 1.0)) throw PreconditionError("g must be a concave power");
  if (u_count < 2) throw PreconditionError("u_count must be >= 2");
  if (v_count < 1) throw PreconditionError("v_count must be >= 1");
  if (nodes < 3) throw PreconditionError("nodes must be >= 3");
  if (!(box_factor >= 1.0)) throw PreconditionError("box_factor must be >= 1");
}

nlohmann::json PollutionParams::to_json() const {
  return {{"gamma", gamma},     {"a", a},           {"b", b},
          {"d", d},             {"sigma0", sigma0}, {"sigma1", sigma1},
          {"g_scale", g_scale}, {"g_power", g_power}, {"u_count", u_count},
          {"v_count", v_count}, {"nodes", nodes},   {"box_factor", box_factor}};
}

GridFunction ClosedFormSolution::w(const StateGrid& grid) const {
  return GridFunction::sample(grid, [&](std::span<const double> x) { return slope * x[0]; });
}

nlohmann::json ClosedFormSolution::to_json() const {
  return {{"rho", rho}, {"slope", slope}, {"u_star", u_star}, {"v_star", v_star}};
}

ClosedFormSolution closed_form(const PollutionParams& p) {
  p.check();
  if (!p.closed_form_variant()) throw PreconditionError("closed form needs g(u) = 2 sqrt(u)");
  const double ratio = p.a / p.d;
  const double proj = std::clamp(ratio, 0.0, std::sqrt(p.gamma));
  const double dist = ratio - proj;
  return {-(p.d / p.a) * dist * dist + ratio, -p.d / p.a, proj * proj, p.a};
}

ClosedFormSolution closed_form_on_grid(const PollutionParams& p, const ControlGrid& u_grid) {
  p.check();
  const double k = p.d / p.a;
  double best = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < u_grid.size(); ++i) {
    const double u = u_grid.scalar(i);
    const double val = p.g_scale * std::pow(u, p.g_power) - k * u;
    if (i == 0 || val > best) {
      best = val;
      arg = i;
    }
  }
  return {best, -k, u_grid.scalar(arg), p.a};
}

ProblemSpec make_pollution_spec(const PollutionParams& p) {
  p.check();
  PollutionCoefficients c;
  c.d = p.d;
  c.sigma0 = p.sigma0;
  c.sigma1 = p.sigma1;
  c.g_scale = p.g_scale;
  c.g_power = p.g_power;
  ProblemSpec spec{"pollution",
                   make_pollution(c),
                   ControlGrid::uniform(Player::u, {p.gamma / 1000.0}, {p.gamma}, {p.u_count}),
                   p.a == p.b ? ControlGrid::singleton(Player::v, {p.a})
                              : ControlGrid::uniform(Player::v, {p.a}, {p.b}, {p.v_count}),
                   Sense::maximize,
                   2.0 * p.a,
                   p.b,
                   std::abs(p.sigma1),
                   p.d,
                   std::abs(p.sigma0) + std::abs(p.sigma1),
                   Box{{0.0}, {1.0}},
                   {p.nodes},
                   Vec{0.0}};
  spec.box.upper[0] = p.box_factor * confinement_radius(spec);
  spec.check();
  return spec;
}

namespace {

nlohmann::json row(const std::string& quantity, double numeric, std::optional<double> exact, double tolerance,
                   bool passed) {
  nlohmann::json r = {{"quantity", quantity}, {"numeric", numeric}, {"tolerance", tolerance}, {"passed", passed}};
  r["exact"] = exact ? nlohmann::json(*exact) : nlohmann::json(nullptr);
  return r;
}

}  // namespace

bool PollutionReport::closed_form_passed(double rho_tol) const {
  if (!exact) return false;
  return std::abs(rho_numeric - exact->rho) <= rho_tol * std::abs(exact->rho) && u_star_within_cell && v_star_is_a;
}

nlohmann::json PollutionReport::to_json() const {
  nlohmann::json j = {{"params", params.to_json()},
                      {"rho_numeric", rho_numeric},
                      {"rho_supinf", rho_supinf},
                      {"rho_infsup", rho_infsup},
                      {"isaacs_gap", isaacs_gap},
                      {"u_cell", u_cell},
                      {"u_star_at_x0", u_star_at_x0},
                      {"u_star_max_error", u_star_max_error},
                      {"u_star_within_cell", u_star_within_cell},
                      {"v_star_is_a", v_star_is_a},
                      {"v_star_mismatches", v_star_mismatches},
                      {"slope_numeric", slope_numeric},
                      {"simulated", simulated},
                      {"table", table}};
  if (simulated) j["simulated_payoff"] = {{"mean", simulated_mean}, {"stderr", simulated_stderr}};
  if (exact) {
    j["closed_form"] = exact->to_json();
    j["closed_form_passed"] = closed_form_passed();
  }
  if (ergodic) j["ergodic"] = ergodic->to_json();
  return j;
}

PollutionReport run_pipeline(const PollutionParams& params, const PipelineConfig& cfg) {
  const ProblemSpec spec = make_pollution_spec(params);
  const StateGrid grid = StateGrid::for_spec(spec);
  const DiscreteOperator op(spec, grid);

  PollutionReport rep;
  rep.params = params;
  if (params.closed_form_variant()) rep.exact = closed_form(params);
  auto lower = vanishing_discount(op, cfg.ladder, Ordering::supinf, cfg.solve);
  const auto upper = vanishing_discount(op, cfg.ladder, Ordering::infsup, cfg.solve);
  rep.rho_supinf = lower.rho;
  rep.rho_infsup = upper.rho;
  rep.rho_numeric = lower.rho;
  rep.isaacs_gap = isaacs_gap(op, lower.w);
  rep.u_cell = spec.u_grid.cell_size();

  // Saddle candidates from the welfare ordering (consumption outer).
  auto pair = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op, lower.w, PolicyTarget::pair, Ordering::supinf));
  const std::size_t v_near_a = spec.v_grid.nearest(Vec{params.a});
  const double h = grid.h(0);
  rep.v_star_mismatches = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.coord(i, 0) > h * (1.0 + 1e-9) && pair->v_at(i) != v_near_a) ++rep.v_star_mismatches;
  }
  rep.v_star_is_a = rep.v_star_mismatches == 0;

  // Least-squares slope of w over the confinement region.
  const double R = confinement_radius(spec);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.coord(i, 0);
    if (grid.on_boundary(i) || x > R) continue;
    sx += x;
    sy += lower.w[i];
    sxx += x * x;
    sxy += x * lower.w[i];
    cnt += 1;
  }
  rep.slope_numeric = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);

  nlohmann::json& t = rep.table;
  const double cell = rep.u_cell;
  if (rep.exact) {
    const double target = rep.exact->u_star;
    const double stationary = target / params.a;
    rep.u_star_at_x0 = spec.u_grid.scalar(pair->u_at(grid.nearest(Vec{stationary})));
    rep.u_star_max_error = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid.on_boundary(i)) continue;
      rep.u_star_max_error = std::max(rep.u_star_max_error, std::abs(spec.u_grid.scalar(pair->u_at(i)) - target));
    }
    rep.u_star_within_cell = rep.u_star_max_error <= cell;
    const double rho_tol = 0.02 * std::abs(rep.exact->rho);
    t.push_back(row("rho", rep.rho_numeric, rep.exact->rho, rho_tol,
                    std::abs(rep.rho_numeric - rep.exact->rho) <= rho_tol));
    t.push_back(row("u_star", rep.u_star_at_x0, target, cell, rep.u_star_within_cell));
    t.push_back(row("v_star", spec.v_grid.scalar(v_near_a), rep.exact->v_star, 0.0, rep.v_star_is_a));
    t.push_back(row("w_slope", rep.slope_numeric, rep.exact->slope, 0.02 * std::abs(rep.exact->slope),
                    std::abs(rep.slope_numeric - rep.exact->slope) <= 0.02 * std::abs(rep.exact->slope)));
  } else {
    rep.u_star_at_x0 = spec.u_grid.scalar(pair->u_at(grid.nearest(Vec{cfg.x0})));
    t.push_back(row("rho", rep.rho_numeric, std::nullopt, 0.0, true));
    t.push_back(row("u_star", rep.u_star_at_x0, std::nullopt, cell, true));
    t.push_back(row("v_star", spec.v_grid.scalar(v_near_a), std::nullopt, 0.0, rep.v_star_is_a));
  }
  t.push_back(row("rho_infsup_minus_supinf", rep.rho_infsup - rep.rho_supinf, 0.0, 10.0 * cfg.solve.tol,
                  std::abs(rep.rho_infsup - rep.rho_supinf) <= 10.0 * cfg.solve.tol));
  t.push_back(row("isaacs_gap", rep.isaacs_gap, 0.0, 1e-10, rep.isaacs_gap <= 1e-10));

  if (cfg.simulate) {
    SimConfig sc;
    sc.dt = cfg.dt;
    sc.T = cfg.horizon;
    sc.paths = cfg.paths;
    sc.seed = cfg.seed;
    sc.record_every = sc.steps();
    const auto est = estimate_average_payoff(spec, Vec{cfg.x0}, FeedbackControl{pair}, FeedbackControl{pair}, sc);
    rep.simulated = true;
    rep.simulated_mean = est.average.mean;
    rep.simulated_stderr = est.average.stderr_;
    const double ref = rep.exact ? rep.exact->rho : rep.rho_numeric;
    t.push_back(row("closed_loop_payoff", rep.simulated_mean, ref, 3.0 * rep.simulated_stderr,
                    std::abs(rep.simulated_mean - ref) <= 3.0 * rep.simulated_stderr));
  }
  rep.ergodic = std::move(lower);
  return rep;
}

}  // namespace erg
