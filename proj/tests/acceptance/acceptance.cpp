// Acceptance criteria. Each criterion runs at its pinned tolerance and prints
// one "PASS name: ..." or "FAIL name: ..." line; the exit code is 0 iff every
// requested criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "erg/cli.hpp"
#include "erg/config.hpp"
#include "erg/ergodic.hpp"
#include "erg/hjbi.hpp"
#include "erg/pollution.hpp"
#include "erg/sde_sim.hpp"
#include "erg/smoothing.hpp"
#include "erg/strategy.hpp"
#include "support.hpp"

using namespace erg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed] ";
    }
    detail << what << "; ";
  }
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ControlProcess first_point(const ControlGrid& g) {
  const auto p = g.point(0);
  return ConstantControl{Vec(p.begin(), p.end())};
}

ControlProcess constant_at(const ControlGrid& g, double value) {
  return ConstantControl{Vec(g.dim(), value)};
}

PollutionParams pollution(double a, double d, double gamma, double b = 2.0) {
  PollutionParams p;
  p.a = a;
  p.d = d;
  p.gamma = gamma;
  p.b = std::max(a, b);
  return p;
}

void pollution_closed_form(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p1 = pollution(1.0, 1.0, 4.0);
  o.require(p1.nodes <= 2000 && p1.u_count <= 50 && p1.v_count <= 50, "grid sizes within the budget");
  const auto r1 = run_pipeline(p1, PipelineConfig{});
  o.require(std::abs(r1.rho_numeric - 1.0) <= 0.02, "(1,1,4) rho " + fmt(r1.rho_numeric) + " vs 1");
  o.require(r1.u_star_within_cell,
            "(1,1,4) max |u* - 1| " + fmt(r1.u_star_max_error) + " <= cell " + fmt(r1.u_cell));
  o.require(r1.v_star_is_a, "(1,1,4) v* = a at all y > h (" + std::to_string(r1.v_star_mismatches) + " mismatches)");
  const auto r2 = run_pipeline(pollution(2.0, 1.0, 1.0), PipelineConfig{});
  o.require(std::abs(r2.rho_numeric - 1.5) <= 0.02 * 1.5, "(2,1,1) rho " + fmt(r2.rho_numeric) + " vs 1.5");
  const double secs = seconds_since(t0);
  o.require(secs <= 300.0, "runtime " + fmt(secs) + " s");
}

void pollution_b_independence(Outcome& o) {
  PipelineConfig cfg;
  cfg.simulate = false;
  const double ref = run_pipeline(pollution(1.0, 1.0, 4.0, 2.0), cfg).rho_numeric;
  for (double b : {1.5, 2.0, 4.0}) {
    const double rho = run_pipeline(pollution(1.0, 1.0, 4.0, b), cfg).rho_numeric;
    const double rel = std::abs(rho - ref) / std::abs(ref);
    o.require(rel <= 0.005, "b=" + fmt(b) + " rho " + fmt(rho) + " rel change " + fmt(rel));
  }
}

void vanishing_discount_ou(Outcome& o) {
  const auto spec = test::ou_spec();
  const DiscreteOperator op(spec, StateGrid::for_spec(spec));
  const auto erg = vanishing_discount(op, geometric_ladder(2.0, 1, 6), Ordering::infsup);
  for (const auto& rung : erg.ladder) {
    const double oracle = test::ou_discounted_moment(rung.lambda);
    o.require(std::abs(oracle - 1.0 / (rung.lambda + 2.0)) <= 1e-8, "quadrature matches 1/(lambda+2)");
    const double rel = std::abs(rung.rho - oracle) / oracle;
    o.require(rel <= 0.02, "lambda=" + fmt(rung.lambda) + " lambda w(0) " + fmt(rung.rho) + " rel " + fmt(rel));
  }
  o.require(std::abs(erg.rho - 0.5) <= 0.02 * 0.5, "rho " + fmt(erg.rho) + " vs 0.5");
  if (erg.rho_richardson) o.detail << "richardson " << fmt(*erg.rho_richardson) << "; ";
}

void long_time_ou(Outcome& o) {
  const auto spec = test::ou_spec();
  const DiscreteOperator op(spec, StateGrid::for_spec(spec));
  const auto erg = vanishing_discount(op, default_ladder(), Ordering::infsup);
  const auto rep = long_time_check(op, erg, GridFunction(op.grid(), 0.0), {5.0, 10.0, 20.0}, 0.9 * max_stable_dt(op));
  for (const auto& row : rep.rows) {
    const double tol = 1.0 / (2.0 * row.T) + 0.03 * std::abs(erg.rho);
    o.require(row.deviation <= tol, "T=" + fmt(row.T) + " |V/T - rho| " + fmt(row.deviation) + " <= " + fmt(tol) +
                                        ", w_bound " + fmt(row.w_bound));
  }
  o.require(rep.bounded, "w_bound non-increasing within 10% slack");
}

void abelian_tauberian_registered(Outcome& o) {
  const auto specs = test::registered_specs();
  o.require(!specs.empty(), std::to_string(specs.size()) + " registered specs");
  for (const auto& path : specs) {
    const auto spec = load_spec(path);
    const DiscreteOperator op(spec, StateGrid::for_spec(spec));
    const auto erg = vanishing_discount(op, default_ladder(), Ordering::infsup);
    const auto at = abelian_tauberian_check(op, erg, {5.0, 10.0, 20.0}, 0.9 * max_stable_dt(op));
    o.require(at.passed, spec.name + " gap " + fmt(at.gap) + " <= " + fmt(at.tolerance));
  }
}

void augmentation_bound(Outcome& o) {
  const std::vector<std::pair<std::string, ProblemSpec>> specs = {{"ou", test::ou_spec()},
                                                                  {"pollution", make_pollution_spec(PollutionParams{})}};
  for (const auto& [label, spec] : specs) {
    for (double r : {0.05, 0.1, 0.2}) {
      SimConfig cfg;
      cfg.T = 10.0;
      cfg.dt = 0.01;
      cfg.paths = 10000;
      cfg.r = r;
      cfg.seed = 11;
      const auto t0 = std::chrono::steady_clock::now();
      const auto u = spec.sense == Sense::maximize ? constant_at(spec.u_grid, 1.0) : first_point(spec.u_grid);
      const auto v = spec.sense == Sense::maximize ? constant_at(spec.v_grid, 1.0) : first_point(spec.v_grid);
      const auto rep = augmentation_check(spec, Vec(spec.state_dim(), 1.0), u, v, cfg);
      const double secs = seconds_since(t0);
      o.require(rep.passed, label + " r=" + fmt(r) + " max E|X^r-X|^2 " +
                                fmt(*std::max_element(rep.mean_gap_squared.begin(), rep.mean_gap_squared.end())) +
                                " bound " + fmt(rep.bound));
      o.require(secs <= 60.0, label + " r=" + fmt(r) + " runtime " + fmt(secs) + " s");
    }
  }
}

void density_bound_criterion(Outcome& o) {
  const auto spec = test::ou_spec();
  o.require(spec.state_dim() == 1 && spec.K == 2.0, "n = 1, K = 2");
  std::vector<Box> cells;
  for (double c : {-1.0, -0.3, 0.0, 0.25, 0.6, 1.5}) cells.push_back(Box{{c - 0.05}, {c + 0.05}});
  for (double s : {0.5, 1.0, 2.0}) {
    SimConfig cfg;
    cfg.dt = 0.01;
    cfg.paths = 100000;
    cfg.r = 0.5;
    cfg.seed = 17;
    const auto reps =
        density_bound_check(spec, Vec{0.0}, first_point(spec.u_grid), first_point(spec.v_grid), cfg, cells, s);
    double worst = 0.0;
    bool ok = true;
    for (const auto& rep : reps) {
      ok = ok && rep.passed;
      worst = std::max(worst, rep.wilson_upper / rep.bound);
    }
    o.require(ok, "s=" + fmt(s) + " worst Wilson upper / bound " + fmt(worst));
  }
}

void contraction(Outcome& o) {
  struct Case {
    std::string label;
    ProblemSpec spec;
    Vec x0, y0;
  };
  const std::vector<Case> cases = {{"ou", test::ou_spec(), {-2.0}, {2.0}},
                                   {"pollution", make_pollution_spec(PollutionParams{}), {0.5}, {3.0}}};
  for (const auto& c : cases) {
    SimConfig cfg;
    cfg.dt = 0.01;
    cfg.T = 4.0;
    cfg.paths = 2000;
    cfg.seed = 5;
    const auto hold = static_cast<std::size_t>(std::round(0.5 / cfg.dt));
    const ControlProcess u = random_piecewise_constant(c.spec.u_grid.size(), cfg.steps(), hold, cfg.seed, 1);
    const ControlProcess v = random_piecewise_constant(c.spec.v_grid.size(), cfg.steps(), hold, cfg.seed, 2);
    const auto rep = contraction_check(c.spec, c.x0, c.y0, u, v, cfg, 0.1);
    o.require(!rep.inconclusive && rep.fitted_slope <= -rep.rate + 0.1,
              c.label + " slope " + fmt(rep.fitted_slope) + " <= " + fmt(-rep.rate + 0.1));
  }
}

void isaacs_value_equality(Outcome& o) {
  PipelineConfig cfg;
  cfg.simulate = false;
  const auto rep = run_pipeline(PollutionParams{}, cfg);
  const double tol = 10.0 * cfg.solve.tol;
  o.require(std::abs(rep.rho_infsup - rep.rho_supinf) <= tol,
            "pollution |rho_infsup - rho_supinf| " + fmt(std::abs(rep.rho_infsup - rep.rho_supinf)));
  o.require(rep.isaacs_gap <= 1e-10, "pollution isaacs_gap " + fmt(rep.isaacs_gap));

  const auto uv = test::load("uv_gap");
  const DiscreteOperator op(uv, StateGrid::for_spec(uv));
  const auto hi = vanishing_discount(op, default_ladder(), Ordering::infsup);
  const auto lo = vanishing_discount(op, default_ladder(), Ordering::supinf);
  const double gap = isaacs_gap(op, hi.w);
  o.require(std::abs(gap - 2.0) <= 1e-10, "uv isaacs_gap " + fmt(gap));
  o.require(hi.rho >= lo.rho && hi.rho - lo.rho > tol,
            "uv rho_infsup " + fmt(hi.rho) + " > rho_supinf " + fmt(lo.rho));
}

void theta_envelope(Outcome& o) {
  const auto spec = make_pollution_spec(PollutionParams{});
  const DiscreteOperator op(spec, StateGrid::for_spec(spec));
  const auto erg = vanishing_discount(op, default_ladder(), Ordering::supinf);
  auto outer = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op, erg.w, PolicyTarget::outer, Ordering::supinf));
  auto response = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op, erg.w, PolicyTarget::response, Ordering::supinf));
  o.require(outer->player == Player::u, "outer strategy controls consumption");
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 100.0;
  cfg.paths = 200;
  cfg.seed = 23;
  const auto panel = opponent_panel(spec, Player::v, cfg, response, 10);
  const auto rep = envelope_study(spec, Vec{1.0}, outer, erg.rho, {1.0, 0.5, 0.25}, panel, cfg);
  o.detail << "panel " << panel.size() << ", C_env " << fmt(rep.C_env) << "; ";
  for (const auto& row : rep.rows) {
    o.require(row.within_envelope, "theta=" + fmt(row.theta) + " worst gap " + fmt(row.worst_gap) + " +- " +
                                       fmt(row.worst_gap_se) + " vs " + row.worst_opponent);
  }
  o.require(rep.gap_monotone, "worst gap non-increasing in theta within 3 stderr");
}

// Fine grid: 2 nodes - 1 with dt_fine = 0.9 of its stability bound; the coarse
// run uses twice that step.
struct DppPair {
  double coarse = 0.0, fine = 0.0;
};

DppPair dpp_halving(const ProblemSpec& coarse_spec, const ProblemSpec& fine_spec,
                    const std::function<ErgodicSolution(const StateGrid&)>& reference, double T) {
  const DiscreteOperator coarse(coarse_spec, StateGrid::for_spec(coarse_spec));
  const DiscreteOperator fine(fine_spec, StateGrid::for_spec(fine_spec));
  const double dt_fine = 0.9 * max_stable_dt(fine);
  return {dpp_check(coarse, reference(coarse.grid()), T, 2.0 * dt_fine).distance,
          dpp_check(fine, reference(fine.grid()), T, dt_fine).distance};
}

void halving(Outcome& o, const std::string& label, DppPair d, double rho, double T, std::size_t steps) {
  // Below this the distance is rounding in the time march, not scheme error.
  const double floor = 1e-12 * (1.0 + std::abs(rho) * T) * static_cast<double>(steps);
  const bool at_floor = d.coarse <= floor;
  o.require(at_floor || d.fine <= 0.5 * d.coarse,
            label + " reference distance " + fmt(d.coarse) + " -> " + fmt(d.fine) +
                (at_floor ? " (rounding floor)" : " ratio " + fmt(d.fine / d.coarse)));
}

void dynamic_programming(Outcome& o) {
  const double T = 1.0;
  {
    const auto spec = test::ou_spec();
    const DiscreteOperator op(spec, StateGrid::for_spec(spec));
    const auto erg = vanishing_discount(op, default_ladder(), Ordering::infsup);
    const auto rep = dpp_check(op, erg, T, 0.9 * max_stable_dt(op));
    o.require(rep.relative <= 0.02, "ou distance / |w|_sup " + fmt(rep.relative));
    const auto ref = [](const StateGrid& g) {
      return reference_solution(
          0.5, GridFunction::sample(g, [](std::span<const double> x) { return 0.5 * x[0] * x[0]; }),
          Ordering::infsup);
    };
    const auto fine = test::ou_spec(-5.0, 5.0, 401);
    const DiscreteOperator fop(fine, StateGrid::for_spec(fine));
    halving(o, "ou", dpp_halving(test::ou_spec(-5.0, 5.0, 201), fine, ref, T),
            0.5, T, static_cast<std::size_t>(T / (0.9 * max_stable_dt(fop))));
  }
  {
    PollutionParams p;
    const auto spec = make_pollution_spec(p);
    const DiscreteOperator op(spec, StateGrid::for_spec(spec));
    const auto erg = vanishing_discount(op, default_ladder(), Ordering::supinf);
    const auto rep = dpp_check(op, erg, T, 0.9 * max_stable_dt(op));
    o.require(rep.relative <= 0.02, "pollution distance / |w|_sup " + fmt(rep.relative));
    const auto exact = closed_form_on_grid(p, spec.u_grid);
    const auto ref = [&](const StateGrid& g) { return reference_solution(exact.rho, exact.w(g), Ordering::supinf); };
    PollutionParams pc = p, pf = p;
    pc.nodes = 201;
    pf.nodes = 401;
    const auto fine = make_pollution_spec(pf);
    const DiscreteOperator fop(fine, StateGrid::for_spec(fine));
    halving(o, "pollution", dpp_halving(make_pollution_spec(pc), fine, ref, T), exact.rho, T,
            static_cast<std::size_t>(T / (0.9 * max_stable_dt(fop))));
  }
}

void smoothing_suite(Outcome& o) {
  const auto spec = test::ou_spec();
  const DiscreteOperator op(spec, StateGrid::for_spec(spec));
  const auto erg = vanishing_discount(op, default_ladder(), Ordering::infsup);
  const GridFunction& w = erg.w;
  const double M = w.lipschitz(), h = w.grid.h(0);
  const Vec eps_list{0.2, 0.1, 0.05};
  std::vector<GridFunction> defects;
  std::vector<bool> common(w.size(), true);
  for (double eps : eps_list) {
    const auto conv = sup_convolve(w, eps);
    const double margin = semiconvexity_margin(conv);
    o.require(margin >= -1e-9, "eps=" + fmt(eps) + " semiconvexity margin " + fmt(margin));
    const double bound = M * M * eps / 2.0 + h * M;
    o.require(conv.sup_gap <= bound, "eps=" + fmt(eps) + " sup gap " + fmt(conv.sup_gap) + " <= " + fmt(bound));
    const auto mol = mollify(conv.values, eps);
    o.require(!mol.near_identity, "delta=" + fmt(eps) + " averages over several nodes");
    const auto mask = conv.interior_mask();
    for (std::size_t i = 0; i < w.size(); ++i) common[i] = common[i] && mask[i] && !mol.boundary_band[i];
    defects.push_back(subsolution_defect(op, mol.values, erg.rho, Ordering::infsup));
  }
  double prev = 0.0;
  for (std::size_t k = 0; k < defects.size(); ++k) {
    const double d = normalized_positive_defect(defects[k], common);
    if (k > 0) {
      o.require(d <= 0.5 * prev, "(eps,delta)=" + fmt(eps_list[k]) + " defect " + fmt(d) + " ratio " + fmt(d / prev));
    } else {
      o.detail << "(eps,delta)=" << fmt(eps_list[k]) << " defect " << fmt(d) << "; ";
    }
    prev = d;
  }
}

// --------------------------------------------------------------- CLI

nlohmann::json run_cli(const std::vector<std::string>& args, const fs::path& dir, const std::string& workers,
                       int& code) {
  setenv("ERG_WORKERS", workers.c_str(), 1);
  fs::remove_all(dir);
  std::vector<std::string> full = args;
  full.insert(full.end(), {"--out", dir.string(), "--seed", "3"});
  std::ostringstream out, err;
  code = cli::dispatch(full, out, err);
  unsetenv("ERG_WORKERS");
  if (!fs::exists(dir / "manifest.json")) return nullptr;
  std::ifstream in(dir / "manifest.json");
  return nlohmann::json::parse(in)["outputs"];
}

void cli_determinism(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "erg_acceptance_cli";
  fs::remove_all(root);
  const std::string tracking = (test::spec_dir() / "tracking_game.yaml").string();
  const std::string pol_spec = (test::spec_dir() / "pollution.yaml").string();
  const std::string ou = (test::spec_dir() / "ou_quadratic.yaml").string();

  // Inputs for the commands that consume earlier outputs.
  int code = 0;
  const fs::path prep = root / "prep";
  run_cli({"ergodic", "--spec", pol_spec, "--ordering", "supinf"}, prep, "1", code);
  o.require(code == 0, "ergodic inputs prepared");
  const fs::path prep_w = root / "prep_w";
  run_cli({"ergodic", "--spec", ou}, prep_w, "1", code);

  const std::vector<std::vector<std::string>> commands = {
      {"validate", "--spec", tracking},
      {"simulate", "--spec", tracking, "--x0", "1", "--T", "2", "--paths", "300", "--r", "0.1", "--discount", "0.5"},
      {"solve-discounted", "--spec", tracking, "--lambda", "0.25", "--method", "jacobi"},
      {"solve-parabolic", "--spec", tracking, "--T", "1"},
      {"ergodic", "--spec", (test::spec_dir() / "uv_gap.yaml").string(), "--ordering", "both"},
      {"evaluate", "--spec", pol_spec, "--policy", (prep / "policy_outer.json").string(), "--adversary",
       (prep / "policy_response.json").string(), "--theta", "0.5", "--T", "5", "--paths", "40", "--x0", "1",
       "--random-count", "3"},
      {"smooth", "--in", (prep_w / "w.csv").string(), "--eps", "0.1", "--delta", "0.1", "--spec", ou, "--rho", "0.5"},
      {"pollution", "--paths", "40", "--T", "5"},
      {"report", "--spec", tracking, "--T-list", "2", "4", "--samples", "300"},
  };
  for (const auto& cmd : commands) {
    const fs::path dir = root / cmd[0];
    int c1 = 0, c2 = 0, c3 = 0;
    const auto a = run_cli(cmd, dir, "1", c1);
    const auto b = run_cli(cmd, dir, "1", c2);
    const auto c = run_cli(cmd, dir, "3", c3);
    const bool ok = !a.is_null() && a == b && a == c && c1 == c2 && c1 == c3 && c1 != 2;
    o.require(ok, cmd[0] + " (" + std::to_string(a.is_null() ? 0 : a.size()) + " outputs, exit " +
                      std::to_string(c1) + ")");
  }
  fs::remove_all(root);
}

const std::vector<std::pair<std::string, std::function<void(Outcome&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> list = {
      {"pollution_closed_form", pollution_closed_form},
      {"pollution_b_independence", pollution_b_independence},
      {"vanishing_discount_ou", vanishing_discount_ou},
      {"long_time_ou", long_time_ou},
      {"abelian_tauberian_registered", abelian_tauberian_registered},
      {"augmentation_bound", augmentation_bound},
      {"density_bound", density_bound_criterion},
      {"contraction", contraction},
      {"isaacs_value_equality", isaacs_value_equality},
      {"theta_envelope", theta_envelope},
      {"dynamic_programming", dynamic_programming},
      {"smoothing_suite", smoothing_suite},
      {"cli_determinism", cli_determinism},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty() || (wanted.size() == 1 && wanted[0] == "all")) {
    wanted.clear();
    for (const auto& [name, fn] : criteria()) wanted.push_back(name);
  }
  bool all = true;
  for (const auto& name : wanted) {
    const auto it = std::find_if(criteria().begin(), criteria().end(), [&](const auto& c) { return c.first == name; });
    if (it == criteria().end()) {
      std::cerr << "unknown criterion " << name << '\n';
      return 2;
    }
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      it->second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what() << "; ";
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << "(" << fmt(seconds_since(t0))
              << " s)" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
