#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "erg/config.hpp"
#include "erg/error.hpp"
#include "erg/pollution.hpp"
#include "erg/strategy.hpp"
#include "support.hpp"

using namespace erg;

namespace {

SimConfig config(double T, double dt, std::size_t paths, std::uint64_t seed = 1) {
  SimConfig c;
  c.T = T;
  c.dt = dt;
  c.paths = paths;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("pollution closed-form corrector yields the closed-form controls") {
  PollutionParams p;
  const auto spec = make_pollution_spec(p);
  const DiscreteOperator op(spec, StateGrid::for_spec(spec));
  const auto exact = closed_form(p);
  const auto w = exact.w(op.grid());
  const auto pol = extract_feedback(op, w, PolicyTarget::pair, Ordering::supinf);
  const std::size_t va = spec.v_grid.nearest(Vec{p.a});
  for (std::size_t i = 0; i < op.nodes(); ++i) {
    if (op.grid().coord(i, 0) <= 0.0) continue;
    CHECK(std::abs(spec.u_grid.scalar(pol.u_at(i)) - exact.u_star) <= spec.u_grid.cell_size());
    CHECK(pol.v_at(i) == va);
  }
}

TEST_CASE("degenerate minimax picks index 0") {
  const auto spec = test::constant_payoff_spec(1.0);
  const auto g = StateGrid::for_spec(spec);
  const GridFunction w = GridFunction::sample(g, [](std::span<const double> x) { return x[0] * x[0]; });
  for (const auto t : {PolicyTarget::outer, PolicyTarget::response, PolicyTarget::pair}) {
    const auto pol = extract_feedback(spec, w, t, Ordering::infsup);
    for (std::size_t k : pol.index) CHECK(k == 0);
  }
  const auto ou = test::ou_spec(-3.0, 3.0, 61);
  const auto single = extract_feedback(ou, GridFunction(StateGrid::for_spec(ou), 0.0), PolicyTarget::outer,
                                       Ordering::infsup);
  for (std::size_t k : single.index) CHECK(k == 0);
}

TEST_CASE("joint scaling of w and f leaves the argmin/argmax unchanged") {
  const auto spec = test::load("tracking_game");
  const auto grid = StateGrid::for_spec(spec);
  const auto sol = solve_discounted(spec, grid, 0.25, Ordering::infsup);
  GridFunction scaled = sol.w;
  for (double& v : scaled.values) v *= 3.0;
  const auto spec3 = with_payoff_scale(spec, 3.0);
  for (const auto t : {PolicyTarget::outer, PolicyTarget::response, PolicyTarget::pair}) {
    CHECK(extract_feedback(spec, sol.w, t, Ordering::infsup).index ==
          extract_feedback(spec3, scaled, t, Ordering::infsup).index);
  }
}

TEST_CASE("frozen controls only see the state at the last freeze time") {
  const auto spec = test::load("tracking_game");
  const auto grid = StateGrid::for_spec(spec);
  const auto sol = solve_discounted(spec, grid, 0.25, Ordering::infsup);
  auto pol = std::make_shared<const FeedbackPolicy>(extract_feedback(spec, sol.w, PolicyTarget::outer,
                                                                     Ordering::infsup));
  const double theta = 0.2, dt = 0.01;
  const std::size_t per = static_cast<std::size_t>(std::round(theta / dt));
  auto cfg = config(2.0, dt, 16, 3);
  cfg.record_every = 1;
  const ControlProcess u{PiecewiseFrozenFeedback{theta, pol}};
  const ControlProcess v{ConstantControl{{0.5}}};
  const auto base = simulate(spec, {2.0}, u, v, cfg);
  for (std::size_t i = 1; i < 9; ++i) {
    auto perturbed = cfg;
    const std::size_t k0 = i * per;
    perturbed.increment_hook = [k0](std::size_t, std::size_t step, std::span<double> z) {
      if (step >= k0) {
        for (double& x : z) x = -x - 2.0;
      }
    };
    const auto alt = simulate(spec, {2.0}, u, v, perturbed);
    for (std::size_t p = 0; p < cfg.paths; ++p) {
      for (std::size_t k = 0; k < k0 + per; ++k) {
        CHECK(alt.u_values[p * base.records() + k] == base.u_values[p * base.records() + k]);
      }
    }
    // Later blocks do react to the perturbation somewhere.
    bool differs = false;
    for (std::size_t p = 0; p < cfg.paths; ++p) {
      for (std::size_t k = k0 + per; k < base.steps; ++k) {
        differs = differs || alt.u_values[p * base.records() + k] != base.u_values[p * base.records() + k];
      }
    }
    CHECK(differs);
  }
}

TEST_CASE("constant payoff games return c for every theta and opponent") {
  const auto spec = test::constant_payoff_spec(2.25);
  const auto grid = StateGrid::for_spec(spec);
  auto pol = std::make_shared<const FeedbackPolicy>(
      extract_feedback(spec, GridFunction(grid, 0.0), PolicyTarget::outer, Ordering::infsup));
  const auto cfg = config(5.0, 0.01, 20);
  for (double theta : {1.0, 0.25, 0.01}) {
    for (const auto& opp : opponent_panel(spec, Player::v, cfg, nullptr, 3)) {
      const auto g = play_theta_game(spec, {0.5}, ThetaStrategy{theta, pol, std::nullopt}, opp.process, cfg);
      CHECK(g.mean == 2.25);
      CHECK(g.stderr_ == 0.0);
    }
  }
}

TEST_CASE("theta must be a multiple of dt") {
  const auto spec = test::constant_payoff_spec(1.0);
  const auto grid = StateGrid::for_spec(spec);
  auto pol = std::make_shared<const FeedbackPolicy>(
      extract_feedback(spec, GridFunction(grid, 0.0), PolicyTarget::outer, Ordering::infsup));
  CHECK_THROWS_AS((void)play_theta_game(spec, {0.0}, ThetaStrategy{0.015, pol, std::nullopt},
                                        ControlProcess{ConstantControl{{0.0}}}, config(1.0, 0.01, 2)),
                  PreconditionError);
}

TEST_CASE("pollution consumption feedback against the most favourable decay") {
  PollutionParams p;
  PipelineConfig pc;
  pc.simulate = false;
  const auto rep = run_pipeline(p, pc);
  const auto spec = make_pollution_spec(p);
  auto pol = std::make_shared<const FeedbackPolicy>(
      extract_feedback(spec, rep.ergodic->w, PolicyTarget::outer, Ordering::supinf));
  CHECK(pol->player == Player::u);
  // Oracle: sweep constant decay rates; the worst one is v = a.
  auto cfg = config(100.0, 0.01, 200, 9);
  double worst = 1e300;
  std::size_t worst_index = 0;
  for (std::size_t k = 0; k < spec.v_grid.size(); k += 5) {
    const auto g = play_theta_game(spec, {1.0}, ThetaStrategy{0.01, pol, std::nullopt},
                                   ControlProcess{ConstantControl{{spec.v_grid.scalar(k)}}}, cfg);
    CHECK(g.mean >= 1.0 - 3.0 * g.stderr_);
    if (g.mean < worst) {
      worst = g.mean;
      worst_index = k;
    }
  }
  CHECK(worst_index == 0);
}

TEST_CASE("OU payoffs do not depend on the initial state") {
  const auto spec = test::ou_spec(-4.0, 4.0, 161);
  auto pol = std::make_shared<const FeedbackPolicy>(extract_feedback(
      spec, GridFunction(StateGrid::for_spec(spec), 0.0), PolicyTarget::outer, Ordering::infsup));
  const auto cfg = config(100.0, 0.01, 1000, 4);
  for (double x0 : {-1.0, 0.0, 1.0}) {
    const auto g = play_theta_game(spec, {x0}, ThetaStrategy{0.5, pol, std::nullopt},
                                   ControlProcess{ConstantControl{{0.0}}}, cfg);
    // Euler bias (dt / 4) and the transient (|x0^2 - 1/2| / 2T) on top of 3 SE.
    CHECK(std::abs(g.mean - 0.5) <= 3.0 * g.stderr_ + 0.0025 + std::abs(x0 * x0 - 0.5) / 200.0);
  }
}

TEST_CASE("envelope helpers") {
  CHECK(theta_width(0.25) == doctest::Approx(0.75));
  double prev = 1e9;
  for (double t : {1.0, 0.5, 0.25, 0.125}) {
    CHECK(theta_width(t) < prev);
    prev = theta_width(t);
  }
  const auto pol_spec = test::load("pollution");
  CHECK(envelope_side(pol_spec, Player::u) == EnvelopeSide::lower);
  CHECK(envelope_side(pol_spec, Player::v) == EnvelopeSide::upper);
  const auto ou = test::ou_spec();
  CHECK(envelope_side(ou, Player::u) == EnvelopeSide::upper);
}

TEST_CASE("opponent panel composition") {
  const auto spec = test::load("pollution");
  const auto cfg = config(10.0, 0.01, 4);
  const auto grid = StateGrid::for_spec(spec);
  auto adv = std::make_shared<const FeedbackPolicy>(
      extract_feedback(spec, GridFunction(grid, 0.0), PolicyTarget::response, Ordering::supinf));
  const auto panel = opponent_panel(spec, Player::v, cfg, adv, 10);
  CHECK(panel.size() == spec.v_grid.size() + 10 + 1);
  const auto again = opponent_panel(spec, Player::v, cfg, adv, 10);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    CHECK(panel[i].label == again[i].label);
    CHECK(describe(panel[i].process).dump() == describe(again[i].process).dump());
  }
}

TEST_CASE("policies round-trip through CSV and JSON") {
  const auto spec = test::load("tracking_game");
  const auto grid = StateGrid::for_spec(spec);
  const auto sol = solve_discounted(spec, grid, 0.5, Ordering::infsup);
  const auto dir = std::filesystem::temp_directory_path();
  for (const auto t : {PolicyTarget::outer, PolicyTarget::response, PolicyTarget::pair}) {
    const auto pol = extract_feedback(spec, sol.w, t, Ordering::infsup);
    write_policy(pol, dir / "erg_pol.csv", dir / "erg_pol.json");
    const auto back = read_policy(dir / "erg_pol.json");
    CHECK(back.target == pol.target);
    CHECK(back.player == pol.player);
    CHECK(back.index == pol.index);
    CHECK(back.grid == pol.grid);
    CHECK(back.opponent_count == pol.opponent_count);
  }
  std::filesystem::remove(dir / "erg_pol.csv");
  std::filesystem::remove(dir / "erg_pol.json");
}
