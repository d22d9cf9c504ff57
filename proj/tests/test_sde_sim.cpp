#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "erg/config.hpp"
#include "erg/error.hpp"
#include "erg/pollution.hpp"
#include "erg/sde_sim.hpp"
#include "support.hpp"

using namespace erg;

namespace {

const ControlProcess zero_u{ConstantControl{{0.0}}};
const ControlProcess zero_v{ConstantControl{{0.0}}};

ProblemSpec linear(double C, double S, const std::string& payoff = "{}") {
  return parse_spec("family: affine\nparameters: {C: " + std::to_string(C) + ", S: " + std::to_string(S) +
                    ", payoff: " + payoff + "}\nconstants: {K: 2.0, C_b: 1.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: " +
                    std::to_string(std::abs(S)) + "}\ncontrols: {u: {points: [0.0]}, v: {points: [0.0]}}\n"
                    "truncation: {lower: -5, upper: 5}\n");
}

SimConfig config(double T, double dt, std::size_t paths, std::uint64_t seed = 1) {
  SimConfig c;
  c.T = T;
  c.dt = dt;
  c.paths = paths;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("deterministic linear ODE has first-order error") {
  const auto spec = linear(-1.0, 0.0);
  double prev = 0.0;
  for (double dt : {0.01, 0.005}) {
    auto cfg = config(1.0, dt, 1);
    const auto b = simulate(spec, {1.0}, zero_u, zero_v, cfg);
    const double err = std::abs(b.state(0, b.records() - 1, 0) - std::exp(-1.0));
    CHECK(err <= dt);
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("OU terminal second moment matches the stationary variance") {
  const auto spec = test::ou_spec();
  auto cfg = config(10.0, 0.005, 20000, 3);
  cfg.record_every = cfg.steps();
  const auto b = simulate(spec, {0.0}, zero_u, zero_v, cfg);
  Vec sq(b.paths);
  for (std::size_t p = 0; p < b.paths; ++p) sq[p] = std::pow(b.state(p, b.records() - 1, 0), 2);
  const auto e = mean_stderr(sq);
  // Oracle: Var X_T = (1 - e^{-2T}) / 2 for dX = -X dt + dB.
  const double oracle = 0.5 * (1.0 - std::exp(-20.0));
  CHECK(std::abs(e.mean - oracle) <= 3.0 * e.stderr_);
}

TEST_CASE("augmented process stays within n r^2 / K") {
  const auto spec = test::ou_spec();
  auto cfg = config(5.0, 0.01, 4000, 5);
  cfg.r = 0.1;
  const auto rep = augmentation_check(spec, {0.5}, zero_u, zero_v, cfg);
  CHECK(rep.bound == doctest::Approx(0.005));
  CHECK(rep.passed);
}

TEST_CASE("augmented steps replay from the stored increments") {
  const auto spec = test::load("tracking_game");
  auto cfg = config(0.5, 0.01, 3, 8);
  cfg.r = 0.3;
  cfg.record_every = 1;
  cfg.keep_increments = true;
  const ControlProcess u{ConstantControl{{0.4}}}, v{ConstantControl{{-0.2}}};
  const auto b = simulate(spec, {0.7}, u, v, cfg);
  const std::size_t d = b.d, n = b.n, w = d + n;
  for (std::size_t p = 0; p < b.paths; ++p) {
    double x = 0.7, xr = 0.7;
    for (std::size_t k = 0; k < b.steps; ++k) {
      const double* z = &b.increments[(p * b.steps + k) * w];
      std::vector<double> drift(1), sig(1);
      const std::vector<double> xv{x}, uu{0.4}, vv{-0.2};
      spec.coeffs->drift(xv, uu, vv, drift);
      spec.coeffs->diffusion(xv, uu, vv, sig);
      const double sq = std::sqrt(cfg.dt);
      const double nx = x + drift[0] * cfg.dt + sig[0] * sq * z[0];
      xr = xr + (-0.5 * spec.K * (xr - x) + drift[0]) * cfg.dt + sig[0] * sq * z[0] + cfg.r * sq * z[1];
      x = nx;
      CHECK(b.state(p, k + 1, 0) == doctest::Approx(x).epsilon(1e-13));
      CHECK(b.aug_state(p, k + 1, 0) == doctest::Approx(xr).epsilon(1e-13));
    }
  }
}

TEST_CASE("synchronous coupling") {
  const auto spec = test::ou_spec();
  auto cfg = config(3.0, 0.01, 20, 2);
  const auto rep = contraction_check(spec, {1.0}, {-1.0}, zero_u, zero_v, cfg);
  // Additive noise cancels: the gap is (1 - dt)^k |x - y| exactly.
  CHECK(rep.fitted_slope == doctest::Approx(2.0 * std::log(1.0 - cfg.dt) / cfg.dt).epsilon(1e-9));
  CHECK(rep.rate == doctest::Approx(2.0));
  CHECK(rep.passed);
  CHECK(rep.monotone);
  const auto same = contraction_check(spec, {0.3}, {0.3}, zero_u, zero_v, cfg);
  for (double g : same.gap_squared) CHECK(g == 0.0);
  CHECK(same.passed);
  auto few = cfg;
  few.paths = 3;
  CHECK(contraction_check(spec, {1.0}, {-1.0}, zero_u, zero_v, few).inconclusive);
}

TEST_CASE("density bound arithmetic") {
  const double b = density_bound(2.0, 0.5, 1, 1.0, 0.1);
  CHECK(b == doctest::Approx(2.0 * 0.1 / std::sqrt(1.0 - std::exp(-2.0))));
  CHECK(b == doctest::Approx(0.2151).epsilon(1e-3));
  double prev = 1e300;
  for (double s : {0.1, 0.5, 1.0, 4.0, 50.0}) {
    const double v = density_bound(2.0, 0.5, 1, s, 0.1);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev == doctest::Approx(0.2).epsilon(1e-12));
  const auto [lo, hi] = wilson_interval(0, 100, 3.0);
  CHECK(lo == 0.0);
  CHECK(hi > 0.0);
  const auto [l2, h2] = wilson_interval(50, 100, 3.0);
  CHECK(l2 < 0.5);
  CHECK(h2 > 0.5);
}

TEST_CASE("pure auxiliary noise gives the Gaussian cell probability") {
  // b = 0, sigma = 0: X stays at 0 and X^r_s ~ N(0, r^2 (1 - e^{-Ks}) / K).
  const auto spec = parse_spec(
      "family: affine\nparameters: {C: 0.0, S: 0.0}\n"
      "constants: {K: 2.0, C_b: 0.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: 0.0}\n"
      "controls: {u: {points: [0.0]}, v: {points: [0.0]}}\ntruncation: {lower: -1, upper: 1}\n");
  auto cfg = config(1.0, 0.01, 40000, 6);
  cfg.r = 0.5;
  const Box cell{{0.0}, {0.1}};
  const auto rep = density_bound_check(spec, {0.0}, zero_u, zero_v, cfg, cell, 1.0);
  const double var = 0.25 * (1.0 - std::exp(-2.0)) / 2.0;
  const double exact = 0.5 * (std::erf(0.1 / std::sqrt(2.0 * var)) - std::erf(0.0));
  CHECK(exact < rep.bound);
  CHECK(rep.passed);
  CHECK(rep.wilson_lower <= exact + 0.003);
  CHECK(rep.wilson_upper >= exact - 0.003);
  CHECK_THROWS_AS((void)density_bound_check(spec, {0.0}, zero_u, zero_v, cfg, Box{{0.1}, {0.1}}, 1.0),
                  PreconditionError);
  auto no_r = cfg;
  no_r.r = 0.0;
  CHECK_THROWS_AS((void)density_bound_check(spec, {0.0}, zero_u, zero_v, no_r, cell, 1.0), PreconditionError);
}

TEST_CASE("constant payoff averages exactly") {
  const auto spec = linear(-1.0, 0.8, "{constant: 3.0}");
  auto cfg = config(2.0, 0.01, 50);
  const auto est = estimate_average_payoff(spec, {0.2}, zero_u, zero_v, cfg);
  CHECK(est.average.mean == 3.0);
  CHECK(est.average.stderr_ == 0.0);
  CHECK(est.short_horizon);
}

TEST_CASE("OU average and discounted payoffs") {
  const auto spec = test::ou_spec();
  auto cfg = config(50.0, 0.01, 800, 4);
  cfg.discounts = {0.5};
  const auto est = estimate_average_payoff(spec, {0.0}, zero_u, zero_v, cfg);
  CHECK_FALSE(est.short_horizon);
  CHECK(std::abs(est.average.mean - 0.5) <= 3.0 * est.average.stderr_ + 0.5 / 50);
  const double oracle = test::ou_discounted_moment(0.5);
  REQUIRE(est.discounted.size() == 1);
  CHECK(std::abs(est.discounted[0].mean - oracle) <= 3.0 * est.discounted[0].stderr_ + 0.01);
}

TEST_CASE("weak error scales with dt") {
  const auto spec = test::ou_spec();
  Vec means;
  for (double dt : {0.2, 0.1, 0.05}) {
    auto cfg = config(50.0, dt, 20000, 10);
    cfg.record_every = cfg.steps();
    means.push_back(estimate_average_payoff(spec, {0.0}, zero_u, zero_v, cfg).average.mean);
  }
  const double ratio = (means[0] - means[1]) / (means[1] - means[2]);
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 3.0);
}

TEST_CASE("batches are reproducible and independent of the worker count") {
  const auto spec = test::load("tracking_game");
  auto cfg = config(2.0, 0.01, 64, 77);
  cfg.r = 0.2;
  const ControlProcess u{ConstantControl{{0.2}}}, v{ConstantControl{{0.6}}};
  const auto a = simulate(spec, {1.0}, u, v, cfg);
  setenv("ERG_WORKERS", "3", 1);
  const auto b = simulate(spec, {1.0}, u, v, cfg);
  unsetenv("ERG_WORKERS");
  CHECK(a.states == b.states);
  CHECK(a.augmented == b.augmented);
  CHECK(a.payoff == b.payoff);
  CHECK(a.summary().dump() == b.summary().dump());
}

TEST_CASE("blow-ups are flagged and fail the batch") {
  const auto spec = parse_spec(
      "family: affine\nparameters: {C: 60.0, S: 1.0}\n"
      "constants: {K: 1.0, C_b: 60.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: 1.0}\n"
      "controls: {u: {points: [0.0]}, v: {points: [0.0]}}\ntruncation: {lower: -1, upper: 1}\n");
  auto cfg = config(20.0, 0.01, 10);
  CHECK_THROWS_AS((void)simulate(spec, {1.0}, zero_u, zero_v, cfg), SimulationError);
}

TEST_CASE("invalid configurations are rejected") {
  const auto spec = test::ou_spec();
  CHECK_THROWS_AS((void)simulate(spec, {0.0}, zero_u, zero_v, config(1.0, 2.0, 10)), PreconditionError);
  CHECK_THROWS_AS((void)simulate(spec, {0.0}, zero_u, zero_v, config(1.0, 0.3, 10)), PreconditionError);
  CHECK_THROWS_AS((void)simulate(spec, {0.0}, zero_u, zero_v, config(1.0, 0.1, 0)), PreconditionError);
  CHECK_THROWS_AS((void)simulate(spec, {0.0, 1.0}, zero_u, zero_v, config(1.0, 0.1, 1)), PreconditionError);
}

TEST_CASE("increment moments follow the C(delta^2 + delta) shape") {
  const auto spec = test::ou_spec();
  auto cfg = config(3.0, 0.01, 4000, 12);
  const auto rep = increment_check(spec, {0.0}, zero_u, zero_v, cfg, 1.0, {0.05, 0.1, 0.2, 0.4, 0.8});
  REQUIRE(rep.ratio.size() == 5);
  for (double r : rep.ratio) CHECK(r > 0.0);
  CHECK(rep.spread < 10.0);
}

TEST_CASE("path dump has the documented header") {
  const auto spec = test::ou_spec();
  const auto b = simulate(spec, {0.0}, zero_u, zero_v, config(1.0, 0.1, 5));
  const auto path = std::filesystem::temp_directory_path() / "erg_paths_test.csv";
  write_paths_csv(b, path, 2);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "path,t,x1,u,v,running_payoff");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 2 * b.records());
  std::filesystem::remove(path);
}

TEST_CASE("recorded open-loop sequences are applied step by step") {
  const auto spec = test::load("tracking_game");
  auto cfg = config(0.1, 0.01, 2);
  cfg.record_every = 1;
  RecordedSequence seq;
  for (std::size_t k = 0; k < cfg.steps(); ++k) seq.index.push_back(k % spec.u_grid.size());
  const auto b = simulate(spec, {0.0}, ControlProcess{seq}, ControlProcess{ConstantControl{{0.0}}}, cfg);
  for (std::size_t k = 0; k < cfg.steps(); ++k) CHECK(b.u_values[k] == spec.u_grid.scalar(k % spec.u_grid.size()));
  const auto rnd = random_piecewise_constant(11, 100, 10, 5, 3);
  CHECK(rnd.index.size() == 100);
  for (std::size_t k = 1; k < 100; ++k) {
    if (k % 10) CHECK(rnd.index[k] == rnd.index[k - 1]);
  }
  CHECK(random_piecewise_constant(11, 100, 10, 5, 3).index == rnd.index);
}
