#include <doctest.h>

#include <bit>
#include <cmath>

#include "erg/config.hpp"
#include "erg/error.hpp"
#include "erg/game_model.hpp"
#include "erg/pollution.hpp"
#include "erg/rng.hpp"
#include "support.hpp"

using namespace erg;

namespace {

ProblemSpec affine(const std::string& params, const std::string& constants, const std::string& controls,
                   double box = 5.0) {
  return parse_spec("family: affine\nparameters: " + params + "\nconstants: " + constants +
                    "\ncontrols: " + controls + "\ntruncation: {lower: " + std::to_string(-box) +
                    ", upper: " + std::to_string(box) + "}\n");
}

}  // namespace

TEST_CASE("control grids") {
  const auto g = ControlGrid::uniform(Player::u, {0.0}, {1.0}, {5});
  CHECK(g.size() == 5);
  CHECK(g.scalar(4) == doctest::Approx(1.0));
  CHECK(g.cell_size() == doctest::Approx(0.25));
  const std::vector<double> mid{0.125};
  CHECK(g.nearest(mid) == 0);  // equidistant from index 0 and 1

  const auto two = ControlGrid::uniform(Player::v, {-1.0, 0.0}, {1.0, 2.0}, {3, 2});
  CHECK(two.size() == 6);
  CHECK(two.dim() == 2);
  CHECK(two.point(1)[1] == doctest::Approx(2.0));

  CHECK_THROWS_AS(ControlGrid(Player::u, 1, {0.0, 0.0}), PreconditionError);
  CHECK_THROWS_AS(ControlGrid(Player::u, 1, {}), PreconditionError);
  CHECK(ControlGrid::singleton(Player::u, {3.0}).size() == 1);
}

TEST_CASE("linear drift u - v x on v in [0.5, 2] is dissipative with K = 1") {
  const auto spec = affine("{A: 1.0, Bm: -1.0}", "{K: 1.0, C_b: 7.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: 0.0}",
                           "{u: {lower: -1, upper: 1, count: 3}, v: {lower: 0.5, upper: 2.0, count: 4}}");
  CHECK(estimate_dissipativity(spec, 2000, 1) == doctest::Approx(1.0).epsilon(1e-9));
  const auto rep = validate_assumptions(spec, 2000, 1);
  CHECK(rep.check("H3_dissipativity").passed);
}

TEST_CASE("OU coefficients pass every check") {
  const auto spec = affine("{C: -1.0, S: 1.0, payoff: {x_quad: 1.0}}",
                           "{K: 2.0, C_b: 1.0, C_sigma: 0.0, C_f: 10.0, sigma_bound: 1.0}",
                           "{u: {points: [0.0]}, v: {points: [0.0]}}");
  const auto rep = validate_assumptions(spec, 3000, 4);
  CHECK(rep.all_passed());
  CHECK(rep.sample_count == 3000);
  CHECK(estimate_dissipativity(spec, 3000, 4) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("anti-dissipative drift is reported with a witness") {
  const auto spec = affine("{C: 1.0, S: 1.0}", "{K: 1.0, C_b: 1.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: 1.0}",
                           "{u: {points: [0.0]}, v: {points: [0.0]}}");
  const auto rep = validate_assumptions(spec, 500, 9);
  const auto& c = rep.check("H3_dissipativity");
  CHECK_FALSE(c.passed);
  CHECK(c.worst_margin > 0.0);
  REQUIRE(c.witness.has_value());
  // 2(x-y)(b(x)-b(y)) + K|x-y|^2 = 3 (x-y)^2 for b = x, K = 1.
  const double dx = c.witness->x[0] - c.witness->y[0];
  CHECK(c.worst_margin == doctest::Approx(3.0 * dx * dx).epsilon(1e-9));
  CHECK(estimate_dissipativity(spec, 500, 9) < 0.0);
}

TEST_CASE("pollution drift has K' = 2a") {
  PollutionParams p;
  p.a = 1.0;
  p.b = 2.0;
  CHECK(estimate_dissipativity(make_pollution_spec(p), 2000, 3) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("cubic drift -x^3 - x has K' >= 2") {
  const auto spec = parse_spec(
      "family: custom_polynomial\nparameters: {p3: 1.0, p1: 1.0, sigma: 0.5}\n"
      "constants: {K: 2.0, C_b: 76.0, C_sigma: 0.0, C_f: 0.0, sigma_bound: 0.5}\n"
      "truncation: {lower: -5.0, upper: 5.0}\n");
  const double k = estimate_dissipativity(spec, 5000, 12);
  // Oracle: dense pairs of the difference quotient 2 (x^2 + xy + y^2 + 1).
  double dense = 1e300;
  for (int i = 0; i <= 400; ++i) {
    for (int j = 0; j <= 400; ++j) {
      if (i == j) continue;
      const double x = -5.0 + 0.025 * i, y = -5.0 + 0.025 * j;
      dense = std::min(dense, 2.0 * (x * x + x * y + y * y + 1.0));
    }
  }
  CHECK(dense >= 2.0 - 1e-12);
  CHECK(k >= 2.0 - 1e-9);
  CHECK(k >= dense - 1e-6);
}

TEST_CASE("validation is deterministic in its seed") {
  const auto spec = test::load("tracking_game");
  CHECK(validate_assumptions(spec, 800, 21).to_json().dump() == validate_assumptions(spec, 800, 21).to_json().dump());
  CHECK(validate_assumptions(spec, 800, 21).to_json().dump() != validate_assumptions(spec, 800, 22).to_json().dump());
  CHECK_THROWS_AS((void)validate_assumptions(spec, 0, 1), PreconditionError);
  CHECK_THROWS_AS((void)estimate_dissipativity(spec, 1, 1), PreconditionError);
}

TEST_CASE("declared K never exceeds the sampled dissipativity") {
  for (const auto& path : test::registered_specs()) {
    CAPTURE(path.string());
    const auto spec = load_spec(path);
    CHECK(estimate_dissipativity(spec, 2000, 5) >= spec.K - 1e-9);
    CHECK(validate_assumptions(spec, 1000, 5).all_passed());
  }
}

TEST_CASE("coefficient evaluators are pure") {
  for (const auto& path : test::registered_specs()) {
    CAPTURE(path.string());
    const auto spec = load_spec(path);
    const auto& c = *spec.coeffs;
    const std::size_t n = c.state_dim(), d = c.noise_dim();
    const CounterRng rng(99);
    for (std::uint32_t s = 0; s < 20; ++s) {
      std::vector<double> x(n);
      rng.uniforms(RngStream::misc, s, 0, x);
      for (std::size_t k = 0; k < n; ++k) x[k] = spec.box.lower[k] + x[k] * (spec.box.upper[k] - spec.box.lower[k]);
      const auto u = spec.u_grid.point(s % spec.u_grid.size());
      const auto v = spec.v_grid.point(s % spec.v_grid.size());
      std::vector<double> b0(n), s0(n * d), b1(n), s1(n * d);
      c.drift(x, u, v, b0);
      c.diffusion(x, u, v, s0);
      const double f0 = c.payoff(x, u, v);
      bool same = true;
      for (int rep = 0; rep < 1000; ++rep) {
        c.drift(x, u, v, b1);
        c.diffusion(x, u, v, s1);
        const double f1 = c.payoff(x, u, v);
        same = same && std::bit_cast<std::uint64_t>(f0) == std::bit_cast<std::uint64_t>(f1) && b0 == b1 && s0 == s1;
      }
      CHECK(same);
    }
  }
}

TEST_CASE("confinement radius and frobenius norm") {
  const auto ou = test::ou_spec();
  // b~ = 0, sigma~ = 1, K = 2: R = sqrt(2) / 2.
  CHECK(confinement_radius(ou) == doctest::Approx(std::sqrt(2.0) / 2.0));
  CHECK(drift_at_origin(ou) == 0.0);
  const std::vector<double> m{3.0, 0.0, 0.0, 4.0};
  CHECK(frobenius(m) == doctest::Approx(5.0));
}

TEST_CASE("spec invariants are enforced") {
  auto spec = test::ou_spec();
  spec.C_sigma = 2.0;  // K = 2 < 4
  CHECK_THROWS_AS(spec.check(), PreconditionError);
  const auto shifted = with_payoff_shift(test::ou_spec(), 2.5);
  const std::vector<double> x{0.5}, u{0.0}, v{0.0};
  CHECK(shifted.coeffs->payoff(x, u, v) == doctest::Approx(0.25 + 2.5));
  const auto scaled = with_payoff_scale(test::ou_spec(), 3.0);
  CHECK(scaled.coeffs->payoff(x, u, v) == doctest::Approx(0.75));
  CHECK_THROWS_AS((void)with_payoff_scale(test::ou_spec(), 0.0), PreconditionError);
}
