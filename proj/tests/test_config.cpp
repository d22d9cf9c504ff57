#include <doctest.h>

#include "erg/config.hpp"
#include "erg/error.hpp"
#include "support.hpp"

using namespace erg;

namespace {

ConfigError parse_error(const std::string& text) {
  try {
    (void)parse_spec(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError(0, "", "");
}

}  // namespace

TEST_CASE("registered spec files parse") {
  const auto paths = test::registered_specs();
  CHECK(paths.size() >= 5);
  for (const auto& p : paths) {
    CAPTURE(p.string());
    const auto spec = load_spec(p);
    CHECK_NOTHROW(spec.check());
    CHECK_NOTHROW((void)StateGrid::for_spec(spec));
  }
}

TEST_CASE("ou_quadratic derives its constants") {
  const auto spec = test::ou_spec();
  CHECK(spec.K == doctest::Approx(2.0));
  CHECK(spec.C_sigma == 0.0);
  CHECK(spec.sigma_bound == doctest::Approx(1.0));
  CHECK(spec.sense == Sense::minimize);
  CHECK(spec.box.lower[0] == -5.0);
  CHECK(spec.grid_nodes == std::vector<std::size_t>{401});
}

TEST_CASE("pollution preset keeps the state floor") {
  const auto spec = test::load("pollution");
  REQUIRE(spec.state_floor.has_value());
  CHECK((*spec.state_floor)[0] == 0.0);
  CHECK(spec.box.lower[0] == 0.0);
  CHECK(spec.sense == Sense::maximize);
  CHECK(spec.u_grid.size() == 50);
  CHECK(spec.u_grid.scalar(0) == doctest::Approx(0.004));
}

TEST_CASE("errors name the line and key") {
  {
    const auto e = parse_error("family: ou_quadratic\nparameters:\n  kappa: 1.0\n  sigmaa: 2.0\n");
    CHECK(e.line() == 4);
    CHECK(e.key() == "parameters.sigmaa");
  }
  {
    const auto e = parse_error("name: x\nparameters: {}\n");
    CHECK(e.key() == "family");
  }
  {
    const auto e = parse_error("family: ou_quadratic\nsense: upward\n");
    CHECK(e.line() == 2);
    CHECK(e.key() == "sense");
  }
  {
    const auto e = parse_error("family: warp_drive\n");
    CHECK(e.key() == "family");
  }
  {
    const auto e = parse_error("family: affine\nparameters: {C: -1.0}\n");
    CHECK(e.key().rfind("constants", 0) == 0);
  }
  {
    const auto e = parse_error("family: ou_quadratic\nstate_dim: 2\n");
    CHECK(e.key() == "state_dim");
  }
  {
    const auto e = parse_error("family: ou_quadratic\nparameters: {kappa: 1.0, sigma: [1, 2}\n");
    CHECK(e.line() == 2);
  }
  {
    const auto e = parse_error("family: ou_quadratic\ntruncation: {lower: [-1, 1], upper: 3}\n");
    CHECK(e.key() == "truncation.lower");
  }
  CHECK_THROWS_AS((void)load_spec("/nonexistent/spec.yaml"), ConfigError);
}

TEST_CASE("explicit constants override derived ones") {
  const auto spec = parse_spec("family: ou_quadratic\nconstants: {K: 1.5}\n");
  CHECK(spec.K == 1.5);
  CHECK(spec.sigma_bound == doctest::Approx(1.0));
}

TEST_CASE("control points and counts") {
  const auto spec = test::load("uv_gap");
  CHECK(spec.u_grid.size() == 2);
  CHECK(spec.u_grid.scalar(0) == -1.0);
  CHECK(spec.v_grid.scalar(1) == 1.0);
  const auto t = test::load("tracking_game");
  CHECK(t.u_grid.size() == 11);
  CHECK(t.v_grid.cell_size() == doctest::Approx(0.2));
}
