#pragma once

// YAML problem configuration. Schema (all numeric vectors accept a scalar in 1D):
//
//   name: text
//   family: affine | ou_quadratic | pollution | custom_polynomial
//   state_dim: n            # optional, checked against the family
//   noise_dim: d            # optional, checked against the family
//   sense: minimize | maximize
//   parameters: { ... }     # family specific, see README
//   constants: { K, C_b, C_sigma, C_f, sigma_bound }
//   controls:
//     u: { lower, upper, count } | { points: [...] }
//     v: { ... }
//   truncation: { lower, upper, nodes, floor }
//
// `constants` is required for affine and custom_polynomial; ou_quadratic and
// pollution derive them from their parameters unless given. A missing
// truncation box defaults to +-3 confinement radii.

#include <filesystem>
#include <string>

#include "erg/game_model.hpp"

namespace erg {

/// Parses a configuration document; throws ConfigError with line and key.
[[nodiscard]] ProblemSpec parse_spec(const std::string& text);
[[nodiscard]] ProblemSpec load_spec(const std::filesystem::path& path);

}  // namespace erg
