#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "erg/game_model.hpp"
#include "erg/grid.hpp"

namespace erg {

/// outer:    node -> control of the outer player (the selector psi).
/// response: (node, outer-player control index) -> best response of the inner player.
/// pair:     node -> saddle candidate (u index, v index).
enum class PolicyTarget { outer, response, pair };

[[nodiscard]] std::string_view to_string(PolicyTarget t);
[[nodiscard]] PolicyTarget parse_policy_target(std::string_view s);

/// Per-node control indices extracted from a grid function. Off-grid states
/// use the nearest node.
struct FeedbackPolicy {
  PolicyTarget target = PolicyTarget::outer;
  /// Player whose control `outer` / `response` entries give.
  Player player = Player::u;
  StateGrid grid;
  /// outer: one index per node; response: node * opponent_count + k;
  /// pair: 2 per node (u index, v index).
  std::vector<std::size_t> index;
  std::size_t opponent_count = 0;
  nlohmann::json provenance;

  [[nodiscard]] std::size_t at_node(std::size_t node, std::size_t opponent = 0) const;
  [[nodiscard]] std::size_t lookup(std::span<const double> x, std::size_t opponent = 0) const {
    return at_node(grid.nearest(x), opponent);
  }
  /// pair target only.
  [[nodiscard]] std::size_t u_at(std::size_t node) const { return index[2 * node]; }
  [[nodiscard]] std::size_t v_at(std::size_t node) const { return index[2 * node + 1]; }
};

/// CSV: node coordinates and control indices; provenance goes to a JSON sidecar.
void write_policy(const FeedbackPolicy& p, const std::filesystem::path& csv, const std::filesystem::path& json);
[[nodiscard]] FeedbackPolicy read_policy(const std::filesystem::path& json);

}  // namespace erg
