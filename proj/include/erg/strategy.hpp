#pragma once

// Feedback and theta-frozen strategies built from grid solutions, and Monte
// Carlo estimates of the payoffs they achieve against opponent panels.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "erg/ergodic.hpp"
#include "erg/hjbi.hpp"
#include "erg/policy.hpp"
#include "erg/sde_sim.hpp"

namespace erg {

/// Per-node argmin/argmax of the discrete Hamiltonian of w, using the
/// solver's stencil.
[[nodiscard]] FeedbackPolicy extract_feedback(const DiscreteOperator& op, const GridFunction& w, PolicyTarget target,
                                              Ordering ordering, nlohmann::json provenance = nlohmann::json::object());
[[nodiscard]] FeedbackPolicy extract_feedback(const ProblemSpec& spec, const GridFunction& w, PolicyTarget target,
                                              Ordering ordering);

struct ThetaStrategy {
  double theta = 1.0;
  std::shared_ptr<const FeedbackPolicy> base;
  /// Player the strategy controls; defaults to base->player.
  std::optional<Player> player;

  [[nodiscard]] Player controls() const { return player.value_or(base->player); }
};

/// lower: the strategy's player maximizes, so J >= rho - slack is asserted;
/// upper: it minimizes and J <= rho + slack.
enum class EnvelopeSide { lower, upper };

[[nodiscard]] EnvelopeSide envelope_side(const ProblemSpec& spec, Player strategy_player) noexcept;

struct Envelope {
  double rho = 0.0;
  double C_env = 0.0;
  EnvelopeSide side = EnvelopeSide::lower;
};

[[nodiscard]] inline double theta_width(double theta) noexcept { return theta + std::sqrt(theta); }

struct GameEstimate {
  Vec x0;
  double T = 0.0;
  double theta = 0.0;
  nlohmann::json opponent;
  double mean = 0.0;
  double stderr_ = 0.0;
  /// Running averages (t, mean over paths of (1/t) int_0^t f).
  std::vector<std::pair<double, double>> trace;
  /// The second half of the trace moves by more than 3 stderr.
  bool tail_unsettled = false;
  std::optional<Envelope> envelope;
  /// rho -/+ C_env (theta + sqrt(theta)).
  double bound = 0.0;
  bool passed = true;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Closed loop of a theta-frozen strategy against an opponent process.
/// theta must be an integer multiple of cfg.dt.
[[nodiscard]] GameEstimate play_theta_game(const ProblemSpec& spec, const Vec& x0, const ThetaStrategy& strategy,
                                           const ControlProcess& opponent, const SimConfig& cfg,
                                           std::optional<Envelope> envelope = std::nullopt);

struct Opponent {
  std::string label;
  ControlProcess process;
};

/// Constants at every grid point of `who`, `random_count` random
/// piecewise-constant sequences (a fresh draw every `hold_time`), and the
/// adversarial feedback when given.
[[nodiscard]] std::vector<Opponent> opponent_panel(const ProblemSpec& spec, Player who, const SimConfig& cfg,
                                                   std::shared_ptr<const FeedbackPolicy> adversary,
                                                   std::size_t random_count = 10, double hold_time = 1.0);

struct ThetaRow {
  double theta = 0.0;
  std::vector<GameEstimate> games;
  /// Largest shortfall against rho over the panel (rho - J on the lower side).
  double worst_gap = 0.0;
  double worst_gap_se = 0.0;
  std::string worst_opponent;
  bool within_envelope = true;
};

struct EnvelopeReport {
  std::vector<ThetaRow> rows;
  double rho = 0.0;
  EnvelopeSide side = EnvelopeSide::lower;
  /// Twice the slope through the origin of worst_gap against theta + sqrt(theta)
  /// at the coarsest theta and its half.
  double C_env = 0.0;
  bool all_within = false;
  /// The worst gap does not grow (beyond 3 combined stderr) as theta shrinks.
  bool gap_monotone = false;

  [[nodiscard]] bool passed() const noexcept { return all_within && gap_monotone; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Plays `policy` frozen at each theta against the panel, calibrating C_env
/// from the coarsest theta (and its half, played once if absent from the list).
[[nodiscard]] EnvelopeReport envelope_study(const ProblemSpec& spec, const Vec& x0,
                                            std::shared_ptr<const FeedbackPolicy> policy, double rho,
                                            const Vec& theta_list, const std::vector<Opponent>& panel,
                                            const SimConfig& cfg, std::optional<double> C_env = std::nullopt);

struct BracketRow {
  Vec x0;
  double theta = 0.0;
  /// Worst payoff the sup player's strategy secures and the worst the inf
  /// player's strategy concedes.
  double lower = 0.0, lower_se = 0.0;
  double upper = 0.0, upper_se = 0.0;
  double midpoint = 0.0, midpoint_se = 0.0;
};

struct BracketReport {
  std::vector<BracketRow> rows;
  double rho_infsup = 0.0, rho_supinf = 0.0;
  EnvelopeReport lower_study, upper_study;
  /// Midpoints at the finest theta agree across x0 within 3 combined stderr.
  bool x0_independent = false;
  bool brackets_hold = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Extracts the outer strategies of both ergodic solutions and plays each
/// against the other player's panel, for every x0 and theta.
[[nodiscard]] BracketReport value_bracket(const ProblemSpec& spec, const std::vector<Vec>& x0_list,
                                          const ErgodicSolution& ergodic_infsup,
                                          const ErgodicSolution& ergodic_supinf, const Vec& theta_list,
                                          const SimConfig& cfg, std::size_t random_count = 10);

}  // namespace erg
