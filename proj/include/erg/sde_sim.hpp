#pragma once

// Euler-Maruyama simulation of the controlled SDE and of its r-augmented
// companion dX^r = [-K/2 (X^r - X) + b(X)] dt + sigma(X) dB + r dB1, with
// Monte Carlo checks of the moment, coupling and density estimates.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <json.hpp>

#include "erg/game_model.hpp"
#include "erg/policy.hpp"

namespace erg {

struct SimConfig {
  double dt = 0.01;
  double T = 1.0;
  std::size_t paths = 1000;
  std::uint64_t seed = 1;
  /// Augmentation level; 0 simulates the original dynamics only.
  double r = 0.0;
  /// Record every k-th step; 0 selects about 100 records over the horizon.
  std::size_t record_every = 0;
  /// Discount rates for lambda * sum e^{-lambda t} f dt accumulators.
  Vec discounts;
  /// Keep the Gaussian increments (path x step x (d + n)) for replay.
  bool keep_increments = false;
  /// Optional rewrite of the Gaussian draws of (path, step) before use; tests
  /// use it to perturb the noise after a given time.
  std::function<void(std::size_t path, std::size_t step, std::span<double> z)> increment_hook;

  [[nodiscard]] std::size_t steps() const;
  void check() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

struct ConstantControl {
  Vec value;
};

/// Re-reads the policy at every step.
struct FeedbackControl {
  std::shared_ptr<const FeedbackPolicy> policy;
};

/// Re-reads the policy only at multiples of theta and holds it in between.
struct PiecewiseFrozenFeedback {
  double theta = 1.0;
  std::shared_ptr<const FeedbackPolicy> policy;
};

/// Open-loop control-grid indices per step, shared by all paths
/// (`per_path` false) or one row per path.
struct RecordedSequence {
  std::vector<std::size_t> index;
  bool per_path = false;
};

using ControlProcess = std::variant<ConstantControl, FeedbackControl, PiecewiseFrozenFeedback, RecordedSequence>;

[[nodiscard]] bool is_open_loop(const ControlProcess& c) noexcept;
[[nodiscard]] nlohmann::json describe(const ControlProcess& c);

/// Random piecewise-constant index sequence over `steps` steps: a fresh
/// uniform grid index every `hold` steps, drawn from the opponent stream.
[[nodiscard]] RecordedSequence random_piecewise_constant(std::size_t grid_size, std::size_t steps, std::size_t hold,
                                                         std::uint64_t seed, std::uint32_t label);

struct PathBatch {
  std::size_t n = 0, d = 0, u_dim = 0, v_dim = 0;
  std::size_t paths = 0, steps = 0, record_every = 1;
  double dt = 0.0;
  double r = 0.0;
  /// Record times t_j = j * record_every * dt (j = 0..records-1, last = T).
  Vec times;
  /// [path][record][n]
  Vec states;
  /// [path][record][n], only when r > 0.
  Vec augmented;
  /// Controls in force on the step starting at each record, [path][record][dim].
  Vec u_values, v_values;
  /// Running integral sum f dt at each record, [path][record].
  Vec running_payoff;
  /// Final sum f dt per path.
  Vec payoff;
  /// lambda * sum e^{-lambda t} f dt per path and discount, [path][k].
  Vec discounted;
  Vec discounts;
  /// Gaussian draws per path and step, [path][step][d + n], when kept.
  Vec increments;
  std::vector<bool> flagged;

  [[nodiscard]] std::size_t records() const noexcept { return times.size(); }
  [[nodiscard]] std::size_t flagged_count() const noexcept;
  [[nodiscard]] double state(std::size_t path, std::size_t rec, std::size_t k) const noexcept {
    return states[(path * records() + rec) * n + k];
  }
  [[nodiscard]] double aug_state(std::size_t path, std::size_t rec, std::size_t k) const noexcept {
    return augmented[(path * records() + rec) * n + k];
  }
  [[nodiscard]] nlohmann::json summary() const;
};

/// Standard normals for (path, step): the first d drive B, the next n drive B1.
void gaussian_increments(std::uint64_t seed, std::size_t path, std::size_t step, std::span<double> out);

/// Simulates `cfg.paths` Euler-Maruyama paths from x0. Throws SimulationError
/// when more than 1% of paths leave the finite range.
[[nodiscard]] PathBatch simulate(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                 const ControlProcess& v, const SimConfig& cfg);

/// Per-path CSV dump: path, t, x1..xn, u, v, running_payoff.
void write_paths_csv(const PathBatch& batch, const std::filesystem::path& path, std::size_t max_paths = 0);

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error of independent per-path samples.
[[nodiscard]] Estimate mean_stderr(const Vec& samples);

struct MomentReport {
  Vec times;
  Vec second_moment, second_moment_se;
  Vec gap_squared, gap_squared_se;
  /// Fitted slope of log mean gap^2 against t.
  double fitted_slope = 0.0;
  /// Rate asserted against: c = K - C_sigma^2.
  double rate = 0.0;
  double tolerance = 0.1;
  bool inconclusive = false;
  bool passed = false;
  /// Mean gap^2 never exceeds its running minimum by more than 3 SE.
  bool monotone = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Synchronous coupling from x0 and y0 with open-loop controls.
[[nodiscard]] MomentReport contraction_check(const ProblemSpec& spec, const Vec& x0, const Vec& y0, const ControlProcess& u,
                                             const ControlProcess& v, const SimConfig& cfg, double tolerance = 0.1);

struct AugmentationReport {
  Vec times, mean_gap_squared, se;
  double bound = 0.0;  // n r^2 / K
  double worst_excess = 0.0;
  bool passed = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// E|X^r_t - X_t|^2 <= n r^2 / K + 3 SE at every recorded time.
[[nodiscard]] AugmentationReport augmentation_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                                    const ControlProcess& v, const SimConfig& cfg);

/// (K/2)^{n/2} r^{-n} [1 - e^{-K s}]^{-n/2} Leb(cell).
[[nodiscard]] double density_bound(double K, double r, std::size_t n, double s, double cell_volume);

/// Wilson score interval for k successes in m trials.
[[nodiscard]] std::pair<double, double> wilson_interval(std::size_t k, std::size_t m, double z);

struct DensityReport {
  Box cell;
  double s = 0.0;
  double probability = 0.0;
  double wilson_lower = 0.0, wilson_upper = 0.0;
  double z = 3.0;
  double bound = 0.0;
  std::size_t hits = 0, samples = 0;
  bool passed = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Estimates P{X^r_s in cell}; cfg.T is replaced by s.
[[nodiscard]] DensityReport density_bound_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                                const ControlProcess& v, const SimConfig& cfg, const Box& cell,
                                                double s, double z = 3.0);
/// Several cells from one batch.
[[nodiscard]] std::vector<DensityReport> density_bound_check(const ProblemSpec& spec, const Vec& x0,
                                                             const ControlProcess& u, const ControlProcess& v,
                                                             const SimConfig& cfg, const std::vector<Box>& cells,
                                                             double s, double z = 3.0);

struct PayoffEstimate {
  Estimate average;
  /// One entry per cfg.discounts.
  std::vector<Estimate> discounted;
  std::size_t excluded_paths = 0;
  /// T shorter than 5 / (K - C_sigma^2).
  bool short_horizon = false;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// (1/T) E sum f dt and the discounted functionals.
[[nodiscard]] PayoffEstimate estimate_average_payoff(const PathBatch& batch, const ProblemSpec& spec);
[[nodiscard]] PayoffEstimate estimate_average_payoff(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                                     const ControlProcess& v, const SimConfig& cfg);

struct IncrementReport {
  Vec deltas;
  Vec mean_sup_sq, se;
  /// mean_sup_sq / (delta^2 + delta).
  Vec ratio;
  /// max ratio / min ratio; bounded when the C(delta^2 + delta) shape holds.
  double spread = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// E sup_{t0 <= s <= t0 + delta} |X_s - X_t0|^2 for each delta (multiples of dt).
[[nodiscard]] IncrementReport increment_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                              const ControlProcess& v, const SimConfig& cfg, double t0,
                                              const Vec& deltas);

}  // namespace erg
