#pragma once

// Game instances: coefficient families, finite control grids, the standing
// constants (Lipschitz, dissipativity, diffusion bound) and their sampled
// validation.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace erg {

using Vec = std::vector<double>;

enum class Player { u, v };
/// `minimize`: f is a cost, player u minimizes and v maximizes.
/// `maximize`: f is a reward, player u maximizes and v minimizes.
enum class Sense { minimize, maximize };

[[nodiscard]] std::string_view to_string(Player p);
[[nodiscard]] std::string_view to_string(Sense s);

/// Axis-aligned box.
struct Box {
  Vec lower;
  Vec upper;

  [[nodiscard]] std::size_t dim() const noexcept { return lower.size(); }
  [[nodiscard]] bool contains(std::span<const double> x) const noexcept;
  [[nodiscard]] double volume() const noexcept;
};

/// Finite discretization of a compact control set. Points are stored
/// row-major; index order is the tie-break order everywhere.
class ControlGrid {
 public:
  ControlGrid(Player label, std::size_t dim, std::vector<double> flat_points);

  /// Tensor-product grid with `count[k]` equispaced values on [lower[k], upper[k]].
  static ControlGrid uniform(Player label, const Vec& lower, const Vec& upper,
                             const std::vector<std::size_t>& count);
  static ControlGrid singleton(Player label, const Vec& point);

  [[nodiscard]] Player label() const noexcept { return label_; }
  [[nodiscard]] std::size_t size() const noexcept { return points_.size() / dim_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::span<const double> point(std::size_t i) const noexcept {
    return {points_.data() + i * dim_, dim_};
  }
  [[nodiscard]] double scalar(std::size_t i) const noexcept { return points_[i * dim_]; }
  /// Nearest point in Euclidean distance, lowest index on ties.
  [[nodiscard]] std::size_t nearest(std::span<const double> value) const;
  /// Largest nearest-neighbour gap along the first coordinate (1D cell size).
  [[nodiscard]] double cell_size() const noexcept;
  [[nodiscard]] const std::vector<double>& flat() const noexcept { return points_; }

 private:
  Player label_;
  std::size_t dim_;
  std::vector<double> points_;
};

/// Drift, diffusion and running payoff of the controlled SDE.
/// Implementations are pure: identical inputs give identical bits.
class CoefficientSet {
 public:
  virtual ~CoefficientSet() = default;

  [[nodiscard]] virtual std::string_view family() const noexcept = 0;
  [[nodiscard]] virtual std::size_t state_dim() const noexcept = 0;
  [[nodiscard]] virtual std::size_t noise_dim() const noexcept = 0;
  [[nodiscard]] virtual std::size_t u_dim() const noexcept = 0;
  [[nodiscard]] virtual std::size_t v_dim() const noexcept = 0;

  virtual void drift(std::span<const double> x, std::span<const double> u, std::span<const double> v,
                     std::span<double> out) const = 0;
  /// Row-major n x d matrix.
  virtual void diffusion(std::span<const double> x, std::span<const double> u, std::span<const double> v,
                         std::span<double> out) const = 0;
  [[nodiscard]] virtual double payoff(std::span<const double> x, std::span<const double> u,
                                      std::span<const double> v) const = 0;

  [[nodiscard]] virtual nlohmann::json parameters() const = 0;
};

/// Running payoff shared by the affine and polynomial families:
/// f = sum q_i x_i^2 + l_i x_i + abs |x| + sum uq u^2 + ul u + sum vq v^2 + vl v
///     + uv <u, v> + c.
struct QuadraticPayoff {
  Vec x_quad, x_lin;
  double x_abs = 0.0;
  Vec u_quad, u_lin, v_quad, v_lin;
  double uv_cross = 0.0;
  double constant = 0.0;

  [[nodiscard]] double operator()(std::span<const double> x, std::span<const double> u,
                                  std::span<const double> v) const noexcept;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// b = A u + Bm (v ⊙ x) + C x + E v + c0;  sigma_ij = S_ij + St_ij tanh(x_i).
struct AffineParams {
  std::size_t n = 1, d = 1, u_dim = 1, v_dim = 1;
  Vec A, Bm, C, E, c0, S, St;  // row-major
  QuadraticPayoff payoff;
};

/// b = -kappa x, sigma = s I, f = q |x|^2 + c.
struct OuQuadraticParams {
  std::size_t n = 1;
  double kappa = 1.0, sigma = 1.0, q = 1.0, c = 0.0;
};

/// dY = (u - v Y) dt + (s0 + s1 tanh Y) dB, reward g(u) - d max(Y, 0) with
/// g(u) = g_scale u^g_power.
struct PollutionCoefficients {
  double d = 1.0;
  double sigma0 = 0.3, sigma1 = 0.0;
  double g_scale = 2.0, g_power = 0.5;
};

/// b_i = -p3 x_i^3 + p2 x_i^2 - p1 x_i + p0 + (A u)_i + (E v)_i; sigma = s I.
struct PolynomialParams {
  std::size_t n = 1, u_dim = 1, v_dim = 1;
  double p3 = 1.0, p2 = 0.0, p1 = 1.0, p0 = 0.0, sigma = 1.0;
  Vec A, E;
  QuadraticPayoff payoff;
};

[[nodiscard]] std::shared_ptr<const CoefficientSet> make_affine(AffineParams p);
[[nodiscard]] std::shared_ptr<const CoefficientSet> make_ou_quadratic(OuQuadraticParams p);
[[nodiscard]] std::shared_ptr<const CoefficientSet> make_pollution(PollutionCoefficients p);
[[nodiscard]] std::shared_ptr<const CoefficientSet> make_custom_polynomial(PolynomialParams p);

[[nodiscard]] const std::vector<std::string>& registered_families();

/// A complete game instance.
struct ProblemSpec {
  std::string name;
  std::shared_ptr<const CoefficientSet> coeffs;
  ControlGrid u_grid;
  ControlGrid v_grid;
  Sense sense = Sense::minimize;
  double K = 1.0;
  double C_b = 0.0, C_sigma = 0.0, C_f = 0.0;
  double sigma_bound = 0.0;
  /// Truncation box: validation sampling region and default solver grid.
  Box box;
  std::vector<std::size_t> grid_nodes;
  /// Per-dimension state constraint (e.g. the half-line of a stock variable).
  std::optional<Vec> state_floor;

  [[nodiscard]] std::size_t state_dim() const noexcept { return coeffs->state_dim(); }
  [[nodiscard]] std::size_t noise_dim() const noexcept { return coeffs->noise_dim(); }
  [[nodiscard]] Player inf_player() const noexcept { return sense == Sense::minimize ? Player::u : Player::v; }
  [[nodiscard]] Player sup_player() const noexcept { return sense == Sense::minimize ? Player::v : Player::u; }
  [[nodiscard]] const ControlGrid& grid_of(Player p) const noexcept { return p == Player::u ? u_grid : v_grid; }

  /// Checks structural invariants (dimensions, K > C_sigma^2); throws PreconditionError.
  void check() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Copy of `spec` with the running payoff shifted by a constant (f + c).
[[nodiscard]] ProblemSpec with_payoff_shift(const ProblemSpec& spec, double shift);
/// Copy of `spec` with the running payoff scaled by c > 0 (c f).
[[nodiscard]] ProblemSpec with_payoff_scale(const ProblemSpec& spec, double scale);

/// sup over the control grids of |b(0, u, v)|.
[[nodiscard]] double drift_at_origin(const ProblemSpec& spec);
/// Dissipative confinement radius (b~ + sqrt(b~^2 + K s~^2)) / K.
[[nodiscard]] double confinement_radius(const ProblemSpec& spec);

struct Witness {
  Vec x, y;
  std::size_t u_index = 0, v_index = 0;
};

struct AssumptionCheck {
  std::string name;
  bool passed = true;
  /// Largest sampled violation (<= 0 means no violation found).
  double worst_margin = 0.0;
  std::optional<Witness> witness;
};

/// Empirical report: "no violation found among N samples", never a proof.
struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] bool all_passed() const noexcept;
  [[nodiscard]] const AssumptionCheck& check(std::string_view name) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

ValidationReport validate_assumptions(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed);

/// Largest K' with 2<x-y, b(x)-b(y)> <= -K'|x-y|^2 on all samples.
double estimate_dissipativity(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed);

/// Frobenius norm of a row-major matrix.
[[nodiscard]] double frobenius(std::span<const double> m) noexcept;

}  // namespace erg
