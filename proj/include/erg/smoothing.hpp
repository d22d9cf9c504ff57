#pragma once

// Sup-/inf-convolution and mollification of grid functions, and the
// nodewise defect of a smoothed function in the ergodic equation.

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "erg/grid.hpp"
#include "erg/hjbi.hpp"

namespace erg {

enum class ConvolutionDirection { sup, inf };

struct ConvolvedFunction {
  GridFunction source;
  double eps = 0.0;
  ConvolutionDirection direction = ConvolutionDirection::sup;
  GridFunction values;
  /// Node index of the optimizing y*(x).
  std::vector<std::size_t> arg;
  /// Nodes closer than 2 M eps to the box, or whose y* lies on the box.
  std::vector<bool> boundary_affected;
  /// Grid Lipschitz seminorm M of the source.
  double source_lipschitz = 0.0;
  /// sup |w^eps - w| over unaffected nodes.
  double sup_gap = 0.0;
  /// max |y* - x| over unaffected nodes.
  double max_displacement = 0.0;

  [[nodiscard]] std::vector<bool> interior_mask() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// w^eps(x) = max over nodes y of w(y) - |x - y|^2 / (2 eps).
[[nodiscard]] ConvolvedFunction sup_convolve(const GridFunction& w, double eps);
/// w_eps(x) = min over nodes y of w(y) + |x - y|^2 / (2 eps).
[[nodiscard]] ConvolvedFunction inf_convolve(const GridFunction& w, double eps);

/// Smallest discrete second difference of w^eps + |x|^2/(2 eps) (sup case) or
/// of |x|^2/(2 eps) - w_eps (inf case) over interior unaffected nodes and axes.
[[nodiscard]] double semiconvexity_margin(const ConvolvedFunction& c);

struct MollifiedFunction {
  GridFunction source;
  double delta = 0.0;
  GridFunction values;
  /// delta < 2 h: the kernel barely averages.
  bool near_identity = false;
  /// Nodes within delta of the box, where the kernel is renormalized.
  std::vector<bool> boundary_band;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Discrete convolution with the bump (1 - r^2/delta^2)^3, normalized to
/// unit mass over the nodes in reach.
[[nodiscard]] MollifiedFunction mollify(const GridFunction& w, double delta);

/// rho - minimax Q(w)_i at every node, with the solver's discrete operator.
[[nodiscard]] GridFunction subsolution_defect(const DiscreteOperator& op, const GridFunction& w, double rho,
                                              Ordering ordering);
[[nodiscard]] GridFunction subsolution_defect(const ProblemSpec& spec, const GridFunction& w, double rho,
                                              Ordering ordering);

/// max over masked nodes of max(defect, 0) / (1 + |x|).
[[nodiscard]] double normalized_positive_defect(const GridFunction& defect, const std::vector<bool>& mask);

}  // namespace erg
