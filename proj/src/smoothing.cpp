#include "erg/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erg/error.hpp"
#include "erg/parallel.hpp"

namespace erg {

namespace {

double dist2(const StateGrid& g, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t k = 0; k < g.dim(); ++k) {
    const double e = g.coord(a, k) - g.coord(b, k);
    s += e * e;
  }
  return s;
}

// Inclusive index window [lo, hi] per axis reaching at most `radius` from node i.
std::array<std::array<std::size_t, 2>, 2> window(const StateGrid& g, std::size_t i, double radius) {
  const auto m = g.multi(i);
  std::array<std::array<std::size_t, 2>, 2> w{};
  for (std::size_t k = 0; k < g.dim(); ++k) {
    const double steps = std::isfinite(radius) ? std::floor(radius / g.h(k) + 1e-9) + 1.0 : 1e18;
    const auto r = static_cast<std::size_t>(std::min(steps, static_cast<double>(g.nodes(k))));
    w[k][0] = m[k] > r ? m[k] - r : 0;
    w[k][1] = std::min(g.nodes(k) - 1, m[k] + r);
  }
  if (g.dim() == 1) w[1] = {0, 0};
  return w;
}

ConvolvedFunction convolve(const GridFunction& w, double eps, ConvolutionDirection dir) {
  if (!(eps > 0.0)) throw PreconditionError("eps must be positive");
  if (!w.all_finite()) throw PreconditionError("convolution source must be finite");
  const StateGrid& g = w.grid;
  const bool sup = dir == ConvolutionDirection::sup;
  const auto [lo_it, hi_it] = std::minmax_element(w.values.begin(), w.values.end());
  const double osc = *hi_it - *lo_it;
  const double M = w.lipschitz();

  ConvolvedFunction c{w, eps, dir, GridFunction(g, 0.0), std::vector<std::size_t>(g.size()),
                      std::vector<bool>(g.size()), M};
  std::vector<char> affected(g.size(), 0);
  parallel_for(g.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      // A y farther than sqrt(2 eps osc) cannot beat y = x.
      const double radius = std::sqrt(2.0 * eps * osc);
      const auto win = window(g, i, radius);
      double best = w[i];
      std::size_t arg = i;
      bool first = true;
      for (std::size_t a = win[0][0]; a <= win[0][1]; ++a) {
        for (std::size_t b = win[1][0]; b <= win[1][1]; ++b) {
          const std::size_t j = g.flat(a, b);
          const double pen = dist2(g, i, j) / (2.0 * eps);
          const double val = sup ? w[j] - pen : w[j] + pen;
          if (first || (sup ? val > best : val < best)) {
            best = val;
            arg = j;
            first = false;
          }
        }
      }
      c.values[i] = best;
      c.arg[i] = arg;
      affected[i] = (g.distance_to_boundary(i) < 2.0 * M * eps || (g.on_boundary(arg) && arg != i)) ? 1 : 0;
    }
  });
  for (std::size_t i = 0; i < g.size(); ++i) {
    c.boundary_affected[i] = affected[i] != 0;
    if (affected[i]) continue;
    c.sup_gap = std::max(c.sup_gap, std::abs(c.values[i] - w[i]));
    c.max_displacement = std::max(c.max_displacement, std::sqrt(dist2(g, i, c.arg[i])));
  }
  return c;
}

}  // namespace

ConvolvedFunction sup_convolve(const GridFunction& w, double eps) { return convolve(w, eps, ConvolutionDirection::sup); }
ConvolvedFunction inf_convolve(const GridFunction& w, double eps) { return convolve(w, eps, ConvolutionDirection::inf); }

std::vector<bool> ConvolvedFunction::interior_mask() const {
  std::vector<bool> m(boundary_affected.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = !boundary_affected[i] && !values.grid.on_boundary(i);
  return m;
}

double semiconvexity_margin(const ConvolvedFunction& c) {
  const StateGrid& g = c.values.grid;
  const double sign = c.direction == ConvolutionDirection::sup ? 1.0 : -1.0;
  auto lifted = [&](std::size_t i) { return sign * c.values[i] + g.norm(i) * g.norm(i) / (2.0 * c.eps); };
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (c.boundary_affected[i] || g.on_boundary(i)) continue;
    const auto m = g.multi(i);
    for (std::size_t k = 0; k < g.dim(); ++k) {
      auto shifted = m;
      shifted[k] = m[k] - 1;
      const std::size_t lo = g.flat(shifted[0], shifted[1]);
      shifted[k] = m[k] + 1;
      const std::size_t hi = g.flat(shifted[0], shifted[1]);
      const double d2 = (lifted(hi) - 2.0 * lifted(i) + lifted(lo)) / (g.h(k) * g.h(k));
      margin = std::min(margin, d2);
    }
  }
  return margin;
}

nlohmann::json ConvolvedFunction::to_json() const {
  const auto affected = static_cast<std::size_t>(std::count(boundary_affected.begin(), boundary_affected.end(), true));
  return {{"eps", eps},
          {"direction", direction == ConvolutionDirection::sup ? "sup" : "inf"},
          {"source_lipschitz", source_lipschitz},
          {"sup_gap", sup_gap},
          {"max_displacement", max_displacement},
          {"boundary_affected_nodes", affected},
          {"semiconvexity_margin", semiconvexity_margin(*this)}};
}

MollifiedFunction mollify(const GridFunction& w, double delta) {
  if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
  const StateGrid& g = w.grid;
  MollifiedFunction m{w, delta, GridFunction(g, 0.0), delta < 2.0 * g.h_max(), std::vector<bool>(g.size())};

  // Kernel offsets tabulated once.
  struct Tap {
    long d0, d1;
    double weight;
  };
  std::vector<Tap> taps;
  const long r0 = static_cast<long>(std::floor(delta / g.h(0)));
  const long r1 = g.dim() == 2 ? static_cast<long>(std::floor(delta / g.h(1))) : 0;
  for (long a = -r0; a <= r0; ++a) {
    for (long b = -r1; b <= r1; ++b) {
      const double x0 = static_cast<double>(a) * g.h(0);
      const double x1 = g.dim() == 2 ? static_cast<double>(b) * g.h(1) : 0.0;
      const double q = (x0 * x0 + x1 * x1) / (delta * delta);
      if (q >= 1.0) continue;
      const double s = 1.0 - q;
      taps.push_back({a, b, s * s * s});
    }
  }
  std::vector<char> band(g.size(), 0);
  parallel_for(g.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = g.multi(i);
      double num = 0.0, mass = 0.0;
      for (const auto& t : taps) {
        const long a = static_cast<long>(idx[0]) + t.d0;
        const long b = static_cast<long>(idx[1]) + t.d1;
        if (a < 0 || a >= static_cast<long>(g.nodes(0))) continue;
        if (g.dim() == 2 && (b < 0 || b >= static_cast<long>(g.nodes(1)))) continue;
        const std::size_t j = g.flat(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        num += t.weight * (w[j] - w[i]);
        mass += t.weight;
      }
      // Written as a correction to w_i so constants are reproduced bit for bit.
      m.values[i] = w[i] + num / mass;
      band[i] = g.distance_to_boundary(i) < delta ? 1 : 0;
    }
  });
  for (std::size_t i = 0; i < g.size(); ++i) m.boundary_band[i] = band[i] != 0;
  return m;
}

nlohmann::json MollifiedFunction::to_json() const {
  const auto banded = static_cast<std::size_t>(std::count(boundary_band.begin(), boundary_band.end(), true));
  return {{"delta", delta},
          {"near_identity", near_identity},
          {"boundary_band_nodes", banded},
          {"sup_gap", sup_distance(values, source)}};
}

GridFunction subsolution_defect(const DiscreteOperator& op, const GridFunction& w, double rho, Ordering ordering) {
  if (!(w.grid == op.grid())) throw PreconditionError("w lives on a different grid than the operator");
  GridFunction d(w.grid, 0.0);
  parallel_for(op.nodes(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) d[i] = rho - op.minimax_q(w.values, i, ordering).value;
  });
  return d;
}

GridFunction subsolution_defect(const ProblemSpec& spec, const GridFunction& w, double rho, Ordering ordering) {
  return subsolution_defect(DiscreteOperator(spec, w.grid), w, rho, ordering);
}

double normalized_positive_defect(const GridFunction& defect, const std::vector<bool>& mask) {
  double worst = 0.0;
  for (std::size_t i = 0; i < defect.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    worst = std::max(worst, std::max(defect[i], 0.0) / (1.0 + defect.grid.norm(i)));
  }
  return worst;
}

}  // namespace erg
