#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "erg/game_model.hpp"

namespace erg {

/// Rectangular tensor grid in one or two dimensions. Nodes are numbered
/// lexicographically with the last coordinate fastest.
class StateGrid {
 public:
  StateGrid(Vec lower, Vec upper, std::vector<std::size_t> nodes);

  /// Grid on `spec.box` with `spec.grid_nodes`; rejects boxes that do not
  /// contain the confinement ball.
  static StateGrid for_spec(const ProblemSpec& spec);
  /// Same bounds as `g`, with (nodes - 1) * factor + 1 nodes per axis.
  static StateGrid refined(const StateGrid& g, std::size_t factor);

  [[nodiscard]] std::size_t dim() const noexcept { return lower_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return total_; }
  [[nodiscard]] std::size_t nodes(std::size_t k) const noexcept { return nodes_[k]; }
  [[nodiscard]] double lower(std::size_t k) const noexcept { return lower_[k]; }
  [[nodiscard]] double upper(std::size_t k) const noexcept { return upper_[k]; }
  [[nodiscard]] double h(std::size_t k) const noexcept { return h_[k]; }
  [[nodiscard]] double h_max() const noexcept;
  [[nodiscard]] Box box() const { return {lower_, upper_}; }

  [[nodiscard]] std::array<std::size_t, 2> multi(std::size_t index) const noexcept;
  [[nodiscard]] std::size_t flat(std::size_t i0, std::size_t i1 = 0) const noexcept {
    return dim() == 1 ? i0 : i0 * nodes_[1] + i1;
  }
  [[nodiscard]] double coord(std::size_t index, std::size_t k) const noexcept;
  void coords(std::size_t index, std::span<double> out) const noexcept;
  [[nodiscard]] double norm(std::size_t index) const noexcept;
  /// True when the node lies on a face of the box.
  [[nodiscard]] bool on_boundary(std::size_t index) const noexcept;
  /// Euclidean distance from the node to the nearest box face.
  [[nodiscard]] double distance_to_boundary(std::size_t index) const noexcept;
  /// Nearest node in Euclidean distance, lowest index on ties.
  [[nodiscard]] std::size_t nearest(std::span<const double> x) const noexcept;
  /// Node nearest the origin (the normalization anchor).
  [[nodiscard]] std::size_t origin_index() const noexcept;

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] bool operator==(const StateGrid& o) const noexcept {
    return lower_ == o.lower_ && upper_ == o.upper_ && nodes_ == o.nodes_;
  }

 private:
  Vec lower_, upper_, h_;
  std::vector<std::size_t> nodes_;
  std::size_t total_ = 0;
};

/// Scalar field sampled on a StateGrid.
struct GridFunction {
  StateGrid grid;
  Vec values;

  GridFunction(StateGrid g, Vec v);
  GridFunction(StateGrid g, double constant);

  template <class F>
  static GridFunction sample(const StateGrid& g, F&& fn) {
    Vec v(g.size());
    Vec x(g.dim());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.coords(i, x);
      v[i] = fn(std::span<const double>(x));
    }
    return GridFunction(g, std::move(v));
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }

  [[nodiscard]] double sup_norm() const noexcept;
  /// Largest |adjacent difference| / h along any axis.
  [[nodiscard]] double lipschitz() const noexcept;
  [[nodiscard]] bool all_finite() const noexcept;
  [[nodiscard]] double at(std::span<const double> x) const noexcept { return values[grid.nearest(x)]; }
};

/// Sup-norm distance between two functions on the same grid.
[[nodiscard]] double sup_distance(const GridFunction& a, const GridFunction& b);
/// Same, restricted to nodes with `mask[i]`.
[[nodiscard]] double sup_distance(const GridFunction& a, const GridFunction& b, const std::vector<bool>& mask);

/// CSV with header `x1[,x2],value`, full precision.
void write_csv(const GridFunction& f, const std::filesystem::path& path, const std::string& value_name = "value");
/// Reads a CSV written by write_csv; the grid is reconstructed from coordinates.
[[nodiscard]] GridFunction read_csv(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json to_json(const GridFunction& f);

}  // namespace erg
