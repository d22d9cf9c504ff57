#include "erg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "erg/error.hpp"

namespace erg {

StateGrid::StateGrid(Vec lower, Vec upper, std::vector<std::size_t> nodes)
    : lower_(std::move(lower)), upper_(std::move(upper)), nodes_(std::move(nodes)) {
  const std::size_t n = lower_.size();
  if (n < 1 || n > 2) throw PreconditionError("grid solvers support state dimension 1 or 2");
  if (upper_.size() != n || nodes_.size() != n) throw PreconditionError("grid bounds and node counts differ in length");
  total_ = 1;
  h_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (nodes_[k] < 3) throw PreconditionError("grid needs at least 3 nodes per dimension");
    if (!(upper_[k] > lower_[k])) throw PreconditionError("grid needs upper > lower");
    h_[k] = (upper_[k] - lower_[k]) / static_cast<double>(nodes_[k] - 1);
    total_ *= nodes_[k];
  }
}

StateGrid StateGrid::for_spec(const ProblemSpec& spec) {
  const std::size_t n = spec.state_dim();
  std::vector<std::size_t> nodes = spec.grid_nodes;
  if (nodes.empty()) nodes.assign(n, n == 1 ? 401 : 81);
  const double r = confinement_radius(spec);
  for (std::size_t k = 0; k < n; ++k) {
    const double lo_needed = spec.state_floor ? std::max(-r, (*spec.state_floor)[k]) : -r;
    if (spec.box.lower[k] > lo_needed + 1e-12 || spec.box.upper[k] < r - 1e-12) {
      std::ostringstream msg;
      msg << "truncation box does not contain the confinement ball of radius " << r << " along axis " << k;
      throw PreconditionError(msg.str());
    }
  }
  return StateGrid(spec.box.lower, spec.box.upper, nodes);
}

StateGrid StateGrid::refined(const StateGrid& g, std::size_t factor) {
  std::vector<std::size_t> nodes(g.dim());
  for (std::size_t k = 0; k < g.dim(); ++k) nodes[k] = (g.nodes(k) - 1) * factor + 1;
  return StateGrid(g.lower_, g.upper_, nodes);
}

double StateGrid::h_max() const noexcept { return *std::max_element(h_.begin(), h_.end()); }

std::array<std::size_t, 2> StateGrid::multi(std::size_t index) const noexcept {
  if (dim() == 1) return {index, 0};
  return {index / nodes_[1], index % nodes_[1]};
}

double StateGrid::coord(std::size_t index, std::size_t k) const noexcept {
  const auto m = multi(index);
  // Last node is pinned to the upper bound so that boxes round-trip exactly.
  if (m[k] + 1 == nodes_[k]) return upper_[k];
  return lower_[k] + static_cast<double>(m[k]) * h_[k];
}

void StateGrid::coords(std::size_t index, std::span<double> out) const noexcept {
  for (std::size_t k = 0; k < dim(); ++k) out[k] = coord(index, k);
}

double StateGrid::norm(std::size_t index) const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < dim(); ++k) s += coord(index, k) * coord(index, k);
  return std::sqrt(s);
}

bool StateGrid::on_boundary(std::size_t index) const noexcept {
  const auto m = multi(index);
  for (std::size_t k = 0; k < dim(); ++k) {
    if (m[k] == 0 || m[k] + 1 == nodes_[k]) return true;
  }
  return false;
}

double StateGrid::distance_to_boundary(std::size_t index) const noexcept {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dim(); ++k) {
    const double x = coord(index, k);
    d = std::min({d, x - lower_[k], upper_[k] - x});
  }
  return d;
}

std::size_t StateGrid::nearest(std::span<const double> x) const noexcept {
  std::array<std::size_t, 2> m{0, 0};
  for (std::size_t k = 0; k < dim(); ++k) {
    const double t = (x[k] - lower_[k]) / h_[k];
    if (!(t > 0.0)) {
      m[k] = 0;
      continue;
    }
    const double fl = std::floor(t);
    // Round half down so ties resolve to the lower index.
    auto i = static_cast<std::size_t>(t - fl > 0.5 ? fl + 1.0 : fl);
    m[k] = std::min(i, nodes_[k] - 1);
  }
  return flat(m[0], m[1]);
}

std::size_t StateGrid::origin_index() const noexcept {
  const Vec zero(dim(), 0.0);
  return nearest(zero);
}

nlohmann::json StateGrid::to_json() const {
  return {{"lower", lower_}, {"upper", upper_}, {"nodes", nodes_}, {"h", h_}};
}

GridFunction::GridFunction(StateGrid g, Vec v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid.size()) throw PreconditionError("grid function size does not match its grid");
}

GridFunction::GridFunction(StateGrid g, double constant) : grid(std::move(g)), values(grid.size(), constant) {}

double GridFunction::sup_norm() const noexcept {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double GridFunction::lipschitz() const noexcept {
  double lip = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto m = grid.multi(i);
    for (std::size_t k = 0; k < grid.dim(); ++k) {
      if (m[k] + 1 >= grid.nodes(k)) continue;
      const std::size_t j = k == 0 ? grid.flat(m[0] + 1, m[1]) : grid.flat(m[0], m[1] + 1);
      lip = std::max(lip, std::abs(values[j] - values[i]) / grid.h(k));
    }
  }
  return lip;
}

bool GridFunction::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double sup_distance(const GridFunction& a, const GridFunction& b) {
  if (!(a.grid == b.grid)) throw PreconditionError("grid functions live on different grids");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sup_distance(const GridFunction& a, const GridFunction& b, const std::vector<bool>& mask) {
  if (!(a.grid == b.grid) || mask.size() != a.size()) throw PreconditionError("grid functions live on different grids");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask[i]) m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

void write_csv(const GridFunction& f, const std::filesystem::path& path, const std::string& value_name) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (std::size_t k = 0; k < f.grid.dim(); ++k) out << 'x' << (k + 1) << ',';
  out << value_name << '\n';
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t k = 0; k < f.grid.dim(); ++k) out << f.grid.coord(i, k) << ',';
    out << f[i] << '\n';
  }
}

GridFunction read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2 || columns > 3) throw Error(path.string() + ": expected columns x1[,x2],value");
  const std::size_t n = columns - 1;
  std::vector<Vec> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    Vec row(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      std::string cell;
      if (!std::getline(ss, cell, ',')) throw Error(path.string() + ": short row");
      row[c] = std::stod(cell);
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::map<double, std::size_t>> axes(n);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < n; ++k) axes[k].emplace(r[k], 0);
  }
  Vec lo(n), hi(n);
  std::vector<std::size_t> counts(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t idx = 0;
    for (auto& [x, i] : axes[k]) i = idx++;
    lo[k] = axes[k].begin()->first;
    hi[k] = axes[k].rbegin()->first;
    counts[k] = axes[k].size();
  }
  StateGrid g(lo, hi, counts);
  if (rows.size() != g.size()) throw Error(path.string() + ": rows do not form a full tensor grid");
  Vec values(g.size());
  for (const auto& r : rows) {
    const std::size_t i0 = axes[0].at(r[0]);
    const std::size_t i1 = n == 2 ? axes[1].at(r[1]) : 0;
    values[g.flat(i0, i1)] = r[n];
  }
  return GridFunction(g, std::move(values));
}

nlohmann::json to_json(const GridFunction& f) {
  return {{"grid", f.grid.to_json()}, {"values", f.values}, {"lipschitz", f.lipschitz()}, {"sup_norm", f.sup_norm()}};
}

}  // namespace erg
