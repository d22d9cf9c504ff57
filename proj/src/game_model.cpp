#include "erg/game_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erg/error.hpp"
#include "erg/rng.hpp"

namespace erg {

std::string_view to_string(Player p) { return p == Player::u ? "u" : "v"; }
std::string_view to_string(Sense s) { return s == Sense::minimize ? "minimize" : "maximize"; }

bool Box::contains(std::span<const double> x) const noexcept {
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (x[k] < lower[k] || x[k] > upper[k]) return false;
  }
  return true;
}

double Box::volume() const noexcept {
  double v = 1.0;
  for (std::size_t k = 0; k < lower.size(); ++k) v *= upper[k] - lower[k];
  return v;
}

double frobenius(std::span<const double> m) noexcept {
  double s = 0.0;
  for (double e : m) s += e * e;
  return std::sqrt(s);
}

// ---------------------------------------------------------------- ControlGrid

ControlGrid::ControlGrid(Player label, std::size_t dim, std::vector<double> flat_points)
    : label_(label), dim_(dim), points_(std::move(flat_points)) {
  if (dim_ == 0 || points_.empty() || points_.size() % dim_ != 0) {
    throw PreconditionError("control grid " + std::string(to_string(label)) + " must be non-empty");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::equal(points_.begin() + i * dim_, points_.begin() + (i + 1) * dim_, points_.begin() + j * dim_)) {
        throw PreconditionError("control grid " + std::string(to_string(label)) + " has duplicate points");
      }
    }
  }
}

ControlGrid ControlGrid::uniform(Player label, const Vec& lower, const Vec& upper,
                                 const std::vector<std::size_t>& count) {
  const std::size_t dim = lower.size();
  if (dim == 0 || upper.size() != dim || count.size() != dim) {
    throw PreconditionError("control grid bounds and counts must have equal, non-zero length");
  }
  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) {
    if (count[k] == 0) throw PreconditionError("control grid count must be >= 1");
    if (count[k] > 1 && !(upper[k] > lower[k])) throw PreconditionError("control grid needs upper > lower");
    total *= count[k];
  }
  std::vector<double> pts(total * dim);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    for (std::size_t k = dim; k-- > 0;) {
      const std::size_t j = rem % count[k];
      rem /= count[k];
      pts[i * dim + k] = count[k] == 1 ? lower[k]
                                       : lower[k] + (upper[k] - lower[k]) * static_cast<double>(j) /
                                                        static_cast<double>(count[k] - 1);
    }
  }
  return ControlGrid(label, dim, std::move(pts));
}

ControlGrid ControlGrid::singleton(Player label, const Vec& point) { return ControlGrid(label, point.size(), point); }

std::size_t ControlGrid::nearest(std::span<const double> value) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      const double e = points_[i * dim_ + k] - value[k];
      d += e * e;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

double ControlGrid::cell_size() const noexcept {
  if (size() < 2) return 0.0;
  std::vector<double> first(size());
  for (std::size_t i = 0; i < size(); ++i) first[i] = points_[i * dim_];
  std::sort(first.begin(), first.end());
  double gap = 0.0;
  for (std::size_t i = 1; i < first.size(); ++i) gap = std::max(gap, first[i] - first[i - 1]);
  return gap;
}

// ------------------------------------------------------------ QuadraticPayoff

namespace {

double term(const Vec& coef, std::size_t k) { return k < coef.size() ? coef[k] : 0.0; }

}  // namespace

double QuadraticPayoff::operator()(std::span<const double> x, std::span<const double> u,
                                   std::span<const double> v) const noexcept {
  double f = constant;
  double norm2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    f += term(x_quad, k) * x[k] * x[k] + term(x_lin, k) * x[k];
    norm2 += x[k] * x[k];
  }
  if (x_abs != 0.0) f += x_abs * std::sqrt(norm2);
  for (std::size_t k = 0; k < u.size(); ++k) f += term(u_quad, k) * u[k] * u[k] + term(u_lin, k) * u[k];
  for (std::size_t k = 0; k < v.size(); ++k) f += term(v_quad, k) * v[k] * v[k] + term(v_lin, k) * v[k];
  if (uv_cross != 0.0) {
    double dot = 0.0;
    for (std::size_t k = 0; k < std::min(u.size(), v.size()); ++k) dot += u[k] * v[k];
    f += uv_cross * dot;
  }
  return f;
}

nlohmann::json QuadraticPayoff::to_json() const {
  return {{"x_quad", x_quad}, {"x_lin", x_lin}, {"x_abs", x_abs}, {"u_quad", u_quad}, {"u_lin", u_lin},
          {"v_quad", v_quad}, {"v_lin", v_lin}, {"uv_cross", uv_cross}, {"constant", constant}};
}

// ---------------------------------------------------------------- families

namespace {

double entry(const Vec& m, std::size_t cols, std::size_t r, std::size_t c) {
  return m.empty() ? 0.0 : m[r * cols + c];
}

void require_size(const Vec& m, std::size_t expected, const char* what) {
  if (!m.empty() && m.size() != expected) {
    throw PreconditionError(std::string("matrix ") + what + " has " + std::to_string(m.size()) +
                            " entries, expected " + std::to_string(expected));
  }
}

class AffineFamily final : public CoefficientSet {
 public:
  explicit AffineFamily(AffineParams p) : p_(std::move(p)) {
    require_size(p_.A, p_.n * p_.u_dim, "A");
    require_size(p_.Bm, p_.n * p_.n, "Bm");
    require_size(p_.C, p_.n * p_.n, "C");
    require_size(p_.E, p_.n * p_.v_dim, "E");
    require_size(p_.c0, p_.n, "c0");
    require_size(p_.S, p_.n * p_.d, "S");
    require_size(p_.St, p_.n * p_.d, "St");
    if (!p_.Bm.empty() && p_.v_dim != p_.n) throw PreconditionError("Bm (v ⊙ x) requires v_dim == n");
  }

  std::string_view family() const noexcept override { return "affine"; }
  std::size_t state_dim() const noexcept override { return p_.n; }
  std::size_t noise_dim() const noexcept override { return p_.d; }
  std::size_t u_dim() const noexcept override { return p_.u_dim; }
  std::size_t v_dim() const noexcept override { return p_.v_dim; }

  void drift(std::span<const double> x, std::span<const double> u, std::span<const double> v,
             std::span<double> out) const override {
    const std::size_t n = p_.n;
    for (std::size_t i = 0; i < n; ++i) {
      double b = p_.c0.empty() ? 0.0 : p_.c0[i];
      for (std::size_t k = 0; k < p_.u_dim; ++k) b += entry(p_.A, p_.u_dim, i, k) * u[k];
      for (std::size_t k = 0; k < p_.v_dim; ++k) b += entry(p_.E, p_.v_dim, i, k) * v[k];
      for (std::size_t j = 0; j < n; ++j) {
        b += entry(p_.C, n, i, j) * x[j];
        if (!p_.Bm.empty()) b += p_.Bm[i * n + j] * v[j] * x[j];
      }
      out[i] = b;
    }
  }

  void diffusion(std::span<const double> x, std::span<const double>, std::span<const double>,
                 std::span<double> out) const override {
    for (std::size_t i = 0; i < p_.n; ++i) {
      const double t = p_.St.empty() ? 0.0 : std::tanh(x[i]);
      for (std::size_t j = 0; j < p_.d; ++j) {
        out[i * p_.d + j] = entry(p_.S, p_.d, i, j) + entry(p_.St, p_.d, i, j) * t;
      }
    }
  }

  double payoff(std::span<const double> x, std::span<const double> u, std::span<const double> v) const override {
    return p_.payoff(x, u, v);
  }

  nlohmann::json parameters() const override {
    return {{"n", p_.n}, {"d", p_.d}, {"u_dim", p_.u_dim}, {"v_dim", p_.v_dim}, {"A", p_.A},
            {"Bm", p_.Bm}, {"C", p_.C},  {"E", p_.E},          {"c0", p_.c0},       {"S", p_.S},
            {"St", p_.St}, {"payoff", p_.payoff.to_json()}};
  }

 private:
  AffineParams p_;
};

class OuQuadraticFamily final : public CoefficientSet {
 public:
  explicit OuQuadraticFamily(OuQuadraticParams p) : p_(p) {
    if (p_.n == 0) throw PreconditionError("ou_quadratic needs n >= 1");
  }

  std::string_view family() const noexcept override { return "ou_quadratic"; }
  std::size_t state_dim() const noexcept override { return p_.n; }
  std::size_t noise_dim() const noexcept override { return p_.n; }
  std::size_t u_dim() const noexcept override { return 1; }
  std::size_t v_dim() const noexcept override { return 1; }

  void drift(std::span<const double> x, std::span<const double>, std::span<const double>,
             std::span<double> out) const override {
    for (std::size_t i = 0; i < p_.n; ++i) out[i] = -p_.kappa * x[i];
  }

  void diffusion(std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) const override {
    for (std::size_t i = 0; i < p_.n; ++i) {
      for (std::size_t j = 0; j < p_.n; ++j) out[i * p_.n + j] = i == j ? p_.sigma : 0.0;
    }
  }

  double payoff(std::span<const double> x, std::span<const double>, std::span<const double>) const override {
    double s = 0.0;
    for (double e : x) s += e * e;
    return p_.q * s + p_.c;
  }

  nlohmann::json parameters() const override {
    return {{"n", p_.n}, {"kappa", p_.kappa}, {"sigma", p_.sigma}, {"q", p_.q}, {"c", p_.c}};
  }

 private:
  OuQuadraticParams p_;
};

class PollutionFamily final : public CoefficientSet {
 public:
  explicit PollutionFamily(PollutionCoefficients p) : p_(p) {
    if (!(p_.g_power > 0.0 && p_.g_power < 1.0)) throw PreconditionError("utility power must lie in (0, 1)");
    if (!(p_.g_scale > 0.0)) throw PreconditionError("utility scale must be positive");
  }

  std::string_view family() const noexcept override { return "pollution"; }
  std::size_t state_dim() const noexcept override { return 1; }
  std::size_t noise_dim() const noexcept override { return 1; }
  std::size_t u_dim() const noexcept override { return 1; }
  std::size_t v_dim() const noexcept override { return 1; }

  void drift(std::span<const double> x, std::span<const double> u, std::span<const double> v,
             std::span<double> out) const override {
    out[0] = u[0] - v[0] * x[0];
  }

  void diffusion(std::span<const double> x, std::span<const double>, std::span<const double>,
                 std::span<double> out) const override {
    out[0] = p_.sigma1 == 0.0 ? p_.sigma0 : p_.sigma0 + p_.sigma1 * std::tanh(x[0]);
  }

  // Stock clipping max(Y, 0) lives in the payoff only.
  double payoff(std::span<const double> x, std::span<const double> u, std::span<const double>) const override {
    const double utility = p_.g_power == 0.5 ? p_.g_scale * std::sqrt(u[0]) : p_.g_scale * std::pow(u[0], p_.g_power);
    return utility - p_.d * std::max(x[0], 0.0);
  }

  nlohmann::json parameters() const override {
    return {{"d", p_.d}, {"sigma0", p_.sigma0}, {"sigma1", p_.sigma1}, {"g_scale", p_.g_scale},
            {"g_power", p_.g_power}};
  }

 private:
  PollutionCoefficients p_;
};

class PolynomialFamily final : public CoefficientSet {
 public:
  explicit PolynomialFamily(PolynomialParams p) : p_(std::move(p)) {
    if (p_.p3 < 0.0) throw PreconditionError("custom_polynomial leading coefficient p3 must be >= 0 (dissipative)");
    require_size(p_.A, p_.n * p_.u_dim, "A");
    require_size(p_.E, p_.n * p_.v_dim, "E");
  }

  std::string_view family() const noexcept override { return "custom_polynomial"; }
  std::size_t state_dim() const noexcept override { return p_.n; }
  std::size_t noise_dim() const noexcept override { return p_.n; }
  std::size_t u_dim() const noexcept override { return p_.u_dim; }
  std::size_t v_dim() const noexcept override { return p_.v_dim; }

  void drift(std::span<const double> x, std::span<const double> u, std::span<const double> v,
             std::span<double> out) const override {
    for (std::size_t i = 0; i < p_.n; ++i) {
      const double xi = x[i];
      double b = ((-p_.p3 * xi + p_.p2) * xi - p_.p1) * xi + p_.p0;
      for (std::size_t k = 0; k < p_.u_dim; ++k) b += entry(p_.A, p_.u_dim, i, k) * u[k];
      for (std::size_t k = 0; k < p_.v_dim; ++k) b += entry(p_.E, p_.v_dim, i, k) * v[k];
      out[i] = b;
    }
  }

  void diffusion(std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) const override {
    for (std::size_t i = 0; i < p_.n; ++i) {
      for (std::size_t j = 0; j < p_.n; ++j) out[i * p_.n + j] = i == j ? p_.sigma : 0.0;
    }
  }

  double payoff(std::span<const double> x, std::span<const double> u, std::span<const double> v) const override {
    return p_.payoff(x, u, v);
  }

  nlohmann::json parameters() const override {
    return {{"n", p_.n}, {"u_dim", p_.u_dim}, {"v_dim", p_.v_dim}, {"p3", p_.p3},   {"p2", p_.p2},
            {"p1", p_.p1}, {"p0", p_.p0},       {"sigma", p_.sigma}, {"A", p_.A}, {"E", p_.E},
            {"payoff", p_.payoff.to_json()}};
  }

 private:
  PolynomialParams p_;
};

/// Affine transformation of another family's payoff: scale * f + shift.
class PayoffTransform final : public CoefficientSet {
 public:
  PayoffTransform(std::shared_ptr<const CoefficientSet> base, double scale, double shift)
      : base_(std::move(base)), scale_(scale), shift_(shift) {}

  std::string_view family() const noexcept override { return base_->family(); }
  std::size_t state_dim() const noexcept override { return base_->state_dim(); }
  std::size_t noise_dim() const noexcept override { return base_->noise_dim(); }
  std::size_t u_dim() const noexcept override { return base_->u_dim(); }
  std::size_t v_dim() const noexcept override { return base_->v_dim(); }
  void drift(std::span<const double> x, std::span<const double> u, std::span<const double> v,
             std::span<double> out) const override {
    base_->drift(x, u, v, out);
  }
  void diffusion(std::span<const double> x, std::span<const double> u, std::span<const double> v,
                 std::span<double> out) const override {
    base_->diffusion(x, u, v, out);
  }
  double payoff(std::span<const double> x, std::span<const double> u, std::span<const double> v) const override {
    return scale_ * base_->payoff(x, u, v) + shift_;
  }
  nlohmann::json parameters() const override {
    auto j = base_->parameters();
    j["payoff_scale"] = scale_;
    j["payoff_shift"] = shift_;
    return j;
  }

 private:
  std::shared_ptr<const CoefficientSet> base_;
  double scale_, shift_;
};

}  // namespace

std::shared_ptr<const CoefficientSet> make_affine(AffineParams p) {
  return std::make_shared<AffineFamily>(std::move(p));
}
std::shared_ptr<const CoefficientSet> make_ou_quadratic(OuQuadraticParams p) {
  return std::make_shared<OuQuadraticFamily>(p);
}
std::shared_ptr<const CoefficientSet> make_pollution(PollutionCoefficients p) {
  return std::make_shared<PollutionFamily>(p);
}
std::shared_ptr<const CoefficientSet> make_custom_polynomial(PolynomialParams p) {
  return std::make_shared<PolynomialFamily>(std::move(p));
}

const std::vector<std::string>& registered_families() {
  static const std::vector<std::string> names{"affine", "ou_quadratic", "pollution", "custom_polynomial"};
  return names;
}

// ---------------------------------------------------------------- ProblemSpec

void ProblemSpec::check() const {
  if (!coeffs) throw PreconditionError("problem spec has no coefficients");
  const std::size_t n = coeffs->state_dim();
  if (u_grid.dim() != coeffs->u_dim() || v_grid.dim() != coeffs->v_dim()) {
    throw PreconditionError("control grid dimension does not match the coefficient family");
  }
  if (u_grid.label() != Player::u || v_grid.label() != Player::v) {
    throw PreconditionError("control grids must be labelled U and V");
  }
  if (!(K > 0.0)) throw PreconditionError("dissipativity constant K must be positive");
  if (!(K > C_sigma * C_sigma)) throw PreconditionError("assumption H3 requires K > C_sigma^2");
  if (C_b < 0.0 || C_sigma < 0.0 || C_f < 0.0 || sigma_bound < 0.0) {
    throw PreconditionError("Lipschitz constants and sigma_bound must be non-negative");
  }
  if (box.dim() != n || box.upper.size() != n) throw PreconditionError("truncation box dimension mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(box.upper[k] > box.lower[k])) throw PreconditionError("truncation box needs upper > lower");
  }
  if (!grid_nodes.empty() && grid_nodes.size() != n) throw PreconditionError("grid node counts dimension mismatch");
  if (state_floor && state_floor->size() != n) throw PreconditionError("state floor dimension mismatch");
}

nlohmann::json ProblemSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["family"] = std::string(coeffs->family());
  j["parameters"] = coeffs->parameters();
  j["state_dim"] = state_dim();
  j["noise_dim"] = noise_dim();
  j["sense"] = std::string(to_string(sense));
  j["u_grid"] = {{"dim", u_grid.dim()}, {"points", u_grid.flat()}};
  j["v_grid"] = {{"dim", v_grid.dim()}, {"points", v_grid.flat()}};
  j["constants"] = {{"K", K}, {"C_b", C_b}, {"C_sigma", C_sigma}, {"C_f", C_f}, {"sigma_bound", sigma_bound}};
  j["truncation"] = {{"lower", box.lower}, {"upper", box.upper}, {"nodes", grid_nodes}};
  if (state_floor) j["truncation"]["floor"] = *state_floor;
  return j;
}

ProblemSpec with_payoff_shift(const ProblemSpec& spec, double shift) {
  ProblemSpec out = spec;
  out.coeffs = std::make_shared<PayoffTransform>(spec.coeffs, 1.0, shift);
  return out;
}

ProblemSpec with_payoff_scale(const ProblemSpec& spec, double scale) {
  if (!(scale > 0.0)) throw PreconditionError("payoff scale must be positive");
  ProblemSpec out = spec;
  out.coeffs = std::make_shared<PayoffTransform>(spec.coeffs, scale, 0.0);
  out.C_f = spec.C_f * scale;
  return out;
}

double drift_at_origin(const ProblemSpec& spec) {
  const std::size_t n = spec.state_dim();
  const Vec zero(n, 0.0);
  Vec b(n);
  double best = 0.0;
  for (std::size_t iu = 0; iu < spec.u_grid.size(); ++iu) {
    for (std::size_t iv = 0; iv < spec.v_grid.size(); ++iv) {
      spec.coeffs->drift(zero, spec.u_grid.point(iu), spec.v_grid.point(iv), b);
      double s = 0.0;
      for (double e : b) s += e * e;
      best = std::max(best, std::sqrt(s));
    }
  }
  return best;
}

double confinement_radius(const ProblemSpec& spec) {
  const double bt = drift_at_origin(spec);
  const double st = spec.sigma_bound;
  return (bt + std::sqrt(bt * bt + spec.K * st * st)) / spec.K;
}

// ------------------------------------------------------------ validation

bool ValidationReport::all_passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

const AssumptionCheck& ValidationReport::check(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw PreconditionError("no check named " + std::string(name));
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json j;
  j["sample_count"] = sample_count;
  j["seed"] = seed;
  j["all_passed"] = all_passed();
  j["statement"] = all_passed() ? "no violation found among sampled points" : "violation found";
  for (const auto& c : checks) {
    nlohmann::json e{{"name", c.name}, {"passed", c.passed}, {"worst_margin", c.worst_margin}};
    if (c.witness) {
      e["witness"] = {{"x", c.witness->x}, {"y", c.witness->y}, {"u_index", c.witness->u_index},
                      {"v_index", c.witness->v_index}};
    }
    j["checks"].push_back(std::move(e));
  }
  return j;
}

namespace {

// Uniform sample pair (x, y) in the truncation box for sample s.
void sample_pair(const ProblemSpec& spec, const CounterRng& rng, std::size_t s, Vec& x, Vec& y) {
  const std::size_t n = spec.state_dim();
  Vec u(2 * n);
  rng.uniforms(RngStream::validation, static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32), u);
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = spec.box.lower[k], hi = spec.box.upper[k];
    x[k] = lo + (hi - lo) * u[k];
    y[k] = lo + (hi - lo) * u[n + k];
  }
}

struct Tracker {
  AssumptionCheck check;
  explicit Tracker(std::string name) { check.name = std::move(name); check.worst_margin = -std::numeric_limits<double>::infinity(); }
  void observe(double margin, double scale, const Vec& x, const Vec& y, std::size_t iu, std::size_t iv) {
    if (margin > check.worst_margin) {
      check.worst_margin = margin;
      if (margin > 1e-9 * (1.0 + scale)) {
        check.passed = false;
        check.witness = Witness{x, y, iu, iv};
      }
    }
  }
};

}  // namespace

ValidationReport validate_assumptions(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed) {
  if (sample_count < 1) throw PreconditionError("sample_count must be >= 1");
  spec.check();
  const std::size_t n = spec.state_dim();
  const std::size_t d = spec.noise_dim();
  const CounterRng rng(seed);

  Tracker drift_lip("H2_drift_lipschitz"), payoff_lip("H2_payoff_lipschitz"), sigma_lip("H2_sigma_lipschitz"),
      dissipative("H3_dissipativity"), sigma_bound("H4_sigma_bound");
  Tracker structural("H3_K_exceeds_C_sigma_squared");
  structural.observe(spec.C_sigma * spec.C_sigma - spec.K, spec.K, {}, {}, 0, 0);

  Vec x(n), y(n), bx(n), by(n), sx(n * d), sy(n * d), ds(n * d);
  for (std::size_t s = 0; s < sample_count; ++s) {
    sample_pair(spec, rng, s, x, y);
    double dist2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) dist2 += (x[k] - y[k]) * (x[k] - y[k]);
    const double dist = std::sqrt(dist2);
    for (std::size_t iu = 0; iu < spec.u_grid.size(); ++iu) {
      const auto u = spec.u_grid.point(iu);
      for (std::size_t iv = 0; iv < spec.v_grid.size(); ++iv) {
        const auto v = spec.v_grid.point(iv);
        spec.coeffs->drift(x, u, v, bx);
        spec.coeffs->drift(y, u, v, by);
        spec.coeffs->diffusion(x, u, v, sx);
        spec.coeffs->diffusion(y, u, v, sy);
        double db2 = 0.0, inner = 0.0, bscale = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double e = bx[k] - by[k];
          db2 += e * e;
          inner += (x[k] - y[k]) * e;
          bscale += std::abs(bx[k]) + std::abs(by[k]);
        }
        for (std::size_t k = 0; k < n * d; ++k) ds[k] = sx[k] - sy[k];
        const double fx = spec.coeffs->payoff(x, u, v);
        const double fy = spec.coeffs->payoff(y, u, v);

        drift_lip.observe(std::sqrt(db2) - spec.C_b * dist, bscale, x, y, iu, iv);
        payoff_lip.observe(std::abs(fx - fy) - spec.C_f * dist, std::abs(fx) + std::abs(fy), x, y, iu, iv);
        sigma_lip.observe(frobenius(ds) - spec.C_sigma * dist, frobenius(sx) + frobenius(sy), x, y, iu, iv);
        dissipative.observe(2.0 * inner + spec.K * dist2, std::abs(inner) + spec.K * dist2, x, y, iu, iv);
        sigma_bound.observe(frobenius(sx) - spec.sigma_bound, spec.sigma_bound, x, y, iu, iv);
      }
    }
  }

  ValidationReport report;
  report.sample_count = sample_count;
  report.seed = seed;
  for (auto* t : {&drift_lip, &payoff_lip, &sigma_lip, &dissipative, &sigma_bound, &structural}) {
    report.checks.push_back(std::move(t->check));
  }
  return report;
}

double estimate_dissipativity(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed) {
  if (sample_count < 2) throw PreconditionError("sample_count must be >= 2");
  const std::size_t n = spec.state_dim();
  const CounterRng rng(seed);
  Vec x(n), y(n), bx(n), by(n);
  double k_est = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sample_count; ++s) {
    sample_pair(spec, rng, s, x, y);
    double dist2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) dist2 += (x[k] - y[k]) * (x[k] - y[k]);
    if (dist2 == 0.0) continue;
    for (std::size_t iu = 0; iu < spec.u_grid.size(); ++iu) {
      for (std::size_t iv = 0; iv < spec.v_grid.size(); ++iv) {
        spec.coeffs->drift(x, spec.u_grid.point(iu), spec.v_grid.point(iv), bx);
        spec.coeffs->drift(y, spec.u_grid.point(iu), spec.v_grid.point(iv), by);
        double inner = 0.0;
        for (std::size_t k = 0; k < n; ++k) inner += (x[k] - y[k]) * (bx[k] - by[k]);
        k_est = std::min(k_est, -2.0 * inner / dist2);
      }
    }
  }
  return k_est;
}

}  // namespace erg
