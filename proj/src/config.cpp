#include "erg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "erg/error.hpp"
#include "erg/pollution.hpp"

namespace erg {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

[[noreturn]] void fail(const YAML::Node& n, const std::string& key, const std::string& msg) {
  throw ConfigError(line_of(n), key, msg);
}

// Rejects keys outside `allowed` so that typos do not pass silently.
void check_keys(const YAML::Node& map, const std::string& where, const std::set<std::string>& allowed) {
  if (!map.IsMap()) fail(map, where, "expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, where.empty() ? key : where + "." + key, "unknown key");
  }
}

double as_real(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) fail(n, key, "expected a number");
  try {
    const double v = n.as<double>();
    if (!std::isfinite(v)) fail(n, key, "value must be finite");
    return v;
  } catch (const YAML::BadConversion&) {
    fail(n, key, "expected a number, got '" + n.Scalar() + "'");
  }
}

std::size_t as_count(const YAML::Node& n, const std::string& key) {
  const double v = as_real(n, key);
  if (v < 0 || std::floor(v) != v) fail(n, key, "expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

Vec as_vec(const YAML::Node& n, const std::string& key) {
  if (n.IsScalar()) return {as_real(n, key)};
  if (!n.IsSequence()) fail(n, key, "expected a number or a list of numbers");
  Vec out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_real(n[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::size_t> as_counts(const YAML::Node& n, const std::string& key) {
  if (n.IsScalar()) return {as_count(n, key)};
  if (!n.IsSequence()) fail(n, key, "expected an integer or a list of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_count(n[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

class Section {
 public:
  Section(YAML::Node node, std::string prefix) : node_(std::move(node)), prefix_(std::move(prefix)) {}

  [[nodiscard]] bool has(const std::string& k) const { return node_.IsMap() && node_[k].IsDefined(); }
  [[nodiscard]] std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  double real(const std::string& k, double fallback) const { return has(k) ? as_real(node_[k], key(k)) : fallback; }
  double real(const std::string& k) const {
    if (!has(k)) fail(node_, key(k), "required key missing");
    return as_real(node_[k], key(k));
  }
  std::size_t count(const std::string& k, std::size_t fallback) const {
    return has(k) ? as_count(node_[k], key(k)) : fallback;
  }
  Vec vec(const std::string& k, Vec fallback = {}) const { return has(k) ? as_vec(node_[k], key(k)) : fallback; }
  Vec vec_sized(const std::string& k, std::size_t expected) const {
    Vec v = vec(k);
    if (!v.empty() && v.size() != expected) {
      fail(node_[k], key(k), "expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
    }
    return v;
  }
  [[nodiscard]] const YAML::Node& node() const { return node_; }

 private:
  YAML::Node node_;
  std::string prefix_;
};

QuadraticPayoff parse_payoff(const Section& s) {
  QuadraticPayoff f;
  if (!s.has("payoff")) return f;
  const Section p(s.node()["payoff"], s.key("payoff"));
  check_keys(p.node(), s.key("payoff"),
             {"x_quad", "x_lin", "x_abs", "u_quad", "u_lin", "v_quad", "v_lin", "uv_cross", "constant"});
  f.x_quad = p.vec("x_quad");
  f.x_lin = p.vec("x_lin");
  f.x_abs = p.real("x_abs", 0.0);
  f.u_quad = p.vec("u_quad");
  f.u_lin = p.vec("u_lin");
  f.v_quad = p.vec("v_quad");
  f.v_lin = p.vec("v_lin");
  f.uv_cross = p.real("uv_cross", 0.0);
  f.constant = p.real("constant", 0.0);
  return f;
}

ControlGrid parse_control(const YAML::Node& root, Player who, std::size_t dim, std::optional<ControlGrid> fallback) {
  const std::string label = std::string(to_string(who));
  const YAML::Node controls = root["controls"];
  if (!controls.IsDefined() || !controls[label].IsDefined()) {
    if (fallback) return *fallback;
    return ControlGrid::singleton(who, Vec(dim, 0.0));
  }
  const YAML::Node n = controls[label];
  const std::string key = "controls." + label;
  check_keys(n, key, {"lower", "upper", "count", "points"});
  const Section s(n, key);
  try {
    if (s.has("points")) {
      const YAML::Node pts = n["points"];
      if (!pts.IsSequence() || pts.size() == 0) fail(pts, key + ".points", "expected a non-empty list");
      Vec flat;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        Vec p = as_vec(pts[i], key + ".points[" + std::to_string(i) + "]");
        if (p.size() != dim) fail(pts[i], key + ".points", "point dimension must be " + std::to_string(dim));
        flat.insert(flat.end(), p.begin(), p.end());
      }
      return ControlGrid(who, dim, std::move(flat));
    }
    Vec lo = s.vec("lower"), hi = s.vec("upper");
    std::vector<std::size_t> cnt = s.has("count") ? as_counts(n["count"], key + ".count") : std::vector<std::size_t>{};
    if (lo.empty() || hi.empty() || cnt.empty()) fail(n, key, "needs lower, upper and count, or points");
    if (lo.size() != dim || hi.size() != dim) fail(n, key, "bounds must have dimension " + std::to_string(dim));
    if (cnt.size() == 1 && dim > 1) cnt.assign(dim, cnt[0]);
    return ControlGrid::uniform(who, lo, hi, cnt);
  } catch (const PreconditionError& e) {
    fail(n, key, e.what());
  }
}

struct Constants {
  std::optional<double> K, C_b, C_sigma, C_f, sigma_bound;
};

Constants parse_constants(const YAML::Node& root) {
  Constants c;
  const YAML::Node n = root["constants"];
  if (!n.IsDefined()) return c;
  check_keys(n, "constants", {"K", "C_b", "C_sigma", "C_f", "sigma_bound"});
  const Section s(n, "constants");
  if (s.has("K")) c.K = s.real("K");
  if (s.has("C_b")) c.C_b = s.real("C_b");
  if (s.has("C_sigma")) c.C_sigma = s.real("C_sigma");
  if (s.has("C_f")) c.C_f = s.real("C_f");
  if (s.has("sigma_bound")) c.sigma_bound = s.real("sigma_bound");
  return c;
}

void require_constants(const YAML::Node& root, const Constants& c, const std::string& family) {
  const char* names[] = {"K", "C_b", "C_sigma", "C_f", "sigma_bound"};
  const std::optional<double>* vals[] = {&c.K, &c.C_b, &c.C_sigma, &c.C_f, &c.sigma_bound};
  for (int i = 0; i < 5; ++i) {
    if (!vals[i]->has_value()) {
      fail(root["constants"].IsDefined() ? root["constants"] : root, std::string("constants.") + names[i],
           "required for family '" + family + "'");
    }
  }
}

void apply_truncation(const YAML::Node& root, ProblemSpec& spec, double default_factor) {
  const std::size_t n = spec.state_dim();
  const YAML::Node t = root["truncation"];
  Vec lo, hi, floor;
  std::vector<std::size_t> nodes;
  if (t.IsDefined()) {
    check_keys(t, "truncation", {"lower", "upper", "nodes", "floor"});
    const Section s(t, "truncation");
    lo = s.vec_sized("lower", n);
    hi = s.vec_sized("upper", n);
    floor = s.vec_sized("floor", n);
    if (s.has("nodes")) {
      nodes = as_counts(t["nodes"], "truncation.nodes");
      if (nodes.size() == 1 && n > 1) nodes.assign(n, nodes[0]);
      if (nodes.size() != n) fail(t["nodes"], "truncation.nodes", "expected " + std::to_string(n) + " entries");
    }
  }
  if (!floor.empty()) spec.state_floor = floor;
  const double r = confinement_radius(spec);
  if (lo.empty()) {
    lo.assign(n, -default_factor * r);
    if (spec.state_floor) {
      for (std::size_t k = 0; k < n; ++k) lo[k] = std::max(lo[k], (*spec.state_floor)[k]);
    }
  }
  if (hi.empty()) hi.assign(n, default_factor * r);
  spec.box = Box{lo, hi};
  spec.grid_nodes = nodes;
}

std::size_t dim_param(const Section& p, const std::string& k, std::size_t fallback) {
  const std::size_t v = p.count(k, fallback);
  if (v == 0) fail(p.node()[k], p.key(k), "must be >= 1");
  return v;
}

ProblemSpec build(const YAML::Node& root) {
  if (!root.IsMap()) throw ConfigError(line_of(root), "", "top level must be a mapping");
  check_keys(root, "",
             {"name", "family", "state_dim", "noise_dim", "sense", "parameters", "constants", "controls", "truncation"});
  if (!root["family"].IsDefined()) throw ConfigError(line_of(root), "family", "required key missing");
  const auto family = root["family"].as<std::string>();
  const YAML::Node params = root["parameters"].IsDefined() ? root["parameters"] : YAML::Node(YAML::NodeType::Map);
  const Section p(params, "parameters");
  const Constants given = parse_constants(root);

  std::optional<Sense> sense;
  if (root["sense"].IsDefined()) {
    const auto s = root["sense"].as<std::string>();
    if (s == "minimize") {
      sense = Sense::minimize;
    } else if (s == "maximize") {
      sense = Sense::maximize;
    } else {
      fail(root["sense"], "sense", "expected minimize or maximize");
    }
  }

  std::shared_ptr<const CoefficientSet> coeffs;
  std::optional<ControlGrid> default_u, default_v;
  Constants derived;
  double box_factor = 3.0;
  std::optional<ProblemSpec> preset;
  // C_f of a quadratic payoff depends on the box; finalized after truncation.
  std::optional<double> ou_q;

  try {
    if (family == "affine") {
      check_keys(params, "parameters", {"n", "d", "u_dim", "v_dim", "A", "Bm", "C", "E", "c0", "S", "St", "payoff"});
      AffineParams a;
      a.n = dim_param(p, "n", 1);
      a.d = dim_param(p, "d", a.n);
      a.u_dim = dim_param(p, "u_dim", 1);
      a.v_dim = dim_param(p, "v_dim", 1);
      a.A = p.vec_sized("A", a.n * a.u_dim);
      a.Bm = p.vec_sized("Bm", a.n * a.n);
      a.C = p.vec_sized("C", a.n * a.n);
      a.E = p.vec_sized("E", a.n * a.v_dim);
      a.c0 = p.vec_sized("c0", a.n);
      a.S = p.vec_sized("S", a.n * a.d);
      a.St = p.vec_sized("St", a.n * a.d);
      a.payoff = parse_payoff(p);
      coeffs = make_affine(std::move(a));
      require_constants(root, given, family);
    } else if (family == "ou_quadratic") {
      check_keys(params, "parameters", {"n", "kappa", "sigma", "q", "c"});
      OuQuadraticParams o;
      o.n = dim_param(p, "n", 1);
      o.kappa = p.real("kappa", 1.0);
      o.sigma = p.real("sigma", 1.0);
      o.q = p.real("q", 1.0);
      o.c = p.real("c", 0.0);
      coeffs = make_ou_quadratic(o);
      derived.K = 2.0 * o.kappa;
      derived.C_b = std::abs(o.kappa);
      derived.C_sigma = 0.0;
      derived.sigma_bound = std::abs(o.sigma) * std::sqrt(static_cast<double>(o.n));
      ou_q = o.q;
    } else if (family == "pollution") {
      check_keys(params, "parameters",
                 {"gamma", "a", "b", "d", "sigma0", "sigma1", "g_scale", "g_power", "u_count", "v_count", "nodes",
                  "box_factor"});
      PollutionParams pp;
      pp.gamma = p.real("gamma", pp.gamma);
      pp.a = p.real("a", pp.a);
      pp.b = p.real("b", pp.b);
      pp.d = p.real("d", pp.d);
      pp.sigma0 = p.real("sigma0", pp.sigma0);
      pp.sigma1 = p.real("sigma1", pp.sigma1);
      pp.g_scale = p.real("g_scale", pp.g_scale);
      pp.g_power = p.real("g_power", pp.g_power);
      pp.u_count = p.count("u_count", pp.u_count);
      pp.v_count = p.count("v_count", pp.v_count);
      pp.nodes = p.count("nodes", pp.nodes);
      pp.box_factor = p.real("box_factor", pp.box_factor);
      preset = make_pollution_spec(pp);
    } else if (family == "custom_polynomial") {
      check_keys(params, "parameters", {"n", "u_dim", "v_dim", "p3", "p2", "p1", "p0", "sigma", "A", "E", "payoff"});
      PolynomialParams q;
      q.n = dim_param(p, "n", 1);
      q.u_dim = dim_param(p, "u_dim", 1);
      q.v_dim = dim_param(p, "v_dim", 1);
      q.p3 = p.real("p3", q.p3);
      q.p2 = p.real("p2", q.p2);
      q.p1 = p.real("p1", q.p1);
      q.p0 = p.real("p0", q.p0);
      q.sigma = p.real("sigma", q.sigma);
      q.A = p.vec_sized("A", q.n * q.u_dim);
      q.E = p.vec_sized("E", q.n * q.v_dim);
      q.payoff = parse_payoff(p);
      coeffs = make_custom_polynomial(std::move(q));
      require_constants(root, given, family);
    } else {
      fail(root["family"], "family", "unknown family '" + family + "'");
    }
  } catch (const PreconditionError& e) {
    fail(params, "parameters", e.what());
  }

  ProblemSpec spec = preset ? *preset
                            : ProblemSpec{root["name"].IsDefined() ? root["name"].as<std::string>() : family, coeffs,
                                          parse_control(root, Player::u, coeffs->u_dim(), default_u),
                                          parse_control(root, Player::v, coeffs->v_dim(), default_v)};
  if (root["name"].IsDefined()) spec.name = root["name"].as<std::string>();
  if (preset) {
    spec.u_grid = parse_control(root, Player::u, 1, spec.u_grid);
    spec.v_grid = parse_control(root, Player::v, 1, spec.v_grid);
  }
  if (sense) spec.sense = *sense;
  auto pick = [](const std::optional<double>& g, const std::optional<double>& d, double current) {
    return g ? *g : (d ? *d : current);
  };
  spec.K = pick(given.K, derived.K, spec.K);
  spec.C_b = pick(given.C_b, derived.C_b, spec.C_b);
  spec.C_sigma = pick(given.C_sigma, derived.C_sigma, spec.C_sigma);
  spec.sigma_bound = pick(given.sigma_bound, derived.sigma_bound, spec.sigma_bound);
  spec.C_f = pick(given.C_f, derived.C_f, spec.C_f);

  const auto check_dim = [&](const char* key, std::size_t actual) {
    if (root[key].IsDefined() && as_count(root[key], key) != actual) {
      fail(root[key], key, "family '" + family + "' has dimension " + std::to_string(actual));
    }
  };
  check_dim("state_dim", spec.state_dim());
  check_dim("noise_dim", spec.noise_dim());

  if (!preset || root["truncation"].IsDefined()) {
    if (preset) {
      const auto floor = spec.state_floor;
      apply_truncation(root, spec, box_factor);
      if (!spec.state_floor) spec.state_floor = floor;
    } else {
      apply_truncation(root, spec, box_factor);
    }
  }
  if (ou_q && !given.C_f) {
    double rmax = 0.0;
    for (std::size_t k = 0; k < spec.state_dim(); ++k) {
      const double m = std::max(std::abs(spec.box.lower[k]), std::abs(spec.box.upper[k]));
      rmax += m * m;
    }
    spec.C_f = 2.0 * std::abs(*ou_q) * std::sqrt(rmax);
  }
  try {
    spec.check();
  } catch (const PreconditionError& e) {
    throw ConfigError(line_of(root["constants"].IsDefined() ? root["constants"] : root), "constants", e.what());
  }
  return spec;
}

}  // namespace

ProblemSpec parse_spec(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.mark.line + 1, "", e.msg);
  }
  try {
    return build(root);
  } catch (const YAML::Exception& e) {
    throw ConfigError(e.mark.line >= 0 ? e.mark.line + 1 : 0, "", e.msg);
  }
}

ProblemSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

}  // namespace erg
