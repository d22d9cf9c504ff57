#include "erg/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "erg/config.hpp"
#include "erg/ergodic.hpp"
#include "erg/error.hpp"
#include "erg/grid.hpp"
#include "erg/hjbi.hpp"
#include "erg/policy.hpp"
#include "erg/pollution.hpp"
#include "erg/sde_sim.hpp"
#include "erg/smoothing.hpp"
#include "erg/strategy.hpp"

namespace erg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

// Thrown by handlers for bad flag values; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  fs::path file(const std::string& name) {
    fs::create_directories(dir_);
    names_.push_back(name);
    return dir_ / name;
  }
  void json_file(const std::string& name, const json& j) {
    std::ofstream out(file(name));
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << j.dump(2) << '\n';
  }
  void remove_all() {
    std::error_code ec;
    for (const auto& n : names_) fs::remove(dir_ / n, ec);
    fs::remove(dir_ / "manifest.json", ec);
  }
  [[nodiscard]] json digests() const {
    json a = json::array();
    for (const auto& n : names_) {
      const auto p = dir_ / n;
      if (!fs::exists(p)) continue;
      a.push_back({{"file", n}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    }
    return a;
  }
  [[nodiscard]] const fs::path& dir() const noexcept { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

struct Common {
  std::string out = "out";
  std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Master seed for all randomness")->capture_default_str();
}

json resolved_options(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "-h") continue;
    std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_type_size_max() == 0) {
        j[key] = true;
      } else if (r.size() == 1 && opt->get_items_expected_max() <= 1) {
        j[key] = r.front();
      } else {
        j[key] = r;
      }
    } else if (!opt->get_default_str().empty()) {
      j[key] = opt->get_default_str();
    } else if (opt->get_type_size_max() == 0) {
      j[key] = false;
    }
  }
  return j;
}

Ordering ordering_arg(const std::string& s) {
  try {
    return parse_ordering(s);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

SolveMethod method_arg(const std::string& s) {
  if (s == "policy_iteration" || s == "pi") return SolveMethod::policy_iteration;
  if (s == "gauss_seidel" || s == "gs") return SolveMethod::gauss_seidel;
  if (s == "jacobi") return SolveMethod::jacobi;
  throw UsageError("unknown method '" + s + "' (policy_iteration, gauss_seidel, jacobi)");
}

Vec dim_vector(const Vec& given, std::size_t dim, double fill, const char* name) {
  if (given.empty()) return Vec(dim, fill);
  if (given.size() == 1 && dim > 1) return Vec(dim, given.front());
  if (given.size() != dim) throw UsageError(std::string(name) + " needs " + std::to_string(dim) + " values");
  return given;
}

Vec parse_list(const std::string& s) {
  Vec out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

double value_at_origin(const GridFunction& f) { return f[f.grid.origin_index()]; }

// ------------------------------------------------------------ subcommands

struct ValidateArgs {
  std::string spec;
  std::size_t samples = 10000;
};

int run_validate(const ValidateArgs& a, const Common& c, Outputs& out) {
  const auto spec = load_spec(a.spec);
  const auto rep = validate_assumptions(spec, a.samples, c.seed);
  json j = rep.to_json();
  j["spec"] = spec.to_json();
  j["estimated_dissipativity"] = estimate_dissipativity(spec, a.samples, c.seed);
  j["confinement_radius"] = confinement_radius(spec);
  out.json_file("validation.json", j);
  return rep.all_passed() ? 0 : 1;
}

struct SimulateArgs {
  std::string spec;
  Vec x0, u, v, discounts;
  double T = 10.0, dt = 0.01, r = 0.0;
  std::size_t paths = 1000, csv_paths = 20, record_every = 0;
};

int run_simulate(const SimulateArgs& a, const Common& c, Outputs& out) {
  const auto spec = load_spec(a.spec);
  SimConfig cfg;
  cfg.dt = a.dt;
  cfg.T = a.T;
  cfg.paths = a.paths;
  cfg.seed = c.seed;
  cfg.r = a.r;
  cfg.record_every = a.record_every;
  cfg.discounts = a.discounts;
  const Vec x0 = dim_vector(a.x0, spec.state_dim(), 0.0, "--x0");
  const auto u0 = spec.u_grid.point(0), v0 = spec.v_grid.point(0);
  const Vec u = a.u.empty() ? Vec(u0.begin(), u0.end()) : dim_vector(a.u, spec.u_grid.dim(), 0.0, "--u");
  const Vec v = a.v.empty() ? Vec(v0.begin(), v0.end()) : dim_vector(a.v, spec.v_grid.dim(), 0.0, "--v");
  const auto batch = simulate(spec, x0, ConstantControl{u}, ConstantControl{v}, cfg);
  write_paths_csv(batch, out.file("paths.csv"), a.csv_paths);
  json j = batch.summary();
  j["config"] = cfg.to_json();
  j["payoff"] = estimate_average_payoff(batch, spec).to_json();
  j["x0"] = x0;
  j["u"] = u;
  j["v"] = v;
  out.json_file("simulation.json", j);
  return 0;
}

struct DiscountedArgs {
  std::string spec, ordering = "infsup", method = "policy_iteration";
  double lambda = 0.0, tol = 1e-8;
  std::size_t max_iter = 0;
};

int run_solve_discounted(const DiscountedArgs& a, const Common&, Outputs& out) {
  if (!(a.lambda > 0.0)) throw PreconditionError("--lambda must be positive");
  const auto spec = load_spec(a.spec);
  const auto grid = StateGrid::for_spec(spec);
  SolveOptions opt;
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  opt.method = method_arg(a.method);
  const auto sol = solve_discounted(spec, grid, a.lambda, ordering_arg(a.ordering), opt);
  write_csv(sol.w, out.file("w.csv"), "w");
  out.json_file("solve.json", {{"lambda", a.lambda},
                               {"ordering", a.ordering},
                               {"lambda_w_at_origin", a.lambda * value_at_origin(sol.w)},
                               {"grid", grid.to_json()},
                               {"diagnostics", sol.diagnostics.to_json()}});
  return sol.diagnostics.converged ? 0 : 1;
}

struct ParabolicArgs {
  std::string spec, ordering = "infsup", initial;
  double T = 1.0, dt = 0.0;
  Vec save;
};

int run_solve_parabolic(const ParabolicArgs& a, const Common&, Outputs& out) {
  const auto spec = load_spec(a.spec);
  const auto grid = StateGrid::for_spec(spec);
  const DiscreteOperator op(spec, grid);
  const GridFunction init = a.initial.empty() ? GridFunction(grid, 0.0) : read_csv(a.initial);
  if (!(init.grid == grid)) throw PreconditionError("--initial lives on a different grid than the spec");
  const double dt = a.dt > 0.0 ? a.dt : 0.9 * max_stable_dt(op);
  const auto sol = solve_parabolic(op, init, a.T, dt, ordering_arg(a.ordering), a.save);
  write_csv(sol.snapshots.back(), out.file("V.csv"), "V");
  json snaps = json::array();
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    snaps.push_back({{"t", sol.times[k]}, {"V_at_origin", value_at_origin(sol.snapshots[k])}});
  }
  out.json_file("parabolic.json", {{"T", a.T},
                                   {"dt", sol.dt},
                                   {"steps", sol.steps},
                                   {"max_stable_dt", max_stable_dt(op)},
                                   {"ordering", a.ordering},
                                   {"V_over_T_at_origin", value_at_origin(sol.snapshots.back()) / a.T},
                                   {"snapshots", snaps}});
  return 0;
}

struct ErgodicArgs {
  std::string spec, ordering = "infsup", method = "policy_iteration";
  Vec ladder;
  double tol = 1e-8;
};

int run_ergodic(const ErgodicArgs& a, const Common&, Outputs& out) {
  const auto spec = load_spec(a.spec);
  const auto grid = StateGrid::for_spec(spec);
  const DiscreteOperator op(spec, grid);
  SolveOptions opt;
  opt.tol = a.tol;
  opt.method = method_arg(a.method);
  const Ladder ladder = a.ladder.empty() ? default_ladder() : a.ladder;
  const bool both = a.ordering == "both";
  std::vector<Ordering> orders;
  if (both) {
    orders = {Ordering::infsup, Ordering::supinf};
  } else {
    orders = {ordering_arg(a.ordering)};
  }

  json j = {{"spec", spec.name}, {"grid", grid.to_json()}};
  bool converged = true;
  for (const Ordering ord : orders) {
    const auto sol = vanishing_discount(op, ladder, ord, opt);
    converged = converged && sol.all_converged;
    const std::string tag = both ? "_" + std::string(to_string(ord)) : "";
    write_csv(sol.w, out.file("w" + tag + ".csv"), "w");
    json e = sol.to_json();
    e["isaacs_gap"] = isaacs_gap(op, sol.w);
    j["rho_" + std::string(to_string(ord))] = sol.rho;
    j["isaacs_gap" + tag] = e["isaacs_gap"];
    j[both ? "ergodic" + tag : "ergodic"] = e;
    const json prov = {{"rho", sol.rho}, {"lambda", sol.ladder.back().lambda}, {"spec", spec.name},
                       {"ordering", to_string(ord)}};
    for (const PolicyTarget t : {PolicyTarget::outer, PolicyTarget::response}) {
      const auto pol = extract_feedback(op, sol.w, t, ord, prov);
      const std::string stem = "policy" + tag + "_" + std::string(to_string(t));
      const auto csv = out.file(stem + ".csv");
      const auto meta = out.file(stem + ".json");
      write_policy(pol, csv, meta);
    }
  }
  out.json_file("ergodic.json", j);
  return converged ? 0 : 1;
}

struct EvaluateArgs {
  std::string spec, policy, opponents = "panel", adversary;
  double theta = 1.0, T = 100.0, dt = 0.01;
  std::size_t paths = 200, random_count = 10;
  Vec x0;
  std::optional<double> rho, c_env;
};

int run_evaluate(const EvaluateArgs& a, const Common& c, Outputs& out) {
  const auto spec = load_spec(a.spec);
  auto policy = std::make_shared<const FeedbackPolicy>(read_policy(a.policy));
  if (policy->grid.dim() != spec.state_dim()) throw PreconditionError("policy grid does not match the spec");
  const Player opp_player = policy->player == Player::u ? Player::v : Player::u;
  SimConfig cfg;
  cfg.dt = a.dt;
  cfg.T = a.T;
  cfg.paths = a.paths;
  cfg.seed = c.seed;
  const Vec x0 = dim_vector(a.x0, spec.state_dim(), 0.0, "--x0");
  std::shared_ptr<const FeedbackPolicy> adversary;
  if (!a.adversary.empty()) adversary = std::make_shared<const FeedbackPolicy>(read_policy(a.adversary));

  std::vector<Opponent> panel;
  if (a.opponents == "panel") {
    panel = opponent_panel(spec, opp_player, cfg, adversary, a.random_count);
  } else if (a.opponents.rfind("const:", 0) == 0) {
    const Vec val = dim_vector(parse_list(a.opponents.substr(6)), spec.grid_of(opp_player).dim(), 0.0, "const:");
    panel.push_back({a.opponents, ConstantControl{val}});
  } else if (a.opponents.rfind("seed:", 0) == 0) {
    const auto k = static_cast<std::uint32_t>(parse_list(a.opponents.substr(5)).at(0));
    const auto hold = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / cfg.dt)));
    panel.push_back({a.opponents, random_piecewise_constant(spec.grid_of(opp_player).size(), cfg.steps(), hold,
                                                            cfg.seed, (opp_player == Player::u ? 0u : 1u << 16) + k)});
  } else {
    throw UsageError("--opponents must be panel, const:v or seed:k");
  }

  json j = {{"config", cfg.to_json()}, {"x0", x0}, {"theta", a.theta}, {"opponents", a.opponents}};
  bool ok = true;
  if (a.rho) {
    const auto rep = envelope_study(spec, x0, policy, *a.rho, {a.theta}, panel, cfg, a.c_env);
    j["envelope"] = rep.to_json();
    ok = rep.all_within;
  } else {
    json games = json::array();
    const ThetaStrategy strat{a.theta, policy, std::nullopt};
    for (const auto& o : panel) {
      auto g = play_theta_game(spec, x0, strat, o.process, cfg);
      g.opponent["label"] = o.label;
      games.push_back(g.to_json());
    }
    j["games"] = games;
  }
  out.json_file("games.json", j);
  return ok ? 0 : 1;
}

struct SmoothArgs {
  std::string in, spec, direction = "sup", ordering = "infsup";
  double eps = 0.1, delta = 0.0;
  std::optional<double> rho;
};

int run_smooth(const SmoothArgs& a, const Common&, Outputs& out) {
  const GridFunction w = read_csv(a.in);
  if (a.direction != "sup" && a.direction != "inf") throw UsageError("--direction must be sup or inf");
  const auto conv = a.direction == "sup" ? sup_convolve(w, a.eps) : inf_convolve(w, a.eps);
  json j = {{"eps", a.eps}, {"convolution", conv.to_json()}};
  GridFunction result = conv.values;
  std::vector<bool> mask = conv.interior_mask();
  if (a.delta > 0.0) {
    const auto mol = mollify(conv.values, a.delta);
    j["mollification"] = mol.to_json();
    result = mol.values;
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && !mol.boundary_band[i];
  }
  write_csv(result, out.file("smoothed.csv"), "w_smooth");
  const double margin = semiconvexity_margin(conv);
  j["semiconvexity_ok"] = margin >= -1e-9;
  if (!a.spec.empty()) {
    if (!a.rho) throw UsageError("--spec needs --rho for the defect report");
    const auto spec = load_spec(a.spec);
    const auto defect = subsolution_defect(spec, result, *a.rho, ordering_arg(a.ordering));
    write_csv(defect, out.file("defect.csv"), "defect");
    j["normalized_positive_defect"] = normalized_positive_defect(defect, mask);
  }
  out.json_file("smoothing.json", j);
  return margin >= -1e-9 ? 0 : 1;
}

struct PollutionArgs {
  PollutionParams p;
  double T = 100.0, dt = 0.01, x0 = 1.0, tol = 1e-8;
  std::size_t paths = 200;
  bool check = false, no_simulate = false;
  Vec ladder;
};

int run_pollution(const PollutionArgs& a, const Common& c, Outputs& out) {
  PipelineConfig cfg;
  if (!a.ladder.empty()) cfg.ladder = a.ladder;
  cfg.solve.tol = a.tol;
  cfg.dt = a.dt;
  cfg.horizon = a.T;
  cfg.paths = a.paths;
  cfg.x0 = a.x0;
  cfg.seed = c.seed;
  cfg.simulate = !a.no_simulate;
  const auto rep = run_pipeline(a.p, cfg);
  json j = rep.to_json();
  out.json_file("pollution.json", j);
  std::ofstream csv(out.file("pollution.csv"));
  csv << std::setprecision(17) << "quantity,numeric,exact,tolerance,passed\n";
  for (const auto& r : rep.table) {
    csv << r["quantity"].get<std::string>() << ',' << r["numeric"].get<double>() << ',';
    if (!r["exact"].is_null()) csv << r["exact"].get<double>();
    csv << ',' << r["tolerance"].get<double>() << ',' << (r["passed"].get<bool>() ? "true" : "false") << '\n';
  }
  if (!a.check) return 0;
  if (!rep.exact) throw UsageError("--closed-form-check needs g_scale 2 and g_power 0.5");
  return rep.closed_form_passed() ? 0 : 1;
}

struct ReportArgs {
  std::string spec, ordering = "infsup";
  Vec T_list{5.0, 10.0, 20.0};
  Vec ladder;
  double dt = 0.0, dpp_T = 1.0;
  std::size_t samples = 2000;
};

int run_report(const ReportArgs& a, const Common& c, Outputs& out) {
  const auto spec = load_spec(a.spec);
  const auto grid = StateGrid::for_spec(spec);
  const DiscreteOperator op(spec, grid);
  const Ordering ord = ordering_arg(a.ordering);
  const auto val = validate_assumptions(spec, a.samples, c.seed);
  const auto erg = vanishing_discount(op, a.ladder.empty() ? default_ladder() : a.ladder, ord);
  const double dt = a.dt > 0.0 ? a.dt : 0.9 * max_stable_dt(op);
  const auto at = abelian_tauberian_check(op, erg, a.T_list, dt);
  const auto lt = long_time_check(op, erg, GridFunction(grid, 0.0), a.T_list, dt);
  const auto dpp = dpp_check(op, erg, a.dpp_T, dt);
  json j = {{"spec", spec.to_json()},
            {"validation", val.to_json()},
            {"ergodic", erg.to_json()},
            {"isaacs_gap", isaacs_gap(op, erg.w)},
            {"abelian_tauberian", at.to_json()},
            {"long_time", lt.to_json()},
            {"dpp", dpp.to_json()}};
  write_csv(erg.w, out.file("w.csv"), "w");
  out.json_file("report.json", j);
  return val.all_passed() && at.passed ? 0 : 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ergodic stochastic differential games: solvers, simulators and checks", "erg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Common common;

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Sample the standing assumptions of a spec");
  validate->add_option("--spec", va.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  validate->add_option("--samples", va.samples, "Sample count")->capture_default_str();
  add_common(validate, common);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama paths under constant controls");
  sim->add_option("--spec", sa.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  sim->add_option("--x0", sa.x0, "Initial state");
  sim->add_option("--u", sa.u, "Constant u (default: first grid point)");
  sim->add_option("--v", sa.v, "Constant v (default: first grid point)");
  sim->add_option("--T", sa.T, "Horizon")->capture_default_str();
  sim->add_option("--dt", sa.dt, "Time step")->capture_default_str();
  sim->add_option("--paths", sa.paths, "Path count")->capture_default_str();
  sim->add_option("--r", sa.r, "Augmentation level")->capture_default_str();
  sim->add_option("--discount", sa.discounts, "Discount rates for discounted payoffs");
  sim->add_option("--record-every", sa.record_every, "Record every k steps (0: about 100 records)")
      ->capture_default_str();
  sim->add_option("--csv-paths", sa.csv_paths, "Paths written to paths.csv (0: all)")->capture_default_str();
  add_common(sim, common);

  DiscountedArgs da;
  auto* disc = app.add_subcommand("solve-discounted", "Solve lambda w = minimax Q(w)");
  disc->add_option("--spec", da.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  disc->add_option("--lambda", da.lambda, "Discount rate (> 0)")->required();
  disc->add_option("--ordering", da.ordering, "infsup or supinf")->capture_default_str();
  disc->add_option("--method", da.method, "policy_iteration, gauss_seidel or jacobi")->capture_default_str();
  disc->add_option("--tol", da.tol, "Residual tolerance")->capture_default_str();
  disc->add_option("--max-iter", da.max_iter, "Iteration cap (0: 1e6 / lambda)")->capture_default_str();
  add_common(disc, common);

  ParabolicArgs pa;
  auto* par = app.add_subcommand("solve-parabolic", "March V_t = minimax Q(V) to time T");
  par->add_option("--spec", pa.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  par->add_option("--T", pa.T, "Horizon")->capture_default_str();
  par->add_option("--dt", pa.dt, "Time step (0: 0.9 of the stability bound)")->capture_default_str();
  par->add_option("--ordering", pa.ordering, "infsup or supinf")->capture_default_str();
  par->add_option("--initial", pa.initial, "Initial data CSV (default 0)")->check(CLI::ExistingFile);
  par->add_option("--save", pa.save, "Extra snapshot times");
  add_common(par, common);

  ErgodicArgs ea;
  auto* erg = app.add_subcommand("ergodic", "Vanishing-discount ergodic pair and feedback policies");
  erg->add_option("--spec", ea.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  erg->add_option("--ordering", ea.ordering, "infsup, supinf or both")->capture_default_str();
  erg->add_option("--ladder", ea.ladder, "Discount ladder (default 2^-1 .. 2^-8)");
  erg->add_option("--method", ea.method, "policy_iteration, gauss_seidel or jacobi")->capture_default_str();
  erg->add_option("--tol", ea.tol, "Residual tolerance per rung")->capture_default_str();
  add_common(erg, common);

  EvaluateArgs ev;
  double ev_rho = 0.0, ev_cenv = 0.0;
  auto* eval = app.add_subcommand("evaluate", "Play a theta-frozen policy against opponents");
  eval->add_option("--spec", ev.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  eval->add_option("--policy", ev.policy, "Policy JSON written by `ergodic`")->required()->check(CLI::ExistingFile);
  eval->add_option("--adversary", ev.adversary, "Response policy JSON for the panel")->check(CLI::ExistingFile);
  eval->add_option("--theta", ev.theta, "Freeze interval (multiple of dt)")->capture_default_str();
  eval->add_option("--T", ev.T, "Horizon")->capture_default_str();
  eval->add_option("--dt", ev.dt, "Time step")->capture_default_str();
  eval->add_option("--paths", ev.paths, "Paths per game")->capture_default_str();
  eval->add_option("--x0", ev.x0, "Initial state");
  eval->add_option("--opponents", ev.opponents, "panel, const:v or seed:k")->capture_default_str();
  eval->add_option("--random-count", ev.random_count, "Random opponents in the panel")->capture_default_str();
  auto* rho_opt = eval->add_option("--rho", ev_rho, "Value to assert the envelope against");
  auto* cenv_opt = eval->add_option("--c-env", ev_cenv, "Envelope constant (default: calibrated)");
  add_common(eval, common);

  SmoothArgs sm;
  double sm_rho = 0.0;
  auto* smooth = app.add_subcommand("smooth", "Sup/inf-convolve and mollify a grid function");
  smooth->add_option("--in", sm.in, "Grid function CSV")->required()->check(CLI::ExistingFile);
  smooth->add_option("--eps", sm.eps, "Convolution parameter")->capture_default_str();
  smooth->add_option("--delta", sm.delta, "Mollifier bandwidth (0: skip)")->capture_default_str();
  smooth->add_option("--direction", sm.direction, "sup or inf")->capture_default_str();
  smooth->add_option("--spec", sm.spec, "Problem YAML for the defect report")->check(CLI::ExistingFile);
  auto* sm_rho_opt = smooth->add_option("--rho", sm_rho, "Ergodic constant for the defect report");
  smooth->add_option("--ordering", sm.ordering, "infsup or supinf")->capture_default_str();
  add_common(smooth, common);

  PollutionArgs po;
  auto* pol = app.add_subcommand("pollution", "Robust pollution-accumulation pipeline");
  pol->add_option("--a", po.p.a, "Lowest decay rate")->capture_default_str();
  pol->add_option("--b", po.p.b, "Highest decay rate")->capture_default_str();
  pol->add_option("--d", po.p.d, "Disutility slope")->capture_default_str();
  pol->add_option("--gamma", po.p.gamma, "Consumption cap")->capture_default_str();
  pol->add_option("--sigma0", po.p.sigma0, "Diffusion level")->capture_default_str();
  pol->add_option("--sigma1", po.p.sigma1, "State-dependent diffusion amplitude")->capture_default_str();
  pol->add_option("--g-scale", po.p.g_scale, "Utility scale")->capture_default_str();
  pol->add_option("--g-power", po.p.g_power, "Utility power")->capture_default_str();
  pol->add_option("--u-count", po.p.u_count, "Consumption grid points")->capture_default_str();
  pol->add_option("--v-count", po.p.v_count, "Decay grid points")->capture_default_str();
  pol->add_option("--nodes", po.p.nodes, "State grid nodes")->capture_default_str();
  pol->add_option("--box-factor", po.p.box_factor, "Grid end in confinement radii")->capture_default_str();
  pol->add_option("--ladder", po.ladder, "Discount ladder");
  pol->add_option("--tol", po.tol, "Solver tolerance")->capture_default_str();
  pol->add_option("--T", po.T, "Closed-loop horizon")->capture_default_str();
  pol->add_option("--dt", po.dt, "Closed-loop time step")->capture_default_str();
  pol->add_option("--paths", po.paths, "Closed-loop paths")->capture_default_str();
  pol->add_option("--x0", po.x0, "Closed-loop initial stock")->capture_default_str();
  pol->add_flag("--no-simulate", po.no_simulate, "Skip the closed-loop simulation");
  pol->add_flag("--closed-form-check", po.check, "Exit 1 unless the closed form is reproduced");
  add_common(pol, common);

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Ergodic pair with long-time, Abelian-Tauberian and DPP checks");
  rep->add_option("--spec", ra.spec, "Problem YAML")->required()->check(CLI::ExistingFile);
  rep->add_option("--ordering", ra.ordering, "infsup or supinf")->capture_default_str();
  rep->add_option("--T-list", ra.T_list, "Horizons for the long-time checks")->capture_default_str();
  rep->add_option("--ladder", ra.ladder, "Discount ladder");
  rep->add_option("--dt", ra.dt, "Parabolic time step (0: 0.9 of the stability bound)")->capture_default_str();
  rep->add_option("--dpp-T", ra.dpp_T, "Horizon of the DPP check")->capture_default_str();
  rep->add_option("--samples", ra.samples, "Validation samples")->capture_default_str();
  add_common(rep, common);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  Outputs outputs(common.out);
  const std::string started = utc_now();
  int code = 0;
  try {
    if (name == "validate") code = run_validate(va, common, outputs);
    else if (name == "simulate") code = run_simulate(sa, common, outputs);
    else if (name == "solve-discounted") code = run_solve_discounted(da, common, outputs);
    else if (name == "solve-parabolic") code = run_solve_parabolic(pa, common, outputs);
    else if (name == "ergodic") code = run_ergodic(ea, common, outputs);
    else if (name == "evaluate") {
      if (rho_opt->count()) ev.rho = ev_rho;
      if (cenv_opt->count()) ev.c_env = ev_cenv;
      code = run_evaluate(ev, common, outputs);
    } else if (name == "smooth") {
      if (sm_rho_opt->count()) sm.rho = sm_rho;
      code = run_smooth(sm, common, outputs);
    } else if (name == "pollution") code = run_pollution(po, common, outputs);
    else if (name == "report") code = run_report(ra, common, outputs);
  } catch (const ConfigError& e) {
    err << "erg " << name << ": " << e.what() << '\n';
    outputs.remove_all();
    return 2;
  } catch (const UsageError& e) {
    err << "erg " << name << ": " << e.what() << '\n' << chosen->help();
    outputs.remove_all();
    return 2;
  } catch (const PreconditionError& e) {
    err << "erg " << name << ": " << e.what() << '\n';
    outputs.remove_all();
    return 2;
  } catch (const std::exception& e) {
    err << "erg " << name << ": " << e.what() << '\n';
    outputs.remove_all();
    return 1;
  }

  json manifest = {{"command", name},
                   {"args", args},
                   {"config", resolved_options(chosen)},
                   {"seed", common.seed},
                   {"tool_version", kToolVersion},
                   {"started", started},
                   {"finished", utc_now()},
                   {"exit_code", code},
                   {"outputs", outputs.digests()}};
  std::ofstream mf(outputs.dir() / "manifest.json");
  mf << manifest.dump(2) << '\n';
  out << "erg " << name << ": " << (code == 0 ? "ok" : "check failed") << ", outputs in " << outputs.dir().string()
      << '\n';
  return code;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace erg::cli
