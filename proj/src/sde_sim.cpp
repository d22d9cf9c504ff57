#include "erg/sde_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "erg/error.hpp"
#include "erg/parallel.hpp"
#include "erg/rng.hpp"

namespace erg {

std::size_t SimConfig::steps() const {
  const double k = T / dt;
  return static_cast<std::size_t>(std::llround(k));
}

void SimConfig::check() const {
  if (!(dt > 0.0) || !(T > 0.0)) throw PreconditionError("dt and T must be positive");
  if (dt > T * (1.0 + 1e-12)) throw PreconditionError("dt must not exceed T");
  const double k = T / dt;
  if (std::abs(k - std::round(k)) > 1e-6 * std::max(1.0, k)) throw PreconditionError("T must be a multiple of dt");
  if (paths < 1) throw PreconditionError("path_count must be >= 1");
  if (!(r >= 0.0)) throw PreconditionError("augmentation level r must be >= 0");
  if (static_cast<double>(paths) * k > 9e15) throw PreconditionError("path_count * steps exceeds accumulator range");
  if (k > 4e9 || static_cast<double>(paths) > 4e9) throw PreconditionError("too many steps or paths for the RNG counters");
  for (double l : discounts) {
    if (!(l > 0.0)) throw PreconditionError("discount rates must be positive");
  }
}

nlohmann::json SimConfig::to_json() const {
  return {{"dt", dt},   {"T", T},
          {"paths", paths}, {"seed", seed},
          {"r", r},     {"record_every", record_every},
          {"discounts", discounts}};
}

bool is_open_loop(const ControlProcess& c) noexcept {
  return std::holds_alternative<ConstantControl>(c) || std::holds_alternative<RecordedSequence>(c);
}

nlohmann::json describe(const ControlProcess& c) {
  return std::visit(
      [](const auto& p) -> nlohmann::json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantControl>) {
          return {{"kind", "constant"}, {"value", p.value}};
        } else if constexpr (std::is_same_v<T, FeedbackControl>) {
          return {{"kind", "feedback"}, {"target", std::string(to_string(p.policy->target))}};
        } else if constexpr (std::is_same_v<T, PiecewiseFrozenFeedback>) {
          return {{"kind", "frozen_feedback"}, {"theta", p.theta}, {"target", std::string(to_string(p.policy->target))}};
        } else {
          return {{"kind", "recorded"}, {"per_path", p.per_path}, {"length", p.index.size()}};
        }
      },
      c);
}

RecordedSequence random_piecewise_constant(std::size_t grid_size, std::size_t steps, std::size_t hold,
                                           std::uint64_t seed, std::uint32_t label) {
  if (grid_size == 0 || hold == 0) throw PreconditionError("random sequence needs a grid and hold >= 1");
  const CounterRng rng(seed);
  RecordedSequence seq;
  seq.index.resize(steps);
  std::size_t current = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (k % hold == 0) current = rng.index(RngStream::opponent, label, static_cast<std::uint32_t>(k / hold), grid_size);
    seq.index[k] = current;
  }
  return seq;
}

std::size_t PathBatch::flagged_count() const noexcept {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
}

void gaussian_increments(std::uint64_t seed, std::size_t path, std::size_t step, std::span<double> out) {
  const CounterRng rng(seed);
  rng.normals(RngStream::brownian, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(step), out);
}

namespace {

// Resolves one player's control for a path; holds frozen state for theta strategies.
class ControlResolver {
 public:
  ControlResolver(const ControlProcess& proc, const ControlGrid& grid, Player who, double dt, std::size_t steps,
                  std::size_t paths)
      : proc_(proc), grid_(grid), who_(who) {
    if (const auto* c = std::get_if<ConstantControl>(&proc_)) {
      if (c->value.size() != grid.dim()) throw PreconditionError("constant control has the wrong dimension");
      const_index_ = grid.nearest(c->value);
    } else if (const auto* r = std::get_if<RecordedSequence>(&proc_)) {
      const std::size_t need = r->per_path ? steps * paths : steps;
      if (r->index.size() < need) throw PreconditionError("recorded control sequence is shorter than the horizon");
      for (std::size_t i : r->index) {
        if (i >= grid.size()) throw PreconditionError("recorded control index outside the control grid");
      }
    } else {
      const FeedbackPolicy& pol = policy();
      if (pol.target != PolicyTarget::pair && pol.player != who) {
        throw PreconditionError("feedback policy controls player " + std::string(to_string(pol.player)) +
                                ", not " + std::string(to_string(who)));
      }
      if (const auto* f = std::get_if<PiecewiseFrozenFeedback>(&proc_)) {
        if (!(f->theta > 0.0)) throw PreconditionError("theta must be positive");
        const double m = f->theta / dt;
        if (std::abs(m - std::round(m)) > 1e-9 * std::max(1.0, m) || std::round(m) < 1.0) {
          throw PreconditionError("theta must be an integer multiple of dt");
        }
        refresh_every_ = static_cast<std::size_t>(std::llround(m));
      }
    }
  }

  [[nodiscard]] bool is_response() const {
    return !is_open_loop(proc_) && policy().target == PolicyTarget::response;
  }

  void reset() { frozen_ = std::numeric_limits<std::size_t>::max(); }

  // Index for step k; `opponent` is the other player's index (response policies only).
  std::size_t index(std::size_t path, std::size_t k, std::span<const double> x, std::size_t steps,
                    std::size_t opponent) {
    if (std::holds_alternative<ConstantControl>(proc_)) return const_index_;
    if (const auto* r = std::get_if<RecordedSequence>(&proc_)) return r->index[r->per_path ? path * steps + k : k];
    const FeedbackPolicy& pol = policy();
    if (refresh_every_ > 0 && k % refresh_every_ != 0 && frozen_ != std::numeric_limits<std::size_t>::max()) {
      return frozen_;
    }
    const std::size_t node = pol.grid.nearest(x);
    std::size_t idx;
    if (pol.target == PolicyTarget::pair) {
      idx = who_ == Player::u ? pol.u_at(node) : pol.v_at(node);
    } else {
      idx = pol.at_node(node, opponent);
    }
    frozen_ = idx;
    return idx;
  }

  [[nodiscard]] std::span<const double> value(std::size_t idx) const {
    if (const auto* c = std::get_if<ConstantControl>(&proc_)) return c->value;
    return grid_.point(idx);
  }

 private:
  const FeedbackPolicy& policy() const {
    if (const auto* f = std::get_if<FeedbackControl>(&proc_)) return *f->policy;
    return *std::get<PiecewiseFrozenFeedback>(proc_).policy;
  }

  const ControlProcess& proc_;
  const ControlGrid& grid_;
  Player who_;
  std::size_t const_index_ = 0;
  std::size_t refresh_every_ = 0;
  std::size_t frozen_ = std::numeric_limits<std::size_t>::max();
};

}  // namespace

PathBatch simulate(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u, const ControlProcess& v,
                   const SimConfig& cfg) {
  cfg.check();
  const std::size_t n = spec.state_dim();
  const std::size_t d = spec.noise_dim();
  if (x0.size() != n) throw PreconditionError("x0 has the wrong dimension");
  const std::size_t steps = cfg.steps();
  const double dt = steps > 0 ? cfg.T / static_cast<double>(steps) : cfg.dt;
  const std::size_t every = cfg.record_every > 0 ? cfg.record_every : std::max<std::size_t>(1, steps / 100);

  std::vector<std::size_t> record_steps;
  for (std::size_t k = 0; k < steps; k += every) record_steps.push_back(k);
  record_steps.push_back(steps);

  {
    ControlResolver ru(u, spec.u_grid, Player::u, dt, steps, cfg.paths);
    ControlResolver rv(v, spec.v_grid, Player::v, dt, steps, cfg.paths);
    if (ru.is_response() && rv.is_response()) throw PreconditionError("both players cannot play response policies");
  }

  PathBatch b;
  b.n = n;
  b.d = d;
  b.u_dim = spec.u_grid.dim();
  b.v_dim = spec.v_grid.dim();
  b.paths = cfg.paths;
  b.steps = steps;
  b.record_every = every;
  b.dt = dt;
  b.r = cfg.r;
  b.discounts = cfg.discounts;
  for (std::size_t k : record_steps) b.times.push_back(k == steps ? cfg.T : static_cast<double>(k) * dt);
  const std::size_t R = record_steps.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  b.states.assign(cfg.paths * R * n, nan);
  if (cfg.r > 0.0) b.augmented.assign(cfg.paths * R * n, nan);
  b.u_values.assign(cfg.paths * R * b.u_dim, nan);
  b.v_values.assign(cfg.paths * R * b.v_dim, nan);
  b.running_payoff.assign(cfg.paths * R, nan);
  b.payoff.assign(cfg.paths, nan);
  b.discounted.assign(cfg.paths * cfg.discounts.size(), nan);
  if (cfg.keep_increments) b.increments.assign(cfg.paths * steps * (d + n), nan);
  std::vector<char> flagged(cfg.paths, 0);
  const double sqdt = std::sqrt(dt);
  const double K = spec.K;
  const std::size_t nd = cfg.discounts.size();

  parallel_for(cfg.paths, [&](std::size_t begin, std::size_t end) {
    ControlResolver ru(u, spec.u_grid, Player::u, dt, steps, cfg.paths);
    ControlResolver rv(v, spec.v_grid, Player::v, dt, steps, cfg.paths);
    const bool u_first = !ru.is_response();
    Vec x(n), xr(n), drift(n), sig(n * d), z(d + (cfg.r > 0.0 ? n : 0)), acc(nd);
    for (std::size_t p = begin; p < end; ++p) {
      ru.reset();
      rv.reset();
      std::copy(x0.begin(), x0.end(), x.begin());
      std::copy(x0.begin(), x0.end(), xr.begin());
      std::fill(acc.begin(), acc.end(), 0.0);
      double fsum = 0.0;
      std::size_t rec = 0;
      bool bad = false;
      for (std::size_t k = 0; k < steps; ++k) {
        std::size_t iu, iv;
        if (u_first) {
          iu = ru.index(p, k, x, steps, 0);
          iv = rv.index(p, k, x, steps, iu);
        } else {
          iv = rv.index(p, k, x, steps, 0);
          iu = ru.index(p, k, x, steps, iv);
        }
        const auto uval = ru.value(iu);
        const auto vval = rv.value(iv);
        if (rec < R && record_steps[rec] == k) {
          std::copy(x.begin(), x.end(), b.states.begin() + (p * R + rec) * n);
          if (cfg.r > 0.0) std::copy(xr.begin(), xr.end(), b.augmented.begin() + (p * R + rec) * n);
          std::copy(uval.begin(), uval.end(), b.u_values.begin() + (p * R + rec) * b.u_dim);
          std::copy(vval.begin(), vval.end(), b.v_values.begin() + (p * R + rec) * b.v_dim);
          b.running_payoff[p * R + rec] = fsum * dt;
          ++rec;
        }
        spec.coeffs->drift(x, uval, vval, drift);
        spec.coeffs->diffusion(x, uval, vval, sig);
        const double f = spec.coeffs->payoff(x, uval, vval);
        fsum += f;
        const double t = static_cast<double>(k) * dt;
        for (std::size_t j = 0; j < nd; ++j) {
          const double l = cfg.discounts[j];
          acc[j] += l * std::exp(-l * t) * f * dt;
        }
        gaussian_increments(cfg.seed, p, k, z);
        if (cfg.increment_hook) cfg.increment_hook(p, k, z);
        if (cfg.keep_increments) std::copy(z.begin(), z.end(), b.increments.begin() + (p * steps + k) * (d + n));
        double norm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double noise = 0.0;
          for (std::size_t j = 0; j < d; ++j) noise += sig[i * d + j] * z[j];
          noise *= sqdt;
          if (cfg.r > 0.0) {
            xr[i] += (-0.5 * K * (xr[i] - x[i]) + drift[i]) * dt + noise + cfg.r * sqdt * z[d + i];
          }
          x[i] += drift[i] * dt + noise;
          norm2 += x[i] * x[i];
        }
        if (!std::isfinite(norm2) || norm2 > 1e200) {
          bad = true;
          break;
        }
      }
      if (bad) {
        flagged[p] = 1;
        continue;
      }
      const std::size_t last = R - 1;
      std::copy(x.begin(), x.end(), b.states.begin() + (p * R + last) * n);
      if (cfg.r > 0.0) std::copy(xr.begin(), xr.end(), b.augmented.begin() + (p * R + last) * n);
      b.running_payoff[p * R + last] = fsum * dt;
      b.payoff[p] = fsum * dt;
      for (std::size_t j = 0; j < nd; ++j) b.discounted[p * nd + j] = acc[j];
      // Controls on the final record repeat the last step's controls.
      if (last > 0) {
        std::copy_n(b.u_values.begin() + (p * R + last - 1) * b.u_dim, b.u_dim,
                    b.u_values.begin() + (p * R + last) * b.u_dim);
        std::copy_n(b.v_values.begin() + (p * R + last - 1) * b.v_dim, b.v_dim,
                    b.v_values.begin() + (p * R + last) * b.v_dim);
      }
    }
  });
  b.flagged.assign(flagged.begin(), flagged.end());
  const std::size_t bad = b.flagged_count();
  if (static_cast<double>(bad) > 0.01 * static_cast<double>(cfg.paths)) {
    throw SimulationError(std::to_string(bad) + " of " + std::to_string(cfg.paths) +
                          " paths became non-finite (more than 1%)");
  }
  return b;
}

nlohmann::json PathBatch::summary() const {
  Vec final_sq;
  for (std::size_t p = 0; p < paths; ++p) {
    if (flagged[p]) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += state(p, records() - 1, k) * state(p, records() - 1, k);
    final_sq.push_back(s);
  }
  Vec avg;
  for (std::size_t p = 0; p < paths; ++p) {
    if (!flagged[p]) avg.push_back(payoff[p] / (dt * static_cast<double>(steps)));
  }
  const auto m2 = mean_stderr(final_sq);
  const auto ap = mean_stderr(avg);
  return {{"paths", paths},
          {"steps", steps},
          {"dt", dt},
          {"T", times.back()},
          {"r", r},
          {"flagged", flagged_count()},
          {"final_second_moment", {{"mean", m2.mean}, {"stderr", m2.stderr_}}},
          {"time_average_payoff", {{"mean", ap.mean}, {"stderr", ap.stderr_}}}};
}

void write_paths_csv(const PathBatch& b, const std::filesystem::path& path, std::size_t max_paths) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17) << "path,t";
  for (std::size_t k = 0; k < b.n; ++k) out << ",x" << (k + 1);
  for (std::size_t k = 0; k < b.u_dim; ++k) out << (b.u_dim == 1 ? std::string(",u") : ",u" + std::to_string(k + 1));
  for (std::size_t k = 0; k < b.v_dim; ++k) out << (b.v_dim == 1 ? std::string(",v") : ",v" + std::to_string(k + 1));
  out << ",running_payoff\n";
  const std::size_t np = max_paths > 0 ? std::min(max_paths, b.paths) : b.paths;
  const std::size_t R = b.records();
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t j = 0; j < R; ++j) {
      out << p << ',' << b.times[j];
      for (std::size_t k = 0; k < b.n; ++k) out << ',' << b.state(p, j, k);
      for (std::size_t k = 0; k < b.u_dim; ++k) out << ',' << b.u_values[(p * R + j) * b.u_dim + k];
      for (std::size_t k = 0; k < b.v_dim; ++k) out << ',' << b.v_values[(p * R + j) * b.v_dim + k];
      out << ',' << b.running_payoff[p * R + j] << '\n';
    }
  }
}

Estimate mean_stderr(const Vec& s) {
  Estimate e;
  if (s.empty()) return e;
  double sum = 0.0;
  for (double x : s) sum += x;
  e.mean = sum / static_cast<double>(s.size());
  if (s.size() < 2) return e;
  double ss = 0.0;
  for (double x : s) ss += (x - e.mean) * (x - e.mean);
  e.stderr_ = std::sqrt(ss / static_cast<double>(s.size() - 1) / static_cast<double>(s.size()));
  return e;
}

// ------------------------------------------------------------ contraction

namespace {

double least_squares_slope(const Vec& t, const Vec& y) {
  const double n = static_cast<double>(t.size());
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

MomentReport contraction_check(const ProblemSpec& spec, const Vec& x0, const Vec& y0, const ControlProcess& u,
                               const ControlProcess& v, const SimConfig& cfg, double tolerance) {
  if (!is_open_loop(u) || !is_open_loop(v)) {
    throw PreconditionError("synchronous coupling needs open-loop controls shared by both copies");
  }
  SimConfig c = cfg;
  c.r = 0.0;
  const auto bx = simulate(spec, x0, u, v, c);
  const auto by = simulate(spec, y0, u, v, c);
  MomentReport rep;
  rep.times = bx.times;
  rep.rate = spec.K - spec.C_sigma * spec.C_sigma;
  rep.tolerance = tolerance;
  const std::size_t n = spec.state_dim();
  for (std::size_t j = 0; j < bx.records(); ++j) {
    Vec gap, sq;
    for (std::size_t p = 0; p < bx.paths; ++p) {
      if (bx.flagged[p] || by.flagged[p]) continue;
      double g = 0.0, s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = bx.state(p, j, k) - by.state(p, j, k);
        g += e * e;
        s += bx.state(p, j, k) * bx.state(p, j, k);
      }
      gap.push_back(g);
      sq.push_back(s);
    }
    const auto eg = mean_stderr(gap);
    const auto es = mean_stderr(sq);
    rep.gap_squared.push_back(eg.mean);
    rep.gap_squared_se.push_back(eg.stderr_);
    rep.second_moment.push_back(es.mean);
    rep.second_moment_se.push_back(es.stderr_);
  }
  const double g0 = rep.gap_squared.front();
  if (g0 == 0.0) {
    // Identical starts: the coupled copies coincide.
    const bool zero = std::all_of(rep.gap_squared.begin(), rep.gap_squared.end(), [](double g) { return g == 0.0; });
    rep.fitted_slope = -std::numeric_limits<double>::infinity();
    rep.passed = zero;
    rep.monotone = zero;
    return rep;
  }
  Vec t, y;
  for (std::size_t j = 0; j < rep.times.size(); ++j) {
    if (rep.gap_squared[j] > 1e-12 * g0) {
      t.push_back(rep.times[j]);
      y.push_back(std::log(rep.gap_squared[j]));
    }
  }
  rep.inconclusive = t.size() < 3 || bx.paths - bx.flagged_count() < 10;
  rep.fitted_slope = t.size() >= 2 ? least_squares_slope(t, y) : 0.0;
  rep.passed = !rep.inconclusive && rep.fitted_slope <= -rep.rate + tolerance;
  rep.monotone = true;
  double running_min = rep.gap_squared.front();
  for (std::size_t j = 1; j < rep.gap_squared.size(); ++j) {
    if (rep.gap_squared[j] > running_min + 3.0 * rep.gap_squared_se[j] + 1e-15 * g0) rep.monotone = false;
    running_min = std::min(running_min, rep.gap_squared[j]);
  }
  return rep;
}

nlohmann::json MomentReport::to_json() const {
  return {{"times", times},
          {"second_moment", second_moment},
          {"second_moment_se", second_moment_se},
          {"gap_squared", gap_squared},
          {"gap_squared_se", gap_squared_se},
          {"fitted_slope", std::isfinite(fitted_slope) ? nlohmann::json(fitted_slope) : nlohmann::json("-inf")},
          {"rate", rate},
          {"tolerance", tolerance},
          {"inconclusive", inconclusive},
          {"monotone", monotone},
          {"passed", passed}};
}

// ------------------------------------------------------------ augmentation

AugmentationReport augmentation_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                      const ControlProcess& v, const SimConfig& cfg) {
  if (!(cfg.r > 0.0)) throw PreconditionError("augmentation check needs r > 0");
  const auto b = simulate(spec, x0, u, v, cfg);
  AugmentationReport rep;
  const std::size_t n = spec.state_dim();
  rep.bound = static_cast<double>(n) * cfg.r * cfg.r / spec.K;
  rep.times = b.times;
  rep.passed = true;
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < b.records(); ++j) {
    Vec g;
    for (std::size_t p = 0; p < b.paths; ++p) {
      if (b.flagged[p]) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = b.aug_state(p, j, k) - b.state(p, j, k);
        s += e * e;
      }
      g.push_back(s);
    }
    const auto e = mean_stderr(g);
    rep.mean_gap_squared.push_back(e.mean);
    rep.se.push_back(e.stderr_);
    const double excess = e.mean - rep.bound - 3.0 * e.stderr_;
    rep.worst_excess = std::max(rep.worst_excess, excess);
    if (excess > 0.0) rep.passed = false;
  }
  return rep;
}

nlohmann::json AugmentationReport::to_json() const {
  return {{"times", times}, {"mean_gap_squared", mean_gap_squared}, {"stderr", se},
          {"bound", bound}, {"worst_excess", worst_excess},           {"passed", passed}};
}

// ------------------------------------------------------------ density

double density_bound(double K, double r, std::size_t n, double s, double cell_volume) {
  const double nn = static_cast<double>(n);
  return std::pow(K / 2.0, nn / 2.0) * std::pow(r, -nn) * std::pow(1.0 - std::exp(-K * s), -nn / 2.0) * cell_volume;
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t m, double z) {
  if (m == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(m);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::vector<DensityReport> density_bound_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                               const ControlProcess& v, const SimConfig& cfg,
                                               const std::vector<Box>& cells, double s, double z) {
  if (!(cfg.r > 0.0)) throw PreconditionError("density check needs r > 0");
  if (s < cfg.dt * (1.0 - 1e-12)) throw PreconditionError("density check needs s >= dt");
  for (const auto& c : cells) {
    if (c.dim() != spec.state_dim() || !(c.volume() > 0.0)) throw PreconditionError("cell must have positive volume");
  }
  SimConfig c = cfg;
  c.T = s;
  c.record_every = c.steps();
  const auto b = simulate(spec, x0, u, v, c);
  std::vector<DensityReport> out;
  const std::size_t last = b.records() - 1;
  const std::size_t n = spec.state_dim();
  for (const auto& cell : cells) {
    DensityReport rep;
    rep.cell = cell;
    rep.s = s;
    rep.z = z;
    Vec y(n);
    for (std::size_t p = 0; p < b.paths; ++p) {
      if (b.flagged[p]) continue;
      ++rep.samples;
      for (std::size_t k = 0; k < n; ++k) y[k] = b.aug_state(p, last, k);
      if (cell.contains(y)) ++rep.hits;
    }
    rep.probability = rep.samples ? static_cast<double>(rep.hits) / static_cast<double>(rep.samples) : 0.0;
    std::tie(rep.wilson_lower, rep.wilson_upper) = wilson_interval(rep.hits, rep.samples, z);
    rep.bound = density_bound(spec.K, cfg.r, n, s, cell.volume());
    rep.passed = rep.wilson_upper <= rep.bound;
    out.push_back(rep);
  }
  return out;
}

DensityReport density_bound_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                  const ControlProcess& v, const SimConfig& cfg, const Box& cell, double s, double z) {
  return density_bound_check(spec, x0, u, v, cfg, std::vector<Box>{cell}, s, z).front();
}

nlohmann::json DensityReport::to_json() const {
  return {{"cell", {{"lower", cell.lower}, {"upper", cell.upper}}},
          {"s", s},
          {"probability", probability},
          {"wilson_lower", wilson_lower},
          {"wilson_upper", wilson_upper},
          {"z", z},
          {"bound", bound},
          {"hits", hits},
          {"samples", samples},
          {"passed", passed}};
}

// ------------------------------------------------------------ payoff

PayoffEstimate estimate_average_payoff(const PathBatch& b, const ProblemSpec& spec) {
  PayoffEstimate est;
  Vec avg;
  std::vector<Vec> disc(b.discounts.size());
  for (std::size_t p = 0; p < b.paths; ++p) {
    if (b.flagged[p]) {
      ++est.excluded_paths;
      continue;
    }
    // payoff = sum f * dt, so sum f / steps is the exact time average.
    avg.push_back(b.payoff[p] / b.dt / static_cast<double>(b.steps));
    for (std::size_t j = 0; j < b.discounts.size(); ++j) disc[j].push_back(b.discounted[p * b.discounts.size() + j]);
  }
  est.average = mean_stderr(avg);
  for (const auto& dj : disc) est.discounted.push_back(mean_stderr(dj));
  const double c = spec.K - spec.C_sigma * spec.C_sigma;
  est.short_horizon = c > 0.0 && b.steps * b.dt < 5.0 / c;
  return est;
}

PayoffEstimate estimate_average_payoff(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                       const ControlProcess& v, const SimConfig& cfg) {
  SimConfig c = cfg;
  if (c.record_every == 0) c.record_every = c.steps();
  return estimate_average_payoff(simulate(spec, x0, u, v, c), spec);
}

nlohmann::json PayoffEstimate::to_json() const {
  nlohmann::json d = nlohmann::json::array();
  for (const auto& e : discounted) d.push_back({{"mean", e.mean}, {"stderr", e.stderr_}});
  return {{"mean", average.mean},
          {"stderr", average.stderr_},
          {"discounted", d},
          {"excluded_paths", excluded_paths},
          {"short_horizon_warning", short_horizon}};
}

// ------------------------------------------------------------ increments

IncrementReport increment_check(const ProblemSpec& spec, const Vec& x0, const ControlProcess& u,
                                const ControlProcess& v, const SimConfig& cfg, double t0, const Vec& deltas) {
  if (deltas.empty()) throw PreconditionError("deltas must not be empty");
  const double dmax = *std::max_element(deltas.begin(), deltas.end());
  SimConfig c = cfg;
  c.r = 0.0;
  c.record_every = 1;
  const double total = t0 + dmax;
  c.T = std::round(total / cfg.dt) * cfg.dt;
  const auto b = simulate(spec, x0, u, v, c);
  const auto k0 = static_cast<std::size_t>(std::llround(t0 / b.dt));
  IncrementReport rep;
  rep.deltas = deltas;
  const std::size_t n = spec.state_dim();
  for (double delta : deltas) {
    const auto kd = static_cast<std::size_t>(std::llround(delta / b.dt));
    if (kd < 1) throw PreconditionError("each delta must be at least dt");
    Vec sup;
    for (std::size_t p = 0; p < b.paths; ++p) {
      if (b.flagged[p]) continue;
      double m = 0.0;
      for (std::size_t j = k0; j <= std::min(k0 + kd, b.records() - 1); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double e = b.state(p, j, k) - b.state(p, k0, k);
          s += e * e;
        }
        m = std::max(m, s);
      }
      sup.push_back(m);
    }
    const auto e = mean_stderr(sup);
    rep.mean_sup_sq.push_back(e.mean);
    rep.se.push_back(e.stderr_);
    rep.ratio.push_back(e.mean / (delta * delta + delta));
  }
  const auto [lo, hi] = std::minmax_element(rep.ratio.begin(), rep.ratio.end());
  rep.spread = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  return rep;
}

nlohmann::json IncrementReport::to_json() const {
  return {{"deltas", deltas}, {"mean_sup_sq", mean_sup_sq}, {"stderr", se}, {"ratio", ratio}, {"spread", spread}};
}

}  // namespace erg
