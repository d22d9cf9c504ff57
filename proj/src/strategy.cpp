#include "erg/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erg/error.hpp"
#include "erg/parallel.hpp"

namespace erg {

FeedbackPolicy extract_feedback(const DiscreteOperator& op, const GridFunction& w, PolicyTarget target,
                                Ordering ordering, nlohmann::json provenance) {
  if (!(w.grid == op.grid())) throw PreconditionError("w lives on a different grid than the operator");
  if (!w.all_finite()) throw PreconditionError("w must be finite");
  const bool outer_is_u = op.outer_is_u(ordering);
  const bool outer_min = outer_minimizes(ordering);
  const std::size_t nu = op.nu(), nv = op.nv();
  const Player outer = outer_is_u ? Player::u : Player::v;
  const Player inner = outer_is_u ? Player::v : Player::u;
  const std::size_t n_outer = outer_is_u ? nu : nv;
  const std::size_t n_inner = outer_is_u ? nv : nu;

  FeedbackPolicy p{target, target == PolicyTarget::response ? inner : outer, w.grid, {}, 0, std::move(provenance)};
  p.provenance["ordering"] = std::string(to_string(ordering));
  p.provenance["stencil"] = "upwind drift, central diffusion, reflecting boundary";
  p.provenance["w_sup"] = w.sup_norm();
  const std::size_t per = target == PolicyTarget::outer ? 1 : target == PolicyTarget::pair ? 2 : n_outer;
  p.opponent_count = target == PolicyTarget::response ? n_outer : 0;
  p.index.assign(op.nodes() * per, 0);

  parallel_for(op.nodes(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> diff(op.slots());
    for (std::size_t i = begin; i < end; ++i) {
      op.differences(w.values, i, diff.data());
      auto val = [&](std::size_t iu, std::size_t iv) { return op.q(diff.data(), i, op.pair(iu, iv)); };
      if (target == PolicyTarget::response) {
        for (std::size_t o = 0; o < n_outer; ++o) {
          double best = 0.0;
          std::size_t arg = 0;
          for (std::size_t k = 0; k < n_inner; ++k) {
            const double q = outer_is_u ? val(o, k) : val(k, o);
            if (k == 0 || (outer_min ? q > best : q < best)) {
              best = q;
              arg = k;
            }
          }
          p.index[i * n_outer + o] = arg;
        }
        continue;
      }
      const auto c = minimax(nu, nv, outer_is_u, outer_min, val);
      if (target == PolicyTarget::outer) {
        p.index[i] = outer_is_u ? c.iu : c.iv;
      } else {
        p.index[2 * i] = c.iu;
        p.index[2 * i + 1] = c.iv;
      }
    }
  });
  return p;
}

FeedbackPolicy extract_feedback(const ProblemSpec& spec, const GridFunction& w, PolicyTarget target,
                                Ordering ordering) {
  return extract_feedback(DiscreteOperator(spec, w.grid), w, target, ordering);
}

EnvelopeSide envelope_side(const ProblemSpec& spec, Player strategy_player) noexcept {
  return strategy_player == spec.sup_player() ? EnvelopeSide::lower : EnvelopeSide::upper;
}

namespace {

// Shortfall of J against rho from the strategy's point of view.
double side_gap(EnvelopeSide side, double rho, double J) { return side == EnvelopeSide::lower ? rho - J : J - rho; }

}  // namespace

GameEstimate play_theta_game(const ProblemSpec& spec, const Vec& x0, const ThetaStrategy& strategy,
                             const ControlProcess& opponent, const SimConfig& cfg, std::optional<Envelope> envelope) {
  if (!strategy.base) throw PreconditionError("theta strategy has no policy");
  if (!(strategy.theta > 0.0)) throw PreconditionError("theta must be positive");
  const double m = strategy.theta / cfg.dt;
  if (std::abs(m - std::round(m)) > 1e-9 * std::max(1.0, m) || std::round(m) < 1.0) {
    throw PreconditionError("theta must be an integer multiple of dt");
  }
  const ControlProcess mine = PiecewiseFrozenFeedback{strategy.theta, strategy.base};
  const bool is_u = strategy.controls() == Player::u;
  const PathBatch b = is_u ? simulate(spec, x0, mine, opponent, cfg) : simulate(spec, x0, opponent, mine, cfg);
  const auto est = estimate_average_payoff(b, spec);

  GameEstimate g;
  g.x0 = x0;
  g.T = cfg.T;
  g.theta = strategy.theta;
  g.opponent = describe(opponent);
  g.mean = est.average.mean;
  g.stderr_ = est.average.stderr_;
  for (std::size_t j = 1; j < b.records(); ++j) {
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t p = 0; p < b.paths; ++p) {
      if (b.flagged[p]) continue;
      s += b.running_payoff[p * b.records() + j] / b.times[j];
      ++cnt;
    }
    g.trace.emplace_back(b.times[j], cnt ? s / static_cast<double>(cnt) : 0.0);
  }
  if (g.trace.size() >= 2) {
    const double mid = g.trace[g.trace.size() / 2].second;
    g.tail_unsettled = std::abs(g.trace.back().second - mid) > 3.0 * g.stderr_ + 1e-12 * (1.0 + std::abs(mid));
  }
  if (envelope) {
    g.envelope = envelope;
    const double slack = envelope->C_env * theta_width(strategy.theta);
    g.bound = envelope->side == EnvelopeSide::lower ? envelope->rho - slack : envelope->rho + slack;
    g.passed = side_gap(envelope->side, envelope->rho, g.mean) <= slack + 3.0 * g.stderr_;
  }
  return g;
}

nlohmann::json GameEstimate::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [time, mean_value] : trace) t.push_back({time, mean_value});
  nlohmann::json j = {{"x0", x0},
                      {"T", T},
                      {"theta", theta},
                      {"opponent", opponent},
                      {"mean", mean},
                      {"stderr", stderr_},
                      {"trace", t},
                      {"tail_unsettled", tail_unsettled}};
  if (envelope) {
    j["envelope"] = {{"rho", envelope->rho},
                     {"C_env", envelope->C_env},
                     {"side", envelope->side == EnvelopeSide::lower ? "lower" : "upper"},
                     {"bound", bound},
                     {"passed", passed}};
  }
  return j;
}

std::vector<Opponent> opponent_panel(const ProblemSpec& spec, Player who, const SimConfig& cfg,
                                     std::shared_ptr<const FeedbackPolicy> adversary, std::size_t random_count,
                                     double hold_time) {
  const ControlGrid& grid = spec.grid_of(who);
  std::vector<Opponent> panel;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto pt = grid.point(i);
    panel.push_back({"const:" + std::to_string(i), ConstantControl{Vec(pt.begin(), pt.end())}});
  }
  const std::size_t steps = cfg.steps();
  const auto hold = static_cast<std::size_t>(std::max(1.0, std::round(hold_time / cfg.dt)));
  const std::uint32_t base = who == Player::u ? 0u : 1u << 16;
  for (std::size_t k = 0; k < random_count; ++k) {
    panel.push_back({"seed:" + std::to_string(k),
                     random_piecewise_constant(grid.size(), steps, hold, cfg.seed, base + static_cast<std::uint32_t>(k))});
  }
  if (adversary) panel.push_back({"adversary", FeedbackControl{std::move(adversary)}});
  return panel;
}

namespace {

ThetaRow play_row(const ProblemSpec& spec, const Vec& x0, const std::shared_ptr<const FeedbackPolicy>& policy,
                  double rho, EnvelopeSide side, double theta, const std::vector<Opponent>& panel,
                  const SimConfig& cfg) {
  ThetaRow row;
  row.theta = theta;
  row.worst_gap = -std::numeric_limits<double>::infinity();
  const ThetaStrategy strat{theta, policy, std::nullopt};
  for (const auto& opp : panel) {
    auto g = play_theta_game(spec, x0, strat, opp.process, cfg);
    g.opponent["label"] = opp.label;
    const double gap = side_gap(side, rho, g.mean);
    if (gap > row.worst_gap) {
      row.worst_gap = gap;
      row.worst_gap_se = g.stderr_;
      row.worst_opponent = opp.label;
    }
    row.games.push_back(std::move(g));
  }
  return row;
}

}  // namespace

EnvelopeReport envelope_study(const ProblemSpec& spec, const Vec& x0, std::shared_ptr<const FeedbackPolicy> policy,
                              double rho, const Vec& theta_list, const std::vector<Opponent>& panel,
                              const SimConfig& cfg, std::optional<double> C_env) {
  if (theta_list.empty() || panel.empty()) throw PreconditionError("envelope study needs thetas and opponents");
  EnvelopeReport rep;
  rep.rho = rho;
  rep.side = envelope_side(spec, policy->player);
  Vec thetas = theta_list;
  std::sort(thetas.begin(), thetas.end(), std::greater<>());
  for (double th : thetas) rep.rows.push_back(play_row(spec, x0, policy, rho, rep.side, th, panel, cfg));

  if (C_env) {
    rep.C_env = *C_env;
  } else {
    const double t1 = thetas.front(), t2 = t1 / 2.0;
    const ThetaRow* half = nullptr;
    ThetaRow extra;
    for (const auto& r : rep.rows) {
      if (std::abs(r.theta - t2) <= 1e-12 * t1) half = &r;
    }
    if (!half) {
      extra = play_row(spec, x0, policy, rho, rep.side, t2, panel, cfg);
      half = &extra;
    }
    const double s1 = theta_width(t1), s2 = theta_width(t2);
    const double g1 = std::max(0.0, rep.rows.front().worst_gap), g2 = std::max(0.0, half->worst_gap);
    rep.C_env = 2.0 * (g1 * s1 + g2 * s2) / (s1 * s1 + s2 * s2);
  }

  rep.all_within = true;
  for (auto& row : rep.rows) {
    const Envelope env{rho, rep.C_env, rep.side};
    const double slack = rep.C_env * theta_width(row.theta);
    row.within_envelope = true;
    for (auto& g : row.games) {
      g.envelope = env;
      g.bound = rep.side == EnvelopeSide::lower ? rho - slack : rho + slack;
      g.passed = side_gap(rep.side, rho, g.mean) <= slack + 3.0 * g.stderr_;
      row.within_envelope = row.within_envelope && g.passed;
    }
    rep.all_within = rep.all_within && row.within_envelope;
  }
  rep.gap_monotone = true;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    const auto& a = rep.rows[k - 1];
    const auto& b = rep.rows[k];
    const double se = std::hypot(a.worst_gap_se, b.worst_gap_se);
    if (b.worst_gap > a.worst_gap + 3.0 * se) rep.gap_monotone = false;
  }
  return rep;
}

nlohmann::json EnvelopeReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json games = nlohmann::json::array();
    for (const auto& g : r.games) {
      auto j = g.to_json();
      j.erase("trace");
      games.push_back(std::move(j));
    }
    rows_j.push_back({{"theta", r.theta},
                      {"worst_gap", r.worst_gap},
                      {"worst_gap_stderr", r.worst_gap_se},
                      {"worst_opponent", r.worst_opponent},
                      {"within_envelope", r.within_envelope},
                      {"games", games}});
  }
  return {{"rho", rho},
          {"side", side == EnvelopeSide::lower ? "lower" : "upper"},
          {"C_env", C_env},
          {"all_within", all_within},
          {"gap_monotone", gap_monotone},
          {"passed", passed()},
          {"rows", rows_j}};
}

BracketReport value_bracket(const ProblemSpec& spec, const std::vector<Vec>& x0_list,
                            const ErgodicSolution& ergodic_infsup, const ErgodicSolution& ergodic_supinf,
                            const Vec& theta_list, const SimConfig& cfg, std::size_t random_count) {
  if (x0_list.empty()) throw PreconditionError("value bracket needs at least one x0");
  if (ergodic_infsup.ordering != Ordering::infsup || ergodic_supinf.ordering != Ordering::supinf) {
    throw PreconditionError("value bracket needs an infsup and a supinf solution");
  }
  const DiscreteOperator op_hi(spec, ergodic_infsup.w.grid);
  const DiscreteOperator op_lo(spec, ergodic_supinf.w.grid);
  // Sup player secures the lower value; inf player holds the game to the upper value.
  auto lo_policy = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op_lo, ergodic_supinf.w, PolicyTarget::outer, Ordering::supinf));
  auto lo_adv = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op_lo, ergodic_supinf.w, PolicyTarget::response, Ordering::supinf));
  auto hi_policy = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op_hi, ergodic_infsup.w, PolicyTarget::outer, Ordering::infsup));
  auto hi_adv = std::make_shared<const FeedbackPolicy>(
      extract_feedback(op_hi, ergodic_infsup.w, PolicyTarget::response, Ordering::infsup));
  const auto lo_panel = opponent_panel(spec, spec.inf_player(), cfg, lo_adv, random_count);
  const auto hi_panel = opponent_panel(spec, spec.sup_player(), cfg, hi_adv, random_count);

  BracketReport rep;
  rep.rho_infsup = ergodic_infsup.rho;
  rep.rho_supinf = ergodic_supinf.rho;
  rep.brackets_hold = true;
  std::optional<double> c_lo, c_hi;
  for (std::size_t xi = 0; xi < x0_list.size(); ++xi) {
    const auto& x0 = x0_list[xi];
    auto lo = envelope_study(spec, x0, lo_policy, rep.rho_supinf, theta_list, lo_panel, cfg, c_lo);
    auto hi = envelope_study(spec, x0, hi_policy, rep.rho_infsup, theta_list, hi_panel, cfg, c_hi);
    c_lo = lo.C_env;
    c_hi = hi.C_env;
    rep.brackets_hold = rep.brackets_hold && lo.passed() && hi.passed();
    for (std::size_t k = 0; k < lo.rows.size(); ++k) {
      BracketRow row;
      row.x0 = x0;
      row.theta = lo.rows[k].theta;
      row.lower = rep.rho_supinf - lo.rows[k].worst_gap;
      row.lower_se = lo.rows[k].worst_gap_se;
      row.upper = rep.rho_infsup + hi.rows[k].worst_gap;
      row.upper_se = hi.rows[k].worst_gap_se;
      row.midpoint = 0.5 * (row.lower + row.upper);
      row.midpoint_se = 0.5 * std::hypot(row.lower_se, row.upper_se);
      rep.rows.push_back(row);
    }
    if (xi == 0) {
      rep.lower_study = std::move(lo);
      rep.upper_study = std::move(hi);
    }
  }
  // Rows per x0 are ordered by decreasing theta; the last one is the finest.
  const std::size_t per = theta_list.size();
  rep.x0_independent = true;
  for (std::size_t a = 0; a < x0_list.size(); ++a) {
    for (std::size_t b = a + 1; b < x0_list.size(); ++b) {
      const auto& ra = rep.rows[a * per + per - 1];
      const auto& rb = rep.rows[b * per + per - 1];
      if (std::abs(ra.midpoint - rb.midpoint) > 3.0 * std::hypot(ra.midpoint_se, rb.midpoint_se) + 1e-12) {
        rep.x0_independent = false;
      }
    }
  }
  return rep;
}

nlohmann::json BracketReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"x0", r.x0},
                      {"theta", r.theta},
                      {"lower", r.lower},
                      {"lower_stderr", r.lower_se},
                      {"upper", r.upper},
                      {"upper_stderr", r.upper_se},
                      {"midpoint", r.midpoint},
                      {"midpoint_stderr", r.midpoint_se}});
  }
  return {{"rho_infsup", rho_infsup},       {"rho_supinf", rho_supinf},     {"rows", rows_j},
          {"x0_independent", x0_independent}, {"brackets_hold", brackets_hold},
          {"lower_study", lower_study.to_json()}, {"upper_study", upper_study.to_json()}};
}

}  // namespace erg
