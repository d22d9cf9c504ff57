#include "erg/policy.hpp"

#include <fstream>
#include <iomanip>

#include "erg/error.hpp"

namespace erg {

std::string_view to_string(PolicyTarget t) {
  switch (t) {
    case PolicyTarget::outer: return "outer";
    case PolicyTarget::response: return "response";
    case PolicyTarget::pair: return "pair";
  }
  return "outer";
}

PolicyTarget parse_policy_target(std::string_view s) {
  if (s == "outer") return PolicyTarget::outer;
  if (s == "response") return PolicyTarget::response;
  if (s == "pair") return PolicyTarget::pair;
  throw PreconditionError("unknown policy target '" + std::string(s) + "' (expected outer, response or pair)");
}

std::size_t FeedbackPolicy::at_node(std::size_t node, std::size_t opponent) const {
  switch (target) {
    case PolicyTarget::outer: return index[node];
    case PolicyTarget::response: return index[node * opponent_count + opponent];
    case PolicyTarget::pair: return player == Player::u ? u_at(node) : v_at(node);
  }
  return 0;
}

void write_policy(const FeedbackPolicy& p, const std::filesystem::path& csv, const std::filesystem::path& json) {
  std::ofstream out(csv);
  if (!out) throw Error("cannot open " + csv.string() + " for writing");
  out << std::setprecision(17);
  for (std::size_t k = 0; k < p.grid.dim(); ++k) out << (k ? ",x" : "x") << (k + 1);
  switch (p.target) {
    case PolicyTarget::outer: out << ',' << to_string(p.player) << "_index\n"; break;
    case PolicyTarget::response: out << ",opponent_index," << to_string(p.player) << "_index\n"; break;
    case PolicyTarget::pair: out << ",u_index,v_index\n"; break;
  }
  const std::size_t per = p.target == PolicyTarget::outer ? 1 : p.target == PolicyTarget::pair ? 2 : p.opponent_count;
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    if (p.target == PolicyTarget::response) {
      for (std::size_t k = 0; k < per; ++k) {
        for (std::size_t a = 0; a < p.grid.dim(); ++a) out << (a ? "," : "") << p.grid.coord(i, a);
        out << ',' << k << ',' << p.index[i * per + k] << '\n';
      }
      continue;
    }
    for (std::size_t a = 0; a < p.grid.dim(); ++a) out << (a ? "," : "") << p.grid.coord(i, a);
    for (std::size_t k = 0; k < per; ++k) out << ',' << p.index[i * per + k];
    out << '\n';
  }
  nlohmann::json j = {{"target", std::string(to_string(p.target))},
                      {"player", std::string(to_string(p.player))},
                      {"grid", p.grid.to_json()},
                      {"opponent_count", p.opponent_count},
                      {"index", p.index},
                      {"provenance", p.provenance}};
  std::ofstream js(json);
  if (!js) throw Error("cannot open " + json.string() + " for writing");
  js << j.dump(2) << '\n';
}

FeedbackPolicy read_policy(const std::filesystem::path& json) {
  std::ifstream in(json);
  if (!in) throw Error("cannot open " + json.string());
  const auto j = nlohmann::json::parse(in);
  const auto& g = j.at("grid");
  FeedbackPolicy p{parse_policy_target(j.at("target").get<std::string>()),
                   j.at("player").get<std::string>() == "v" ? Player::v : Player::u,
                   StateGrid(g.at("lower").get<Vec>(), g.at("upper").get<Vec>(),
                             g.at("nodes").get<std::vector<std::size_t>>()),
                   j.at("index").get<std::vector<std::size_t>>(),
                   j.at("opponent_count").get<std::size_t>(),
                   j.value("provenance", nlohmann::json::object())};
  const std::size_t per =
      p.target == PolicyTarget::outer ? 1 : p.target == PolicyTarget::pair ? 2 : p.opponent_count;
  if (p.index.size() != per * p.grid.size()) throw Error("policy file " + json.string() + " has the wrong size");
  return p;
}

}  // namespace erg
