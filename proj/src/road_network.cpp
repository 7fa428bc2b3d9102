#include "sptoken/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sptoken::road {

char symbol(Action a) {
  static constexpr char kSymbols[] = {'s', 'L', 'l', 'R', 'r', 'u'};
  return kSymbols[index(a)];
}

Action action_from_symbol(char c) {
  switch (c) {
    case 's': return Action::kStraight;
    case 'L': return Action::kPartialLeft;
    case 'l': return Action::kLeft;
    case 'R': return Action::kPartialRight;
    case 'r': return Action::kRight;
    case 'u': return Action::kStay;
  }
  throw std::invalid_argument(std::string("unknown action symbol '") + c + "'");
}

double signed_turn_angle(double in_heading_rad, double out_heading_rad) {
  double deg = (out_heading_rad - in_heading_rad) * 180.0 / std::numbers::pi;
  deg = std::fmod(deg, 360.0);
  if (deg > 180.0) deg -= 360.0;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

std::optional<Action> classify_turn(double theta_deg, const TurnThresholds& th) {
  const double mag = std::abs(theta_deg);
  if (mag <= th.straight) return Action::kStraight;
  if (mag > th.uturn_above) return std::nullopt;
  const bool left = theta_deg > 0.0;
  if (mag <= th.partial) return left ? Action::kPartialLeft : Action::kPartialRight;
  return left ? Action::kLeft : Action::kRight;
}

void RoadNetwork::add_node(Node n) {
  if (node_index_.contains(n.id)) throw std::invalid_argument("duplicate node id " + std::to_string(n.id));
  node_index_.emplace(n.id, nodes_.size());
  nodes_.push_back(n);
}

void RoadNetwork::add_link(RoadLink l) {
  const auto where = "link " + std::to_string(l.id);
  if (link_index_.contains(l.id)) throw std::invalid_argument("duplicate " + where);
  if (!node_index_.contains(l.from) || !node_index_.contains(l.to))
    throw std::invalid_argument(where + " references an unknown node");
  if (l.from == l.to) throw std::invalid_argument(where + " is a self-loop");
  if (!(l.length > 0.0)) throw std::invalid_argument(where + ": length must be > 0");
  if (!(l.free_speed > 0.0)) throw std::invalid_argument(where + ": free_speed must be > 0");
  if (!(l.tls_ry >= 0.0)) throw std::invalid_argument(where + ": tls_ry must be >= 0");
  link_index_.emplace(l.id, links_.size());
  out_links_[l.from].push_back(links_.size());
  links_.push_back(l);
}

const std::vector<std::size_t>& RoadNetwork::out_links(int node_id) const {
  static const std::vector<std::size_t> kNone;
  auto it = out_links_.find(node_id);
  return it == out_links_.end() ? kNone : it->second;
}

double RoadNetwork::heading(const RoadLink& l) const {
  const auto& a = node(l.from);
  const auto& b = node(l.to);
  return std::atan2(b.y - a.y, b.x - a.x);
}

int RoadNetwork::find_link_toward(int from_node, int toward_node) const {
  const auto& a = node(from_node);
  const auto& t = node(toward_node);
  const double want = std::atan2(t.y - a.y, t.x - a.x);
  int best = -1;
  double best_cos = 0.999;
  for (auto pos : out_links(from_node)) {
    double c = std::cos(heading(links_[pos]) - want);
    if (c > best_cos) {
      best_cos = c;
      best = links_[pos].id;
    }
  }
  return best;
}

RoadNetwork RoadNetwork::from_json(const nlohmann::json& j) {
  RoadNetwork net;
  for (const auto& n : j.at("nodes")) net.add_node({n.at("id").get<int>(), n.at("x").get<double>(), n.at("y").get<double>()});
  for (const auto& l : j.at("links"))
    net.add_link({l.at("id").get<int>(), l.at("from").get<int>(), l.at("to").get<int>(),
                  l.at("length").get<double>(), l.at("free_speed").get<double>(), l.value("tls_ry", 0.0)});
  return net;
}

nlohmann::json RoadNetwork::to_json() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes_) j["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  j["links"] = nlohmann::json::array();
  for (const auto& l : links_)
    j["links"].push_back({{"id", l.id}, {"from", l.from}, {"to", l.to}, {"length", l.length},
                          {"free_speed", l.free_speed}, {"tls_ry", l.tls_ry}});
  return j;
}

std::vector<std::vector<Connection>> build_connections(const RoadNetwork& net, const TurnThresholds& th) {
  const auto& links = net.links();
  std::vector<std::vector<Connection>> conns(links.size());
  for (std::size_t e = 0; e < links.size(); ++e) {
    const auto& in = links[e];
    const double in_heading = net.heading(in);
    std::vector<Connection> cands;
    for (auto f : net.out_links(in.to)) {
      const auto& out = links[f];
      if (out.to == in.from) continue;  // opposite-direction twin
      const double theta = signed_turn_angle(in_heading, net.heading(out));
      auto cls = classify_turn(theta, th);
      if (!cls) continue;
      cands.push_back({f, *cls, theta});
    }
    bool collision = false;
    for (std::size_t a = 0; a < cands.size(); ++a)
      for (std::size_t b = a + 1; b < cands.size(); ++b)
        if (cands[a].action == cands[b].action) collision = true;
    if (collision) {
      // Smallest |theta| goes straight; the rest fill L, l on the left and R, r on the right.
      std::sort(cands.begin(), cands.end(), [](const Connection& a, const Connection& b) {
        return std::abs(a.theta_deg) < std::abs(b.theta_deg);
      });
      cands[0].action = Action::kStraight;
      int lefts = 0;
      int rights = 0;
      for (std::size_t k = 1; k < cands.size(); ++k) {
        if (cands[k].theta_deg >= 0.0) {
          if (lefts == 2) throw std::invalid_argument("more than two left turns at node " + std::to_string(in.to));
          cands[k].action = lefts++ == 0 ? Action::kPartialLeft : Action::kLeft;
        } else {
          if (rights == 2) throw std::invalid_argument("more than two right turns at node " + std::to_string(in.to));
          cands[k].action = rights++ == 0 ? Action::kPartialRight : Action::kRight;
        }
      }
    }
    std::sort(cands.begin(), cands.end(),
              [](const Connection& a, const Connection& b) { return a.action < b.action; });
    conns[e] = std::move(cands);
  }
  return conns;
}

std::vector<std::vector<int>> contract_chains(const std::vector<std::vector<int>>& succ) {
  const int n = static_cast<int>(succ.size());
  std::vector<int> pred_count(n, 0);
  for (const auto& s : succ)
    for (int w : s) ++pred_count[w];
  std::vector<int> next(n, -1);
  std::vector<bool> has_merged_pred(n, false);
  for (int v = 0; v < n; ++v)
    if (succ[v].size() == 1) {
      int w = succ[v][0];
      if (w != v && pred_count[w] == 1) {
        next[v] = w;
        has_merged_pred[w] = true;
      }
    }

  std::vector<std::vector<int>> chains;
  std::vector<bool> used(n, false);
  auto walk = [&](int head) {
    std::vector<int> chain;
    for (int v = head; v != -1 && !used[v]; v = next[v]) {
      used[v] = true;
      chain.push_back(v);
    }
    return chain;
  };
  for (int v = 0; v < n; ++v)
    if (!has_merged_pred[v]) chains.push_back(walk(v));
  // Whatever is left sits on an isolated one-in/one-out cycle.
  for (int v = 0; v < n; ++v)
    if (!used[v]) chains.push_back(walk(v));
  std::sort(chains.begin(), chains.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) { return a.front() < b.front(); });
  return chains;
}

StateGraph::StateGraph(std::vector<MergedState> states) : states_(std::move(states)) {
  double total = 0.0;
  for (const auto& s : states_) {
    int count = 0;
    for (int t : s.out) count += t != kNoState;
    action_counts_.push_back(count);
    for (int l : s.member_links) link_to_state_[l] = s.id;
    total += s.length;
  }
  mean_length_ = states_.empty() ? 0.0 : total / static_cast<double>(states_.size());
}

std::vector<Action> StateGraph::actions(int s) const {
  std::vector<Action> out;
  for (auto a : kAllActions)
    if (allowed(s, a)) out.push_back(a);
  return out;
}

std::vector<std::vector<int>> StateGraph::successor_lists() const {
  std::vector<std::vector<int>> succ(states_.size());
  for (const auto& s : states_)
    for (auto a : kAllActions)
      if (a != Action::kStay && s.out[index(a)] != kNoState) succ[s.id].push_back(s.out[index(a)]);
  return succ;
}

int StateGraph::state_of_link(int link_id) const {
  auto it = link_to_state_.find(link_id);
  if (it == link_to_state_.end()) throw std::out_of_range("link " + std::to_string(link_id) + " is not in any state");
  return it->second;
}

nlohmann::json StateGraph::to_json() const {
  nlohmann::json j;
  j["state_count"] = states_.size();
  j["mean_length"] = mean_length_;
  j["components"] = components_;
  j["states"] = nlohmann::json::array();
  for (const auto& s : states_) {
    nlohmann::json actions = nlohmann::json::object();
    for (auto a : kAllActions)
      if (s.out[index(a)] != kNoState) actions[std::string(1, symbol(a))] = s.out[index(a)];
    j["states"].push_back({{"id", s.id}, {"links", s.member_links}, {"length", s.length},
                           {"ry", s.ry}, {"tau_min", s.tau_min}, {"actions", actions}});
  }
  nlohmann::json map = nlohmann::json::object();
  for (const auto& s : states_)
    for (int l : s.member_links) map[std::to_string(l)] = s.id;
  j["link_to_state"] = map;
  return j;
}

namespace {

int count_components(const std::vector<std::vector<int>>& succ) {
  const int n = static_cast<int>(succ.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (int v = 0; v < n; ++v)
    for (int w : succ[v]) parent[find(v)] = find(w);
  int roots = 0;
  for (int v = 0; v < n; ++v) roots += find(v) == v;
  return roots;
}

}  // namespace

StateGraph merge_states(const RoadNetwork& net, const TurnThresholds& th) {
  const auto conns = build_connections(net, th);
  const auto& links = net.links();
  std::vector<std::vector<int>> succ(links.size());
  for (std::size_t e = 0; e < links.size(); ++e)
    for (const auto& c : conns[e]) succ[e].push_back(static_cast<int>(c.to_link));

  const auto chains = contract_chains(succ);
  std::vector<int> head_state(links.size(), kNoState);
  for (std::size_t s = 0; s < chains.size(); ++s) head_state[chains[s].front()] = static_cast<int>(s);

  std::vector<MergedState> states(chains.size());
  for (std::size_t s = 0; s < chains.size(); ++s) {
    auto& st = states[s];
    st.id = static_cast<int>(s);
    for (int pos : chains[s]) {
      const auto& l = links[pos];
      st.member_links.push_back(l.id);
      st.length += l.length;
      st.ry += l.tls_ry;
      st.tau_min += l.length / l.free_speed;
    }
    for (const auto& c : conns[chains[s].back()]) {
      const int target = head_state[c.to_link];
      if (target == kNoState) throw std::logic_error("connection into the interior of a merged chain");
      st.out[index(c.action)] = target;
    }
    st.out[index(Action::kStay)] = st.id;
  }
  StateGraph g(std::move(states));
  g.set_components(count_components(g.successor_lists()));
  return g;
}

std::vector<int> ShortestPaths::route_from(const StateGraph& g, int origin) const {
  std::vector<int> route{origin};
  int s = origin;
  while (s != destination && reachable[s] && route.size() <= static_cast<std::size_t>(g.size())) {
    s = g.successor(s, policy[s]);
    route.push_back(s);
  }
  return route;
}

ShortestPaths shortest_path_policy(const StateGraph& g, int destination) {
  const int n = g.size();
  if (destination < 0 || destination >= n) throw std::out_of_range("destination state out of range");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<std::vector<int>> preds(n);
  for (const auto& s : g.states())
    for (auto a : kAllActions)
      if (a != Action::kStay && s.out[index(a)] != kNoState) preds[s.out[index(a)]].push_back(s.id);

  ShortestPaths sp;
  sp.destination = destination;
  sp.distance.assign(n, kInf);
  sp.distance[destination] = g.state(destination).length;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  queue.push({sp.distance[destination], destination});
  while (!queue.empty()) {
    auto [d, s] = queue.top();
    queue.pop();
    if (d > sp.distance[s]) continue;
    for (int p : preds[s]) {
      const double cand = g.state(p).length + d;
      if (cand < sp.distance[p]) {
        sp.distance[p] = cand;
        queue.push({cand, p});
      }
    }
  }

  sp.policy.assign(n, Action::kStay);
  sp.reachable.assign(n, false);
  for (int s = 0; s < n; ++s) {
    sp.reachable[s] = sp.distance[s] < kInf;
    if (s == destination || !sp.reachable[s]) continue;
    double best = kInf;
    for (auto a : kAllActions) {
      if (a == Action::kStay || !g.allowed(s, a)) continue;
      const double d = sp.distance[g.successor(s, a)];
      if (d < best - 1e-9) {
        best = d;
        sp.policy[s] = a;
      }
    }
  }
  return sp;
}

double distance_to_destination(const ShortestPaths& sp, int s) { return sp.distance.at(s); }

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  GridSpec g;
  g.nx = j.value("nx", g.nx);
  g.ny = j.value("ny", g.ny);
  g.block_length = j.value("block_length", g.block_length);
  g.segments = j.value("segments", g.segments);
  g.free_speed = j.value("free_speed", g.free_speed);
  g.tls_fraction = j.value("tls_fraction", g.tls_fraction);
  g.tls_ry = j.value("tls_ry", g.tls_ry);
  g.seed = j.value("seed", g.seed);
  if (g.nx < 2 || g.ny < 2) throw std::invalid_argument("grid needs nx, ny >= 2");
  if (g.segments < 1) throw std::invalid_argument("grid segments must be >= 1");
  if (!(g.block_length > 0.0) || !(g.free_speed > 0.0)) throw std::invalid_argument("grid block_length and free_speed must be > 0");
  if (g.tls_fraction < 0.0 || g.tls_fraction > 1.0) throw std::invalid_argument("tls_fraction must be in [0, 1]");
  return g;
}

nlohmann::json GridSpec::to_json() const {
  return {{"nx", nx}, {"ny", ny}, {"block_length", block_length}, {"segments", segments},
          {"free_speed", free_speed}, {"tls_fraction", tls_fraction}, {"tls_ry", tls_ry}, {"seed", seed}};
}

RoadNetwork generate_grid(const GridSpec& spec) {
  RoadNetwork net;
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i)
      net.add_node({grid_node(spec, i, j), i * spec.block_length, j * spec.block_length});

  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution controlled(spec.tls_fraction);
  std::vector<bool> tls(static_cast<std::size_t>(spec.nx) * spec.ny);
  for (std::size_t k = 0; k < tls.size(); ++k) tls[k] = controlled(rng);

  int next_node = spec.nx * spec.ny;
  int next_link = 0;
  const double seg_len = spec.block_length / spec.segments;
  auto road = [&](int i0, int j0, int i1, int j1) {
    // Shared intermediate nodes, then one chain of segments per direction.
    std::vector<int> path{grid_node(spec, i0, j0)};
    for (int k = 1; k < spec.segments; ++k) {
      const double f = static_cast<double>(k) / spec.segments;
      net.add_node({next_node, (i0 + f * (i1 - i0)) * spec.block_length, (j0 + f * (j1 - j0)) * spec.block_length});
      path.push_back(next_node++);
    }
    path.push_back(grid_node(spec, i1, j1));
    auto add_direction = [&](const std::vector<int>& p, bool into_junction_tls) {
      for (std::size_t k = 0; k + 1 < p.size(); ++k) {
        const bool last = k + 2 == p.size();
        net.add_link({next_link++, p[k], p[k + 1], seg_len, spec.free_speed,
                      last && into_junction_tls ? spec.tls_ry : 0.0});
      }
    };
    add_direction(path, tls[grid_node(spec, i1, j1)]);
    std::vector<int> back(path.rbegin(), path.rend());
    add_direction(back, tls[grid_node(spec, i0, j0)]);
  };
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) {
      if (i + 1 < spec.nx) road(i, j, i + 1, j);
      if (j + 1 < spec.ny) road(i, j, i, j + 1);
    }
  return net;
}

}  // namespace sptoken::road
