#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "sptoken/road_network.hpp"

using namespace sptoken::road;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RoadNetwork line_network(const std::vector<double>& lengths) {
  RoadNetwork net;
  double x = 0;
  net.add_node({0, 0, 0});
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    x += lengths[i];
    net.add_node({static_cast<int>(i + 1), x, 0});
    net.add_link({static_cast<int>(i), static_cast<int>(i), static_cast<int>(i + 1), lengths[i], 10.0, 0.0});
  }
  return net;
}

// Dijkstra over a generic weighted successor list.
std::vector<double> dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adj, int src) {
  std::vector<double> dist(adj.size(), kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0;
  pq.push({0, src});
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    for (auto [w, c] : adj[v])
      if (d + c < dist[w]) {
        dist[w] = d + c;
        pq.push({dist[w], w});
      }
  }
  return dist;
}

}  // namespace

TEST_CASE("turn classification") {
  CHECK(classify_turn(0.0) == Action::kStraight);
  CHECK(classify_turn(30.0) == Action::kStraight);
  CHECK(classify_turn(45.0) == Action::kPartialLeft);
  CHECK(classify_turn(100.0) == Action::kPartialLeft);
  CHECK(classify_turn(120.0) == Action::kLeft);
  CHECK(classify_turn(-45.0) == Action::kPartialRight);
  CHECK(classify_turn(-90.0) == Action::kPartialRight);
  CHECK(classify_turn(-120.0) == Action::kRight);
  CHECK_FALSE(classify_turn(180.0).has_value());
  CHECK_FALSE(classify_turn(-160.0).has_value());
  TurnThresholds wide{30.0, 80.0, 150.0};
  CHECK(classify_turn(-90.0, wide) == Action::kRight);
}

TEST_CASE("signed turn angle") {
  const double pi = std::numbers::pi;
  CHECK(signed_turn_angle(0.0, pi / 2) == doctest::Approx(90.0));
  CHECK(signed_turn_angle(0.0, -pi / 2) == doctest::Approx(-90.0));
  CHECK(signed_turn_angle(0.0, pi) == doctest::Approx(180.0));
  CHECK(signed_turn_angle(pi, -pi / 2) == doctest::Approx(90.0));
}

TEST_CASE("action symbols") {
  for (auto a : kAllActions) CHECK(action_from_symbol(symbol(a)) == a);
  CHECK(symbol(Action::kPartialLeft) == 'L');
  CHECK(symbol(Action::kStay) == 'u');
}

TEST_CASE("three one-in one-out links merge into one state") {
  auto g = merge_states(line_network({40, 30, 30}));
  REQUIRE(g.size() == 1);
  CHECK(g.state(0).length == doctest::Approx(100.0));
  CHECK(g.state(0).member_links == std::vector<int>{0, 1, 2});
  CHECK(g.state(0).tau_min == doctest::Approx(10.0));
  CHECK(g.actions(0) == std::vector<Action>{Action::kStay});
}

TEST_CASE("a link with two successors is not merged") {
  RoadNetwork net;
  net.add_node({0, 0, 0});
  net.add_node({1, 100, 0});
  net.add_node({2, 200, 0});
  net.add_node({3, 100, 100});
  net.add_link({0, 0, 1, 100, 10, 0});
  net.add_link({1, 1, 2, 100, 10, 0});
  net.add_link({2, 1, 3, 100, 10, 0});
  auto g = merge_states(net);
  CHECK(g.size() == 3);
  const int a = g.state_of_link(0);
  CHECK(g.successor(a, Action::kStraight) == g.state_of_link(1));
  CHECK(g.successor(a, Action::kPartialLeft) == g.state_of_link(2));
  CHECK(g.successor(a, Action::kStay) == a);
}

TEST_CASE("contract_chains") {
  // 0 -> 1 -> 2 -> {3, 4}; 3 -> 5; 4 -> 5 (5 has two predecessors).
  std::vector<std::vector<int>> succ{{1}, {2}, {3, 4}, {5}, {5}, {}};
  auto chains = contract_chains(succ);
  CHECK(chains.size() == 4);
  CHECK(chains[0] == std::vector<int>{0, 1, 2});
  // A pure cycle still collapses to a single chain.
  auto ring = contract_chains({{1}, {2}, {0}});
  REQUIRE(ring.size() == 1);
  CHECK(ring[0].size() == 3);
}

TEST_CASE("grid merge against a brute-force contraction count") {
  GridSpec spec;
  auto net = generate_grid(spec);
  auto conns = build_connections(net);
  const std::size_t n = net.links().size();
  std::vector<int> out_deg(n, 0), in_deg(n, 0);
  for (std::size_t v = 0; v < n; ++v)
    for (const auto& c : conns[v]) {
      ++out_deg[v];
      ++in_deg[c.to_link];
    }
  int mergeable = 0;
  for (std::size_t v = 0; v < n; ++v)
    if (out_deg[v] == 1 && in_deg[conns[v][0].to_link] == 1) ++mergeable;
  auto g = merge_states(net);
  // Each mergeable edge removes one state (the grid has no pure cycles).
  CHECK(g.size() == static_cast<int>(n) - mergeable);
  CHECK(n == 1056);
  CHECK(g.size() == 520);

  std::size_t members = 0;
  for (const auto& s : g.states()) members += s.member_links.size();
  CHECK(members == n);
}

TEST_CASE("state graph invariants on a grid") {
  GridSpec spec;
  spec.nx = 5;
  spec.ny = 4;
  auto net = generate_grid(spec);
  auto g = merge_states(net);
  for (int s = 0; s < g.size(); ++s) {
    CHECK(g.allowed(s, Action::kStay));
    CHECK(g.successor(s, Action::kStay) == s);
    // No move reverses onto the twin of the last member link.
    const auto& last = net.link(g.state(s).member_links.back());
    for (auto a : g.actions(s)) {
      if (a == Action::kStay) continue;
      const auto& first = net.link(g.state(g.successor(s, a)).member_links.front());
      CHECK_FALSE((first.from == last.to && first.to == last.from));
    }
  }
  // Merging is idempotent: the state graph has nothing left to contract.
  auto again = contract_chains(g.successor_lists());
  CHECK(static_cast<int>(again.size()) == g.size());
}

TEST_CASE("merge preserves link-to-link distances") {
  GridSpec spec;
  spec.nx = 4;
  spec.ny = 4;
  auto net = generate_grid(spec);
  auto conns = build_connections(net);
  auto g = merge_states(net);
  REQUIRE(net.links().size() <= 500);

  // Link graph: cost of entering a link is its length.
  std::vector<std::vector<std::pair<int, double>>> link_adj(net.links().size());
  for (std::size_t v = 0; v < conns.size(); ++v)
    for (const auto& c : conns[v]) link_adj[v].push_back({static_cast<int>(c.to_link), net.links()[c.to_link].length});
  const auto succ = g.successor_lists();
  std::vector<std::vector<std::pair<int, double>>> state_adj(g.size());
  for (int s = 0; s < g.size(); ++s)
    for (int t : succ[s]) state_adj[s].push_back({t, g.state(t).length});

  for (int s = 0; s < g.size(); s += 3) {
    const auto& ms = g.state(s);
    auto ds = dijkstra(state_adj, s);
    auto dl = dijkstra(link_adj, static_cast<int>(net.link_position(ms.member_links.back())));
    for (int t = 0; t < g.size(); ++t) {
      if (t == s) continue;
      const double via_links = dl[net.link_position(g.state(t).member_links.back())];
      CHECK(ds[t] == doctest::Approx(via_links));
    }
  }
}

TEST_CASE("shortest path policy on hand graphs") {
  using fixtures::make_graph;
  SUBCASE("two-state line and the distance convention") {
    auto g = make_graph({{50, 5, 0, {{Action::kPartialRight, 1}}}, {20, 2, 0, {}}});
    auto sp = shortest_path_policy(g, 1);
    CHECK(sp.policy[1] == Action::kStay);
    CHECK(sp.policy[0] == Action::kPartialRight);
    CHECK(distance_to_destination(sp, 1) == doctest::Approx(20.0));
    CHECK(distance_to_destination(sp, 0) == doctest::Approx(70.0));
    CHECK(sp.route_from(g, 0) == std::vector<int>{0, 1});
  }
  SUBCASE("unreachable") {
    auto g = make_graph({{50, 5, 0, {}}, {20, 2, 0, {}}});
    auto sp = shortest_path_policy(g, 1);
    CHECK(std::isinf(sp.distance[0]));
    CHECK_FALSE(sp.reachable[0]);
    CHECK(sp.policy[0] == Action::kStay);
  }
}

TEST_CASE("3x3 grid shortest path matches exhaustive enumeration") {
  GridSpec spec;
  spec.nx = 3;
  spec.ny = 3;
  spec.segments = 1;
  auto net = generate_grid(spec);
  auto g = merge_states(net);
  const int origin = g.state_of_link(net.find_link_toward(grid_node(spec, 0, 0), grid_node(spec, 1, 0)));
  const int dest = g.state_of_link(net.find_link_toward(grid_node(spec, 1, 2), grid_node(spec, 2, 2)));
  auto sp = shortest_path_policy(g, dest);

  double best = kInf;
  std::vector<bool> on_path(g.size(), false);
  auto succ = g.successor_lists();
  std::function<void(int, double)> dfs = [&](int s, double d) {
    if (s == dest) {
      best = std::min(best, d);
      return;
    }
    for (int t : succ[s]) {
      if (on_path[t]) continue;
      on_path[t] = true;
      dfs(t, d + g.state(t).length);
      on_path[t] = false;
    }
  };
  on_path[origin] = true;
  dfs(origin, g.state(origin).length);
  CHECK(sp.distance[origin] == doctest::Approx(best));
  // Corners have one way out, so origin and destination states each span two blocks,
  // with two blocks north in between.
  CHECK(g.state(origin).length == doctest::Approx(2 * spec.block_length));
  CHECK(g.state(dest).length == doctest::Approx(2 * spec.block_length));
  CHECK(best == doctest::Approx(6 * spec.block_length));

  auto route = sp.route_from(g, origin);
  double along = 0;
  for (int s : route) along += g.state(s).length;
  CHECK(along == doctest::Approx(best));
}

TEST_CASE("network json round trip") {
  GridSpec spec;
  spec.nx = 3;
  spec.ny = 2;
  spec.tls_fraction = 0.5;
  auto net = generate_grid(spec);
  auto back = RoadNetwork::from_json(net.to_json());
  CHECK(back.links().size() == net.links().size());
  CHECK(back.to_json() == net.to_json());
  auto g1 = merge_states(net);
  auto g2 = merge_states(back);
  CHECK(g1.to_json() == g2.to_json());
  CHECK(GridSpec::from_json(spec.to_json()).to_json() == spec.to_json());
}
