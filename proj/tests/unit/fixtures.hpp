#pragma once

#include <initializer_list>
#include <utility>
#include <vector>

#include "sptoken/road_network.hpp"

namespace fixtures {

using sptoken::road::Action;
using sptoken::road::MergedState;
using sptoken::road::StateGraph;

struct StateSpec {
  double length = 100.0;
  double tau_min = 10.0;
  double ry = 0.0;
  std::vector<std::pair<Action, int>> moves;  // 'u' is added automatically
};

/// Hand-built state graph; every state gets a 'u' self-loop and one fake member link.
inline StateGraph make_graph(const std::vector<StateSpec>& specs) {
  std::vector<MergedState> states;
  for (int i = 0; i < static_cast<int>(specs.size()); ++i) {
    MergedState m;
    m.id = i;
    m.member_links = {1000 + i};
    m.length = specs[i].length;
    m.tau_min = specs[i].tau_min;
    m.ry = specs[i].ry;
    for (auto [a, to] : specs[i].moves) m.out[sptoken::road::index(a)] = to;
    m.out[sptoken::road::index(Action::kStay)] = i;
    states.push_back(m);
  }
  return StateGraph(std::move(states));
}

}  // namespace fixtures
