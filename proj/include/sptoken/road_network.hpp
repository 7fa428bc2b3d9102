#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sptoken::road {

/// Action alphabet in its fixed tie-break order.
enum class Action : std::uint8_t {
  kStraight = 0,      // s
  kPartialLeft = 1,   // L
  kLeft = 2,          // l
  kPartialRight = 3,  // R
  kRight = 4,         // r
  kStay = 5,          // u
};

inline constexpr int kActionCount = 6;
inline constexpr std::array<Action, kActionCount> kAllActions{
    Action::kStraight, Action::kPartialLeft, Action::kLeft,
    Action::kPartialRight, Action::kRight, Action::kStay};

char symbol(Action a);
Action action_from_symbol(char c);
inline int index(Action a) { return static_cast<int>(a); }

/// Turn-angle class boundaries in degrees; |theta| above `uturn_above` is a U-turn.
struct TurnThresholds {
  double straight = 30.0;
  double partial = 100.0;
  double uturn_above = 150.0;
};

/// Signed angle from the incoming to the outgoing heading, degrees in (-180, 180], left positive.
double signed_turn_angle(double in_heading_rad, double out_heading_rad);

/// Returns std::nullopt for a U-turn.
std::optional<Action> classify_turn(double theta_deg, const TurnThresholds& th = {});

struct Node {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct RoadLink {
  int id = 0;
  int from = 0;  // node ids
  int to = 0;
  double length = 0.0;      // m
  double free_speed = 0.0;  // m/s
  double tls_ry = 0.0;      // s, 0 if uncontrolled
};

class RoadNetwork {
 public:
  void add_node(Node n);
  void add_link(RoadLink l);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<RoadLink>& links() const { return links_; }
  const Node& node(int id) const { return nodes_.at(node_index_.at(id)); }
  const RoadLink& link(int id) const { return links_.at(link_index_.at(id)); }
  std::size_t link_position(int id) const { return link_index_.at(id); }
  bool has_link(int id) const { return link_index_.contains(id); }
  /// Positions (not ids) of links leaving the given node.
  const std::vector<std::size_t>& out_links(int node_id) const;

  double heading(const RoadLink& l) const;

  /// Link from `from_node` whose direction points at `toward_node`; -1 if none.
  int find_link_toward(int from_node, int toward_node) const;

  static RoadNetwork from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  std::vector<Node> nodes_;
  std::vector<RoadLink> links_;
  std::unordered_map<int, std::size_t> node_index_;
  std::unordered_map<int, std::size_t> link_index_;
  std::unordered_map<int, std::vector<std::size_t>> out_links_;
};

/// One outgoing connection of a link after U-turn removal, with its action label.
struct Connection {
  std::size_t to_link = 0;  // link position
  Action action = Action::kStraight;
  double theta_deg = 0.0;
};

/// Link-level connections for every link (indexed by link position).
std::vector<std::vector<Connection>> build_connections(const RoadNetwork& net,
                                                       const TurnThresholds& th = {});

/// Maximal chain contraction on a successor-list graph: v and w share a chain when
/// succ(v) = {w} and pred(w) = {v}. Returns chains in order of their head vertex.
std::vector<std::vector<int>> contract_chains(const std::vector<std::vector<int>>& succ);

inline constexpr int kNoState = -1;

struct MergedState {
  int id = 0;
  std::vector<int> member_links;  // link ids, head to tail
  double length = 0.0;
  double ry = 0.0;
  double tau_min = 0.0;  // sum of member free-flow times
  std::array<int, kActionCount> out{kNoState, kNoState, kNoState, kNoState, kNoState, kNoState};
};

/// The contracted RL state graph together with its point-mass transition model.
class StateGraph {
 public:
  StateGraph() = default;
  explicit StateGraph(std::vector<MergedState> states);

  int size() const { return static_cast<int>(states_.size()); }
  const MergedState& state(int s) const { return states_.at(s); }
  const std::vector<MergedState>& states() const { return states_; }

  bool allowed(int s, Action a) const { return states_[s].out[index(a)] != kNoState; }
  int successor(int s, Action a) const { return states_[s].out[index(a)]; }
  int action_count(int s) const { return action_counts_[s]; }
  std::vector<Action> actions(int s) const;
  /// Moves only, excluding the 'u' self-loop.
  std::vector<std::vector<int>> successor_lists() const;

  int state_of_link(int link_id) const;
  double mean_length() const { return mean_length_; }
  int components() const { return components_; }
  void set_components(int c) { components_ = c; }

  nlohmann::json to_json() const;

 private:
  std::vector<MergedState> states_;
  std::vector<int> action_counts_;
  std::unordered_map<int, int> link_to_state_;
  double mean_length_ = 0.0;
  int components_ = 1;
};

StateGraph merge_states(const RoadNetwork& net, const TurnThresholds& th = {});

/// Shortest-route data toward one destination. Distances are member-inclusive:
/// D(s) counts L(s) itself, so D(s_f) = L(s_f).
struct ShortestPaths {
  int destination = 0;
  std::vector<double> distance;  // +inf when unreachable
  std::vector<Action> policy;    // 'u' at the destination and at unreachable states
  std::vector<bool> reachable;

  std::vector<int> route_from(const StateGraph& g, int origin) const;
};

ShortestPaths shortest_path_policy(const StateGraph& g, int destination);
double distance_to_destination(const ShortestPaths& sp, int s);

struct GridSpec {
  int nx = 12;
  int ny = 12;
  double block_length = 100.0;
  int segments = 2;
  double free_speed = 13.9;
  double tls_fraction = 0.0;
  double tls_ry = 30.0;
  std::uint64_t seed = 1;

  static GridSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Junction (i, j) has node id j * nx + i; intermediate segment nodes come after.
RoadNetwork generate_grid(const GridSpec& spec);
inline int grid_node(const GridSpec& spec, int i, int j) { return j * spec.nx + i; }

}  // namespace sptoken::road
