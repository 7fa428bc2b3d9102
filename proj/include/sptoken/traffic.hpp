#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sptoken/road_network.hpp"

namespace sptoken::traffic {

enum class Mode : std::uint8_t { kFree, kCongested };

const char* to_string(Mode m);

struct TrafficParams {
  double jam_speed = 1.7;  // m/s, 6.12 km/h
  double noise_sigma = 0.15;
};

struct LinkTrafficState {
  int state = 0;
  Mode mode = Mode::kFree;
  double free_speed = 0.0;  // effective: L / tau_min
  double jam_speed = 0.0;
  double noise_sigma = 0.0;
};

/// A jam on `state` for episodes start..end inclusive.
struct CongestionEntry {
  int state = 0;
  int start = 0;
  int end = 0;
};

struct CongestionSchedule {
  std::vector<CongestionEntry> entries;

  bool congested(int state, int episode) const;
  void validate(int state_count) const;
};

struct TraversalOutcome {
  int state = 0;
  double travel_time = 0.0;  // s
  double distance = 0.0;     // m
  Mode mode = Mode::kFree;
};

/// Free-flow traversal time of a merged state: sum of member length / speed.
double min_travel_time(const road::StateGraph& g, int s);

/// (L / v) * (1 + u) + RY.
double travel_time(double length, double speed, double noise_draw, double ry);

/// Modes for one episode: congested iff any schedule entry covers it.
std::vector<LinkTrafficState> step_schedule(const road::StateGraph& g, const CongestionSchedule& schedule,
                                            const TrafficParams& params, int episode);

/// Everything the environment decided for one episode; independent of the agents.
struct EpisodeConditions {
  int episode = 0;
  std::vector<Mode> modes;
  std::vector<double> noise;

  bool operator==(const EpisodeConditions&) const = default;
};

/// Mesoscopic environment: per-episode speed regime and one noise draw per state, both
/// functions of (schedule, seed, episode) alone. Traversals are read-only lookups.
class TrafficEnv {
 public:
  TrafficEnv(const road::StateGraph& g, CongestionSchedule schedule, TrafficParams params,
             std::uint64_t seed);

  void begin_episode(int episode);
  int episode() const { return conditions_.episode; }

  TraversalOutcome traverse(int s) const;
  /// Mean of traverse(s) over the noise, under the current modes.
  double expected_travel_time(int s) const;
  Mode mode(int s) const { return conditions_.modes.at(s); }

  const EpisodeConditions& conditions() const { return conditions_; }
  const CongestionSchedule& schedule() const { return schedule_; }
  const TrafficParams& params() const { return params_; }
  const road::StateGraph& graph() const { return *graph_; }

 private:
  double base_time(int s, Mode m) const;

  const road::StateGraph* graph_;
  CongestionSchedule schedule_;
  TrafficParams params_;
  std::uint64_t seed_;
  EpisodeConditions conditions_;
};

/// Expected-time shortest route under the given modes, used as the learning-speed oracle.
struct TimeOptimum {
  double time = 0.0;
  std::vector<int> route;
};
TimeOptimum fastest_route(const TrafficEnv& env, int origin, int destination);
double expected_route_time(const TrafficEnv& env, const std::vector<int>& route);

}  // namespace sptoken::traffic
