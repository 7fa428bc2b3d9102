#include "sptoken/traffic.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

#include "sptoken/seeding.hpp"

namespace sptoken::traffic {

const char* to_string(Mode m) { return m == Mode::kFree ? "free" : "congested"; }

bool CongestionSchedule::congested(int state, int episode) const {
  return std::any_of(entries.begin(), entries.end(), [&](const CongestionEntry& e) {
    return e.state == state && e.start <= episode && episode <= e.end;
  });
}

void CongestionSchedule::validate(int state_count) const {
  for (const auto& e : entries) {
    if (e.state < 0 || e.state >= state_count)
      throw std::invalid_argument("congestion entry references unknown state " + std::to_string(e.state));
    if (e.start > e.end) throw std::invalid_argument("congestion entry has start > end");
  }
}

double min_travel_time(const road::StateGraph& g, int s) { return g.state(s).tau_min; }

double travel_time(double length, double speed, double noise_draw, double ry) {
  return length / speed * (1.0 + noise_draw) + ry;
}

std::vector<LinkTrafficState> step_schedule(const road::StateGraph& g, const CongestionSchedule& schedule,
                                            const TrafficParams& params, int episode) {
  std::vector<LinkTrafficState> out(g.size());
  for (int s = 0; s < g.size(); ++s) {
    const auto& st = g.state(s);
    out[s] = {s, schedule.congested(s, episode) ? Mode::kCongested : Mode::kFree,
              st.length / st.tau_min, params.jam_speed, params.noise_sigma};
  }
  return out;
}

TrafficEnv::TrafficEnv(const road::StateGraph& g, CongestionSchedule schedule, TrafficParams params,
                       std::uint64_t seed)
    : graph_(&g), schedule_(std::move(schedule)), params_(params), seed_(seed) {
  schedule_.validate(g.size());
  if (!(params_.jam_speed > 0.0)) throw std::invalid_argument("jam_speed must be > 0");
  if (!(params_.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  for (const auto& st : g.states())
    if (!(params_.jam_speed < st.length / st.tau_min))
      throw std::invalid_argument("jam_speed must be below the free speed of every state");
  begin_episode(0);
}

void TrafficEnv::begin_episode(int episode) {
  const int n = graph_->size();
  conditions_.episode = episode;
  conditions_.modes.assign(n, Mode::kFree);
  conditions_.noise.assign(n, 0.0);
  for (const auto& e : schedule_.entries)
    if (e.start <= episode && episode <= e.end) conditions_.modes[e.state] = Mode::kCongested;
  std::mt19937_64 rng(derive_seed(seed_, static_cast<std::uint64_t>(episode)));
  std::uniform_real_distribution<double> draw(0.0, params_.noise_sigma);
  for (int s = 0; s < n; ++s) conditions_.noise[s] = params_.noise_sigma > 0.0 ? draw(rng) : 0.0;
}

double TrafficEnv::base_time(int s, Mode m) const {
  const auto& st = graph_->state(s);
  return m == Mode::kFree ? st.tau_min : st.length / params_.jam_speed;
}

TraversalOutcome TrafficEnv::traverse(int s) const {
  const auto& st = graph_->state(s);
  const Mode m = conditions_.modes.at(s);
  return {s, base_time(s, m) * (1.0 + conditions_.noise[s]) + st.ry, st.length, m};
}

double TrafficEnv::expected_travel_time(int s) const {
  return base_time(s, conditions_.modes.at(s)) * (1.0 + params_.noise_sigma / 2.0) + graph_->state(s).ry;
}

TimeOptimum fastest_route(const TrafficEnv& env, int origin, int destination) {
  const auto& g = env.graph();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), kInf);
  std::vector<int> prev(g.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[origin] = 0.0;
  queue.push({0.0, origin});
  while (!queue.empty()) {
    auto [d, s] = queue.top();
    queue.pop();
    if (d > dist[s]) continue;
    if (s == destination) break;
    for (auto a : road::kAllActions) {
      if (a == road::Action::kStay || !g.allowed(s, a)) continue;
      const int n = g.successor(s, a);
      const double cand = d + env.expected_travel_time(n);
      if (cand < dist[n]) {
        dist[n] = cand;
        prev[n] = s;
        queue.push({cand, n});
      }
    }
  }
  TimeOptimum out;
  out.time = dist[destination];
  if (out.time == kInf) return out;
  for (int s = destination; s != -1; s = prev[s]) out.route.push_back(s);
  std::reverse(out.route.begin(), out.route.end());
  return out;
}

double expected_route_time(const TrafficEnv& env, const std::vector<int>& route) {
  double t = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i) t += env.expected_travel_time(route[i]);
  return t;
}

}  // namespace sptoken::traffic
