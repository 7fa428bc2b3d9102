#include "sptoken/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sptoken::rl {

void RewardParams::validate() const {
  if (!(alpha_time >= 1.0)) throw std::invalid_argument("reward.alpha must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("reward.beta must be > 0");
  if (!(w_distance >= 0.0) || !(w_time >= 0.0)) throw std::invalid_argument("reward weights must be >= 0");
  if (!(omega >= 0.0)) throw std::invalid_argument("reward.omega must be >= 0");
  if (!(r_max > 0.0)) throw std::invalid_argument("reward.r_max must be > 0");
  if (!(mean_state_length > 0.0)) throw std::invalid_argument("mean state length must be > 0");
}

RewardBreakdown evaluate_reward(const RewardInputs& in, const RewardParams& p) {
  if (!in.moved) {
    const double r = in.at_destination ? p.r_max : -p.omega;
    return {0.0, 0.0, r};
  }
  RewardBreakdown out;
  const double remaining = in.dist_current - in.len_current;
  out.distance = remaining != 0.0 ? p.r_max - in.dist_next / remaining : p.r_max;

  const double tau_ref = in.ry_next + p.alpha_time * in.tau_min_next;
  if (in.travel_time <= tau_ref || in.next_is_destination) {
    out.time = 0.0;
  } else {
    out.time = -p.beta * in.travel_time / tau_ref;
    if (in.ry_next == 0.0) out.time *= std::min(1.0, std::pow(in.len_next / p.mean_state_length, 4));
  }
  out.total = p.w_distance * out.distance + p.w_time * out.time;
  return out;
}

RewardModel::RewardModel(const road::StateGraph& g, const road::ShortestPaths& sp, RewardParams params)
    : graph_(&g), sp_(&sp), params_(params) {
  if (params_.mean_state_length == 0.0) params_.mean_state_length = g.mean_length();
  params_.validate();
}

RewardBreakdown RewardModel::breakdown(int s, int next, double travel_time) const {
  if (s < 0 || s >= graph_->size() || next < 0 || next >= graph_->size())
    throw std::out_of_range("reward: undefined state id");
  RewardInputs in;
  in.moved = next != s;
  in.at_destination = s == sp_->destination;
  in.next_is_destination = next == sp_->destination;
  const auto& cur = graph_->state(s);
  const auto& nxt = graph_->state(next);
  in.dist_current = sp_->distance[s];
  in.len_current = cur.length;
  in.dist_next = sp_->distance[next];
  in.travel_time = travel_time;
  in.ry_next = nxt.ry;
  in.tau_min_next = nxt.tau_min;
  in.len_next = nxt.length;
  return evaluate_reward(in, params_);
}

}  // namespace sptoken::rl
