#pragma once

#include "sptoken/road_network.hpp"

namespace sptoken::rl {

struct RewardParams {
  double alpha_time = 1.2;  // stretch on the free-flow time before a penalty applies
  double beta = 1.3;
  double w_distance = 1.0;
  double w_time = 1.0;
  double omega = 20.0;  // penalty for staying away from the destination
  double r_max = 1.0;
  double mean_state_length = 0.0;  // filled from the state graph when left at 0

  void validate() const;
};

/// Inputs of one reward evaluation, in state-level aggregates.
struct RewardInputs {
  bool moved = true;
  bool at_destination = false;    // s_t is the destination (only used when staying)
  bool next_is_destination = false;
  double dist_current = 0.0;      // D(s_t), member inclusive
  double len_current = 0.0;       // L(s_t)
  double dist_next = 0.0;         // D(s_{t+1})
  double travel_time = 0.0;       // observed tau(s_{t+1})
  double ry_next = 0.0;
  double tau_min_next = 0.0;
  double len_next = 0.0;
};

struct RewardBreakdown {
  double distance = 0.0;
  double time = 0.0;
  double total = 0.0;
};

RewardBreakdown evaluate_reward(const RewardInputs& in, const RewardParams& p);

/// Reward bound to one graph and destination.
class RewardModel {
 public:
  RewardModel(const road::StateGraph& g, const road::ShortestPaths& sp, RewardParams params);

  RewardBreakdown breakdown(int s, int next, double travel_time) const;
  double operator()(int s, int next, double travel_time) const { return breakdown(s, next, travel_time).total; }

  const RewardParams& params() const { return params_; }
  int destination() const { return sp_->destination; }

 private:
  const road::StateGraph* graph_;
  const road::ShortestPaths* sp_;
  RewardParams params_;
};

}  // namespace sptoken::rl
