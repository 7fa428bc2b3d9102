#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sptoken/road_network.hpp"

namespace sptoken::rl {

using road::Action;
using road::StateGraph;

inline constexpr double kTieTolerance = 1e-9;

/// One executed decision of a token.
struct Transition {
  int step = 1;  // decision epoch t in 1..H
  int state = 0;
  Action action = Action::kStay;
  double reward = 0.0;
  int next = 0;
  double travel_time = 0.0;  // 0 for a stay
};

using Trajectory = std::vector<Transition>;

/// pi(s, t) for t in 1..H.
struct PolicyTable {
  int states = 0;
  int horizon = 0;
  std::vector<Action> actions;  // s * H + (t - 1)

  Action at(int s, int t) const { return actions[static_cast<std::size_t>(s) * horizon + (t - 1)]; }
  Action& at(int s, int t) { return actions[static_cast<std::size_t>(s) * horizon + (t - 1)]; }
  bool operator==(const PolicyTable&) const = default;

  /// Follow the policy from `origin` for up to H steps; empty when it does not reach `destination`.
  std::vector<int> rollout(const StateGraph& g, int origin, int destination) const;

  nlohmann::json to_json(int episode) const;
};

/// Greedy choice over one Q row: constant row -> shortest-path action, else the
/// lowest-index action among the near-maximal ones.
Action choose_action(const StateGraph& g, int s, const double* q_row, Action sp_action);

class Learner {
 public:
  virtual ~Learner() = default;

  /// Build the policy for the next episode.
  virtual void plan(const std::vector<Action>& sp_policy) = 0;
  virtual const PolicyTable& policy() const = 0;
  Action act(int s, int t) const { return policy().at(s, t); }

  /// Absorb one finished episode; trajectories are merged in token order.
  virtual void learn(const std::vector<Trajectory>& trajectories) = 0;

  virtual int horizon() const = 0;
  virtual int episode() const = 0;
};

/// Optimistic backward-induction learner with known point-mass transitions and
/// stationary accumulation of counts and rewards.
class MubevLearner final : public Learner {
 public:
  MubevLearner(const StateGraph& g, int horizon, double delta = 1.0, double r_max = 1.0);

  void plan(const std::vector<Action>& sp_policy) override;
  const PolicyTable& policy() const override { return policy_; }
  void learn(const std::vector<Trajectory>& trajectories) override;
  int horizon() const override { return horizon_; }
  int episode() const override { return episode_; }

  /// Adds r to R(s,a,t') and 1 to n(s,a,t') for every t'.
  void accumulate(int s, Action a, double r);

  std::int64_t n(int s, Action a, int t) const { return n_[idx(s, a, t)]; }
  double reward_sum(int s, Action a, int t) const { return r_[idx(s, a, t)]; }
  void set_counts(int s, Action a, int t, std::int64_t n, double reward_sum);
  double q(int s, Action a, int t) const { return q_[idx(s, a, t)]; }
  double value(int s, int t) const { return v_[static_cast<std::size_t>(s) * (horizon_ + 1) + (t - 1)]; }

  /// Confidence width for a visit count at state s; exposed for tests.
  double confidence_width(int s, std::int64_t n) const;

  double v_max() const { return horizon_ * r_max_; }
  double delta() const { return delta_; }
  double r_max() const { return r_max_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::size_t idx(int s, Action a, int t) const {
    return (static_cast<std::size_t>(s) * road::kActionCount + road::index(a)) * horizon_ + (t - 1);
  }
  double& value_ref(int s, int t) { return v_[static_cast<std::size_t>(s) * (horizon_ + 1) + (t - 1)]; }

  const StateGraph* graph_;
  int horizon_;
  double delta_;
  double r_max_;
  int episode_ = 0;
  std::vector<std::int64_t> n_;
  std::vector<double> r_;
  std::vector<double> q_;
  std::vector<double> v_;  // S x (H + 1)
  std::vector<double> eta2_;
  PolicyTable policy_;
};

struct UcbQParams {
  double c = 1.0;
  double delta = 1.0;
  double r_max = 1.0;
  int max_episodes = 1;  // K_max
};

/// Episodic Q-learning with a Hoeffding-style exploration bonus.
class UcbQLearner final : public Learner {
 public:
  UcbQLearner(const StateGraph& g, int horizon, UcbQParams params);

  void plan(const std::vector<Action>& sp_policy) override;
  const PolicyTable& policy() const override { return policy_; }
  void learn(const std::vector<Trajectory>& trajectories) override;
  int horizon() const override { return horizon_; }
  int episode() const override { return episode_; }

  void update(int s, int t, Action a, double r, int next);

  double q(int s, Action a, int t) const { return q_[idx(s, a, t)]; }
  double value(int s, int t) const { return v_[static_cast<std::size_t>(s) * (horizon_ + 1) + (t - 1)]; }
  std::int64_t n(int s, Action a, int t) const { return n_[idx(s, a, t)]; }
  double bonus(std::int64_t k) const;
  double learning_rate(std::int64_t k) const;
  double v_max() const { return horizon_ * params_.r_max; }

 private:
  std::size_t idx(int s, Action a, int t) const {
    return (static_cast<std::size_t>(s) * road::kActionCount + road::index(a)) * horizon_ + (t - 1);
  }

  const StateGraph* graph_;
  int horizon_;
  UcbQParams params_;
  double log_term_;
  int episode_ = 0;
  std::vector<std::int64_t> n_;
  std::vector<double> q_;
  std::vector<double> v_;
  PolicyTable policy_;
};

}  // namespace sptoken::rl
