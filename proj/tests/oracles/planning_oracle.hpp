#pragma once

// Brute-force reference for the optimistic planner: evaluates every deterministic
// (state, epoch) policy with its own copy of the optimistic recursion and keeps the best.
// Written from the algorithm description, not from the library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "sptoken/learner.hpp"

namespace oracle {

using sptoken::road::Action;
using sptoken::road::StateGraph;

struct FrozenModel {
  StateGraph graph;
  int horizon = 1;
  double delta = 1.0;
  double r_max = 1.0;
  // Indexed [s][action index][t - 1].
  std::vector<std::vector<std::vector<std::int64_t>>> n;
  std::vector<std::vector<std::vector<double>>> reward_sum;
  std::vector<Action> sp;
};

inline double width(const FrozenModel& m, int s, std::int64_t n) {
  const double dprime = m.delta / 9.0;
  const double eta1 = 2.0 * std::log(std::log(std::max(std::numbers::e, static_cast<double>(n))));
  const double eta2 = std::log(18.0 * m.graph.size() * m.graph.action_count(s) * m.horizon / dprime);
  return std::sqrt((eta1 + eta2) / static_cast<double>(n));
}

/// Optimistic value of a fixed policy; values[t - 1][s] for t in 1..H+1.
inline std::vector<std::vector<double>> evaluate(const FrozenModel& m, const std::vector<std::vector<Action>>& pi) {
  const int S = m.graph.size(), H = m.horizon;
  std::vector<std::vector<double>> v(H + 1, std::vector<double>(S, 0.0));
  for (int t = H; t >= 1; --t) {
    double top = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s) top = std::max(top, v[t][s]);
    const double cap = std::min(top, H * m.r_max);
    for (int s = 0; s < S; ++s) {
      const Action a = pi[s][t - 1];
      const int ai = sptoken::road::index(a);
      const auto n = m.n[s][ai][t - 1];
      double r = m.r_max, ev = cap;
      if (n > 0) {
        const double phi = width(m, s, n);
        r = std::min(m.r_max, m.reward_sum[s][ai][t - 1] / static_cast<double>(n) + phi);
        ev = std::min(cap, v[t][m.graph.successor(s, a)] + (H - t) * phi);
      }
      v[t - 1][s] = r + ev;
    }
  }
  return v;
}

struct BruteForce {
  std::vector<double> best_value;  // per start state, t = 1
  std::size_t policies = 0;
};

inline std::size_t policy_count(const FrozenModel& m) {
  std::size_t total = 1;
  for (int s = 0; s < m.graph.size(); ++s)
    for (int t = 0; t < m.horizon; ++t) total *= m.graph.action_count(s);
  return total;
}

inline BruteForce enumerate(const FrozenModel& m) {
  const int S = m.graph.size(), H = m.horizon;
  std::vector<std::vector<Action>> choices(S);
  for (int s = 0; s < S; ++s) choices[s] = m.graph.actions(s);
  std::vector<int> digit(static_cast<std::size_t>(S) * H, 0);
  std::vector<std::vector<Action>> pi(S, std::vector<Action>(H));
  BruteForce out;
  out.best_value.assign(S, -std::numeric_limits<double>::infinity());
  while (true) {
    for (int s = 0; s < S; ++s)
      for (int t = 0; t < H; ++t) pi[s][t] = choices[s][digit[s * H + t]];
    auto v = evaluate(m, pi);
    for (int s = 0; s < S; ++s) out.best_value[s] = std::max(out.best_value[s], v[0][s]);
    ++out.policies;
    std::size_t i = 0;
    for (; i < digit.size(); ++i) {
      const int s = static_cast<int>(i) / H;
      if (++digit[i] < static_cast<int>(choices[s].size())) break;
      digit[i] = 0;
    }
    if (i == digit.size()) break;
  }
  return out;
}

/// Random small model: up to 4 states, up to 2 moves each plus the stay, random frozen data.
inline FrozenModel random_model(std::mt19937_64& rng, std::size_t max_policies = 1u << 15) {
  std::uniform_int_distribution<int> states(2, 4), horizon(1, 4), moves(0, 2), coin(0, 2);
  std::uniform_int_distribution<int> visits(1, 40);
  std::uniform_real_distribution<double> mean_reward(-2.0, 1.0);
  const std::vector<Action> move_set{Action::kStraight, Action::kPartialLeft, Action::kLeft, Action::kPartialRight,
                                     Action::kRight};
  while (true) {
    FrozenModel m;
    const int S = states(rng);
    m.horizon = horizon(rng);
    std::vector<fixtures::StateSpec> specs(S);
    for (int s = 0; s < S; ++s) {
      auto acts = move_set;
      std::shuffle(acts.begin(), acts.end(), rng);
      const int k = moves(rng);
      for (int j = 0; j < k; ++j) {
        int to = std::uniform_int_distribution<int>(0, S - 2)(rng);
        if (to >= s) ++to;
        specs[s].moves.push_back({acts[j], to});
      }
    }
    m.graph = fixtures::make_graph(specs);
    if (policy_count(m) > max_policies) continue;
    m.n.assign(S, std::vector<std::vector<std::int64_t>>(sptoken::road::kActionCount,
                                                         std::vector<std::int64_t>(m.horizon, 0)));
    m.reward_sum.assign(S, std::vector<std::vector<double>>(sptoken::road::kActionCount,
                                                           std::vector<double>(m.horizon, 0.0)));
    for (int s = 0; s < S; ++s) {
      auto acts = m.graph.actions(s);
      m.sp.push_back(acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)]);
      for (auto a : acts)
        for (int t = 0; t < m.horizon; ++t) {
          if (coin(rng) == 0) continue;  // leave a third of the cells unvisited
          const auto n = visits(rng);
          m.n[s][sptoken::road::index(a)][t] = n;
          m.reward_sum[s][sptoken::road::index(a)][t] = n * mean_reward(rng);
        }
    }
    return m;
  }
}

inline void load(const FrozenModel& m, sptoken::rl::MubevLearner& learner) {
  for (int s = 0; s < m.graph.size(); ++s)
    for (auto a : m.graph.actions(s))
      for (int t = 1; t <= m.horizon; ++t)
        learner.set_counts(s, a, t, m.n[s][sptoken::road::index(a)][t - 1],
                           m.reward_sum[s][sptoken::road::index(a)][t - 1]);
}

struct Verdict {
  bool values_match = true;
  bool chosen_policy_optimal = true;
  double worst_gap = 0.0;
};

/// Plans with the library and compares against the exhaustive optimum.
inline Verdict check_against_enumeration(const FrozenModel& m, double tol = 1e-12) {
  sptoken::rl::MubevLearner learner(m.graph, m.horizon, m.delta, m.r_max);
  load(m, learner);
  learner.plan(m.sp);
  auto brute = enumerate(m);
  std::vector<std::vector<Action>> chosen(m.graph.size(), std::vector<Action>(m.horizon));
  for (int s = 0; s < m.graph.size(); ++s)
    for (int t = 1; t <= m.horizon; ++t) chosen[s][t - 1] = learner.policy().at(s, t);
  auto v = evaluate(m, chosen);
  Verdict out;
  for (int s = 0; s < m.graph.size(); ++s) {
    const double gap_plan = std::abs(learner.value(s, 1) - brute.best_value[s]);
    const double gap_eval = std::abs(v[0][s] - brute.best_value[s]);
    out.worst_gap = std::max({out.worst_gap, gap_plan, gap_eval});
    if (gap_plan > tol) out.values_match = false;
    if (gap_eval > tol) out.chosen_policy_optimal = false;
  }
  return out;
}

}  // namespace oracle
