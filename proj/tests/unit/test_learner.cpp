#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "planning_oracle.hpp"
#include "sptoken/learner.hpp"

using namespace sptoken;
using namespace sptoken::rl;
using road::Action;

namespace {

// 0 -s-> 1 -s-> 2 (destination) and 0 -L-> 2 directly.
StateGraph small_graph() {
  return fixtures::make_graph({{100, 10, 0, {{Action::kStraight, 1}, {Action::kPartialLeft, 2}}},
                               {100, 10, 0, {{Action::kStraight, 2}}},
                               {100, 10, 0, {}}});
}

}  // namespace

TEST_CASE("confidence width example") {
  // Two states with two actions each, H = 2, delta = 1.
  auto g = fixtures::make_graph({{100, 10, 0, {{Action::kStraight, 1}}}, {100, 10, 0, {{Action::kStraight, 0}}}});
  MubevLearner l(g, 2, 1.0, 1.0);
  CHECK(std::log(18.0 * 2 * 2 * 2 * 9) == doctest::Approx(7.1670).epsilon(1e-4));
  CHECK(l.confidence_width(0, 1) == doctest::Approx(2.6772).epsilon(1e-4));
  CHECK(l.confidence_width(0, 100) < l.confidence_width(0, 10));
}

TEST_CASE("zero data plans the shortest-path policy") {
  road::GridSpec spec;
  spec.nx = 6;
  spec.ny = 5;
  auto net = road::generate_grid(spec);
  auto g = road::merge_states(net);
  for (int dest : {0, g.size() / 2, g.size() - 1}) {
    auto sp = road::shortest_path_policy(g, dest);
    MubevLearner l(g, 25);
    l.plan(sp.policy);
    for (int s = 0; s < g.size(); ++s)
      for (int t = 1; t <= 25; ++t) REQUIRE(l.policy().at(s, t) == sp.policy[s]);
  }
}

TEST_CASE("stationary accumulation touches every epoch") {
  auto g = small_graph();
  MubevLearner l(g, 4);
  l.learn({{{1, 0, Action::kStraight, -0.5, 1, 7.0}, {2, 1, Action::kStraight, 0.25, 2, 7.0}}});
  for (int t = 1; t <= 4; ++t) {
    CHECK(l.n(0, Action::kStraight, t) == 1);
    CHECK(l.reward_sum(0, Action::kStraight, t) == -0.5);
    CHECK(l.n(0, Action::kPartialLeft, t) == 0);
  }
  CHECK(l.episode() == 1);
}

TEST_CASE("optimism bounds after arbitrary data") {
  std::mt19937_64 rng(8);
  auto g = small_graph();
  MubevLearner l(g, 5);
  std::uniform_real_distribution<double> r(-3.0, 2.0);
  for (int i = 0; i < 50; ++i) l.accumulate(i % 3, Action::kStay, r(rng));
  l.accumulate(0, Action::kStraight, 5.0);
  l.plan({Action::kPartialLeft, Action::kStraight, Action::kStay});
  for (int s = 0; s < 3; ++s)
    for (int t = 1; t <= 5; ++t) {
      CHECK(l.value(s, t) <= l.r_max() + l.v_max() + 1e-12);
      for (auto a : g.actions(s)) CHECK(l.q(s, a, t) <= l.r_max() + l.v_max() + 1e-12);
    }
}

TEST_CASE("hand-set toy model against enumeration") {
  // Three states, H = 2: the direct jump earns little, the two-step route is penalised.
  oracle::FrozenModel m;
  m.graph = small_graph();
  m.horizon = 2;
  m.sp = {Action::kPartialLeft, Action::kStraight, Action::kStay};
  m.n.assign(3, std::vector<std::vector<std::int64_t>>(6, std::vector<std::int64_t>(2, 0)));
  m.reward_sum.assign(3, std::vector<std::vector<double>>(6, std::vector<double>(2, 0.0)));
  auto set = [&](int s, Action a, std::int64_t n, double mean) {
    for (int t = 0; t < 2; ++t) {
      m.n[s][road::index(a)][t] = n;
      m.reward_sum[s][road::index(a)][t] = n * mean;
    }
  };
  set(0, Action::kStraight, 30, -1.5);
  set(0, Action::kPartialLeft, 30, -0.1);
  set(0, Action::kStay, 30, -20);
  set(1, Action::kStraight, 30, -0.2);
  set(1, Action::kStay, 30, -20);
  set(2, Action::kStay, 30, 1.0);
  auto v = oracle::check_against_enumeration(m);
  CHECK(v.values_match);
  CHECK(v.chosen_policy_optimal);
}

TEST_CASE("property: planner matches exhaustive enumeration") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 60; ++i) {
    auto m = oracle::random_model(rng, 1u << 12);
    auto v = oracle::check_against_enumeration(m);
    CHECK(v.values_match);
    CHECK(v.chosen_policy_optimal);
  }
}

TEST_CASE("policy value recursion agrees with Monte-Carlo rollouts") {
  // Deterministic moves with noisy rewards: the sample mean of the return must sit
  // within 3 standard errors of the recursion over mean rewards.
  std::mt19937_64 rng(99);
  auto g = small_graph();
  const int H = 4;
  std::vector<std::vector<double>> mean(3, std::vector<double>(6, 0.0));
  mean[0][road::index(Action::kStraight)] = -0.3;
  mean[0][road::index(Action::kPartialLeft)] = 0.2;
  mean[0][road::index(Action::kStay)] = -1.0;
  mean[1][road::index(Action::kStraight)] = 0.1;
  mean[1][road::index(Action::kStay)] = -1.0;
  mean[2][road::index(Action::kStay)] = 1.0;
  PolicyTable pi{3, H, std::vector<Action>(3 * H, Action::kStay)};
  pi.at(0, 1) = Action::kStraight;
  pi.at(1, 2) = Action::kStraight;
  pi.at(0, 2) = Action::kPartialLeft;

  std::vector<std::vector<double>> v(H + 2, std::vector<double>(3, 0.0));
  for (int t = H; t >= 1; --t)
    for (int s = 0; s < 3; ++s) {
      auto a = pi.at(s, t);
      v[t][s] = mean[s][road::index(a)] + v[t + 1][g.successor(s, a)];
    }

  std::uniform_real_distribution<double> noise(-0.5, 0.5);
  const int runs = 20000;
  double sum = 0, sq = 0;
  for (int k = 0; k < runs; ++k) {
    int s = 0;
    double ret = 0;
    for (int t = 1; t <= H; ++t) {
      auto a = pi.at(s, t);
      ret += mean[s][road::index(a)] + noise(rng);
      s = g.successor(s, a);
    }
    sum += ret;
    sq += ret * ret;
  }
  const double m = sum / runs;
  const double se = std::sqrt((sq / runs - m * m) / runs);
  CHECK(std::abs(m - v[1][0]) < 3 * se);
}

TEST_CASE("choose_action tie rules") {
  auto g = small_graph();
  std::array<double, 6> row{};
  row.fill(0.0);
  CHECK(choose_action(g, 0, row.data(), Action::kPartialLeft) == Action::kPartialLeft);
  row[road::index(Action::kStay)] = 1.0;
  row[road::index(Action::kPartialLeft)] = 1.0;
  CHECK(choose_action(g, 0, row.data(), Action::kStraight) == Action::kPartialLeft);
  // Not a full tie any more, so the first near-max action in canonical order wins.
  row[road::index(Action::kStay)] = 0.5;
  row[road::index(Action::kStraight)] = 1.0 - 1e-12;
  CHECK(choose_action(g, 0, row.data(), Action::kPartialLeft) == Action::kStraight);
  row[road::index(Action::kLeft)] = 99.0;  // not allowed at state 0, ignored
  CHECK(choose_action(g, 0, row.data(), Action::kPartialLeft) == Action::kStraight);
}

TEST_CASE("policy rollout and json") {
  auto g = small_graph();
  PolicyTable pi{3, 3, std::vector<Action>(9, Action::kStay)};
  pi.at(0, 1) = Action::kStraight;
  pi.at(1, 2) = Action::kStraight;
  CHECK(pi.rollout(g, 0, 2) == std::vector<int>{0, 1, 2});
  pi.at(1, 2) = Action::kStay;
  CHECK(pi.rollout(g, 0, 2).empty());
  auto j = pi.to_json(4);
  CHECK(j["policy"][0] == "suu");
  CHECK(j["episode"] == 4);
}

TEST_CASE("checkpoint round trip") {
  auto g = small_graph();
  MubevLearner a(g, 3);
  a.accumulate(0, Action::kStraight, -0.7);
  a.accumulate(1, Action::kStay, -20);
  a.learn({});
  std::stringstream buf;
  a.save(buf);
  MubevLearner b(g, 3);
  b.load(buf);
  CHECK(b.episode() == 1);
  CHECK(b.n(0, Action::kStraight, 2) == 1);
  CHECK(b.reward_sum(1, Action::kStay, 3) == -20);
  const std::vector<Action> sp{Action::kStraight, Action::kStraight, Action::kStay};
  a.plan(sp);
  b.plan(sp);
  CHECK(a.policy() == b.policy());
  MubevLearner other(g, 4);
  std::stringstream again;
  a.save(again);
  CHECK_THROWS(other.load(again));
}

TEST_CASE("ucb q-learning rates and bonus") {
  auto g = small_graph();
  UcbQLearner l(g, 5, {0.5, 1.0, 1.0, 100});
  CHECK(l.learning_rate(1) == 1.0);
  CHECK(l.learning_rate(3) == doctest::Approx(6.0 / 8.0));
  for (int k = 1; k < 50; ++k) CHECK(l.bonus(k + 1) < l.bonus(k));
  // Three actions are used in the graph: s, L and u.
  CHECK(l.bonus(1) == doctest::Approx(0.5 * std::sqrt(125.0 * std::log(3.0 * 3 * 5 * 100))));
}

TEST_CASE("ucb q-learning first visit overwrites") {
  auto g = small_graph();
  UcbQLearner l(g, 2, {0.0, 1.0, 1.0, 10});
  CHECK(l.q(0, Action::kStraight, 1) == l.v_max());
  l.update(1, 2, Action::kStraight, -0.25, 2);
  CHECK(l.q(1, Action::kStraight, 2) == -0.25);
  CHECK(l.n(1, Action::kStraight, 2) == 1);
}

TEST_CASE("ucb q-learning converges to backward induction on a chain") {
  // Two states, H = 2, deterministic rewards; every (s, a, t) is visited each episode.
  auto g = fixtures::make_graph({{100, 10, 0, {{Action::kStraight, 1}}}, {100, 10, 0, {}}});
  const int H = 2;
  auto reward = [](int s, Action a) { return s == 1 ? 1.0 : (a == Action::kStraight ? 0.5 : -1.0); };
  UcbQLearner l(g, H, {0.0, 1.0, 1.0, 200});
  for (int k = 0; k < 200; ++k) {
    for (int s = 0; s < 2; ++s)
      for (auto a : g.actions(s)) l.update(s, 2, a, reward(s, a), g.successor(s, a));
    for (int s = 0; s < 2; ++s)
      for (auto a : g.actions(s)) l.update(s, 1, a, reward(s, a), g.successor(s, a));
  }
  // Exact values: V2(1) = 1, V2(0) = 0.5; Q1(0,s) = 0.5 + V2(1) = 1.5; Q1(0,u) = -1 + 0.5.
  CHECK(l.q(1, Action::kStay, 2) == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(l.q(0, Action::kStraight, 2) == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(std::abs(l.q(0, Action::kStraight, 1) - 1.5) < 1e-2);
  CHECK(std::abs(l.q(0, Action::kStay, 1) - (-0.5)) < 1e-2);
  CHECK(std::abs(l.q(1, Action::kStay, 1) - 2.0) < 1e-2);
  l.plan({Action::kStraight, Action::kStay});
  CHECK(l.policy().at(0, 1) == Action::kStraight);
}
