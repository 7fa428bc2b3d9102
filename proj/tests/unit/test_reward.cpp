#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "sptoken/reward.hpp"

using namespace sptoken;
using namespace sptoken::rl;
using road::Action;

namespace {

RewardParams desk_params() {
  RewardParams p;
  p.mean_state_length = 100.0;
  return p;
}

}  // namespace

TEST_CASE("reward examples") {
  const auto p = desk_params();
  SUBCASE("stay at the destination") {
    RewardInputs in;
    in.moved = false;
    in.at_destination = true;
    CHECK(evaluate_reward(in, p).total == 1.0);
  }
  SUBCASE("stay elsewhere") {
    RewardInputs in;
    in.moved = false;
    CHECK(evaluate_reward(in, p).total == -20.0);
  }
  SUBCASE("progress along the shortest path") {
    RewardInputs in;
    in.dist_current = 100;
    in.len_current = 40;
    in.dist_next = 60;
    in.tau_min_next = 5;
    in.travel_time = 5.5;
    in.len_next = 60;
    auto r = evaluate_reward(in, p);
    CHECK(r.distance == 0.0);
    CHECK(r.time == 0.0);
    CHECK(r.total == 0.0);
  }
  SUBCASE("slow short state scaled by the edge coefficient") {
    RewardInputs in;
    in.dist_current = 300;
    in.len_current = 100;
    in.dist_next = 150;
    in.len_next = 50;  // half the mean length
    in.tau_min_next = 10;
    in.travel_time = 2 * 1.2 * 10;
    auto r = evaluate_reward(in, p);
    CHECK(r.time == doctest::Approx(-0.1625));
    CHECK(r.distance == doctest::Approx(1.0 - 150.0 / 200.0));
    CHECK(r.total == doctest::Approx(0.25 - 0.1625));
  }
}

TEST_CASE("signalised states skip the edge coefficient") {
  const auto p = desk_params();
  RewardInputs in;
  in.dist_current = 300;
  in.len_current = 100;
  in.dist_next = 200;
  in.len_next = 50;
  in.tau_min_next = 10;
  in.ry_next = 30;
  in.travel_time = 2 * (30 + 12);
  CHECK(evaluate_reward(in, p).time == doctest::Approx(-2.6));
}

TEST_CASE("property: reward bounds") {
  const auto p = desk_params();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    RewardInputs in;
    in.len_current = 10 + 200 * u(rng);
    in.dist_current = in.len_current + 50 + 2000 * u(rng);
    in.dist_next = 10 + 3000 * u(rng);
    in.len_next = 10 + 200 * u(rng);
    in.tau_min_next = 1 + 20 * u(rng);
    in.ry_next = u(rng) < 0.3 ? 30.0 : 0.0;
    in.travel_time = in.tau_min_next * (1 + 5 * u(rng)) + in.ry_next;
    auto r = evaluate_reward(in, p);
    CHECK(r.distance <= p.r_max);
    CHECK(r.time <= 0.0);
  }
}

TEST_CASE("reward model on a graph") {
  // 0 (40 m) -> 1 (60 m) -> 2 (20 m, destination); 0 -> 3 (80 m) -> 2 as a detour.
  auto g = fixtures::make_graph({{40, 4, 0, {{Action::kStraight, 1}, {Action::kPartialLeft, 3}}},
                                 {60, 6, 0, {{Action::kStraight, 2}}},
                                 {20, 2, 0, {}},
                                 {80, 8, 0, {{Action::kPartialRight, 2}}}});
  auto sp = road::shortest_path_policy(g, 2);
  CHECK(sp.distance[0] == doctest::Approx(120.0));
  RewardModel model(g, sp, RewardParams{});
  CHECK(model.params().mean_state_length == doctest::Approx(50.0));
  CHECK(model(0, 1, 6.0) == 0.0);
  CHECK(model(0, 3, 8.0) == doctest::Approx(1.0 - 100.0 / 80.0));
  CHECK(model(2, 2, 0.0) == 1.0);
  CHECK(model(1, 1, 0.0) == -20.0);
  // Arriving at the destination earns no time penalty.
  CHECK(model.breakdown(1, 2, 1000.0).time == 0.0);
  CHECK_THROWS_AS(model(0, 9, 1.0), std::out_of_range);
}
