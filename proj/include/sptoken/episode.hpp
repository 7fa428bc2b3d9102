#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sptoken/learner.hpp"
#include "sptoken/ledger.hpp"
#include "sptoken/reward.hpp"
#include "sptoken/tokens.hpp"
#include "sptoken/traffic.hpp"

namespace sptoken::rl {

/// How long a token waits at an observer for a vehicle heading its way.
struct RelayModel {
  enum class Kind { kInstant, kPoisson };
  Kind kind = Kind::kInstant;
  double rate = 0.1;  // vehicles per second, Poisson only
  double ttl = tokens::kDefaultTtl;

  void validate() const;
};

/// Ledger side of an episode; all pointers must outlive the run.
struct LedgerBinding {
  tokens::TokenRegistry* registry = nullptr;
  Ledger* ledger = nullptr;
  Rng* rng = nullptr;
  std::uint32_t difficulty_bits = 1;
};

struct TokenTrip {
  int token = 0;
  std::string token_id;
  int origin = 0;
  Trajectory steps;
  std::vector<int> route;  // origin followed by every entered state
  bool completed = false;
  bool expired = false;
  double travel_time = 0.0;
  double travel_distance = 0.0;
  std::size_t deposits = 0;
};

struct EpisodeOutcome {
  std::vector<TokenTrip> trips;
  double start_time = 0.0;
  double end_time = 0.0;
  std::size_t ledger_writes = 0;

  std::vector<Trajectory> trajectories() const;
};

/// Distinct uniform origins.
std::vector<int> sample_origins(int state_count, int tokens, std::mt19937_64& rng);

/// Executes one episode of M tokens against a frozen policy as a discrete-event run:
/// collects and deposits happen in global time order so ledger timestamps are monotone.
class EpisodeRunner {
 public:
  EpisodeRunner(const StateGraph& g, const RewardModel& reward, int horizon, RelayModel relay);

  EpisodeOutcome run(const PolicyTable& policy, const traffic::TrafficEnv& env, const std::vector<int>& origins,
                     int episode, double start_time, std::mt19937_64& relay_rng,
                     const LedgerBinding* ledger = nullptr) const;

 private:
  const StateGraph* graph_;
  const RewardModel* reward_;
  int horizon_;
  RelayModel relay_;
};

}  // namespace sptoken::rl
