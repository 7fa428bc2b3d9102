#include "sptoken/episode.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace sptoken::rl {

void RelayModel::validate() const {
  if (kind == Kind::kPoisson && !(rate > 0.0)) throw std::invalid_argument("relay.rate must be > 0");
  if (!(ttl > 0.0)) throw std::invalid_argument("relay.ttl must be > 0");
}

std::vector<Trajectory> EpisodeOutcome::trajectories() const {
  std::vector<Trajectory> out;
  out.reserve(trips.size());
  for (const auto& t : trips) out.push_back(t.steps);
  return out;
}

std::vector<int> sample_origins(int state_count, int tokens, std::mt19937_64& rng) {
  if (tokens < 1) throw std::invalid_argument("need at least one token");
  if (tokens > state_count) throw std::invalid_argument("more tokens than states: origins cannot be distinct");
  std::vector<int> states(state_count);
  std::iota(states.begin(), states.end(), 0);
  // partial Fisher-Yates
  for (int i = 0; i < tokens; ++i) {
    std::uniform_int_distribution<int> pick(i, state_count - 1);
    std::swap(states[i], states[pick(rng)]);
  }
  states.resize(tokens);
  return states;
}

EpisodeRunner::EpisodeRunner(const StateGraph& g, const RewardModel& reward, int horizon, RelayModel relay)
    : graph_(&g), reward_(&reward), horizon_(horizon), relay_(relay) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  relay_.validate();
}

namespace {

enum class Phase { kDecide, kCollect, kDeposit };

struct Pending {
  double time;
  int token;
  std::uint64_t seq;
  Phase phase;
  bool operator>(const Pending& o) const { return std::tie(time, token, seq) > std::tie(o.time, o.token, o.seq); }
};

struct Cursor {
  int state = 0;
  int step = 1;
  double last_transfer = 0.0;
  double collected_at = 0.0;
  int next = 0;
  Action action = Action::kStay;
  double tau = 0.0;
  std::string vehicle;
};

}  // namespace

EpisodeOutcome EpisodeRunner::run(const PolicyTable& policy, const traffic::TrafficEnv& env,
                                  const std::vector<int>& origins, int episode, double start_time,
                                  std::mt19937_64& relay_rng, const LedgerBinding* ledger) const {
  const int dest = reward_->destination();
  const int m_count = static_cast<int>(origins.size());
  if (m_count < 1) throw std::invalid_argument("episode needs at least one token");
  if (policy.states != graph_->size() || policy.horizon != horizon_)
    throw std::invalid_argument("policy shape does not match the model");
  if (ledger && (!ledger->registry || !ledger->ledger || !ledger->rng))
    throw std::invalid_argument("incomplete ledger binding");

  EpisodeOutcome out;
  out.start_time = out.end_time = start_time;
  out.trips.resize(m_count);
  std::vector<Cursor> cur(m_count);
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  std::uint64_t seq = 0;
  std::exponential_distribution<double> relay_wait(relay_.rate);

  for (int m = 0; m < m_count; ++m) {
    auto& trip = out.trips[m];
    trip.token = m;
    trip.token_id = "k" + std::to_string(episode) + "." + std::to_string(m);
    trip.origin = origins[m];
    trip.route = {origins[m]};
    trip.completed = origins[m] == dest;
    cur[m].state = origins[m];
    cur[m].last_transfer = start_time;
    if (ledger) {
      ledger->registry->issue(trip.token_id, ledger->registry->observer_at(origins[m]),
                              {origins[m], dest, tokens::kNoTarget}, start_time, relay_.ttl);
    }
    queue.push({start_time, m, seq++, Phase::kDecide});
  }

  auto decide = [&](int m, double now) {
    auto& c = cur[m];
    auto& trip = out.trips[m];
    while (c.step <= horizon_) {
      const Action a = policy.at(c.state, c.step);
      const int next = graph_->successor(c.state, a);
      if (next == c.state) {
        trip.steps.push_back({c.step, c.state, a, (*reward_)(c.state, c.state, 0.0), c.state, 0.0});
        ++c.step;
        continue;
      }
      c.action = a;
      c.next = next;
      const double wait = relay_.kind == RelayModel::Kind::kPoisson ? relay_wait(relay_rng) : 0.0;
      queue.push({now + wait, m, seq++, Phase::kCollect});
      return;
    }
  };

  while (!queue.empty()) {
    const Pending ev = queue.top();
    queue.pop();
    const int m = ev.token;
    const double now = ev.time;
    auto& c = cur[m];
    auto& trip = out.trips[m];
    out.end_time = std::max(out.end_time, now);
    if (ledger) ledger->registry->expire_sweep(now);

    switch (ev.phase) {
      case Phase::kDecide:
        decide(m, now);
        break;
      case Phase::kCollect: {
        if (now - c.last_transfer > relay_.ttl) {
          // The sweep above has already sent the token back to its issuer.
          trip.expired = true;
          break;
        }
        c.vehicle = "v" + std::to_string(episode) + "." + std::to_string(m) + "." + std::to_string(c.step);
        c.collected_at = now;
        if (ledger) {
          const auto obs = ledger->registry->observer_at(c.state);
          ledger->registry->set_target(trip.token_id, c.next);
          ledger->registry->collect(trip.token_id, {c.vehicle, c.state, c.next}, obs, now);
        }
        c.last_transfer = now;
        c.tau = env.traverse(c.next).travel_time;
        trip.steps.push_back({c.step, c.state, c.action, (*reward_)(c.state, c.next, c.tau), c.next, c.tau});
        queue.push({now + c.tau, m, seq++, Phase::kDeposit});
        break;
      }
      case Phase::kDeposit: {
        if (now - c.last_transfer > relay_.ttl) {
          // Expired in transit; the sweep above has returned it.
          trip.expired = true;
          break;
        }
        if (ledger) {
          const auto obs = ledger->registry->observer_at(c.next);
          tokens::PositionProof proof{trip.token_id, ledger->registry->observer_at(c.state), c.vehicle, c.next,
                                      c.collected_at, now};
          const Bytes payload = tokens::encode_traversal({c.next, c.collected_at, now});
          ledger->registry->deposit(trip.token_id, c.vehicle, obs, proof, payload, *ledger->ledger, *ledger->rng,
                                    {ledger->difficulty_bits, tokens::kNoTarget}, now);
          ++out.ledger_writes;
          ++trip.deposits;
        }
        c.last_transfer = now;
        if (!trip.completed) {
          trip.travel_time += c.tau;
          trip.travel_distance += graph_->state(c.next).length;
          trip.route.push_back(c.next);
          if (c.next == dest) trip.completed = true;
        }
        c.state = c.next;
        ++c.step;
        decide(m, now);
        break;
      }
    }
  }

  if (ledger)
    for (const auto& trip : out.trips) ledger->registry->retire(trip.token_id, out.end_time);
  return out;
}

}  // namespace sptoken::rl
