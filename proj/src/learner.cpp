#include "sptoken/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sptoken/hash.hpp"

namespace sptoken::rl {

using road::kActionCount;
using road::kAllActions;

std::vector<int> PolicyTable::rollout(const StateGraph& g, int origin, int destination) const {
  std::vector<int> route{origin};
  int s = origin;
  for (int t = 1; t <= horizon && s != destination; ++t) {
    const int next = g.successor(s, at(s, t));
    if (next != s) route.push_back(next);
    s = next;
  }
  if (s != destination) route.clear();
  return route;
}

nlohmann::json PolicyTable::to_json(int episode) const {
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < states; ++s) {
    std::string row(horizon, 'u');
    for (int t = 1; t <= horizon; ++t) row[t - 1] = road::symbol(at(s, t));
    rows.push_back(row);
  }
  return {{"episode", episode}, {"horizon", horizon}, {"states", states}, {"policy", rows}};
}

Action choose_action(const StateGraph& g, int s, const double* q_row, Action sp_action) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto a : kAllActions) {
    if (!g.allowed(s, a)) continue;
    lo = std::min(lo, q_row[road::index(a)]);
    hi = std::max(hi, q_row[road::index(a)]);
  }
  if (hi - lo <= kTieTolerance) return sp_action;
  for (auto a : kAllActions)
    if (g.allowed(s, a) && q_row[road::index(a)] >= hi - kTieTolerance) return a;
  return sp_action;  // unreachable
}

namespace {

PolicyTable empty_policy(const StateGraph& g, int horizon) {
  PolicyTable p;
  p.states = g.size();
  p.horizon = horizon;
  p.actions.assign(static_cast<std::size_t>(g.size()) * horizon, Action::kStay);
  return p;
}

void check_sp_policy(const StateGraph& g, const std::vector<Action>& sp) {
  if (static_cast<int>(sp.size()) != g.size()) throw std::invalid_argument("shortest-path policy size mismatch");
}

constexpr char kCheckpointMagic[8] = {'S', 'P', 'T', 'K', 'M', 'U', 'B', 'V'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

MubevLearner::MubevLearner(const StateGraph& g, int horizon, double delta, double r_max)
    : graph_(&g), horizon_(horizon), delta_(delta), r_max_(r_max) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must be in (0, 1]");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be > 0");
  const std::size_t cells = static_cast<std::size_t>(g.size()) * kActionCount * horizon;
  n_.assign(cells, 0);
  r_.assign(cells, 0.0);
  q_.assign(cells, 0.0);
  v_.assign(static_cast<std::size_t>(g.size()) * (horizon + 1), 0.0);
  const double delta_prime = delta / 9.0;
  eta2_.resize(g.size());
  for (int s = 0; s < g.size(); ++s)
    eta2_[s] = std::log(18.0 * g.size() * g.action_count(s) * horizon / delta_prime);
  policy_ = empty_policy(g, horizon);
}

double MubevLearner::confidence_width(int s, std::int64_t n) const {
  const double eta1 = 2.0 * std::log(std::log(std::max(std::numbers::e, static_cast<double>(n))));
  return std::sqrt((eta1 + eta2_[s]) / static_cast<double>(n));
}

void MubevLearner::plan(const std::vector<Action>& sp_policy) {
  check_sp_policy(*graph_, sp_policy);
  const int S = graph_->size();
  const int H = horizon_;
  const double vmax = v_max();
  for (int s = 0; s < S; ++s) value_ref(s, H + 1) = 0.0;
  std::array<double, kActionCount> row{};
  for (int t = H; t >= 1; --t) {
    double best_next = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s) best_next = std::max(best_next, value(s, t + 1));
    const double v_tilde = std::min(best_next, vmax);
    for (int s = 0; s < S; ++s) {
      row.fill(-std::numeric_limits<double>::infinity());
      for (auto a : kAllActions) {
        if (!graph_->allowed(s, a)) continue;
        const std::size_t i = idx(s, a, t);
        double r = r_max_;
        double ev = v_tilde;
        if (n_[i] > 0) {
          const double phi = confidence_width(s, n_[i]);
          ev = std::min(v_tilde, value(graph_->successor(s, a), t + 1) + (H - t) * phi);
          r = std::min(r_max_, r_[i] / static_cast<double>(n_[i]) + phi);
        }
        row[road::index(a)] = q_[i] = r + ev;
      }
      const Action chosen = choose_action(*graph_, s, row.data(), sp_policy[s]);
      policy_.at(s, t) = chosen;
      value_ref(s, t) = row[road::index(chosen)];
    }
  }
}

void MubevLearner::accumulate(int s, Action a, double r) {
  const std::size_t base = idx(s, a, 1);
  for (int t = 0; t < horizon_; ++t) {
    n_[base + t] += 1;
    r_[base + t] += r;
  }
}

void MubevLearner::learn(const std::vector<Trajectory>& trajectories) {
  for (const auto& traj : trajectories)
    for (const auto& tr : traj) accumulate(tr.state, tr.action, tr.reward);
  ++episode_;
}

void MubevLearner::set_counts(int s, Action a, int t, std::int64_t n, double reward_sum) {
  if (n < 0) throw std::invalid_argument("counts must be >= 0");
  n_[idx(s, a, t)] = n;
  r_[idx(s, a, t)] = reward_sum;
}

void MubevLearner::save(std::ostream& out) const {
  Bytes buf(kCheckpointMagic, kCheckpointMagic + 8);
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(graph_->size()));
  put_u32(buf, static_cast<std::uint32_t>(horizon_));
  put_u32(buf, static_cast<std::uint32_t>(episode_));
  put_u64(buf, std::bit_cast<std::uint64_t>(delta_));
  put_u64(buf, std::bit_cast<std::uint64_t>(r_max_));
  for (auto n : n_) put_i64(buf, n);
  for (auto r : r_) put_u64(buf, std::bit_cast<std::uint64_t>(r));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void MubevLearner::load(std::istream& in) {
  Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 8, buf.begin()))
    throw std::runtime_error("not a learner checkpoint");
  ByteReader rd(std::span<const std::uint8_t>(buf).subspan(8));
  if (rd.u32() != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  if (static_cast<int>(rd.u32()) != graph_->size() || static_cast<int>(rd.u32()) != horizon_)
    throw std::runtime_error("checkpoint shape does not match this model");
  const int episode = static_cast<int>(rd.u32());
  const double delta = std::bit_cast<double>(rd.u64());
  const double r_max = std::bit_cast<double>(rd.u64());
  if (delta != delta_ || r_max != r_max_) throw std::runtime_error("checkpoint parameters differ");
  std::vector<std::int64_t> n(n_.size());
  std::vector<double> r(r_.size());
  for (auto& x : n) x = static_cast<std::int64_t>(rd.u64());
  for (auto& x : r) x = std::bit_cast<double>(rd.u64());
  n_ = std::move(n);
  r_ = std::move(r);
  episode_ = episode;
}

UcbQLearner::UcbQLearner(const StateGraph& g, int horizon, UcbQParams params)
    : graph_(&g), horizon_(horizon), params_(params) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(params.delta > 0.0 && params.delta <= 1.0)) throw std::invalid_argument("delta must be in (0, 1]");
  if (!(params.c >= 0.0)) throw std::invalid_argument("ucbq.c must be >= 0");
  if (params.max_episodes < 1) throw std::invalid_argument("ucbq K_max must be >= 1");
  std::array<bool, kActionCount> used{};
  for (int s = 0; s < g.size(); ++s)
    for (auto a : kAllActions)
      if (g.allowed(s, a)) used[road::index(a)] = true;
  const double actions = static_cast<double>(std::count(used.begin(), used.end(), true));
  log_term_ = std::log(static_cast<double>(g.size()) * actions * horizon * params.max_episodes / params.delta);
  const std::size_t cells = static_cast<std::size_t>(g.size()) * kActionCount * horizon;
  n_.assign(cells, 0);
  q_.assign(cells, v_max());
  v_.assign(static_cast<std::size_t>(g.size()) * (horizon + 1), v_max());
  for (int s = 0; s < g.size(); ++s) v_[static_cast<std::size_t>(s) * (horizon + 1) + horizon] = 0.0;
  policy_ = empty_policy(g, horizon);
}

double UcbQLearner::learning_rate(std::int64_t k) const {
  return (horizon_ + 1.0) / (horizon_ + static_cast<double>(k));
}

double UcbQLearner::bonus(std::int64_t k) const {
  const double h = horizon_;
  return params_.c * std::sqrt(h * h * h * log_term_ / static_cast<double>(k));
}

void UcbQLearner::update(int s, int t, Action a, double r, int next) {
  if (t < 1 || t > horizon_) throw std::out_of_range("decision epoch out of range");
  if (!graph_->allowed(s, a)) throw std::invalid_argument("action not allowed at state");
  const std::size_t i = idx(s, a, t);
  const std::int64_t k = ++n_[i];
  const double lr = learning_rate(k);
  q_[i] = (1.0 - lr) * q_[i] + lr * (r + value(next, t + 1) + bonus(k));
  double best = -std::numeric_limits<double>::infinity();
  for (auto b : kAllActions)
    if (graph_->allowed(s, b)) best = std::max(best, q_[idx(s, b, t)]);
  v_[static_cast<std::size_t>(s) * (horizon_ + 1) + (t - 1)] = std::min(v_max(), best);
}

void UcbQLearner::learn(const std::vector<Trajectory>& trajectories) {
  for (const auto& traj : trajectories)
    for (const auto& tr : traj) update(tr.state, tr.step, tr.action, tr.reward, tr.next);
  ++episode_;
}

void UcbQLearner::plan(const std::vector<Action>& sp_policy) {
  check_sp_policy(*graph_, sp_policy);
  std::array<double, kActionCount> row{};
  for (int s = 0; s < graph_->size(); ++s)
    for (int t = 1; t <= horizon_; ++t) {
      for (auto a : kAllActions) row[road::index(a)] = q_[idx(s, a, t)];
      policy_.at(s, t) = choose_action(*graph_, s, row.data(), sp_policy[s]);
    }
}

}  // namespace sptoken::rl
