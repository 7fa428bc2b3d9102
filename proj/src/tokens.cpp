#include "sptoken/tokens.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "sptoken/seeding.hpp"

namespace sptoken::tokens {

const char* to_string(PopFault f) {
  switch (f) {
    case PopFault::kUnknownToken: return "unknown token";
    case PopFault::kUnknownObserver: return "unknown observer";
    case PopFault::kRetired: return "token retired";
    case PopFault::kExpired: return "token expired";
    case PopFault::kNotAtObserver: return "token not at this observer";
    case PopFault::kWrongPosition: return "vehicle not at observer position";
    case PopFault::kTrajectoryMismatch: return "trajectory mismatch";
    case PopFault::kNotHolder: return "vehicle does not hold token";
    case PopFault::kNoCollection: return "no collection on record";
    case PopFault::kProofMismatch: return "position proof inconsistent with collection";
    case PopFault::kWrongObserver: return "observer is not at the traversed state";
    case PopFault::kBadTimes: return "inconsistent proof times";
  }
  return "unknown";
}

PopError::PopError(PopFault f, const std::string& detail)
    : std::runtime_error(std::string(to_string(f)) + ": " + detail), fault_(f) {}

nlohmann::json Event::to_json() const {
  nlohmann::json j{{"time", time}, {"event", event}, {"token_id", token_id},
                   {"vehicle_id", vehicle_id}, {"observer_id", observer_id}, {"state", state}};
  if (!site_id.empty()) j["site_id"] = site_id;
  return j;
}

Event Event::from_json(const nlohmann::json& j) {
  Event e;
  e.time = j.at("time").get<double>();
  e.event = j.at("event").get<std::string>();
  e.token_id = j.at("token_id").get<std::string>();
  e.vehicle_id = j.value("vehicle_id", "");
  e.observer_id = j.value("observer_id", "");
  e.state = j.value("state", kNoTarget);
  e.site_id = j.value("site_id", "");
  return e;
}

std::string observer_id_for(int state) { return "obs-" + std::to_string(state); }

void TokenRegistry::add_observer(const std::string& id, int location) {
  std::unique_lock lock(mutex_);
  if (location < 0) throw std::invalid_argument("observer location must be a valid state");
  if (observers_.contains(id)) throw std::invalid_argument("duplicate observer " + id);
  if (observer_by_state_.contains(location))
    throw std::invalid_argument("state " + std::to_string(location) + " already has an observer");
  observers_[id] = Observer{id, location, {}};
  observer_by_state_[location] = id;
}

void TokenRegistry::place_observers(int state_count, double coverage, std::uint64_t seed) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw std::invalid_argument("observer coverage must be in (0, 1]");
  std::vector<int> states(state_count);
  std::iota(states.begin(), states.end(), 0);
  if (coverage < 1.0) {
    std::mt19937_64 rng(derive_seed(seed, 0x0B5ULL));
    std::shuffle(states.begin(), states.end(), rng);
    states.resize(static_cast<std::size_t>(std::ceil(coverage * state_count)));
    std::sort(states.begin(), states.end());
  }
  for (int s : states) add_observer(observer_id_for(s), s);
}

bool TokenRegistry::has_observer_at(int state) const {
  std::shared_lock lock(mutex_);
  return observer_by_state_.contains(state);
}

std::string TokenRegistry::observer_at(int state) const {
  std::shared_lock lock(mutex_);
  auto it = observer_by_state_.find(state);
  if (it == observer_by_state_.end())
    throw PopError(PopFault::kUnknownObserver, "no observer at state " + std::to_string(state));
  return it->second;
}

Token& TokenRegistry::token_locked(const std::string& id) {
  auto it = tokens_.find(id);
  if (it == tokens_.end()) throw PopError(PopFault::kUnknownToken, id);
  if (it->second.retired) throw PopError(PopFault::kRetired, id);
  return it->second;
}

Observer& TokenRegistry::observer_locked(const std::string& id) {
  auto it = observers_.find(id);
  if (it == observers_.end()) throw PopError(PopFault::kUnknownObserver, id);
  return it->second;
}

void TokenRegistry::log(Event e) { events_.push_back(std::move(e)); }

Token TokenRegistry::issue(const std::string& token_id, const std::string& observer_id, RoutePlan plan,
                           double now, double ttl) {
  std::unique_lock lock(mutex_);
  if (tokens_.contains(token_id)) throw std::invalid_argument("duplicate token " + token_id);
  if (!(ttl > 0.0)) throw std::invalid_argument("ttl must be > 0");
  auto& obs = observer_locked(observer_id);
  Token t;
  t.id = token_id;
  t.plan = plan;
  t.holder = {HolderKind::kObserver, observer_id};
  t.issuing_observer = observer_id;
  t.issued_at = now;
  t.last_transfer_at = now;
  t.ttl = ttl;
  obs.held_tokens.insert(token_id);
  auto& stored = tokens_[token_id] = t;
  live_.emplace(token_id, &stored);
  log({now, "issue", token_id, "", observer_id, obs.location, ""});
  return t;
}

void TokenRegistry::set_target(const std::string& token_id, int target) {
  std::unique_lock lock(mutex_);
  auto& t = token_locked(token_id);
  if (t.holder.kind != HolderKind::kObserver) throw PopError(PopFault::kNotAtObserver, token_id);
  t.plan.target = target;
}

void TokenRegistry::return_to_issuer_locked(Token& t, double now) {
  if (t.holder.kind == HolderKind::kObserver) observers_.at(t.holder.id).held_tokens.erase(t.id);
  pending_.erase(t.id);
  t.holder = {HolderKind::kObserver, t.issuing_observer};
  observers_.at(t.issuing_observer).held_tokens.insert(t.id);
  t.last_transfer_at = now;
  log({now, "expire", t.id, "", t.issuing_observer, observers_.at(t.issuing_observer).location, ""});
}

Token TokenRegistry::collect(const std::string& token_id, const Vehicle& vehicle,
                             const std::string& observer_id, double now) {
  std::unique_lock lock(mutex_);
  auto& t = token_locked(token_id);
  if (now - t.last_transfer_at > t.ttl) {
    return_to_issuer_locked(t, now);
    throw PopError(PopFault::kExpired, token_id);
  }
  auto& obs = observer_locked(observer_id);
  if (t.holder != Holder{HolderKind::kObserver, observer_id} || !obs.held_tokens.contains(token_id))
    throw PopError(PopFault::kNotAtObserver, token_id + " at " + observer_id);
  if (vehicle.location != obs.location)
    throw PopError(PopFault::kWrongPosition, vehicle.id + " at state " + std::to_string(vehicle.location));
  if (t.plan.target == kNoTarget || vehicle.next_state != t.plan.target)
    throw PopError(PopFault::kTrajectoryMismatch,
                   vehicle.id + " heads to " + std::to_string(vehicle.next_state) + ", token wants " +
                       std::to_string(t.plan.target));
  obs.held_tokens.erase(token_id);
  t.holder = {HolderKind::kVehicle, vehicle.id};
  t.last_transfer_at = now;
  pending_[token_id] = {vehicle.id, observer_id, now, t.plan.target};
  log({now, "collect", token_id, vehicle.id, observer_id, t.plan.target, ""});
  return t;
}

void TokenRegistry::carry_on(const std::string& token_id, const std::string& vehicle_id, int next_target,
                             double now) {
  std::unique_lock lock(mutex_);
  auto& t = token_locked(token_id);
  if (t.holder != Holder{HolderKind::kVehicle, vehicle_id}) throw PopError(PopFault::kNotHolder, vehicle_id);
  auto it = pending_.find(token_id);
  if (it == pending_.end()) throw PopError(PopFault::kNoCollection, token_id);
  if (observer_by_state_.contains(it->second.target))
    throw PopError(PopFault::kProofMismatch, "carry past a covered state");
  it->second.target = next_target;
  t.plan.target = next_target;
  log({now, "carry", token_id, vehicle_id, "", next_target, ""});
}

Site TokenRegistry::deposit(const std::string& token_id, const std::string& vehicle_id,
                            const std::string& observer_id, const PositionProof& proof, const Bytes& payload,
                            Ledger& ledger, Rng& rng, const DepositOptions& options, double now) {
  std::unique_lock lock(mutex_);
  auto& t = token_locked(token_id);
  if (t.holder != Holder{HolderKind::kVehicle, vehicle_id})
    throw PopError(PopFault::kNotHolder, vehicle_id + " for " + token_id);
  if (now - t.last_transfer_at > t.ttl) {
    return_to_issuer_locked(t, now);
    throw PopError(PopFault::kExpired, token_id);
  }
  auto pit = pending_.find(token_id);
  if (pit == pending_.end() || pit->second.vehicle_id != vehicle_id)
    throw PopError(PopFault::kNoCollection, token_id);
  const Pending& pending = pit->second;
  if (proof.token_id != token_id || proof.vehicle_id != vehicle_id ||
      proof.observer_id != pending.observer_id || proof.state_traversed != pending.target)
    throw PopError(PopFault::kProofMismatch, token_id);
  auto& obs = observer_locked(observer_id);
  if (obs.location != proof.state_traversed)
    throw PopError(PopFault::kWrongObserver, observer_id + " is not at " + std::to_string(proof.state_traversed));
  if (!(proof.exit_time > proof.entry_time) || proof.entry_time < pending.collected_at || now < proof.exit_time)
    throw PopError(PopFault::kBadTimes, token_id);

  SiteDraft draft;
  draft.issuer_id = vehicle_id;
  draft.token_id = token_id;
  draft.observer_id = observer_id;
  draft.payload = payload;
  draft.timestamp_ms = std::llround(now * 1000.0);
  draft.difficulty_bits = options.difficulty_bits;
  Site site = ledger.attach(draft, rng);  // throws before any registry mutation

  pending_.erase(pit);
  t.holder = {HolderKind::kObserver, observer_id};
  obs.held_tokens.insert(token_id);
  t.last_transfer_at = now;
  t.carried_data.push_back({proof.state_traversed, proof.entry_time, proof.exit_time});
  t.plan.target = options.next_target;
  log({now, "deposit", token_id, vehicle_id, observer_id, proof.state_traversed, site.id.hex()});
  return site;
}

std::vector<std::string> TokenRegistry::expire_sweep(double now) {
  std::unique_lock lock(mutex_);
  std::vector<std::string> out;
  for (auto& [id, tp] : live_) {
    auto& t = *tp;
    if (!(now - t.last_transfer_at > t.ttl)) continue;
    return_to_issuer_locked(t, now);
    out.push_back(id);
  }
  return out;
}

void TokenRegistry::retire(const std::string& token_id, double now) {
  std::unique_lock lock(mutex_);
  auto& t = token_locked(token_id);
  if (t.holder.kind == HolderKind::kVehicle) throw PopError(PopFault::kNotAtObserver, token_id);
  observers_.at(t.holder.id).held_tokens.erase(token_id);
  t.retired = true;
  live_.erase(token_id);
  log({now, "retire", token_id, "", t.holder.id, observers_.at(t.holder.id).location, ""});
}

Token TokenRegistry::token(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = tokens_.find(id);
  if (it == tokens_.end()) throw PopError(PopFault::kUnknownToken, id);
  return it->second;
}

Observer TokenRegistry::observer(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = observers_.find(id);
  if (it == observers_.end()) throw PopError(PopFault::kUnknownObserver, id);
  return it->second;
}

std::size_t TokenRegistry::live_tokens() const {
  std::shared_lock lock(mutex_);
  return live_.size();
}

std::vector<Event> TokenRegistry::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

void TokenRegistry::write_events(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& e : events_) out << e.to_json().dump() << '\n';
}

Bytes encode_traversal(const CarriedRecord& r) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(r.state));
  put_u64(out, std::bit_cast<std::uint64_t>(r.entry_time));
  put_u64(out, std::bit_cast<std::uint64_t>(r.exit_time));
  return out;
}

CarriedRecord decode_traversal(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  CarriedRecord r;
  r.state = static_cast<int>(in.u32());
  r.entry_time = std::bit_cast<double>(in.u64());
  r.exit_time = std::bit_cast<double>(in.u64());
  return r;
}

ReplayReport replay_check(const Ledger& ledger, const std::vector<Event>& events) {
  ReplayReport rep;
  auto fail = [&](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };
  struct Open {
    std::string vehicle;
    int target = kNoTarget;
  };
  std::map<std::string, Open> open;
  std::map<std::string, const Event*> deposit_by_site;
  for (const auto& e : events) {
    if (e.event == "collect") {
      if (open.contains(e.token_id)) fail("double collect of " + e.token_id);
      open[e.token_id] = {e.vehicle_id, e.state};
    } else if (e.event == "carry") {
      auto it = open.find(e.token_id);
      if (it == open.end() || it->second.vehicle != e.vehicle_id) fail("carry without collect: " + e.token_id);
      else it->second.target = e.state;
    } else if (e.event == "deposit") {
      ++rep.deposits;
      auto it = open.find(e.token_id);
      if (it == open.end()) {
        fail("deposit without collect: " + e.token_id);
      } else {
        if (it->second.vehicle != e.vehicle_id) fail("deposit by non-collector: " + e.token_id);
        if (it->second.target != e.state) fail("deposit state differs from collected target: " + e.token_id);
        open.erase(it);
      }
      if (!deposit_by_site.emplace(e.site_id, &e).second) fail("site deposited twice: " + e.site_id);
    } else if (e.event == "expire") {
      open.erase(e.token_id);
    }
  }
  std::size_t matched = 0;
  for (const auto& id : ledger.order()) {
    const Site site = ledger.get(id);
    if (!site.token_id) continue;
    ++rep.token_sites;
    auto it = deposit_by_site.find(id.hex());
    if (it == deposit_by_site.end()) {
      fail("site without deposit event: " + id.hex());
      continue;
    }
    const Event& e = *it->second;
    ++matched;
    if (*site.token_id != e.token_id || site.issuer_id != e.vehicle_id || site.observer_id != e.observer_id)
      fail("site fields disagree with deposit: " + id.hex());
    try {
      if (decode_traversal(site.payload).state != e.state) fail("payload state disagrees: " + id.hex());
    } catch (const std::out_of_range&) {
      fail("undecodable payload: " + id.hex());
    }
  }
  if (matched != rep.deposits) fail("deposit events without ledger sites");
  return rep;
}

}  // namespace sptoken::tokens
