#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sptoken/ledger.hpp"

namespace sptoken::tokens {

inline constexpr double kDefaultTtl = 600.0;  // simulated seconds
inline constexpr int kNoTarget = -1;

struct RoutePlan {
  int origin = 0;
  int destination = 0;
  int target = kNoTarget;  // next state the token wants traversed
};

enum class HolderKind : std::uint8_t { kObserver, kVehicle };

struct Holder {
  HolderKind kind = HolderKind::kObserver;
  std::string id;
  bool operator==(const Holder&) const = default;
};

/// Measurement carried by a token over one traversal: entry and exit times of a state.
struct CarriedRecord {
  int state = 0;
  double entry_time = 0.0;
  double exit_time = 0.0;
};

struct Token {
  std::string id;
  RoutePlan plan;
  Holder holder;
  std::string issuing_observer;
  double issued_at = 0.0;
  double last_transfer_at = 0.0;
  double ttl = kDefaultTtl;
  std::vector<CarriedRecord> carried_data;
  bool retired = false;
};

struct Observer {
  std::string id;
  int location = 0;
  std::set<std::string> held_tokens;
};

/// What the collecting vehicle presents at its next stop.
struct Vehicle {
  std::string id;
  int location = 0;    // state the vehicle is at
  int next_state = 0;  // state it is about to traverse
};

struct PositionProof {
  std::string token_id;
  std::string observer_id;  // the observer that handed the token over
  std::string vehicle_id;
  int state_traversed = 0;
  double entry_time = 0.0;
  double exit_time = 0.0;
};

enum class PopFault {
  kUnknownToken,
  kUnknownObserver,
  kRetired,
  kExpired,
  kNotAtObserver,
  kWrongPosition,
  kTrajectoryMismatch,
  kNotHolder,
  kNoCollection,
  kProofMismatch,
  kWrongObserver,
  kBadTimes,
};

const char* to_string(PopFault f);

class PopError : public std::runtime_error {
 public:
  PopError(PopFault f, const std::string& detail);
  PopFault fault() const { return fault_; }

 private:
  PopFault fault_;
};

struct Event {
  double time = 0.0;
  std::string event;  // issue | collect | deposit | expire | retire
  std::string token_id;
  std::string vehicle_id;
  std::string observer_id;
  int state = kNoTarget;
  std::string site_id;  // hex, deposits only

  nlohmann::json to_json() const;
  static Event from_json(const nlohmann::json& j);
};

struct DepositOptions {
  std::uint32_t difficulty_bits = 1;
  int next_target = kNoTarget;
};

std::string observer_id_for(int state);

/// Issues tokens and gates ledger writes on proof of position. Mutations are expected
/// from one simulation loop; reads may come from anywhere.
class TokenRegistry {
 public:
  void add_observer(const std::string& id, int location);
  /// One observer per state, optionally only a deterministic fraction of states.
  void place_observers(int state_count, double coverage = 1.0, std::uint64_t seed = 0);

  bool has_observer_at(int state) const;
  std::string observer_at(int state) const;  // throws if uncovered

  Token issue(const std::string& token_id, const std::string& observer_id, RoutePlan plan, double now,
              double ttl = kDefaultTtl);
  /// The RL policy supplies the next target while the token rests at an observer.
  void set_target(const std::string& token_id, int target);

  Token collect(const std::string& token_id, const Vehicle& vehicle, const std::string& observer_id,
                double now);

  /// Carry on through a state with no observer: the holder keeps the token and the
  /// pending traversal is retargeted.
  void carry_on(const std::string& token_id, const std::string& vehicle_id, int next_target, double now);

  Site deposit(const std::string& token_id, const std::string& vehicle_id, const std::string& observer_id,
               const PositionProof& proof, const Bytes& payload, Ledger& ledger, Rng& rng,
               const DepositOptions& options, double now);

  std::vector<std::string> expire_sweep(double now);
  void retire(const std::string& token_id, double now);

  Token token(const std::string& id) const;
  Observer observer(const std::string& id) const;
  std::size_t live_tokens() const;
  std::vector<Event> events() const;
  void write_events(std::ostream& out) const;

 private:
  struct Pending {
    std::string vehicle_id;
    std::string observer_id;
    double collected_at = 0.0;
    int target = kNoTarget;
  };

  Token& token_locked(const std::string& id);
  Observer& observer_locked(const std::string& id);
  void return_to_issuer_locked(Token& t, double now);
  void log(Event e);

  mutable std::shared_mutex mutex_;
  std::map<std::string, Token> tokens_;
  std::map<std::string, Token*> live_;  // not retired; same order as tokens_, nodes are stable
  std::map<std::string, Observer> observers_;
  std::map<int, std::string> observer_by_state_;
  std::map<std::string, Pending> pending_;
  std::vector<Event> events_;
};

Bytes encode_traversal(const CarriedRecord& r);
CarriedRecord decode_traversal(std::span<const std::uint8_t> payload);

/// Replays an event log against the ledger: every site that names a token must match
/// exactly one deposit preceded by a collect of the same token, vehicle and state.
struct ReplayReport {
  bool ok = true;
  std::size_t token_sites = 0;
  std::size_t deposits = 0;
  std::vector<std::string> violations;
};
ReplayReport replay_check(const Ledger& ledger, const std::vector<Event>& events);

}  // namespace sptoken::tokens
