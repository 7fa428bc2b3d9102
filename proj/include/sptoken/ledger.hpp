#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sptoken/hash.hpp"

namespace sptoken {

using Rng = std::mt19937_64;

inline constexpr std::uint16_t kSiteFormatVersion = 1;
inline constexpr std::uint32_t kMaxDifficultyBits = 32;

/// One vertex of the ledger DAG.
struct Site {
  Digest id;
  std::vector<Digest> parent_ids;
  std::string issuer_id;
  std::optional<std::string> token_id;
  std::optional<std::string> observer_id;
  Digest observer_list_hash;  // zero unless attestations are attached
  Bytes payload;
  std::int64_t timestamp_ms = 0;
  std::uint32_t difficulty_bits = 1;
  std::uint64_t nonce = 0;

  bool operator==(const Site&) const = default;
};

/// Everything the issuer controls; parents, nonce and id are filled in by the ledger.
struct SiteDraft {
  std::string issuer_id;
  std::optional<std::string> token_id;
  std::optional<std::string> observer_id;
  Digest observer_list_hash;
  Bytes payload;
  std::int64_t timestamp_ms = 0;
  std::uint32_t difficulty_bits = 1;
};

/// Canonical encoding of every field except id and nonce. The id is its hash.
Bytes canonical_bytes(const Site& site);
Digest compute_site_id(const Site& site);

/// Hash used by the proof of work: sha256(canonical || nonce as 8 big-endian bytes).
Digest pow_hash(std::span<const std::uint8_t> canonical, std::uint64_t nonce);

struct PowSolution {
  std::uint64_t nonce = 0;
  std::uint64_t attempts = 0;
};

/// Linear nonce search from 0. Throws std::invalid_argument for bits outside [1, 32] and
/// std::runtime_error if the nonce space is exhausted.
PowSolution solve_pow(std::span<const std::uint8_t> canonical, std::uint32_t difficulty_bits);

/// Log record: u32 length, then canonical bytes followed by the 8-byte nonce.
Bytes serialize_site(const Site& site);
Site deserialize_site(std::span<const std::uint8_t> record);

enum class SiteFault {
  kOk,
  kIdMismatch,
  kUnknownParent,
  kParentCount,
  kParentTimestamp,
  kBadDifficulty,
  kPowFailure,
  kDuplicate,
};

const char* to_string(SiteFault fault);

class LedgerError : public std::runtime_error {
 public:
  LedgerError(SiteFault fault, const std::string& what)
      : std::runtime_error(what), fault_(fault) {}
  SiteFault fault() const { return fault_; }

 private:
  SiteFault fault_;
};

/// Result of a full structural scan, see Ledger::audit.
struct LedgerAudit {
  bool acyclic = true;
  bool tips_consistent = true;
  bool genesis_reachable = true;
  bool pow_valid = true;
  bool ids_valid = true;
  std::size_t sites = 0;

  bool ok() const { return acyclic && tips_consistent && genesis_reachable && pow_valid && ids_valid; }
};

/// Append-only DAG of sites. Readers may run concurrently; insert() is the single
/// serialized commit point.
class Ledger {
 public:
  Ledger();

  Ledger(const Ledger&) = delete;
  Ledger& operator=(const Ledger&) = delete;

  static Site make_genesis();

  const Digest& genesis_id() const { return genesis_id_; }
  std::size_t size() const;
  bool contains(const Digest& id) const;
  /// Copy of the stored site; throws std::out_of_range when absent.
  Site get(const Digest& id) const;
  std::vector<Digest> tips() const;
  /// Site ids in commit order (genesis first).
  std::vector<Digest> order() const;

  /// Uniform tip sampling: two distinct tips, or the only tip.
  std::vector<Digest> select_tips(Rng& rng) const;

  SiteFault check(const Site& site) const;
  bool verify_site(const Site& site) const { return check(site) == SiteFault::kOk; }

  /// Validate-then-insert. Throws LedgerError on any fault.
  const Digest& insert(Site site);

  /// Select tips, solve the PoW and insert. Returns the committed site.
  Site attach(const SiteDraft& draft, Rng& rng);

  /// Recomputes every ledger invariant from scratch.
  LedgerAudit audit() const;

  void write_log(std::ostream& out) const;
  static std::unique_ptr<Ledger> read_log(std::istream& in);

  /// One JSON object per line: {id, parents, issuer, token, timestamp, difficulty_bits}.
  void dump_jsonl(std::ostream& out) const;

 private:
  SiteFault check_locked(const Site& site) const;

  mutable std::shared_mutex mutex_;
  std::unordered_map<Digest, Site> sites_;
  std::vector<Digest> order_;
  std::set<Digest> tips_;
  Digest genesis_id_;
};

}  // namespace sptoken
