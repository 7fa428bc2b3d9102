#include "sptoken/ledger.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <queue>

#include <nlohmann/json.hpp>

namespace sptoken {

namespace {

void put_optional(Bytes& out, const std::optional<std::string>& v) {
  put_u8(out, v ? 1 : 0);
  if (v) put_string(out, *v);
}

std::optional<std::string> read_optional(ByteReader& in) {
  auto flag = in.u8();
  if (flag > 1) throw std::invalid_argument("bad optional flag in site record");
  if (flag == 0) return std::nullopt;
  return in.string();
}

}  // namespace

Bytes canonical_bytes(const Site& site) {
  Bytes out;
  out.reserve(128 + site.payload.size() + 32 * site.parent_ids.size());
  put_u16(out, kSiteFormatVersion);
  put_i64(out, site.timestamp_ms);
  put_string(out, site.issuer_id);
  put_optional(out, site.token_id);
  put_optional(out, site.observer_id);
  out.insert(out.end(), site.observer_list_hash.bytes.begin(), site.observer_list_hash.bytes.end());
  put_bytes(out, site.payload);
  put_u8(out, static_cast<std::uint8_t>(site.parent_ids.size()));
  for (const auto& p : site.parent_ids) out.insert(out.end(), p.bytes.begin(), p.bytes.end());
  put_u32(out, site.difficulty_bits);
  return out;
}

Digest compute_site_id(const Site& site) { return sha256(canonical_bytes(site)); }

Digest pow_hash(std::span<const std::uint8_t> canonical, std::uint64_t nonce) {
  Bytes buf(canonical.begin(), canonical.end());
  put_u64(buf, nonce);
  return sha256(buf);
}

PowSolution solve_pow(std::span<const std::uint8_t> canonical, std::uint32_t difficulty_bits) {
  if (difficulty_bits < 1 || difficulty_bits > kMaxDifficultyBits)
    throw std::invalid_argument("difficulty_bits must be in [1, 32]");
  const PrefixHasher prefix(canonical);
  std::array<std::uint8_t, 8> tail{};
  std::uint64_t nonce = 0;
  std::uint64_t attempts = 0;
  while (true) {
    for (int i = 0; i < 8; ++i) tail[i] = static_cast<std::uint8_t>(nonce >> (56 - 8 * i));
    ++attempts;
    if (leading_zero_bits(prefix.finish(tail)) >= static_cast<int>(difficulty_bits)) return {nonce, attempts};
    if (nonce == std::numeric_limits<std::uint64_t>::max())
      throw std::runtime_error("nonce space exhausted");
    ++nonce;
  }
}

Bytes serialize_site(const Site& site) {
  Bytes body = canonical_bytes(site);
  put_u64(body, site.nonce);
  Bytes out;
  out.reserve(body.size() + 4);
  put_bytes(out, body);
  return out;
}

Site deserialize_site(std::span<const std::uint8_t> record) {
  ByteReader outer(record);
  Bytes body = outer.bytes();
  if (outer.remaining() != 0) throw std::invalid_argument("trailing bytes after site record");

  ByteReader in(body);
  Site s;
  if (in.u16() != kSiteFormatVersion) throw std::invalid_argument("unsupported site format version");
  s.timestamp_ms = in.i64();
  s.issuer_id = in.string();
  s.token_id = read_optional(in);
  s.observer_id = read_optional(in);
  s.observer_list_hash = in.digest();
  s.payload = in.bytes();
  auto parents = in.u8();
  for (int i = 0; i < parents; ++i) s.parent_ids.push_back(in.digest());
  s.difficulty_bits = in.u32();
  s.nonce = in.u64();
  if (in.remaining() != 0) throw std::invalid_argument("trailing bytes in site body");
  s.id = compute_site_id(s);
  return s;
}

const char* to_string(SiteFault fault) {
  switch (fault) {
    case SiteFault::kOk: return "ok";
    case SiteFault::kIdMismatch: return "id_mismatch";
    case SiteFault::kUnknownParent: return "unknown_parent";
    case SiteFault::kParentCount: return "parent_count";
    case SiteFault::kParentTimestamp: return "parent_timestamp";
    case SiteFault::kBadDifficulty: return "bad_difficulty";
    case SiteFault::kPowFailure: return "pow_failure";
    case SiteFault::kDuplicate: return "duplicate";
  }
  return "unknown";
}

Site Ledger::make_genesis() {
  Site g;
  g.issuer_id = "genesis";
  g.timestamp_ms = 0;
  g.difficulty_bits = 1;
  g.nonce = solve_pow(canonical_bytes(g), g.difficulty_bits).nonce;
  g.id = compute_site_id(g);
  return g;
}

Ledger::Ledger() {
  Site g = make_genesis();
  genesis_id_ = g.id;
  order_.push_back(g.id);
  tips_.insert(g.id);
  sites_.emplace(g.id, std::move(g));
}

std::size_t Ledger::size() const {
  std::shared_lock lock(mutex_);
  return sites_.size();
}

bool Ledger::contains(const Digest& id) const {
  std::shared_lock lock(mutex_);
  return sites_.contains(id);
}

Site Ledger::get(const Digest& id) const {
  std::shared_lock lock(mutex_);
  return sites_.at(id);
}

std::vector<Digest> Ledger::tips() const {
  std::shared_lock lock(mutex_);
  return {tips_.begin(), tips_.end()};
}

std::vector<Digest> Ledger::order() const {
  std::shared_lock lock(mutex_);
  return order_;
}

std::vector<Digest> Ledger::select_tips(Rng& rng) const {
  auto tips = this->tips();
  if (tips.size() <= 1) return tips;
  std::uniform_int_distribution<std::size_t> first(0, tips.size() - 1);
  std::uniform_int_distribution<std::size_t> second(0, tips.size() - 2);
  auto i = first(rng);
  auto j = second(rng);
  if (j >= i) ++j;
  return {tips[i], tips[j]};
}

SiteFault Ledger::check(const Site& site) const {
  std::shared_lock lock(mutex_);
  return check_locked(site);
}

SiteFault Ledger::check_locked(const Site& site) const {
  const auto canonical = canonical_bytes(site);
  if (sha256(canonical) != site.id) return SiteFault::kIdMismatch;
  if (site.difficulty_bits < 1 || site.difficulty_bits > kMaxDifficultyBits)
    return SiteFault::kBadDifficulty;

  const bool genesis = site.id == genesis_id_;
  if (genesis ? !site.parent_ids.empty() : (site.parent_ids.empty() || site.parent_ids.size() > 2))
    return SiteFault::kParentCount;
  if (site.parent_ids.size() == 2 && site.parent_ids[0] == site.parent_ids[1])
    return SiteFault::kParentCount;
  for (const auto& p : site.parent_ids) {
    auto it = sites_.find(p);
    if (it == sites_.end()) return SiteFault::kUnknownParent;
    if (it->second.timestamp_ms > site.timestamp_ms) return SiteFault::kParentTimestamp;
  }
  if (leading_zero_bits(pow_hash(canonical, site.nonce)) < static_cast<int>(site.difficulty_bits))
    return SiteFault::kPowFailure;
  return SiteFault::kOk;
}

const Digest& Ledger::insert(Site site) {
  std::unique_lock lock(mutex_);
  if (sites_.contains(site.id)) throw LedgerError(SiteFault::kDuplicate, "duplicate site id " + site.id.hex());
  if (auto fault = check_locked(site); fault != SiteFault::kOk)
    throw LedgerError(fault, std::string("site rejected: ") + to_string(fault));
  for (const auto& p : site.parent_ids) tips_.erase(p);
  tips_.insert(site.id);
  order_.push_back(site.id);
  auto [it, _] = sites_.emplace(site.id, std::move(site));
  return it->first;
}

Site Ledger::attach(const SiteDraft& draft, Rng& rng) {
  Site site;
  site.parent_ids = select_tips(rng);
  site.issuer_id = draft.issuer_id;
  site.token_id = draft.token_id;
  site.observer_id = draft.observer_id;
  site.observer_list_hash = draft.observer_list_hash;
  site.payload = draft.payload;
  site.timestamp_ms = draft.timestamp_ms;
  site.difficulty_bits = draft.difficulty_bits;
  const auto canonical = canonical_bytes(site);
  site.nonce = solve_pow(canonical, site.difficulty_bits).nonce;
  site.id = sha256(canonical);
  insert(site);
  return site;
}

LedgerAudit Ledger::audit() const {
  std::shared_lock lock(mutex_);
  LedgerAudit a;
  a.sites = sites_.size();

  std::unordered_map<Digest, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position.emplace(order_[i], i);

  std::unordered_map<Digest, std::vector<Digest>> approvers;
  for (const auto& [id, site] : sites_) {
    const auto canonical = canonical_bytes(site);
    if (sha256(canonical) != id) a.ids_valid = false;
    if (leading_zero_bits(pow_hash(canonical, site.nonce)) < static_cast<int>(site.difficulty_bits))
      a.pow_valid = false;
    for (const auto& p : site.parent_ids) {
      auto pp = position.find(p);
      // A parent committed after its child would be the only way to close a cycle.
      if (pp == position.end() || pp->second >= position.at(id)) a.acyclic = false;
      approvers[p].push_back(id);
    }
  }

  std::set<Digest> scanned_tips;
  for (const auto& [id, _] : sites_)
    if (!approvers.contains(id)) scanned_tips.insert(id);
  a.tips_consistent = scanned_tips == tips_;

  // Every site reaches genesis along parent edges iff a walk along approver edges from
  // genesis visits every site.
  std::unordered_map<Digest, bool> seen;
  std::queue<Digest> frontier;
  frontier.push(genesis_id_);
  seen[genesis_id_] = true;
  while (!frontier.empty()) {
    auto cur = frontier.front();
    frontier.pop();
    auto it = approvers.find(cur);
    if (it == approvers.end()) continue;
    for (const auto& child : it->second)
      if (!seen[child]) {
        seen[child] = true;
        frontier.push(child);
      }
  }
  a.genesis_reachable = seen.size() == sites_.size();
  return a;
}

void Ledger::write_log(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& id : order_) {
    auto rec = serialize_site(sites_.at(id));
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
}

std::unique_ptr<Ledger> Ledger::read_log(std::istream& in) {
  auto ledger = std::make_unique<Ledger>();
  bool first = true;
  while (true) {
    std::uint8_t len_bytes[4];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) {
      if (in.gcount() == 0) break;
      throw std::invalid_argument("truncated ledger log");
    }
    std::uint32_t len = std::uint32_t(len_bytes[0]) << 24 | std::uint32_t(len_bytes[1]) << 16 |
                        std::uint32_t(len_bytes[2]) << 8 | len_bytes[3];
    Bytes rec(len_bytes, len_bytes + 4);
    rec.resize(4 + len);
    if (!in.read(reinterpret_cast<char*>(rec.data() + 4), len))
      throw std::invalid_argument("truncated ledger log");
    Site s = deserialize_site(rec);
    if (first) {
      if (s.id != ledger->genesis_id()) throw std::invalid_argument("ledger log does not start at genesis");
      first = false;
      continue;
    }
    ledger->insert(std::move(s));
  }
  return ledger;
}

void Ledger::dump_jsonl(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& id : order_) {
    const auto& s = sites_.at(id);
    nlohmann::json j;
    j["id"] = id.hex();
    j["parents"] = nlohmann::json::array();
    for (const auto& p : s.parent_ids) j["parents"].push_back(p.hex());
    j["issuer"] = s.issuer_id;
    j["token"] = s.token_id ? nlohmann::json(*s.token_id) : nlohmann::json(nullptr);
    j["timestamp"] = s.timestamp_ms;
    j["difficulty_bits"] = s.difficulty_bits;
    out << j.dump() << '\n';
  }
}

}  // namespace sptoken
