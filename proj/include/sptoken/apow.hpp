#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sptoken/ledger.hpp"

namespace sptoken::apow {

/// Fixed-point scale: one real unit is 10^6 integer steps.
inline constexpr std::int64_t kScale = 1'000'000;

enum class Norm { kL1, kL2, kLinf };

Norm parse_norm(const std::string& name);
const char* to_string(Norm norm);

/// A competitor's measurement, fixed-point encoded so fragment sums are exact.
struct DataPoint {
  std::vector<std::int64_t> values;

  static DataPoint from_real(std::span<const double> real);
  std::vector<double> to_real() const;
  std::size_t dim() const { return values.size(); }

  bool operator==(const DataPoint&) const = default;
};

/// Exact mean kept as an integer sum over a count.
struct ExactMean {
  std::vector<std::int64_t> sum;
  std::int64_t count = 1;

  std::vector<double> to_real() const;
  bool operator==(const ExactMean&) const = default;
};

ExactMean exact_mean(std::span<const DataPoint> points);

double norm_of(std::span<const double> v, Norm norm);

/// d0 + alpha * ||x - mean||, everything in real units.
double difficulty(std::span<const double> x, std::span<const double> mean, double d0,
                  double alpha, Norm norm);
double difficulty(const DataPoint& x, const DataPoint& mean, double d0, double alpha, Norm norm);

/// round(d), half away from zero, clamped to [1, 32].
std::uint32_t difficulty_to_bits(double d);

struct FragmentSet {
  std::string owner;
  std::vector<DataPoint> fragments;

  DataPoint sum() const;
};

/// Splits x into n fragments that sum to x exactly. The first n-1 are uniform on
/// [-2|x_c| - 2^20, 2|x_c| + 2^20] per coordinate; the last is the residual.
FragmentSet fragment(const DataPoint& x, int n, Rng& rng);

struct ApowRound {
  std::vector<std::string> participants;
  std::map<std::string, DataPoint> data;
  double d0 = 1.0;
  double alpha = 1.0;
  Norm norm = Norm::kL2;

  void validate() const;
};

struct Message {
  int step = 0;
  std::string from;
  std::string to;  // "*" for broadcast
  std::string kind;
  std::vector<std::int64_t> values;
  double value = 0.0;
};

struct Attestation {
  std::string certifier;
  std::string competitor;
  int fragment = 0;
  double difficulty = 0.0;
  bool completed = false;
};

struct PartyOutcome {
  FragmentSet fragments;
  std::vector<std::int64_t> partial_sum;  // c_i
  ExactMean mean;
  std::vector<double> sub_difficulties;
  double single_step_difficulty = 0.0;  // d_w(x_i, mean, d0)
};

struct RoundResult {
  std::vector<Message> transcript;
  std::vector<Attestation> attestations;
  std::map<std::string, PartyOutcome> parties;
};

/// Simulates the four-step fragment exchange in process, recording every message.
RoundResult run_round(const ApowRound& round, Rng& rng);

/// Exact check that splitting the work never lowers the total difficulty:
/// sum_k d_w(x_ik, mean/N, d0/N) >= d_w(x_i, mean, d0). Integer arithmetic for L1/Linf;
/// for L2 equality (all terms positively collinear) is decided exactly.
bool split_work_dominates(const FragmentSet& fragments, const DataPoint& x, const ExactMean& mean,
                          Norm norm);

ApowRound round_from_json(const nlohmann::json& j);
nlohmann::json round_result_to_json(const ApowRound& round, const RoundResult& result);

}  // namespace sptoken::apow
