#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sptoken/episode.hpp"
#include "sptoken/learner.hpp"
#include "sptoken/reward.hpp"
#include "sptoken/road_network.hpp"
#include "sptoken/traffic.hpp"

namespace sptoken::harness {

/// Config validation failure; `what()` starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Algorithm { kMubev, kUcbq };
Algorithm parse_algorithm(const std::string& s);
const char* to_string(Algorithm a);

/// A place in the network: a state id, a link id, or (grid only) the junction pair a link joins.
struct LocationRef {
  std::optional<int> state;
  std::optional<int> link;
  std::optional<std::array<int, 4>> junctions;  // i0, j0, i1, j1

  static LocationRef from_json(const nlohmann::json& j, const std::string& path);
  nlohmann::json to_json() const;
};

struct CongestionRef {
  LocationRef where;
  int start = 0;
  int end = 0;
};

struct LearningCriterion {
  double tolerance = 0.10;  // route expected time within this fraction of the optimum
  int persistence = 3;
  int window = 30;          // acceptance bound on episodes after a change
};

struct OutputOptions {
  bool routes = true;
  std::string policy_snapshots = "final";  // none | final | all, realization 0 only
  bool checkpoint = true;
  bool events = true;
  bool trace = false;
};

struct ExperimentConfig {
  std::string name = "exp1";
  std::optional<road::GridSpec> grid;
  std::optional<std::filesystem::path> network_file;
  road::TurnThresholds turns;
  LocationRef origin;
  LocationRef destination;
  std::vector<CongestionRef> congestion;
  rl::RewardParams reward;
  int horizon = 60;
  std::vector<int> tokens{1};
  int episodes = 170;
  int realizations = 50;
  std::uint64_t seed = 1;
  Algorithm algorithm = Algorithm::kMubev;
  double delta = 1.0;
  rl::UcbQParams ucbq;  // max_episodes 0 here means "use episodes"
  traffic::TrafficParams traffic;
  rl::RelayModel relay;
  bool ledger = true;
  std::uint32_t difficulty_bits = 2;
  double observer_coverage = 1.0;
  bool random_origins = false;
  LearningCriterion learning;
  OutputOptions outputs;
  int threads = 0;  // 0: hardware concurrency

  /// Built-in defaults for exp1..exp4.
  static ExperimentConfig defaults(const std::string& name);
  /// Overlay a JSON document on the defaults of its experiment; throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& name,
                                    const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
  void validate() const;
};

/// The prepared world shared by every realization.
struct Scenario {
  road::RoadNetwork network;
  road::StateGraph graph;
  road::ShortestPaths sp;
  int origin = 0;
  int destination = 0;
  traffic::CongestionSchedule schedule;
  std::vector<int> sp_route;
  std::vector<int> change_episodes;  // episodes where the set of jammed states changes

  static Scenario build(const ExperimentConfig& cfg);
};

struct EpisodeRecord {
  int realization = 0;
  int episode = 0;
  std::string token_id;
  double travel_time = 0.0;
  double travel_distance = 0.0;
  bool completed = false;
  std::vector<int> route;
};

/// What the recommendation looked like at the end of one episode.
struct ProbeSample {
  std::vector<int> route;
  bool fresh = true;      // false when the last valid route was reused
  double expected_time = 0.0;
  double optimum_time = 0.0;
  bool avoids_jams = false;
  bool is_shortest = false;
  double travel_time = 0.0;  // realized in the episode's conditions
  double travel_distance = 0.0;
};

struct ChangeMetrics {
  int episode = 0;
  bool congested_after = false;
  std::optional<int> learn;    // within tolerance of the optimum
  std::optional<int> avoid;    // avoids every jammed state (congested windows)
  std::optional<int> restore;  // back on the shortest path (free windows)
};

struct RealizationResult {
  int realization = 0;
  int tokens = 0;
  std::vector<EpisodeRecord> records;
  std::vector<ProbeSample> probes;
  std::vector<ChangeMetrics> changes;
  std::vector<traffic::EpisodeConditions> env_trace;  // only when requested
  std::size_t ledger_sites = 0;
  std::size_t ledger_writes = 0;
  std::size_t traversals = 0;
  bool ledger_audit_ok = true;
  bool replay_ok = true;
};

struct RunOptions {
  bool keep_env_trace = false;
  std::optional<std::filesystem::path> artifact_dir;  // realization-0 side outputs
};

struct TokenCountResult {
  int tokens = 0;
  std::vector<RealizationResult> realizations;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TokenCountResult> runs;
  nlohmann::json summary;
};

RealizationResult run_realization(const Scenario& sc, const ExperimentConfig& cfg, int tokens, int realization,
                                  const RunOptions& opts = {});

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

nlohmann::json summarize(const ExperimentConfig& cfg, const Scenario& sc, const std::vector<TokenCountResult>& runs);

inline constexpr const char* kCsvHeader =
    "realization,episode,token_id,travel_time_s,travel_distance_m,completed,route";

void write_records_csv(const ExperimentResult& result, std::ostream& out);

/// Writes records.csv, summary.json and config.echo.json into `dir`.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// out/<exp>/<UTC timestamp>, made unique if it already exists.
std::filesystem::path timestamped_dir(const std::filesystem::path& root, const std::string& exp);

/// Non-learning vehicle released at the end of each episode on the current
/// recommendation from O; reuses the last valid route when the policy does not reach D.
class TestVehicle {
 public:
  // `initial_route` is the free-flow shortest route; it doubles as the reference for is_shortest.
  TestVehicle(const road::StateGraph& g, int origin, int destination, std::vector<int> initial_route);

  ProbeSample release(const rl::PolicyTable& policy, const traffic::TrafficEnv& env);
  const std::vector<int>& last_valid() const { return last_valid_; }

 private:
  const road::StateGraph* graph_;
  int origin_;
  int destination_;
  std::vector<int> shortest_;
  std::vector<int> last_valid_;
};

/// Replays a sequence of policy snapshots, snapshot i against episode i of `env`.
std::vector<ProbeSample> run_test_vehicle(const std::vector<rl::PolicyTable>& snapshots, traffic::TrafficEnv& env,
                                          int origin, int destination, const std::vector<int>& initial_route);

}  // namespace sptoken::harness
