#include "sptoken/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "sptoken/ledger.hpp"
#include "sptoken/seeding.hpp"
#include "sptoken/stats.hpp"
#include "sptoken/tokens.hpp"

namespace sptoken::harness {

using nlohmann::json;

ConfigError::ConfigError(const std::string& path, const std::string& message)
    : std::runtime_error(path + ": " + message), path_(path) {}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "mubev") return Algorithm::kMubev;
  if (s == "ucbq") return Algorithm::kUcbq;
  throw ConfigError("algorithm", "expected mubev or ucbq, got '" + s + "'");
}

const char* to_string(Algorithm a) { return a == Algorithm::kMubev ? "mubev" : "ucbq"; }

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <class T>
void read(const json& j, const std::string& key, T& out, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join(path, key), std::string("wrong type (") + it->type_name() + ")");
  }
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(join(path, it.key()), "unknown field");
}

LocationRef grid_link(int i0, int j0, int i1, int j1) {
  LocationRef r;
  r.junctions = std::array<int, 4>{i0, j0, i1, j1};
  return r;
}

std::string route_string(const std::vector<int>& route) {
  std::string s;
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(route[i]);
  }
  return s;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

LocationRef LocationRef::from_json(const json& j, const std::string& path) {
  require_object(j, path);
  LocationRef r;
  int n = 0;
  if (j.contains("state")) {
    int v = 0;
    read(j, "state", v, path);
    r.state = v;
    ++n;
  }
  if (j.contains("link")) {
    int v = 0;
    read(j, "link", v, path);
    r.link = v;
    ++n;
  }
  if (j.contains("junctions")) {
    std::vector<int> v;
    read(j, "junctions", v, path);
    if (v.size() != 4) throw ConfigError(join(path, "junctions"), "expected [i0, j0, i1, j1]");
    r.junctions = std::array<int, 4>{v[0], v[1], v[2], v[3]};
    ++n;
  }
  if (n != 1) throw ConfigError(path, "give exactly one of state, link, junctions");
  return r;
}

json LocationRef::to_json() const {
  if (state) return {{"state", *state}};
  if (link) return {{"link", *link}};
  const auto& a = *junctions;
  return {{"junctions", {a[0], a[1], a[2], a[3]}}};
}

ExperimentConfig ExperimentConfig::defaults(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.grid = road::GridSpec{};
  c.origin = grid_link(1, 0, 2, 0);
  c.destination = grid_link(9, 0, 10, 0);
  const LocationRef c1 = grid_link(5, 0, 6, 0);
  const LocationRef c2 = grid_link(5, 1, 6, 1);
  if (name == "exp1" || name == "exp4") {
    c.congestion = {{c1, 30, 99}};
    c.episodes = 170;
  } else if (name == "exp2") {
    c.congestion = {{c1, 30, 149}, {c2, 80, 149}};
    c.episodes = 220;
  } else if (name == "exp3") {
    c.congestion = {{c1, 30, 99}};
    c.episodes = 170;
    c.tokens = {1, 5, 10, 20};
    c.random_origins = true;
  } else {
    throw ConfigError("experiment", "unknown experiment '" + name + "'");
  }
  if (name == "exp4") {
    c.algorithm = Algorithm::kUcbq;
    c.tokens = {1, 10};
  }
  c.ucbq.c = 0.01;
  c.ucbq.max_episodes = 0;
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::string& name,
                                             const std::filesystem::path& base_dir) {
  require_object(j, "");
  only_keys(j,
            {"experiment", "network", "turn_thresholds", "origin", "destination", "congestion", "reward",
             "horizon", "tokens", "episodes", "realizations", "seed", "algorithm", "delta", "ucbq", "traffic",
             "relay", "ledger", "origins", "learning", "outputs", "threads"},
            "");
  std::string exp = name;
  read(j, "experiment", exp, "");
  if (!name.empty() && exp != name)
    throw ConfigError("experiment", "config is for '" + exp + "' but '" + name + "' was requested");
  ExperimentConfig c = defaults(exp);

  if (auto it = j.find("network"); it != j.end()) {
    require_object(*it, "network");
    only_keys(*it, {"grid", "file"}, "network");
    if (it->contains("grid") == it->contains("file"))
      throw ConfigError("network", "give exactly one of grid, file");
    if (it->contains("grid")) {
      try {
        c.grid = road::GridSpec::from_json(it->at("grid"));
      } catch (const json::exception& e) {
        throw ConfigError("network.grid", e.what());
      }
      c.network_file.reset();
    } else {
      std::string f;
      read(*it, "file", f, "network");
      std::filesystem::path p(f);
      c.network_file = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      c.grid.reset();
    }
  }
  if (auto it = j.find("turn_thresholds"); it != j.end()) {
    require_object(*it, "turn_thresholds");
    only_keys(*it, {"straight", "partial", "uturn_above"}, "turn_thresholds");
    read(*it, "straight", c.turns.straight, "turn_thresholds");
    read(*it, "partial", c.turns.partial, "turn_thresholds");
    read(*it, "uturn_above", c.turns.uturn_above, "turn_thresholds");
  }
  if (auto it = j.find("origin"); it != j.end()) c.origin = LocationRef::from_json(*it, "origin");
  if (auto it = j.find("destination"); it != j.end()) c.destination = LocationRef::from_json(*it, "destination");
  if (auto it = j.find("congestion"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("congestion", "expected an array");
    c.congestion.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string p = "congestion[" + std::to_string(i) + "]";
      const json& e = (*it)[i];
      require_object(e, p);
      only_keys(e, {"state", "link", "junctions", "start", "end"}, p);
      if (!e.contains("start") || !e.contains("end")) throw ConfigError(p, "start and end are required");
      json where = e;
      where.erase("start");
      where.erase("end");
      CongestionRef cr;
      cr.where = LocationRef::from_json(where, p);
      read(e, "start", cr.start, p);
      read(e, "end", cr.end, p);
      c.congestion.push_back(cr);
    }
  }
  if (auto it = j.find("reward"); it != j.end()) {
    require_object(*it, "reward");
    only_keys(*it, {"alpha", "beta", "w_distance", "w_time", "omega", "r_max"}, "reward");
    read(*it, "alpha", c.reward.alpha_time, "reward");
    read(*it, "beta", c.reward.beta, "reward");
    read(*it, "w_distance", c.reward.w_distance, "reward");
    read(*it, "w_time", c.reward.w_time, "reward");
    read(*it, "omega", c.reward.omega, "reward");
    read(*it, "r_max", c.reward.r_max, "reward");
  }
  read(j, "horizon", c.horizon, "");
  read(j, "tokens", c.tokens, "");
  read(j, "episodes", c.episodes, "");
  read(j, "realizations", c.realizations, "");
  read(j, "seed", c.seed, "");
  if (j.contains("algorithm")) {
    std::string a;
    read(j, "algorithm", a, "");
    c.algorithm = parse_algorithm(a);
  }
  read(j, "delta", c.delta, "");
  if (auto it = j.find("ucbq"); it != j.end()) {
    require_object(*it, "ucbq");
    only_keys(*it, {"c", "k_max"}, "ucbq");
    read(*it, "c", c.ucbq.c, "ucbq");
    read(*it, "k_max", c.ucbq.max_episodes, "ucbq");
  }
  if (auto it = j.find("traffic"); it != j.end()) {
    require_object(*it, "traffic");
    only_keys(*it, {"jam_speed", "noise_sigma"}, "traffic");
    read(*it, "jam_speed", c.traffic.jam_speed, "traffic");
    read(*it, "noise_sigma", c.traffic.noise_sigma, "traffic");
  }
  if (auto it = j.find("relay"); it != j.end()) {
    require_object(*it, "relay");
    only_keys(*it, {"kind", "rate", "ttl"}, "relay");
    std::string kind = c.relay.kind == rl::RelayModel::Kind::kInstant ? "instant" : "poisson";
    read(*it, "kind", kind, "relay");
    if (kind == "instant") c.relay.kind = rl::RelayModel::Kind::kInstant;
    else if (kind == "poisson") c.relay.kind = rl::RelayModel::Kind::kPoisson;
    else throw ConfigError("relay.kind", "expected instant or poisson");
    read(*it, "rate", c.relay.rate, "relay");
    read(*it, "ttl", c.relay.ttl, "relay");
  }
  if (auto it = j.find("ledger"); it != j.end()) {
    require_object(*it, "ledger");
    only_keys(*it, {"enabled", "difficulty_bits", "observer_coverage"}, "ledger");
    read(*it, "enabled", c.ledger, "ledger");
    read(*it, "difficulty_bits", c.difficulty_bits, "ledger");
    read(*it, "observer_coverage", c.observer_coverage, "ledger");
  }
  if (j.contains("origins")) {
    std::string o;
    read(j, "origins", o, "");
    if (o == "fixed") c.random_origins = false;
    else if (o == "random") c.random_origins = true;
    else throw ConfigError("origins", "expected fixed or random");
  }
  if (auto it = j.find("learning"); it != j.end()) {
    require_object(*it, "learning");
    only_keys(*it, {"tolerance", "persistence", "window"}, "learning");
    read(*it, "tolerance", c.learning.tolerance, "learning");
    read(*it, "persistence", c.learning.persistence, "learning");
    read(*it, "window", c.learning.window, "learning");
  }
  if (auto it = j.find("outputs"); it != j.end()) {
    require_object(*it, "outputs");
    only_keys(*it, {"routes", "policy_snapshots", "checkpoint", "events", "trace"}, "outputs");
    read(*it, "routes", c.outputs.routes, "outputs");
    read(*it, "policy_snapshots", c.outputs.policy_snapshots, "outputs");
    read(*it, "checkpoint", c.outputs.checkpoint, "outputs");
    read(*it, "events", c.outputs.events, "outputs");
    read(*it, "trace", c.outputs.trace, "outputs");
  }
  read(j, "threads", c.threads, "");
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = name;
  if (grid) j["network"] = {{"grid", grid->to_json()}};
  else j["network"] = {{"file", network_file->string()}};
  j["turn_thresholds"] = {{"straight", turns.straight}, {"partial", turns.partial}, {"uturn_above", turns.uturn_above}};
  j["origin"] = origin.to_json();
  j["destination"] = destination.to_json();
  j["congestion"] = json::array();
  for (const auto& c : congestion) {
    json e = c.where.to_json();
    e["start"] = c.start;
    e["end"] = c.end;
    j["congestion"].push_back(e);
  }
  j["reward"] = {{"alpha", reward.alpha_time}, {"beta", reward.beta}, {"w_distance", reward.w_distance},
                 {"w_time", reward.w_time}, {"omega", reward.omega}, {"r_max", reward.r_max}};
  j["horizon"] = horizon;
  j["tokens"] = tokens;
  j["episodes"] = episodes;
  j["realizations"] = realizations;
  j["seed"] = seed;
  j["algorithm"] = harness::to_string(algorithm);
  j["delta"] = delta;
  j["ucbq"] = {{"c", ucbq.c}, {"k_max", ucbq.max_episodes}};
  j["traffic"] = {{"jam_speed", traffic.jam_speed}, {"noise_sigma", traffic.noise_sigma}};
  j["relay"] = {{"kind", relay.kind == rl::RelayModel::Kind::kInstant ? "instant" : "poisson"},
                {"rate", relay.rate},
                {"ttl", relay.ttl}};
  j["ledger"] = {{"enabled", ledger}, {"difficulty_bits", difficulty_bits}, {"observer_coverage", observer_coverage}};
  j["origins"] = random_origins ? "random" : "fixed";
  j["learning"] = {{"tolerance", learning.tolerance}, {"persistence", learning.persistence}, {"window", learning.window}};
  j["outputs"] = {{"routes", outputs.routes},
                  {"policy_snapshots", outputs.policy_snapshots},
                  {"checkpoint", outputs.checkpoint},
                  {"events", outputs.events},
                  {"trace", outputs.trace}};
  j["threads"] = threads;
  return j;
}

void ExperimentConfig::validate() const {
  if (grid.has_value() == network_file.has_value()) throw ConfigError("network", "give exactly one of grid, file");
  if (episodes < 1) throw ConfigError("episodes", "must be >= 1");
  if (realizations < 1) throw ConfigError("realizations", "must be >= 1");
  if (horizon < 1) throw ConfigError("horizon", "must be >= 1");
  if (tokens.empty()) throw ConfigError("tokens", "need at least one token count");
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 1) throw ConfigError("tokens[" + std::to_string(i) + "]", "must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta", "must be in (0, 1]");
  if (!(reward.alpha_time >= 1.0)) throw ConfigError("reward.alpha", "must be >= 1");
  if (!(reward.beta > 0.0)) throw ConfigError("reward.beta", "must be > 0");
  if (!(reward.w_distance >= 0.0)) throw ConfigError("reward.w_distance", "must be >= 0");
  if (!(reward.w_time >= 0.0)) throw ConfigError("reward.w_time", "must be >= 0");
  if (!(reward.omega >= 0.0)) throw ConfigError("reward.omega", "must be >= 0");
  if (!(reward.r_max > 0.0)) throw ConfigError("reward.r_max", "must be > 0");
  if (!(ucbq.c >= 0.0)) throw ConfigError("ucbq.c", "must be >= 0");
  if (ucbq.max_episodes < 0) throw ConfigError("ucbq.k_max", "must be >= 0 (0 means the episode budget)");
  if (!(traffic.jam_speed > 0.0)) throw ConfigError("traffic.jam_speed", "must be > 0");
  if (!(traffic.noise_sigma >= 0.0)) throw ConfigError("traffic.noise_sigma", "must be >= 0");
  if (relay.kind == rl::RelayModel::Kind::kPoisson && !(relay.rate > 0.0)) throw ConfigError("relay.rate", "must be > 0");
  if (!(relay.ttl > 0.0)) throw ConfigError("relay.ttl", "must be > 0");
  if (difficulty_bits < 1 || difficulty_bits > kMaxDifficultyBits) throw ConfigError("ledger.difficulty_bits", "must be in [1, 32]");
  if (!(observer_coverage > 0.0 && observer_coverage <= 1.0))
    throw ConfigError("ledger.observer_coverage", "must be in (0, 1]");
  if (ledger && observer_coverage < 1.0)
    throw ConfigError("ledger.observer_coverage", "token runs need an observer at every state");
  if (!(learning.tolerance >= 0.0)) throw ConfigError("learning.tolerance", "must be >= 0");
  if (learning.persistence < 1) throw ConfigError("learning.persistence", "must be >= 1");
  if (learning.window < 0) throw ConfigError("learning.window", "must be >= 0");
  const auto& ps = outputs.policy_snapshots;
  if (ps != "none" && ps != "final" && ps != "all") throw ConfigError("outputs.policy_snapshots", "expected none, final or all");
  for (std::size_t i = 0; i < congestion.size(); ++i) {
    const std::string p = "congestion[" + std::to_string(i) + "]";
    if (congestion[i].start < 0) throw ConfigError(p + ".start", "must be >= 0");
    if (congestion[i].start > congestion[i].end) throw ConfigError(p, "start > end");
  }
  if (threads < 0) throw ConfigError("threads", "must be >= 0");
}

namespace {

int resolve(const LocationRef& ref, const road::RoadNetwork& net, const road::StateGraph& g,
            const std::optional<road::GridSpec>& grid, const std::string& path) {
  if (ref.state) {
    if (*ref.state < 0 || *ref.state >= g.size()) throw ConfigError(path + ".state", "no such state");
    return *ref.state;
  }
  int link = -1;
  if (ref.link) {
    link = *ref.link;
    if (!net.has_link(link)) throw ConfigError(path + ".link", "no such link");
  } else {
    if (!grid) throw ConfigError(path + ".junctions", "junction references need a generated grid");
    const auto& a = *ref.junctions;
    for (int k = 0; k < 4; k += 2)
      if (a[k] < 0 || a[k] >= grid->nx || a[k + 1] < 0 || a[k + 1] >= grid->ny)
        throw ConfigError(path + ".junctions", "junction outside the grid");
    link = net.find_link_toward(road::grid_node(*grid, a[0], a[1]), road::grid_node(*grid, a[2], a[3]));
    if (link < 0) throw ConfigError(path + ".junctions", "no link joins these junctions");
  }
  return g.state_of_link(link);
}

}  // namespace

Scenario Scenario::build(const ExperimentConfig& cfg) {
  cfg.validate();
  Scenario sc;
  if (cfg.grid) {
    sc.network = road::generate_grid(*cfg.grid);
  } else {
    std::ifstream in(*cfg.network_file);
    if (!in) throw ConfigError("network.file", "cannot open " + cfg.network_file->string());
    try {
      sc.network = road::RoadNetwork::from_json(json::parse(in));
    } catch (const std::exception& e) {
      throw ConfigError("network.file", e.what());
    }
  }
  sc.graph = road::merge_states(sc.network, cfg.turns);
  sc.origin = resolve(cfg.origin, sc.network, sc.graph, cfg.grid, "origin");
  sc.destination = resolve(cfg.destination, sc.network, sc.graph, cfg.grid, "destination");
  sc.sp = road::shortest_path_policy(sc.graph, sc.destination);
  for (int s = 0; s < sc.graph.size(); ++s)
    if (!sc.sp.reachable[s]) throw ConfigError("destination", "not reachable from state " + std::to_string(s));
  for (std::size_t i = 0; i < cfg.congestion.size(); ++i) {
    const auto& c = cfg.congestion[i];
    sc.schedule.entries.push_back(
        {resolve(c.where, sc.network, sc.graph, cfg.grid, "congestion[" + std::to_string(i) + "]"), c.start, c.end});
  }
  sc.sp_route = sc.sp.route_from(sc.graph, sc.origin);
  for (int e = 1; e < cfg.episodes; ++e) {
    bool changed = false;
    for (const auto& entry : sc.schedule.entries)
      changed |= sc.schedule.congested(entry.state, e) != sc.schedule.congested(entry.state, e - 1);
    if (changed) sc.change_episodes.push_back(e);
  }
  for (int m : cfg.tokens)
    if (m > sc.graph.size()) throw ConfigError("tokens", "more tokens than states");
  return sc;
}

TestVehicle::TestVehicle(const road::StateGraph& g, int origin, int destination, std::vector<int> initial_route)
    : graph_(&g), origin_(origin), destination_(destination), shortest_(initial_route),
      last_valid_(std::move(initial_route)) {}

ProbeSample TestVehicle::release(const rl::PolicyTable& policy, const traffic::TrafficEnv& env) {
  ProbeSample p;
  auto route = policy.rollout(*graph_, origin_, destination_);
  if (route.empty()) {
    p.fresh = false;
    route = last_valid_;
  } else {
    last_valid_ = route;
  }
  p.route = route;
  p.is_shortest = route == shortest_;
  p.expected_time = traffic::expected_route_time(env, route);
  p.optimum_time = traffic::fastest_route(env, origin_, destination_).time;
  p.avoids_jams = true;
  for (std::size_t i = 1; i < route.size(); ++i) {
    const auto out = env.traverse(route[i]);
    p.travel_time += out.travel_time;
    p.travel_distance += out.distance;
    if (out.mode == traffic::Mode::kCongested) p.avoids_jams = false;
  }
  return p;
}

std::vector<ProbeSample> run_test_vehicle(const std::vector<rl::PolicyTable>& snapshots, traffic::TrafficEnv& env,
                                          int origin, int destination, const std::vector<int>& initial_route) {
  TestVehicle v(env.graph(), origin, destination, initial_route);
  std::vector<ProbeSample> out;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    env.begin_episode(static_cast<int>(i));
    out.push_back(v.release(snapshots[i], env));
  }
  return out;
}

namespace {

std::unique_ptr<rl::Learner> make_learner(const Scenario& sc, const ExperimentConfig& cfg) {
  if (cfg.algorithm == Algorithm::kMubev)
    return std::make_unique<rl::MubevLearner>(sc.graph, cfg.horizon, cfg.delta, cfg.reward.r_max);
  rl::UcbQParams p = cfg.ucbq;
  p.delta = cfg.delta;
  p.r_max = cfg.reward.r_max;
  if (p.max_episodes == 0) p.max_episodes = cfg.episodes;
  return std::make_unique<rl::UcbQLearner>(sc.graph, cfg.horizon, p);
}

std::vector<ChangeMetrics> change_metrics(const Scenario& sc, const ExperimentConfig& cfg,
                                          const std::vector<ProbeSample>& probes) {
  std::vector<ChangeMetrics> out;
  for (std::size_t i = 0; i < sc.change_episodes.size(); ++i) {
    const int begin = sc.change_episodes[i];
    const int end = i + 1 < sc.change_episodes.size() ? sc.change_episodes[i + 1] : cfg.episodes;
    ChangeMetrics m;
    m.episode = begin;
    for (const auto& e : sc.schedule.entries) m.congested_after |= sc.schedule.congested(e.state, begin);
    std::vector<bool> learn, avoid, restore;
    for (int e = begin; e < end; ++e) {
      const auto& p = probes[e];
      learn.push_back(p.expected_time <= (1.0 + cfg.learning.tolerance) * p.optimum_time);
      avoid.push_back(p.avoids_jams);
      restore.push_back(p.is_shortest);
    }
    m.learn = stats::episodes_to_learn(learn, cfg.learning.persistence);
    if (m.congested_after) m.avoid = stats::episodes_to_learn(avoid, cfg.learning.persistence);
    else m.restore = stats::episodes_to_learn(restore, cfg.learning.persistence);
    out.push_back(m);
  }
  return out;
}

std::string suffix(int tokens, int realization) {
  return "_m" + std::to_string(tokens) + "_r" + std::to_string(realization);
}

}  // namespace

RealizationResult run_realization(const Scenario& sc, const ExperimentConfig& cfg, int tokens, int realization,
                                  const RunOptions& opts) {
  RealizationResult res;
  res.realization = realization;
  res.tokens = tokens;
  const auto stream = [&](std::uint64_t tag) {
    return derive_seed(cfg.seed, static_cast<std::uint64_t>(realization) * 8 + tag);
  };
  traffic::TrafficEnv env(sc.graph, sc.schedule, cfg.traffic, stream(kEnvStream));
  rl::RewardModel reward(sc.graph, sc.sp, cfg.reward);
  rl::EpisodeRunner runner(sc.graph, reward, cfg.horizon, cfg.relay);
  auto learner = make_learner(sc, cfg);
  std::mt19937_64 agent_rng(stream(kAgentStream));
  std::mt19937_64 relay_rng(stream(kRelayStream));
  Rng ledger_rng(stream(kLedgerStream));

  std::unique_ptr<tokens::TokenRegistry> registry;
  std::unique_ptr<Ledger> ledger;
  rl::LedgerBinding binding;
  if (cfg.ledger) {
    registry = std::make_unique<tokens::TokenRegistry>();
    registry->place_observers(sc.graph.size());
    ledger = std::make_unique<Ledger>();
    binding = {registry.get(), ledger.get(), &ledger_rng, cfg.difficulty_bits};
  }

  const bool artifacts = opts.artifact_dir && realization == 0;
  std::ofstream trace;
  if (artifacts && cfg.outputs.trace) {
    trace.open(*opts.artifact_dir / ("trace" + suffix(tokens, realization) + ".csv"));
    trace << "episode,t,token_id,state,travel_time_s,mode\n";
  }
  const auto& sp_policy = sc.sp.policy;
  TestVehicle test(sc.graph, sc.origin, sc.destination, sc.sp_route);
  double clock = 0.0;
  learner->plan(sp_policy);
  for (int e = 0; e < cfg.episodes; ++e) {
    env.begin_episode(e);
    if (opts.keep_env_trace) res.env_trace.push_back(env.conditions());
    const std::vector<int> origins = cfg.random_origins ? rl::sample_origins(sc.graph.size(), tokens, agent_rng)
                                                        : std::vector<int>(tokens, sc.origin);
    const auto outcome =
        runner.run(learner->policy(), env, origins, e, clock, relay_rng, cfg.ledger ? &binding : nullptr);
    clock = outcome.end_time + 1.0;
    learner->learn(outcome.trajectories());
    learner->plan(sp_policy);

    for (const auto& trip : outcome.trips) {
      EpisodeRecord r{realization, e, trip.token_id, trip.travel_time, trip.travel_distance, trip.completed, {}};
      if (cfg.outputs.routes) r.route = trip.route;
      res.records.push_back(std::move(r));
      for (const auto& st : trip.steps)
        if (st.next != st.state) ++res.traversals;
      if (trace.is_open())
        for (const auto& st : trip.steps)
          if (st.next != st.state)
            trace << e << ',' << st.step << ',' << trip.token_id << ',' << st.next << ',' << fixed6(st.travel_time)
                  << ',' << traffic::to_string(env.mode(st.next)) << '\n';
    }
    res.ledger_writes += outcome.ledger_writes;

    ProbeSample probe = test.release(learner->policy(), env);
    EpisodeRecord r{realization, e, "test", probe.travel_time, probe.travel_distance, true, {}};
    if (cfg.outputs.routes) r.route = probe.route;
    res.records.push_back(std::move(r));
    res.probes.push_back(std::move(probe));

    if (artifacts && cfg.outputs.policy_snapshots == "all") {
      std::ofstream out(*opts.artifact_dir / ("policy" + suffix(tokens, realization) + "_e" + std::to_string(e + 1) + ".json"));
      out << learner->policy().to_json(learner->episode()).dump() << '\n';
    }
  }
  res.changes = change_metrics(sc, cfg, res.probes);

  if (cfg.ledger) {
    res.ledger_sites = ledger->size();
    res.ledger_audit_ok = ledger->audit().ok();
    const auto rep = tokens::replay_check(*ledger, registry->events());
    res.replay_ok = rep.ok && rep.token_sites == res.traversals && rep.deposits == res.traversals;
  }
  if (artifacts) {
    const auto& dir = *opts.artifact_dir;
    if (cfg.outputs.policy_snapshots == "final") {
      std::ofstream out(dir / ("policy" + suffix(tokens, realization) + ".json"));
      out << learner->policy().to_json(learner->episode()).dump() << '\n';
    }
    if (cfg.outputs.checkpoint && cfg.algorithm == Algorithm::kMubev) {
      std::ofstream out(dir / ("checkpoint" + suffix(tokens, realization) + ".bin"), std::ios::binary);
      static_cast<rl::MubevLearner&>(*learner).save(out);
    }
    if (cfg.outputs.events && cfg.ledger) {
      std::ofstream ev(dir / ("events" + suffix(tokens, realization) + ".jsonl"));
      registry->write_events(ev);
      std::ofstream lg(dir / ("ledger" + suffix(tokens, realization) + ".log"), std::ios::binary);
      ledger->write_log(lg);
    }
  }
  return res;
}

namespace {

json interval_json(const std::vector<double>& samples) {
  if (samples.empty()) return nullptr;
  const auto ci = stats::median_ci(samples);
  return {{"median", ci.median}, {"lo", ci.lo}, {"hi", ci.hi}, {"degenerate", ci.degenerate}};
}

// `censor[i]` is what values[i] counts as when it was never learned: the episodes left in
// its segment. The censored mean does not reward a learner for giving up.
json learning_json(const std::vector<std::optional<int>>& values, const std::vector<int>& censor, int window) {
  std::vector<double> learned;
  double censored_sum = 0.0;
  int within = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& v = values[i];
    censored_sum += v ? *v : censor[i];
    if (!v) continue;
    learned.push_back(*v);
    if (*v <= window) ++within;
  }
  const auto ci = stats::mean_ci(learned);
  json j{{"learned", learned.size()},
         {"not_learned", values.size() - learned.size()},
         {"within_window", values.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(values.size())}};
  if (learned.empty()) {
    j["mean"] = j["ci_lo"] = j["ci_hi"] = nullptr;
  } else {
    j["mean"] = ci.mean;
    j["ci_lo"] = ci.lo;
    j["ci_hi"] = ci.hi;
  }
  j["censored_mean"] = values.empty() ? json(nullptr) : json(censored_sum / static_cast<double>(values.size()));
  return j;
}

double incomplete_fraction(const std::vector<RealizationResult>& rs, int from, int to) {
  std::size_t total = 0, incomplete = 0;
  for (const auto& r : rs)
    for (const auto& rec : r.records) {
      if (rec.token_id == "test" || rec.episode < from || rec.episode >= to) continue;
      ++total;
      if (!rec.completed) ++incomplete;
    }
  return total ? static_cast<double>(incomplete) / static_cast<double>(total) : 0.0;
}

}  // namespace

json summarize(const ExperimentConfig& cfg, const Scenario& sc, const std::vector<TokenCountResult>& runs) {
  json s;
  s["experiment"] = cfg.name;
  s["algorithm"] = to_string(cfg.algorithm);
  s["episodes"] = cfg.episodes;
  s["realizations"] = cfg.realizations;
  s["horizon"] = cfg.horizon;
  s["states"] = sc.graph.size();
  s["origin"] = sc.origin;
  s["destination"] = sc.destination;
  s["shortest_route"] = sc.sp_route;
  s["change_episodes"] = sc.change_episodes;
  s["runs"] = json::array();
  std::vector<double> ms, means;
  for (const auto& run : runs) {
    json r;
    r["tokens"] = run.tokens;
    json eps = json::array();
    for (int e = 0; e < cfg.episodes; ++e) {
      std::vector<double> tt, td, vt, vd;
      for (const auto& rr : run.realizations)
        for (const auto& rec : rr.records) {
          if (rec.episode != e) continue;
          if (rec.token_id == "test") {
            vt.push_back(rec.travel_time);
            vd.push_back(rec.travel_distance);
          } else if (rec.token_id == "k" + std::to_string(e) + ".0") {
            tt.push_back(rec.travel_time);
            td.push_back(rec.travel_distance);
          }
        }
      eps.push_back({{"episode", e},
                     {"token_travel_time", interval_json(tt)},
                     {"token_travel_distance", interval_json(td)},
                     {"test_travel_time", interval_json(vt)},
                     {"test_travel_distance", interval_json(vd)},
                     {"incomplete_fraction", incomplete_fraction(run.realizations, e, e + 1)}});
    }
    r["per_episode"] = eps;
    json changes = json::array();
    std::vector<std::optional<int>> pooled;
    std::vector<int> pooled_censor;
    for (std::size_t c = 0; c < sc.change_episodes.size(); ++c) {
      const int begin = sc.change_episodes[c];
      const int length = (c + 1 < sc.change_episodes.size() ? sc.change_episodes[c + 1] : cfg.episodes) - begin;
      std::vector<std::optional<int>> learn, avoid, restore;
      bool congested = false;
      for (const auto& rr : run.realizations) {
        const auto& m = rr.changes[c];
        congested = m.congested_after;
        learn.push_back(m.learn);
        if (m.congested_after) avoid.push_back(m.avoid);
        else restore.push_back(m.restore);
        pooled.push_back(m.learn);
        pooled_censor.push_back(length);
      }
      const std::vector<int> censor(run.realizations.size(), length);
      const int w = cfg.learning.window;
      changes.push_back({{"episode", begin},
                         {"congested", congested},
                         {"learn", learning_json(learn, censor, w)},
                         {"avoid", congested ? learning_json(avoid, censor, w) : json(nullptr)},
                         {"restore", congested ? json(nullptr) : learning_json(restore, censor, w)}});
    }
    r["changes"] = changes;
    r["episodes_to_learn"] = learning_json(pooled, pooled_censor, cfg.learning.window);
    const int w = std::min(cfg.learning.window, cfg.episodes);
    r["incomplete"] = {{"first_window", incomplete_fraction(run.realizations, 0, w)},
                       {"last_window", incomplete_fraction(run.realizations, cfg.episodes - w, cfg.episodes)}};
    std::size_t sites = 0, writes = 0, traversals = 0;
    bool audit = true, replay = true;
    for (const auto& rr : run.realizations) {
      sites += rr.ledger_sites;
      writes += rr.ledger_writes;
      traversals += rr.traversals;
      audit &= rr.ledger_audit_ok;
      replay &= rr.replay_ok;
    }
    r["ledger"] = {{"enabled", cfg.ledger}, {"sites", sites}, {"writes", writes}, {"traversals", traversals},
                   {"audit_ok", audit}, {"replay_ok", replay}};
    if (!r["episodes_to_learn"]["censored_mean"].is_null()) {
      ms.push_back(run.tokens);
      means.push_back(r["episodes_to_learn"]["censored_mean"].get<double>());
    }
    s["runs"].push_back(r);
  }
  if (ms.size() >= 2) {
    json sc_j{{"tokens", ms}, {"mean_episodes_to_learn", means}, {"spearman", stats::spearman(ms, means)}};
    const auto lf = stats::linear_fit(ms, means);
    sc_j["linear_fit"] = {{"slope", lf.slope}, {"intercept", lf.intercept}, {"rss", lf.rss}};
    if (ms.size() >= 3) {
      const auto ef = stats::exponential_fit(ms, means);
      sc_j["exponential_fit"] = {{"a", ef.a}, {"b", ef.b}, {"c", ef.c}, {"rss", ef.rss}};
    }
    s["scaling"] = sc_j;
  }
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Scenario sc = Scenario::build(cfg);
  ExperimentResult result;
  result.config = cfg;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(cfg.threads > 0 ? cfg.threads : hw, cfg.realizations);
  for (int m : cfg.tokens) {
    TokenCountResult run;
    run.tokens = m;
    run.realizations.resize(cfg.realizations);
    std::vector<std::exception_ptr> errors(cfg.realizations);
    std::atomic<int> next{0};
    auto work = [&] {
      for (int r = next++; r < cfg.realizations; r = next++) {
        try {
          run.realizations[r] = run_realization(sc, cfg, m, r, opts);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      }
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    result.runs.push_back(std::move(run));
  }
  result.summary = summarize(cfg, sc, result.runs);
  return result;
}

void write_records_csv(const ExperimentResult& result, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& run : result.runs)
    for (const auto& rr : run.realizations)
      for (const auto& rec : rr.records) {
        std::string id = rec.token_id;
        if (result.runs.size() > 1) id = "m" + std::to_string(run.tokens) + ":" + id;
        out << rec.realization << ',' << rec.episode << ',' << id << ',' << fixed6(rec.travel_time) << ','
            << fixed6(rec.travel_distance) << ',' << (rec.completed ? 1 : 0) << ',' << route_string(rec.route)
            << '\n';
      }
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "records.csv");
    write_records_csv(result, out);
    if (!out) throw std::runtime_error("failed to write records.csv");
  }
  {
    std::ofstream out(dir / "summary.json");
    out << result.summary.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "config.echo.json");
    out << result.config.to_json().dump(2) << '\n';
  }
}

std::filesystem::path timestamped_dir(const std::filesystem::path& root, const std::string& exp) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  std::filesystem::path p = root / exp / buf;
  for (int i = 1; std::filesystem::exists(p); ++i) p = root / exp / (std::string(buf) + "-" + std::to_string(i));
  return p;
}

}  // namespace sptoken::harness
