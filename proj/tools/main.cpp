// sptoken command line: experiments, network tools, aPoW rounds and ledger dumps.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sptoken/apow.hpp"
#include "sptoken/experiment.hpp"
#include "sptoken/ledger.hpp"
#include "sptoken/road_network.hpp"

namespace {

using nlohmann::json;
using namespace sptoken;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

json read_json_file(const std::string& path) {
  if (path == "-") return json::parse(std::cin);
  std::ifstream in(path);
  if (!in) throw harness::ConfigError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw harness::ConfigError(path, e.what());
  }
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
}

struct ExpArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string tokens;
  std::optional<int> episodes;
  std::optional<int> realizations;
  std::optional<int> threads;
  std::string algorithm;
  bool no_ledger = false;
  std::string out = "out";
};

std::vector<int> parse_token_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw harness::ConfigError("tokens", "not an integer list: '" + s + "'");
    }
  }
  return out;
}

int run_exp(const std::string& name, const ExpArgs& a) {
  json j = json::object();
  std::filesystem::path base;
  if (!a.config.empty()) {
    j = read_json_file(a.config);
    base = std::filesystem::path(a.config).parent_path();
  }
  if (a.seed) j["seed"] = *a.seed;
  if (!a.tokens.empty()) j["tokens"] = parse_token_list(a.tokens);
  if (a.episodes) j["episodes"] = *a.episodes;
  if (a.realizations) j["realizations"] = *a.realizations;
  if (a.threads) j["threads"] = *a.threads;
  if (!a.algorithm.empty()) j["algorithm"] = a.algorithm;
  if (a.no_ledger) {
    if (!j.contains("ledger") || !j["ledger"].is_object()) j["ledger"] = json::object();
    j["ledger"]["enabled"] = false;
  }
  const auto cfg = harness::ExperimentConfig::from_json(j, name, base);
  const auto dir = harness::timestamped_dir(a.out, name);
  std::filesystem::create_directories(dir);
  harness::RunOptions opts;
  opts.artifact_dir = dir;
  const auto result = harness::run_experiment(cfg, opts);
  harness::write_outputs(result, dir);
  std::cout << dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPToken simulation laboratory"};
  app.require_subcommand(1);

  ExpArgs exp_args;
  std::vector<std::pair<std::string, CLI::App*>> exps;
  for (const char* name : {"exp1", "exp2", "exp3", "exp4"}) {
    auto* sub = app.add_subcommand(name, std::string("run experiment ") + (name + 3));
    sub->add_option("--config", exp_args.config, "experiment config JSON");
    sub->add_option("--seed", exp_args.seed, "master seed");
    sub->add_option("--tokens", exp_args.tokens, "token counts, comma separated");
    sub->add_option("--episodes", exp_args.episodes, "episodes per realization");
    sub->add_option("--realizations", exp_args.realizations, "number of realizations");
    sub->add_option("--algorithm", exp_args.algorithm, "mubev or ucbq");
    sub->add_option("--threads", exp_args.threads, "worker threads (0: all cores)");
    sub->add_flag("--no-ledger", exp_args.no_ledger, "run the learner without tokens on the ledger");
    sub->add_option("--out", exp_args.out, "output root directory");
    exps.emplace_back(name, sub);
  }

  auto* net = app.add_subcommand("net", "road network tools");
  net->require_subcommand(1);
  auto* gen = net->add_subcommand("gen", "generate a synthetic grid network");
  std::string grid_config, gen_out;
  road::GridSpec grid;
  gen->add_option("--config", grid_config, "grid spec JSON");
  gen->add_option("--nx", grid.nx);
  gen->add_option("--ny", grid.ny);
  gen->add_option("--block", grid.block_length, "block length in meters");
  gen->add_option("--segments", grid.segments, "links per block");
  gen->add_option("--speed", grid.free_speed, "free speed in m/s");
  gen->add_option("--tls-fraction", grid.tls_fraction, "fraction of signalized junctions");
  gen->add_option("--tls-ry", grid.tls_ry, "red+yellow seconds at signals");
  gen->add_option("--seed", grid.seed);
  gen->add_option("--out", gen_out, "output file (default stdout)");

  auto* merge = net->add_subcommand("merge", "emit the merged state graph");
  std::string merge_in, merge_out;
  merge->add_option("--network", merge_in, "network JSON")->required();
  merge->add_option("--out", merge_out, "output file (default stdout)");

  auto* apow_cmd = app.add_subcommand("apow", "adaptive proof of work");
  apow_cmd->require_subcommand(1);
  auto* round = apow_cmd->add_subcommand("round", "simulate one fragmentation round");
  std::string round_in = "-", round_out;
  std::uint64_t round_seed = 1;
  round->add_option("--input", round_in, "round JSON (default stdin)");
  round->add_option("--seed", round_seed);
  round->add_option("--out", round_out, "output file (default stdout)");

  auto* ledger_cmd = app.add_subcommand("ledger", "ledger tools");
  ledger_cmd->require_subcommand(1);
  auto* dump = ledger_cmd->add_subcommand("dump", "dump a ledger log as JSON lines");
  std::string log_path, dump_out;
  dump->add_option("--log", log_path, "binary ledger log")->required();
  dump->add_option("--out", dump_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    for (auto& [name, sub] : exps)
      if (sub->parsed()) return run_exp(name, exp_args);
    if (gen->parsed()) {
      if (!grid_config.empty()) grid = road::GridSpec::from_json(read_json_file(grid_config));
      emit(road::generate_grid(grid).to_json().dump(2) + "\n", gen_out);
    } else if (merge->parsed()) {
      const auto network = road::RoadNetwork::from_json(read_json_file(merge_in));
      emit(road::merge_states(network).to_json().dump(2) + "\n", merge_out);
    } else if (round->parsed()) {
      const auto r = apow::round_from_json(read_json_file(round_in));
      Rng rng(round_seed);
      emit(apow::round_result_to_json(r, apow::run_round(r, rng)).dump(2) + "\n", round_out);
    } else if (dump->parsed()) {
      std::ifstream in(log_path, std::ios::binary);
      if (!in) throw harness::ConfigError("--log", "cannot open " + log_path);
      const auto ledger = Ledger::read_log(in);
      std::ostringstream ss;
      ledger->dump_jsonl(ss);
      emit(ss.str(), dump_out);
    }
    return kOk;
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
