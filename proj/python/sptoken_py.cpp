// Python bindings. Structured values cross the boundary as JSON text; the package
// __init__ turns them into dicts.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "sptoken/apow.hpp"
#include "sptoken/experiment.hpp"
#include "sptoken/learner.hpp"
#include "sptoken/ledger.hpp"
#include "sptoken/reward.hpp"
#include "sptoken/road_network.hpp"

namespace py = pybind11;
using namespace sptoken;
using nlohmann::json;

namespace {

Bytes to_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

// A ledger with its own tip-selection generator.
class PyLedger {
 public:
  explicit PyLedger(std::uint64_t seed) : rng_(seed) {}

  std::string attach(const std::string& issuer, std::optional<std::string> token, const py::bytes& payload,
                     std::int64_t timestamp_ms, std::uint32_t difficulty_bits) {
    SiteDraft d;
    d.issuer_id = issuer;
    d.token_id = std::move(token);
    d.payload = to_bytes(payload);
    d.timestamp_ms = timestamp_ms;
    d.difficulty_bits = difficulty_bits;
    py::gil_scoped_release nogil;
    return ledger_.attach(d, rng_).id.hex();
  }

  std::size_t size() const { return ledger_.size(); }
  std::string genesis() const { return ledger_.genesis_id().hex(); }

  std::vector<std::string> tips() const {
    std::vector<std::string> out;
    for (const auto& d : ledger_.tips()) out.push_back(d.hex());
    return out;
  }

  std::vector<std::string> parents(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& d : ledger_.get(Digest::from_hex(id)).parent_ids) out.push_back(d.hex());
    return out;
  }

  std::string audit() const {
    const auto a = ledger_.audit();
    return json{{"ok", a.ok()},
                {"acyclic", a.acyclic},
                {"tips_consistent", a.tips_consistent},
                {"genesis_reachable", a.genesis_reachable},
                {"pow_valid", a.pow_valid},
                {"ids_valid", a.ids_valid},
                {"sites", a.sites}}
        .dump();
  }

 private:
  Ledger ledger_;
  Rng rng_;
};

std::string grid_states(const std::string& grid_json) {
  const auto spec = road::GridSpec::from_json(json::parse(grid_json));
  const auto net = road::generate_grid(spec);
  const auto g = road::merge_states(net);
  return json{{"links", net.links().size()}, {"states", g.size()}, {"mean_length", g.mean_length()}}.dump();
}

std::string shortest_paths(const std::string& grid_json, int destination) {
  const auto g = road::merge_states(road::generate_grid(road::GridSpec::from_json(json::parse(grid_json))));
  const auto sp = road::shortest_path_policy(g, destination);
  std::string policy;
  for (auto a : sp.policy) policy.push_back(road::symbol(a));
  json dist = json::array();
  for (int s = 0; s < g.size(); ++s)
    dist.push_back(sp.reachable[s] ? json(sp.distance[s]) : json(nullptr));
  return json{{"policy", policy}, {"distance", dist}}.dump();
}

std::string zero_data_plan(const std::string& grid_json, int destination, int horizon) {
  const auto g = road::merge_states(road::generate_grid(road::GridSpec::from_json(json::parse(grid_json))));
  const auto sp = road::shortest_path_policy(g, destination);
  rl::MubevLearner l(g, horizon);
  l.plan(sp.policy);
  return l.policy().to_json(0).dump();
}

std::string reward(const std::string& inputs_json, const std::string& params_json) {
  const auto in = json::parse(inputs_json);
  const auto pj = json::parse(params_json);
  rl::RewardParams p;
  p.alpha_time = pj.value("alpha_time", p.alpha_time);
  p.beta = pj.value("beta", p.beta);
  p.w_distance = pj.value("w_distance", p.w_distance);
  p.w_time = pj.value("w_time", p.w_time);
  p.omega = pj.value("omega", p.omega);
  p.r_max = pj.value("r_max", p.r_max);
  p.mean_state_length = pj.value("mean_state_length", 100.0);
  rl::RewardInputs r;
  r.moved = in.value("moved", true);
  r.at_destination = in.value("at_destination", false);
  r.next_is_destination = in.value("next_is_destination", false);
  r.dist_current = in.value("dist_current", 0.0);
  r.len_current = in.value("len_current", 0.0);
  r.dist_next = in.value("dist_next", 0.0);
  r.travel_time = in.value("travel_time", 0.0);
  r.ry_next = in.value("ry_next", 0.0);
  r.tau_min_next = in.value("tau_min_next", 0.0);
  r.len_next = in.value("len_next", 0.0);
  const auto b = rl::evaluate_reward(r, p);
  return json{{"distance", b.distance}, {"time", b.time}, {"total", b.total}}.dump();
}

std::string apow_round(const std::string& round_json, std::uint64_t seed) {
  const auto round = apow::round_from_json(json::parse(round_json));
  Rng rng(seed);
  const auto res = apow::run_round(round, rng);
  return apow::round_result_to_json(round, res).dump();
}

std::string run_experiment(const std::string& config_json, const std::string& name,
                           std::optional<std::string> out_dir) {
  const auto cfg = harness::ExperimentConfig::from_json(json::parse(config_json), name);
  harness::ExperimentResult res;
  {
    py::gil_scoped_release nogil;
    res = harness::run_experiment(cfg);
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      harness::write_outputs(res, *out_dir);
    }
  }
  return res.summary.dump();
}

std::string default_config(const std::string& name) { return harness::ExperimentConfig::defaults(name).to_json().dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "token-gated ledger, road-network RL and experiment harness";

  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("sha256_hex", [](const py::bytes& b) { return sha256(to_bytes(b)).hex(); });
  m.def(
      "solve_pow",
      [](const py::bytes& canonical, std::uint32_t bits) {
        const auto s = solve_pow(to_bytes(canonical), bits);
        return py::make_tuple(s.nonce, s.attempts);
      },
      py::arg("canonical"), py::arg("difficulty_bits"));
  m.def(
      "pow_ok",
      [](const py::bytes& canonical, std::uint64_t nonce, std::uint32_t bits) {
        return leading_zero_bits(pow_hash(to_bytes(canonical), nonce)) >= static_cast<int>(bits);
      },
      py::arg("canonical"), py::arg("nonce"), py::arg("difficulty_bits"));

  py::class_<PyLedger>(m, "Ledger")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 1)
      .def("attach", &PyLedger::attach, py::arg("issuer"), py::arg("token") = std::nullopt,
           py::arg("payload") = py::bytes(), py::arg("timestamp_ms") = 0, py::arg("difficulty_bits") = 1)
      .def("__len__", &PyLedger::size)
      .def_property_readonly("genesis", &PyLedger::genesis)
      .def("tips", &PyLedger::tips)
      .def("parents", &PyLedger::parents, py::arg("site_id"))
      .def("_audit", &PyLedger::audit);

  m.def("_grid_states", &grid_states);
  m.def("_shortest_paths", &shortest_paths);
  m.def("_zero_data_plan", &zero_data_plan);
  m.def("_reward", &reward);
  m.def("_apow_round", &apow_round);
  m.def("_run_experiment", &run_experiment);
  m.def("_default_config", &default_config);
}
