"""Python face of the sptoken core: ledger, aPoW rounds, road graphs, rewards, experiments."""

import json as _json

from ._core import ConfigError, Ledger, pow_ok, sha256_hex, solve_pow
from . import _core

__all__ = [
    "ConfigError",
    "Ledger",
    "apow_round",
    "audit",
    "default_config",
    "grid_states",
    "pow_ok",
    "reward",
    "run_experiment",
    "sha256_hex",
    "shortest_paths",
    "solve_pow",
    "zero_data_plan",
]


def audit(ledger):
    return _json.loads(ledger._audit())


def grid_states(**grid):
    """Link and merged-state counts of a generated grid (keys as in the config's network.grid)."""
    return _json.loads(_core._grid_states(_json.dumps(grid)))


def shortest_paths(destination, **grid):
    return _json.loads(_core._shortest_paths(_json.dumps(grid), destination))


def zero_data_plan(destination, horizon=60, **grid):
    return _json.loads(_core._zero_data_plan(_json.dumps(grid), destination, horizon))


def reward(params=None, **inputs):
    return _json.loads(_core._reward(_json.dumps(inputs), _json.dumps(params or {})))


def apow_round(round_spec, seed=1):
    return _json.loads(_core._apow_round(_json.dumps(round_spec), seed))


def default_config(name):
    return _json.loads(_core._default_config(name))


def run_experiment(config, name=None, out_dir=None):
    """Run exp1..exp4 from a config dict; returns the summary dict."""
    name = name or config.get("experiment", "exp1")
    return _json.loads(_core._run_experiment(_json.dumps(config), name, out_dir))
