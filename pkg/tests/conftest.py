"""Shared fixtures: built-in scenarios are parsed and run once per session."""

import pytest

from liftreach.runner import run
from liftreach.scenario import builtin_scenario_names, load_builtin


@pytest.fixture(scope="session")
def scenarios():
    return {name: load_builtin(name) for name in builtin_scenario_names()}


@pytest.fixture(scope="session")
def scenario_runs(scenarios, tmp_path_factory):
    out_root = tmp_path_factory.mktemp("runs")
    return {
        name: run(s, seed=0, out_dir=out_root / name)
        for name, s in scenarios.items()
    }
