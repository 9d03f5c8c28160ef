"""Scenario parsing, the experiment runner, determinism, and the CLI."""

import json

import pytest

from liftreach.cli import main
from liftreach.errors import ParseError, UnresolvedReference
from liftreach.runner import run
from liftreach.scenario import (
    builtin_scenario_names,
    expected_verdicts,
    load_builtin,
    parse_scenario,
)

EXPECTED_NAMES = ["bundle", "circle", "connection-1d", "double-integrator",
                  "improper", "mobius", "projection"]


def test_builtin_names():
    assert builtin_scenario_names() == EXPECTED_NAMES


def test_all_builtins_parse(scenarios):
    for name, s in scenarios.items():
        assert s.name == name
        assert s.experiments


def test_mobius_scenario_shape(scenarios):
    s = scenarios["mobius"]
    assert set(s.atlases) == {"band", "s1"}
    assert "mlift" in s.morphisms
    assert "mlift.augmented" in s.systems
    assert not s.kernels["mlift"].global_ok  # chartwise sections do not glue


def test_bundle_kernel_is_global(scenarios):
    assert scenarios["bundle"].kernels["blift"].global_ok


def test_all_builtin_verdicts_match_expected(scenario_runs):
    for name, result in scenario_runs.items():
        expected = expected_verdicts(name)
        got = {e["name"]: e["verdict"] for e in result.experiments}
        assert got == expected, f"verdict mismatch in scenario {name!r}"


def test_summaries_are_byte_identical_for_fixed_seed(tmp_path):
    s = load_builtin("circle")
    run(s, seed=5, out_dir=tmp_path / "a")
    run(s, seed=5, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "summary.json").read_bytes()
    b = (tmp_path / "b" / "summary.json").read_bytes()
    assert a == b


def test_summary_schema(scenario_runs):
    result = scenario_runs["circle"]
    summary = json.loads(json.dumps(result.summary()))
    assert set(summary) == {"scenario", "seed", "experiments"}
    for e in summary["experiments"]:
        assert set(e) == {"name", "kind", "verdict", "metrics"}
        assert isinstance(e["verdict"], bool)


def test_reach_experiments_emit_csv(scenario_runs):
    result = scenario_runs["mobius"]
    reach_exp = next(e for e in result.experiments if e["name"] == "reach-band")
    assert len(reach_exp["metrics"]["artifacts"]) == 5


def test_parse_error_unknown_atlas_kind():
    with pytest.raises(ParseError, match="unknown atlas kind"):
        parse_scenario({"atlases": {"m": {"kind": "sphere"}}})


def test_parse_error_bad_expression():
    spec = {
        "atlases": {"m": {"kind": "interval", "box": [-1, 1]}},
        "fields": {"f": {"atlas": "m", "exprs": ["frob(x)"]}},
    }
    with pytest.raises(ParseError, match="unknown function 'frob'"):
        parse_scenario(spec)


def test_parse_error_invalid_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ParseError, match="invalid JSON"):
        parse_scenario(p)


def test_unresolved_references():
    with pytest.raises(UnresolvedReference):
        parse_scenario({"fields": {"f": {"atlas": "ghost", "exprs": ["1"]}}})
    with pytest.raises(UnresolvedReference):
        parse_scenario({
            "atlases": {"m": {"kind": "interval", "box": [-1, 1]}},
            "systems": {"s": {"atlas": "m", "generators": ["ghost"]}},
        })
    with pytest.raises(UnresolvedReference):
        parse_scenario({"experiments": [{"kind": "reach", "system": "ghost",
                                         "grid": 4, "dwell": 0.1,
                                         "horizon": 1.0}]})


def test_unknown_experiment_kind():
    with pytest.raises(ParseError, match="unknown experiment kind"):
        parse_scenario({"experiments": [{"kind": "teleport"}]})


def test_run_filters_by_kind_and_name(scenarios):
    s = scenarios["circle"]
    only_reach = run(s, kinds=("reach",))
    assert [e["kind"] for e in only_reach.experiments] == ["reach"]
    named = run(s, experiment="stlc-circle")
    assert [e["name"] for e in named.experiments] == ["stlc-circle"]


def test_overrides_change_experiment_parameters(scenarios):
    s = scenarios["circle"]
    result = run(s, kinds=("reach",), overrides={"grid": 10})
    assert result.experiments[0]["metrics"]["grid"] == 10


def test_cli_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out.split()
    assert out == EXPECTED_NAMES


def test_cli_run_writes_summary(tmp_path, capsys):
    code = main(["run", "circle", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["scenario"] == "circle"
    assert summary["seed"] == 3
    assert all(e["verdict"] for e in summary["experiments"])
    out = capsys.readouterr().out
    assert "[PASS]" in out


def test_cli_exit_one_on_failure(tmp_path, capsys):
    """Tightening the horizon below the travel time breaks full coverage."""
    code = main(["reach", "circle", "--experiment", "reach-circle",
                 "--horizon", "0.5"])
    assert code == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_cli_verify_subcommand(capsys):
    assert main(["verify", "improper"]) == 0
    out = capsys.readouterr().out
    assert "escape-mismatch" in out and "verify-badlift" in out


def test_cli_liftable_subcommand(capsys):
    assert main(["liftable", "projection"]) == 0
    out = capsys.readouterr().out
    assert "liftable-cube" in out


def test_cli_lift_subcommand(capsys):
    assert main(["lift", "circle"]) == 0
    assert "verify-cover" in capsys.readouterr().out


def test_cli_no_matching_experiments(capsys):
    assert main(["liftable", "connection-1d"]) == 1
    assert "no matching experiments" in capsys.readouterr().out
