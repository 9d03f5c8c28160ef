"""Execute scenario experiment blocks and emit JSON/CSV artifacts."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Atlas, Point
from .morphisms import (
    check_liftable,
    morphism_from_lifting,
    verify_global_in_time,
    verify_trajectory_preserving,
)
from .reach import is_reachability_set, reach, stlc_probe
from .scenario import Scenario
from .second_order import is_second_order
from .systems import (
    Schedule,
    control_system_from_tcs,
    integrate,
    tcs_from_control_system,
)


@dataclass
class RunResult:
    scenario: str
    seed: int
    experiments: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    wall_clock: float = 0.0
    summary_path: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(e["verdict"] for e in self.experiments)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "experiments": self.experiments,
        }


def _point(atlas: Atlas, spec) -> Point:
    chart = spec.get("chart", atlas.charts[0].chart_id)
    return atlas.normalize(chart, np.asarray(spec["coords"], dtype=float))


def _round(x, digits=12):
    if isinstance(x, float):
        return round(x, digits)
    if isinstance(x, (list, tuple)):
        return [_round(v, digits) for v in x]
    if isinstance(x, dict):
        return {k: _round(v, digits) for k, v in x.items()}
    if isinstance(x, (np.floating,)):
        return round(float(x), digits)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _apply_overrides(exp: dict, overrides: Optional[dict]) -> dict:
    exp = dict(exp)
    if not overrides:
        return exp
    for key in ("grid", "dwell", "horizon", "step"):
        if overrides.get(key) is not None and key in exp:
            exp[key] = overrides[key]
    if overrides.get("tol") is not None:
        for key in ("tol", "tolerance"):
            if key in exp:
                exp[key] = overrides["tol"]
    return exp


def _run_reach(s: Scenario, exp: dict, seed: int, out_dir: Optional[Path]):
    sys = s.system(exp["system"])
    starts = exp.get("starts") or [exp["start"]]
    coverages = []
    artifacts = []
    min_cov = exp.get("min_coverage")
    verdict = True
    for i, spec in enumerate(starts):
        start = _point(sys.atlas, spec)
        rep = reach(sys, start, exp["grid"], exp["dwell"], exp["horizon"],
                    substeps=exp.get("substeps", 10))
        coverages.append(rep.coverage)
        if min_cov is not None and rep.coverage < min_cov:
            verdict = False
        if out_dir is not None:
            name = f"{exp['name']}_{i}.csv"
            rep.to_csv(out_dir / name)
            artifacts.append(name)
    metrics = {
        "coverage": coverages,
        "min_coverage": min_cov,
        "grid": exp["grid"],
        "dwell": exp["dwell"],
        "horizon": exp["horizon"],
        "artifacts": artifacts,
    }
    return verdict, metrics


def _run_reach_set(s: Scenario, exp: dict, seed: int, out_dir):
    sys = s.system(exp["system"])
    points = [_point(sys.atlas, spec) for spec in exp["points"]]
    ok, witness = is_reachability_set(
        sys, points, exp["dwell"], exp["horizon"], exp["grid"],
        substeps=exp.get("substeps", 10))
    expect = exp.get("expect", True)
    metrics = {
        "mutually_reachable": bool(ok),
        "expected": expect,
        "pairs_ok": int(witness.sum()),
        "pairs_total": int(witness.size),
    }
    return bool(ok) == expect, metrics


def _run_stlc(s: Scenario, exp: dict, seed: int, out_dir):
    sys = s.system(exp["system"])
    x0 = _point(sys.atlas, exp["start"])
    verdicts = stlc_probe(sys, x0, exp["times"], exp["grid"],
                          dwell=exp.get("dwell"), substeps=exp.get("substeps", 16))
    expect = exp.get("expect", True)
    if isinstance(expect, bool):
        expect = [expect] * len(verdicts)
    metrics = {"times": list(exp["times"]), "stlc": [bool(v) for v in verdicts],
               "expected": expect}
    return [bool(v) for v in verdicts] == expect, metrics


def _run_verify(s: Scenario, exp: dict, seed: int, out_dir):
    m = s.morphisms[exp["morphism"]]
    target = s.system(exp["target_system"])
    report = verify_trajectory_preserving(
        m, target,
        samples=exp.get("samples", 300),
        schedules=exp.get("schedules", 5),
        tolerance=exp.get("tolerance"),
        h=exp.get("step", 1e-3),
        seed=seed,
    )
    expect = exp.get("expect", True)
    metrics = {
        "worst_residual": report["worst_residual"],
        "tolerance": report["tolerance"],
        "samples": report["samples"],
        "trajectory_excess": report["trajectory_excess"],
        "expected": expect,
    }
    return report["pass"] == expect, metrics


def _run_global(s: Scenario, exp: dict, seed: int, out_dir):
    m = s.morphisms[exp["morphism"]]
    target = s.system(exp["target_system"])
    starts = [_point(m.phi.source, spec) for spec in exp["starts"]]
    report = verify_global_in_time(m, target, starts, exp["horizon"],
                                   h=exp.get("step", 1e-3))
    expect = exp.get("expect", True)
    if isinstance(expect, str):
        expect = expect == "pass"
    gaps = [abs(d["escape_up"] - d["escape_down"]) for d in report["details"]]
    metrics = {
        "global_in_time": report["pass"],
        "expected": expect,
        "max_escape_gap": max(gaps) if gaps else 0.0,
        "tolerance": report["tolerance"],
        "horizon": exp["horizon"],
    }
    return report["pass"] == expect, metrics


def _run_liftable(s: Scenario, exp: dict, seed: int, out_dir):
    up = s.system(exp["upstairs"])
    down = s.system(exp["downstairs"])
    phi = s.maps[exp["map"]]
    sigma1 = control_system_from_tcs(up)
    sigma2 = control_system_from_tcs(down)
    ok, mapping = check_liftable(sigma1, sigma2, phi,
                                 tol=exp.get("tol", 1e-6), seed=seed)
    expect = exp.get("expect", True)
    verdict = ok == expect
    metrics = {
        "liftable": bool(ok),
        "expected": expect,
        "mapped_controls": sum(1 for _, m in mapping if m is not None),
        "total_controls": len(mapping),
    }
    if ok and exp.get("verify", False):
        m = morphism_from_lifting(mapping, sigma1, sigma2, phi, seed=seed)
        report = verify_trajectory_preserving(
            m, down, samples=exp.get("samples", 200),
            schedules=exp.get("schedules", 3), seed=seed)
        metrics["verify_pass"] = report["pass"]
        metrics["verify_worst_residual"] = report["worst_residual"]
        verdict = verdict and report["pass"]
    return verdict, metrics


def _run_roundtrip(s: Scenario, exp: dict, seed: int, out_dir):
    sys = s.system(exp["system"])
    cs = control_system_from_tcs(sys)
    back = tcs_from_control_system(cs)
    same = back.generators == sys.generators
    rng = np.random.default_rng(seed)
    pts = sys.atlas.sample(rng, exp.get("samples", 40))
    worst = 0.0
    for g, b in zip(sys.generators, back.generators):
        for p in pts:
            worst = max(worst, float(np.max(np.abs(g.at(p) - b.at(p)))))
    metrics = {"generators": len(sys.generators), "exact": bool(same),
               "max_residual": worst}
    return bool(same) and worst == 0.0, metrics


def _run_second_order(s: Scenario, exp: dict, seed: int, out_dir):
    so = s.second_order[exp["system"]]
    ok, worst = is_second_order(so, samples=exp.get("samples", 200), seed=seed)
    expect = exp.get("expect", True)
    metrics = {"second_order": bool(ok), "worst_residual": worst,
               "expected": expect}
    return bool(ok) == expect, metrics


def _run_geodesic(s: Scenario, exp: dict, seed: int, out_dir):
    sys = s.system(exp["system"])
    start = _point(sys.atlas, exp["start"])
    c = float(exp["c"])
    x0, y0 = float(start.coords[0]), float(start.coords[1])
    tol = exp.get("tol", 1e-6)
    h = exp.get("step", 1e-3)
    worst = 0.0
    for t in exp["times"]:
        traj = integrate(sys, start, Schedule.of((0, float(t))), h)
        end = traj.endpoint.coords
        denom = 1.0 + c * y0 * t
        y_exact = y0 / denom
        x_exact = x0 + (np.log(denom) / c if c != 0.0 else y0 * t)
        worst = max(worst, abs(end[0] - x_exact), abs(end[1] - y_exact))
    metrics = {"times": list(exp["times"]), "max_error": worst, "tol": tol}
    return worst <= tol, metrics


_HANDLERS = {
    "reach": _run_reach,
    "reachability-set": _run_reach_set,
    "stlc": _run_stlc,
    "verify": _run_verify,
    "global-in-time": _run_global,
    "liftable": _run_liftable,
    "roundtrip": _run_roundtrip,
    "second-order-check": _run_second_order,
    "geodesic-check": _run_geodesic,
}


def run(scenario: Scenario, seed: int = 0, out_dir=None, overrides=None,
        kinds=None, experiment=None, echo=None) -> RunResult:
    """Run scenario experiments, optionally filtered by kind or name.

    Writes summary.json (plus reach CSVs) to out_dir when given. The summary
    excludes wall-clock time so a fixed (scenario, seed) pair reproduces
    byte-identical output.
    """
    t_start = time.perf_counter()
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
    result = RunResult(scenario=scenario.name, seed=seed)
    for idx, raw_exp in enumerate(scenario.experiments):
        if kinds is not None and raw_exp["kind"] not in kinds:
            continue
        if experiment is not None and raw_exp.get("name") != experiment:
            continue
        exp = _apply_overrides(raw_exp, overrides)
        exp_seed = seed * 100003 + idx
        verdict, metrics = _HANDLERS[exp["kind"]](scenario, exp, exp_seed, out_path)
        record = {
            "name": exp.get("name", f"experiment-{idx}"),
            "kind": exp["kind"],
            "verdict": bool(verdict),
            "metrics": _round(metrics),
        }
        result.experiments.append(record)
        result.artifacts.extend(record["metrics"].get("artifacts", [])
                                if isinstance(metrics, dict) else [])
        if echo is not None:
            echo(f"[{'PASS' if verdict else 'FAIL'}] {record['name']} ({exp['kind']})")
    if out_path is not None:
        summary = out_path / "summary.json"
        summary.write_text(json.dumps(result.summary(), sort_keys=True, indent=2)
                           + "\n")
        result.summary_path = str(summary)
    result.wall_clock = time.perf_counter() - t_start
    return result
