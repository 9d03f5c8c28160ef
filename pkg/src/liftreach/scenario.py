"""Declarative scenario files: atlases, maps, fields, systems, morphism
requests, and experiment blocks, resolved into live objects at parse time."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError, UnresolvedReference
from .expressions import compile_expr, compile_vector
from .geometry import (
    Atlas,
    Point,
    SmoothMap,
    VectorField,
    box_atlas,
    circle_atlas,
    combine_fields,
    interval_atlas,
    mobius_atlas,
    torus_atlas,
    union_atlas,
)
from .morphisms import (
    augment_with_kernel,
    kernel_frame,
    lift_system,
    metric_lift_morphism,
)
from .second_order import (
    ConnectionSystem,
    augment_second_order,
    geodesic_spray,
    second_order_lift,
    second_order_system,
    tangent_atlas,
)
from .systems import GeneratedSystem


@dataclass
class Scenario:
    name: str
    atlases: dict
    maps: dict
    fields: dict
    systems: dict          # name -> GeneratedSystem (includes derived *.system / *.augmented)
    morphisms: dict        # name -> Morphism
    kernels: dict          # name -> KernelFrame
    second_order: dict     # name -> SecondOrderSystem
    connections: dict      # name -> ConnectionSystem
    experiments: list
    raw: dict

    def point(self, atlas_name: str, spec) -> Point:
        atlas = self._atlas(atlas_name)
        chart = spec.get("chart", atlas.charts[0].chart_id)
        return atlas.normalize(chart, np.asarray(spec["coords"], dtype=float))

    def _atlas(self, name: str) -> Atlas:
        if name not in self.atlases:
            raise UnresolvedReference(name)
        return self.atlases[name]

    def system(self, name: str) -> GeneratedSystem:
        if name not in self.systems:
            raise UnresolvedReference(name)
        return self.systems[name]


def _build_atlas(name: str, spec: dict) -> Atlas:
    kind = spec.get("kind")
    coords = spec.get("coords")
    metric_exprs = spec.get("metric")
    if kind == "interval":
        lo, hi = spec.get("box", [-1.0, 1.0])
        atlas = interval_atlas(lo, hi, coord_name=(coords or ["x"])[0], name=name)
    elif kind == "box":
        atlas = box_atlas(spec["box"], coord_names=coords, name=name)
    elif kind == "circle":
        atlas = circle_atlas(period=spec.get("period", 2 * np.pi), name=name)
    elif kind == "torus":
        atlas = torus_atlas(periods=spec.get("periods", (2 * np.pi, 2 * np.pi)), name=name)
    elif kind == "mobius":
        atlas = mobius_atlas(name=name)
    elif kind == "union":
        atlas = union_atlas(spec["charts"], coord_names=coords, name=name)
    else:
        raise ParseError(f"unknown atlas kind {kind!r}", where=name)
    if metric_exprs:
        names = atlas.coord_names
        rows = [[compile_expr(e, names) for e in row] for row in metric_exprs]

        def metric_fn(cid, c):
            return np.array([[f(c) for f in row] for row in rows])

        atlas = Atlas(
            dim=atlas.dim, charts=atlas.charts, normalize_raw=atlas.normalize_raw,
            normalize_jacobian=atlas.normalize_jacobian, metric_fn=metric_fn,
            aliases_fn=atlas.aliases_fn, coord_names=atlas.coord_names, name=atlas.name,
        )
    return atlas


def _build_map(name: str, spec: dict, atlases: dict) -> SmoothMap:
    src = atlases.get(spec["source"])
    tgt = atlases.get(spec["target"])
    if src is None:
        raise UnresolvedReference(spec["source"])
    if tgt is None:
        raise UnresolvedReference(spec["target"])
    if len(spec["exprs"]) != tgt.dim:
        raise DimensionMismatch(f"map {name!r} must have {tgt.dim} output expressions")
    value = compile_vector(spec["exprs"], src.coord_names)
    tgt_chart = tgt.charts[0].chart_id
    jac = None
    if "jacobian" in spec:
        rows = [[compile_expr(e, src.coord_names) for e in row] for row in spec["jacobian"]]

        def jac(cid, coords, rows=rows):
            return np.array([[f(coords) for f in row] for row in rows])

    return SmoothMap(
        source=src, target=tgt,
        raw=lambda cid, coords: (tgt_chart, value(coords)),
        raw_jacobian=jac, name=name,
    )


def _build_field(name: str, spec: dict, atlases: dict) -> VectorField:
    atlas = atlases.get(spec["atlas"])
    if atlas is None:
        raise UnresolvedReference(spec["atlas"])
    if len(spec["exprs"]) != atlas.dim:
        raise DimensionMismatch(f"field {name!r} must have {atlas.dim} components")
    value = compile_vector(spec["exprs"], atlas.coord_names)
    return VectorField(atlas, lambda cid, coords: value(coords), name=name)


def parse_scenario(source) -> Scenario:
    """Parse a scenario file (path or dict) into fully resolved objects."""
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", where=str(source)) from exc
    else:
        data = source
    name = data.get("name", "scenario")

    atlases = {k: _build_atlas(k, v) for k, v in data.get("atlases", {}).items()}
    maps = {k: _build_map(k, v, atlases) for k, v in data.get("maps", {}).items()}
    fields = {k: _build_field(k, v, atlases) for k, v in data.get("fields", {}).items()}

    systems = {}
    for k, v in data.get("systems", {}).items():
        atlas = atlases.get(v["atlas"])
        if atlas is None:
            raise UnresolvedReference(v["atlas"])
        gens = []
        for g in v["generators"]:
            if g not in fields:
                raise UnresolvedReference(g)
            gens.append(fields[g])
        systems[k] = GeneratedSystem(atlas, tuple(gens), label=k)

    morphisms = {}
    kernels = {}
    for k, v in data.get("morphisms", {}).items():
        phi = maps.get(v["map"])
        if phi is None:
            raise UnresolvedReference(v["map"])
        target = systems.get(v["target_system"])
        if target is None:
            raise UnresolvedReference(v["target_system"])
        m, lifted = lift_system(target, phi, proper=v.get("proper", False))
        morphisms[k] = m
        systems[f"{k}.system"] = lifted
        kspec = v.get("kernel")
        if kspec:
            gens = None
            if kspec.get("generators"):
                gens = [fields[g] for g in kspec["generators"]]
            frame = kernel_frame(m, mode=kspec.get("mode", "chartwise"), generators=gens)
            kernels[k] = frame
            systems[f"{k}.augmented"] = augment_with_kernel(lifted, frame)

    second_order = {}
    for k, v in data.get("second_order", {}).items():
        base = atlases.get(v["base"])
        if base is None:
            raise UnresolvedReference(v["base"])
        ta = tangent_atlas(base, v_bound=v.get("v_bound", 2.0))
        var_names = ta.atlas.coord_names
        n = base.dim
        gamma_fn = compile_vector(v["gamma"], var_names)
        g_fns = [compile_vector(row, var_names) for row in v.get("g", [])]

        def gamma(cid, x, y, fn=gamma_fn):
            return fn(np.concatenate([x, y]))

        def gmat(cid, x, y, fns=g_fns, n=n):
            if not fns:
                return np.zeros((0, n))
            return np.stack([fn(np.concatenate([x, y])) for fn in fns])

        so = second_order_system(ta, gamma, gmat, len(g_fns), label=k)
        second_order[k] = so
        # generated system of affine slices at sampled control values
        samples = v.get("control_samples")
        if samples is None and g_fns:
            samples = [list(u) for u in np.eye(len(g_fns))]
        if samples is not None:
            gens = []
            for u in samples:
                gens.append(combine_fields(
                    [so.drift, *so.control_fields], [1.0, *np.asarray(u, float)],
                    name=f"{k}^{u}"))
            systems[f"{k}.tcs"] = GeneratedSystem(ta.atlas, tuple(gens), label=f"{k}.tcs")

    for k, v in data.get("so_lifts", {}).items():
        so = second_order.get(v["source"])
        if so is None:
            raise UnresolvedReference(v["source"])
        phi = maps.get(v["map"])
        if phi is None:
            raise UnresolvedReference(v["map"])
        lifted, m = second_order_lift(so, phi)
        second_order[f"{k}.system"] = lifted
        morphisms[k] = m
        kspec = v.get("kernel")
        if kspec:
            base_m = metric_lift_morphism(phi)
            gens = None
            if kspec.get("generators"):
                gens = [fields[g] for g in kspec["generators"]]
            frame = kernel_frame(base_m, mode=kspec.get("mode", "global"), generators=gens)
            kernels[k] = frame
            systems[f"{k}.augmented"] = augment_second_order(
                lifted, frame, control_amplitude=v.get("control_amplitude", 1.0))

    connections = {}
    for k, v in data.get("connections", {}).items():
        atlas = atlases.get(v["atlas"])
        if atlas is None:
            raise UnresolvedReference(v["atlas"])
        n = atlas.dim
        chr_fns = [[[compile_expr(e, atlas.coord_names) for e in row] for row in mat]
                   for mat in v["christoffel"]]

        def christoffel(cid, x, fns=chr_fns):
            return np.array([[[f(x) for f in row] for row in mat] for mat in fns])

        controls = tuple(fields[g] for g in v.get("controls", []))
        cs = ConnectionSystem(atlas, christoffel, controls,
                              v_bound=v.get("v_bound", 2.0), label=k)
        connections[k] = cs
        spray = geodesic_spray(cs)
        second_order[f"{k}.spray"] = spray
        systems[f"{k}.spray.drift"] = GeneratedSystem(
            spray.tangent_atlas.atlas, (spray.drift,), label=f"{k}.spray.drift")

    experiments = list(data.get("experiments", []))
    scenario = Scenario(
        name=name, atlases=atlases, maps=maps, fields=fields, systems=systems,
        morphisms=morphisms, kernels=kernels, second_order=second_order,
        connections=connections, experiments=experiments, raw=data,
    )
    _validate_experiments(scenario)
    return scenario


_KNOWN_KINDS = {
    "reach", "reachability-set", "stlc", "verify", "global-in-time",
    "liftable", "roundtrip", "second-order-check", "geodesic-check",
}


def _validate_experiments(s: Scenario):
    for exp in s.experiments:
        kind = exp.get("kind")
        if kind not in _KNOWN_KINDS:
            raise ParseError(f"unknown experiment kind {kind!r}",
                             where=exp.get("name", "?"))
        if kind == "second-order-check":
            if exp.get("system") not in s.second_order:
                raise UnresolvedReference(exp.get("system"))
        elif "system" in exp and exp["system"] not in s.systems:
            raise UnresolvedReference(exp["system"])
        for key in ("upstairs", "downstairs", "target_system"):
            if key in exp and exp[key] not in s.systems:
                raise UnresolvedReference(exp[key])
        if "morphism" in exp and exp["morphism"] not in s.morphisms:
            raise UnresolvedReference(exp["morphism"])
        if "map" in exp and exp["map"] not in s.maps:
            raise UnresolvedReference(exp["map"])


# ---------------------------------------------------------------------------
# built-in scenarios


def builtin_scenario_names() -> list[str]:
    root = resources.files("liftreach").joinpath("data")
    return sorted(
        p.name[:-5] for p in root.iterdir()
        if p.name.endswith(".json") and not p.name.endswith(".expected.json")
    )


def builtin_scenario_path(name: str) -> Path:
    p = resources.files("liftreach").joinpath("data").joinpath(f"{name}.json")
    if not p.is_file():
        raise UnresolvedReference(name)
    return Path(str(p))


def load_builtin(name: str) -> Scenario:
    return parse_scenario(builtin_scenario_path(name))


def expected_verdicts(name: str) -> dict:
    p = resources.files("liftreach").joinpath("data").joinpath(f"{name}.expected.json")
    return json.loads(p.read_text())
