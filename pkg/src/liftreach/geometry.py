"""Chart-based numerics for smooth manifolds.

A manifold is a finite atlas of open boxes together with a normalization
map that folds raw chart coordinates onto a canonical representative.
Quotient gluings (periodic wrap, wrap-with-flip) live entirely inside the
normalization map, which makes point equality and grid hashing decidable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, OutOfAtlas

FD_STEP = 1e-6

# type of raw chart representations: (chart_id, coordinate array)
Raw = tuple[str, np.ndarray]


@dataclass(frozen=True)
class Chart:
    chart_id: str
    box: np.ndarray  # shape (dim, 2): per-axis (lo, hi)
    wrap: tuple[bool, ...]  # periodic axes (canonical range [lo, hi))

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def widths(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]

    def contains(self, coords: np.ndarray) -> bool:
        """Strict interior for open axes, half-open [lo, hi) for wrapped ones."""
        for i, (lo, hi) in enumerate(self.box):
            c = coords[i]
            if self.wrap[i]:
                if not (lo <= c < hi):
                    return False
            else:
                if not (lo < c < hi):
                    return False
        return True


@dataclass(frozen=True)
class Point:
    chart_id: str
    coords: np.ndarray

    def __repr__(self):
        vals = ", ".join(f"{c:.6g}" for c in self.coords)
        return f"Point({self.chart_id}; {vals})"


@dataclass(frozen=True)
class Tangent:
    base: Point
    components: np.ndarray


@dataclass(frozen=True)
class Atlas:
    """Finite chart atlas with explicit normalization.

    normalize_raw returns the canonical (chart_id, coords) for a raw
    representation, or None when the raw point is outside the atlas.
    normalize_jacobian is the Jacobian of that map at the raw point.
    aliases returns non-canonical raw representations of a canonical point
    (used for overlap-compatibility checks).
    """

    dim: int
    charts: tuple[Chart, ...]
    normalize_raw: Callable[[str, np.ndarray], Optional[Raw]]
    normalize_jacobian: Callable[[str, np.ndarray], np.ndarray]
    metric_fn: Optional[Callable[[str, np.ndarray], np.ndarray]] = None
    aliases_fn: Optional[Callable[[str, np.ndarray], list[Raw]]] = None
    coord_names: tuple[str, ...] = ()
    name: str = ""

    def chart(self, chart_id: str) -> Chart:
        for c in self.charts:
            if c.chart_id == chart_id:
                return c
        raise KeyError(chart_id)

    def normalize(self, chart_id: str, coords) -> Point:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            raise DimensionMismatch(
                f"expected {self.dim} coordinates, got shape {coords.shape}"
            )
        out = self.normalize_raw(chart_id, coords)
        if out is None:
            raise OutOfAtlas(f"({chart_id}, {coords}) has no chart in atlas {self.name!r}")
        cid, c = out
        return Point(cid, np.array(c, dtype=float))

    def normalize_point(self, p: Point) -> Point:
        return self.normalize(p.chart_id, p.coords)

    def point(self, chart_id: str, coords) -> Point:
        return self.normalize(chart_id, coords)

    def transition_jacobian(self, chart_id: str, coords) -> np.ndarray:
        return np.asarray(self.normalize_jacobian(chart_id, np.asarray(coords, float)))

    def metric(self, p: Point) -> np.ndarray:
        if self.metric_fn is None:
            return np.eye(self.dim)
        return np.asarray(self.metric_fn(p.chart_id, p.coords), dtype=float)

    def metric_at(self, chart_id: str, coords) -> np.ndarray:
        if self.metric_fn is None:
            return np.eye(self.dim)
        return np.asarray(self.metric_fn(chart_id, np.asarray(coords, float)), dtype=float)

    def aliases(self, p: Point) -> list[Raw]:
        if self.aliases_fn is None:
            return []
        return self.aliases_fn(p.chart_id, p.coords)

    def sample(self, rng: np.random.Generator, n: int, margin: float = 0.02) -> list[Point]:
        """Uniform canonical points, charts weighted by box volume."""
        vols = np.array([float(np.prod(c.widths())) for c in self.charts])
        probs = vols / vols.sum()
        pts = []
        while len(pts) < n:
            chart = self.charts[rng.choice(len(self.charts), p=probs)]
            lo = chart.box[:, 0] + margin * chart.widths()
            hi = chart.box[:, 1] - margin * chart.widths()
            coords = rng.uniform(lo, hi)
            try:
                pts.append(self.normalize(chart.chart_id, coords))
            except OutOfAtlas:
                continue
        return pts

    def distance(self, p: Point, q: Point) -> float:
        """Coordinate distance, minimized over raw representations of q."""
        reps = [(q.chart_id, q.coords)] + self.aliases(q)
        best = np.inf
        for cid, coords in reps:
            if cid == p.chart_id:
                best = min(best, float(np.linalg.norm(p.coords - np.asarray(coords))))
        return best


# ---------------------------------------------------------------------------
# atlas builders


def box_atlas(box, coord_names=None, metric_fn=None, name="box") -> Atlas:
    """Single open box chart, identity normalization."""
    box = np.asarray(box, dtype=float)
    dim = box.shape[0]
    chart = Chart("c0", box, (False,) * dim)

    def norm(cid, coords):
        if cid != "c0" or not chart.contains(coords):
            return None
        return ("c0", coords)

    return Atlas(
        dim=dim,
        charts=(chart,),
        normalize_raw=norm,
        normalize_jacobian=lambda cid, coords: np.eye(dim),
        metric_fn=metric_fn,
        coord_names=tuple(coord_names) if coord_names else _default_names(dim),
        name=name,
    )


def interval_atlas(lo: float, hi: float, coord_name="x", name="interval") -> Atlas:
    return box_atlas([[lo, hi]], coord_names=[coord_name], name=name)


def circle_atlas(period: float = 2 * np.pi, coord_name="theta", name="circle") -> Atlas:
    chart = Chart("c0", np.array([[0.0, period]]), (True,))

    def norm(cid, coords):
        return ("c0", np.array([coords[0] % period]))

    def aliases(cid, coords):
        return [("c0", coords + period), ("c0", coords - period)]

    return Atlas(
        dim=1,
        charts=(chart,),
        normalize_raw=norm,
        normalize_jacobian=lambda cid, coords: np.eye(1),
        aliases_fn=aliases,
        coord_names=(coord_name,),
        name=name,
    )


def torus_atlas(periods=(2 * np.pi, 2 * np.pi), coord_names=("theta", "phi"), name="torus") -> Atlas:
    periods = np.asarray(periods, dtype=float)
    dim = len(periods)
    chart = Chart("c0", np.stack([np.zeros(dim), periods], axis=1), (True,) * dim)

    def norm(cid, coords):
        return ("c0", np.mod(coords, periods))

    def aliases(cid, coords):
        out = []
        for i in range(dim):
            shift = np.zeros(dim)
            shift[i] = periods[i]
            out.append(("c0", coords + shift))
            out.append(("c0", coords - shift))
        return out

    return Atlas(
        dim=dim,
        charts=(chart,),
        normalize_raw=norm,
        normalize_jacobian=lambda cid, coords: np.eye(dim),
        aliases_fn=aliases,
        coord_names=tuple(coord_names),
        name=name,
    )


def mobius_atlas(name="mobius") -> Atlas:
    """Mobius band as [0,1) x (0,1) with the gluing (0,y) ~ (1,1-y).

    Wrapping x by one unit flips y; the transition Jacobian is diag(1, -1)
    for odd wrap counts and the identity otherwise.
    """
    chart = Chart("c0", np.array([[0.0, 1.0], [0.0, 1.0]]), (True, False))

    def norm(cid, coords):
        x, y = coords
        k = int(np.floor(x))
        x = x - k
        if k % 2 != 0:
            y = 1.0 - y
        if not (0.0 < y < 1.0):
            return None
        return ("c0", np.array([x, y]))

    def jac(cid, coords):
        k = int(np.floor(coords[0]))
        return np.diag([1.0, -1.0 if k % 2 != 0 else 1.0])

    def aliases(cid, coords):
        x, y = coords
        return [("c0", np.array([x + 1.0, 1.0 - y])), ("c0", np.array([x - 1.0, 1.0 - y]))]

    return Atlas(
        dim=2,
        charts=(chart,),
        normalize_raw=norm,
        normalize_jacobian=jac,
        aliases_fn=aliases,
        coord_names=("x", "y"),
        name=name,
    )


def union_atlas(charts: dict[str, Sequence], coord_names=None, name="union") -> Atlas:
    """Union of open boxes sharing one global coordinate system.

    The canonical chart of a point is the first declared chart whose box
    strictly contains it; transitions between overlapping boxes are the
    identity.
    """
    items = tuple(
        Chart(cid, np.asarray(box, dtype=float), (False,) * len(box))
        for cid, box in charts.items()
    )
    dim = items[0].dim

    def norm(cid, coords):
        for chart in items:
            if chart.contains(coords):
                return (chart.chart_id, coords)
        return None

    def aliases(cid, coords):
        return [
            (chart.chart_id, coords)
            for chart in items
            if chart.chart_id != cid and chart.contains(coords)
        ]

    return Atlas(
        dim=dim,
        charts=items,
        normalize_raw=norm,
        normalize_jacobian=lambda cid, coords: np.eye(dim),
        aliases_fn=aliases,
        coord_names=tuple(coord_names) if coord_names else _default_names(dim),
        name=name,
    )


def _default_names(dim: int) -> tuple[str, ...]:
    if dim <= 3:
        return ("x", "y", "z")[:dim]
    return tuple(f"x{i}" for i in range(dim))


# ---------------------------------------------------------------------------
# smooth maps and vector fields


def finite_difference_jacobian(func, coords: np.ndarray, out_dim: int) -> np.ndarray:
    """Central finite differences with step scaled by coordinate magnitude."""
    n = len(coords)
    J = np.empty((out_dim, n))
    for j in range(n):
        h = FD_STEP * max(1.0, abs(coords[j]))
        up = coords.copy()
        dn = coords.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (func(up) - func(dn)) / (2 * h)
    return J


@dataclass(frozen=True)
class SmoothMap:
    """Chart-wise smooth map between atlases.

    raw maps (chart_id, coords) to a raw target representation and must be
    continuous in coords on the chart's extended domain; value() normalizes
    the output. raw_jacobian, when given, is the analytic Jacobian of raw.
    """

    source: Atlas
    target: Atlas
    raw: Callable[[str, np.ndarray], Raw]
    raw_jacobian: Optional[Callable[[str, np.ndarray], np.ndarray]] = None
    name: str = ""

    @property
    def analytic(self) -> bool:
        return self.raw_jacobian is not None

    def value(self, p: Point) -> Point:
        cid, coords = self.raw(p.chart_id, p.coords)
        return self.target.normalize(cid, coords)

    def raw_jac_at(self, chart_id: str, coords: np.ndarray) -> np.ndarray:
        if self.raw_jacobian is not None:
            return np.asarray(self.raw_jacobian(chart_id, coords), dtype=float)
        return finite_difference_jacobian(
            lambda c: np.asarray(self.raw(chart_id, c)[1], float), coords, self.target.dim
        )

    def jacobian(self, p: Point) -> np.ndarray:
        """dPhi in canonical chart frames (normalization correction included)."""
        cid, out = self.raw(p.chart_id, p.coords)
        J = self.raw_jac_at(p.chart_id, p.coords)
        N = self.target.transition_jacobian(cid, np.asarray(out, float))
        return N @ J


def identity_map(atlas: Atlas, name="id") -> SmoothMap:
    return SmoothMap(
        source=atlas,
        target=atlas,
        raw=lambda cid, coords: (cid, coords),
        raw_jacobian=lambda cid, coords: np.eye(atlas.dim),
        name=name,
    )


def compose(g: SmoothMap, f: SmoothMap, name="") -> SmoothMap:
    """g after f. Intermediate points are normalized into g's source atlas."""
    if f.target is not g.source:
        raise DimensionMismatch("composition atlases do not match")

    def raw(cid, coords):
        mid = f.target.normalize(*f.raw(cid, coords))
        return g.raw(mid.chart_id, mid.coords)

    def jac(cid, coords):
        mid_cid, mid_coords = f.raw(cid, coords)
        Jf = f.raw_jac_at(cid, coords)
        N = f.target.transition_jacobian(mid_cid, np.asarray(mid_coords, float))
        mid = f.target.normalize(mid_cid, mid_coords)
        Jg = g.raw_jac_at(mid.chart_id, mid.coords)
        return Jg @ N @ Jf

    return SmoothMap(source=f.source, target=g.target, raw=raw, raw_jacobian=jac,
                     name=name or f"{g.name}.{f.name}")


def pushforward(f: SmoothMap, v: Tangent) -> Tangent:
    """Differential of f applied to a tangent vector."""
    if v.components.shape != (f.source.dim,):
        raise DimensionMismatch("tangent components do not match source dimension")
    return Tangent(base=f.value(v.base), components=f.jacobian(v.base) @ v.components)


def differential_rank(f: SmoothMap, p: Point) -> int:
    """Numerical rank of dPhi with threshold 1e-8 times the top singular value."""
    s = np.linalg.svd(f.jacobian(p), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > 1e-8 * s[0]))


@dataclass(frozen=True)
class VectorField:
    """Chart-wise vector field; func must accept raw (extended-domain) coords."""

    atlas: Atlas
    func: Callable[[str, np.ndarray], np.ndarray]
    name: str = ""

    def at(self, p: Point) -> np.ndarray:
        return np.asarray(self.func(p.chart_id, p.coords), dtype=float)

    def tangent(self, p: Point) -> Tangent:
        return Tangent(base=p, components=self.at(p))


def zero_field(atlas: Atlas, name="zero") -> VectorField:
    return VectorField(atlas, lambda cid, coords: np.zeros(atlas.dim), name=name)


def constant_field(atlas: Atlas, components, name="") -> VectorField:
    comps = np.asarray(components, dtype=float)
    return VectorField(atlas, lambda cid, coords: comps, name=name)


def combine_fields(fields: Sequence[VectorField], coeffs, name="") -> VectorField:
    """Pointwise linear combination sum_i coeffs[i] * fields[i]."""
    coeffs = np.asarray(coeffs, dtype=float)
    atlas = fields[0].atlas

    def func(cid, coords):
        out = np.zeros(atlas.dim)
        for c, f in zip(coeffs, fields):
            if c != 0.0:
                out = out + c * np.asarray(f.func(cid, coords), float)
        return out

    return VectorField(atlas, func, name=name)


def overlap_residual(field: VectorField, points: Sequence[Point]) -> float:
    """Worst overlap-compatibility defect of a field at the given points.

    For each alias raw representation r of a point p, the transition
    Jacobian at r must carry field(r) onto field(p).
    """
    atlas = field.atlas
    worst = 0.0
    for p in points:
        ref = field.at(p)
        for cid, coords in atlas.aliases(p):
            coords = np.asarray(coords, float)
            J = atlas.transition_jacobian(cid, coords)
            got = J @ np.asarray(field.func(cid, coords), float)
            worst = max(worst, float(np.max(np.abs(got - ref))))
    return worst
