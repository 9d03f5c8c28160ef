"""Grid cells, BFS reachability, reachability sets, and the STLC probe."""

import csv

import numpy as np
import pytest

from liftreach.geometry import VectorField, box_atlas, circle_atlas, mobius_atlas
from liftreach.reach import Grid, is_reachability_set, reach, stlc_probe
from liftreach.systems import GeneratedSystem


def _plane_system(fields):
    atlas = box_atlas([[-1, 1], [-1, 1]])
    gens = tuple(VectorField(atlas, f) for f in fields)
    return GeneratedSystem(atlas, gens)


RIGHT = lambda cid, c: np.array([1.0, 0.0])
LEFT = lambda cid, c: np.array([-1.0, 0.0])
UP = lambda cid, c: np.array([0.0, 1.0])
DOWN = lambda cid, c: np.array([0.0, -1.0])


def test_grid_cell_of_and_center():
    atlas = box_atlas([[-1, 1], [-1, 1]])
    g = Grid(atlas, 10)
    p = atlas.normalize("c0", [-0.95, 0.95])
    assert g.cell_of(p) == ("c0", 0, 9)
    center = g.center_coords(("c0", 0, 9))
    np.testing.assert_allclose(center, [-0.9, 0.9])


def test_grid_counts_each_point_once_on_overlaps():
    """Overlapping union boxes must not double count shared cells."""
    from liftreach.geometry import union_atlas

    atlas = union_atlas({"a": [[-1, 0.5]], "b": [[-0.5, 1]]})
    g = Grid(atlas, 10)
    cells = g.all_valid_cells()
    assert len(cells) == len(set(cells))
    # total covered length is 2.0, cell width 0.15: valid a cells cover
    # (-1, 0.5), valid b cells only the remainder
    assert sum(1 for c in cells if c[0] == "a") == 10


def test_mobius_neighbors_flip_across_seam():
    """Stepping left out of column 0 lands in column g-1 with the row flipped."""
    g = Grid(mobius_atlas(), 8)
    nbrs = g.neighbors(("c0", 0, 2))
    assert ("c0", 7, 8 - 1 - 2) in nbrs
    assert ("c0", 1, 2) in nbrs  # plain right neighbor, no flip


def test_reach_marks_cells_along_the_flow():
    sys = _plane_system([RIGHT])
    start = sys.atlas.normalize("c0", [-0.9, 0.0])
    rep = reach(sys, start, grid=10, dwell=0.4, horizon=2.0)
    row = [key for key in rep.arrivals if key[2] == 5]
    assert len(row) == 10  # the whole x-row at the start's y is swept
    assert rep.coverage == pytest.approx(10 / 100)


def test_reach_arrival_times_track_travel_time():
    sys = _plane_system([RIGHT])
    start = sys.atlas.normalize("c0", [-0.9, 0.0])
    rep = reach(sys, start, grid=10, dwell=0.4, horizon=2.0)
    # the far end of the row is 1.7 units of travel away at unit speed;
    # cell-center representatives can save up to half a cell width per hop
    far = rep.arrivals[("c0", 9, 5)]
    assert 1.0 <= far <= 1.8
    assert rep.arrivals[g_start(rep, sys)] == 0.0


def g_start(rep, sys):
    return Grid(sys.atlas, rep.grid).cell_of(rep.start)


def test_reach_horizon_monotone():
    sys = _plane_system([RIGHT, UP])
    start = sys.atlas.normalize("c0", [0.0, 0.0])
    small = reach(sys, start, grid=10, dwell=0.3, horizon=0.6)
    large = reach(sys, start, grid=10, dwell=0.3, horizon=1.2)
    assert set(small.arrivals) <= set(large.arrivals)


def test_reach_full_coverage_with_four_directions():
    sys = _plane_system([RIGHT, LEFT, UP, DOWN])
    start = sys.atlas.normalize("c0", [0.0, 0.0])
    rep = reach(sys, start, grid=10, dwell=0.3, horizon=6.0)
    assert rep.coverage == 1.0


def test_reach_rejects_bad_parameters():
    sys = _plane_system([RIGHT])
    start = sys.atlas.normalize("c0", [0.0, 0.0])
    with pytest.raises(ValueError):
        reach(sys, start, grid=10, dwell=0.0, horizon=1.0)
    with pytest.raises(ValueError):
        reach(sys, start, grid=10, dwell=0.1, horizon=-1.0)


def test_circle_reach_wraps_around():
    atlas = circle_atlas()
    rot = VectorField(atlas, lambda cid, c: np.array([1.0]))
    sys = GeneratedSystem(atlas, (rot,))
    start = atlas.normalize("c0", [0.0])
    rep = reach(sys, start, grid=20, dwell=0.5, horizon=8.0)
    assert rep.coverage == 1.0


def test_is_reachability_set_detects_one_way_flow():
    sys = _plane_system([RIGHT])
    pts = [sys.atlas.normalize("c0", [-0.5, 0.0]),
           sys.atlas.normalize("c0", [0.5, 0.0])]
    ok, witness = is_reachability_set(sys, pts, dwell=0.4, horizon=3.0, grid=10)
    assert not ok
    assert witness[0, 1] and not witness[1, 0]


def test_is_reachability_set_symmetric_case():
    sys = _plane_system([RIGHT, LEFT])
    pts = [sys.atlas.normalize("c0", [-0.5, 0.0]),
           sys.atlas.normalize("c0", [0.5, 0.0])]
    ok, witness = is_reachability_set(sys, pts, dwell=0.4, horizon=3.0, grid=10)
    assert ok and witness.all()


def test_stlc_probe_true_and_false():
    sym = _plane_system([RIGHT, LEFT, UP, DOWN])
    start = sym.atlas.normalize("c0", [0.0, 0.0])
    assert stlc_probe(sym, start, [0.5], grid=10) == [True]
    oneway = _plane_system([RIGHT, UP])
    assert stlc_probe(oneway, start, [0.5], grid=10) == [False]


def test_report_csv_schema(tmp_path):
    sys = _plane_system([RIGHT])
    start = sys.atlas.normalize("c0", [0.0, 0.0])
    rep = reach(sys, start, grid=5, dwell=0.4, horizon=1.0)
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["chart_id", "i0", "i1", "arrival_time"]
    assert len(rows) == 1 + len(rep.arrivals)
    for row in rows[1:]:
        assert row[0] == "c0"
        int(row[1]), int(row[2])
        assert float(row[3]) <= 1.0


def test_report_summary_fields():
    sys = _plane_system([RIGHT])
    start = sys.atlas.normalize("c0", [0.0, 0.0])
    rep = reach(sys, start, grid=5, dwell=0.4, horizon=1.0)
    s = rep.summary()
    assert set(s) == {"coverage", "visited_cells", "total_cells", "horizon",
                      "dwell", "grid"}
    assert s["total_cells"] == 25
