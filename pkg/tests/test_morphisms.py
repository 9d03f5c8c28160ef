"""Lifts across submersions, kernel frames, and the lifting correspondence."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from liftreach.errors import (
    IndependenceViolated,
    NotInKernel,
    NotSubmersion,
    RankDeficient,
    SingularGram,
    UnmappedControl,
)
from liftreach.geometry import (
    SmoothMap,
    VectorField,
    box_atlas,
    circle_atlas,
    identity_map,
    interval_atlas,
    mobius_atlas,
    union_atlas,
)
from liftreach.morphisms import (
    Morphism,
    _right_inverse_apply,
    augment_with_kernel,
    check_liftable,
    horizontal_lift,
    kernel_frame,
    kernel_projector,
    lift_system,
    metric_lift_morphism,
    morphism_from_lifting,
    verify_global_in_time,
    verify_trajectory_preserving,
)
from liftreach.systems import GeneratedSystem, control_system_from_tcs


def _projection_setup(analytic=True):
    plane = box_atlas([[-2, 2], [-2, 2]], coord_names=["x", "z"])
    line = interval_atlas(-2, 2)
    proj = SmoothMap(
        source=plane, target=line,
        raw=lambda cid, coords: ("c0", coords[:1]),
        raw_jacobian=(lambda cid, coords: np.array([[1.0, 0.0]])) if analytic else None,
    )
    Y = VectorField(line, lambda cid, c: np.array([1.0]), name="Y")
    down = GeneratedSystem(line, (Y,), label="down")
    return plane, line, proj, down


def test_identity_lift_is_identity():
    atlas = interval_atlas(-2, 2)
    Y = VectorField(atlas, lambda cid, c: np.array([c[0] + 1.0]))
    sys = GeneratedSystem(atlas, (Y,))
    m, lifted = lift_system(sys, identity_map(atlas))
    p = atlas.normalize("c0", [0.3])
    assert_allclose(lifted.generators[0].at(p), Y.at(p), atol=1e-12)


def test_metric_lift_closed_form():
    """For the plane projection J = (1 0), the pseudo-inverse lift of d/dx
    has components exactly (1, 0)."""
    plane, _, proj, down = _projection_setup()
    m, lifted = lift_system(down, proj)
    p = plane.normalize("c0", [0.4, -0.7])
    assert_allclose(lifted.generators[0].at(p), [1.0, 0.0], atol=1e-12)


def test_metric_lift_with_nontrivial_metric():
    """Metric diag(1, 4) tilts nothing for this projection: the minimizer of
    the G-norm over J v = 1 is still (1, 0)."""
    plane, line, proj, down = _projection_setup()
    metric = lambda cid, c: np.diag([1.0, 4.0])
    m, lifted = lift_system(down, proj, metric=metric)
    p = plane.normalize("c0", [0.0, 0.0])
    assert_allclose(lifted.generators[0].at(p), [1.0, 0.0], atol=1e-12)


def test_skewed_map_lift_satisfies_pushforward():
    plane = box_atlas([[-2, 2], [-2, 2]])
    line = interval_atlas(-5, 5)
    phi = SmoothMap(
        source=plane, target=line,
        raw=lambda cid, c: ("c0", np.array([c[0] + 0.5 * c[1]])),
        raw_jacobian=lambda cid, c: np.array([[1.0, 0.5]]),
    )
    Y = VectorField(line, lambda cid, c: np.array([np.sin(c[0])]))
    m, lifted = lift_system(GeneratedSystem(line, (Y,)), phi)
    p = plane.normalize("c0", [0.3, 0.8])
    got = phi.jacobian(p) @ lifted.generators[0].at(p)
    assert_allclose(got, Y.at(phi.value(p)), atol=1e-12)


def test_non_submersion_is_rejected():
    plane = box_atlas([[-2, 2], [-2, 2]])
    line = interval_atlas(-9, 9)
    cube = SmoothMap(
        source=plane, target=line,
        raw=lambda cid, c: ("c0", np.array([c[0] ** 3])),
        raw_jacobian=lambda cid, c: np.array([[3 * c[0] ** 2, 0.0]]),
    )
    # rank drops only on the line x = 0, so random sampling may miss it;
    # probe the singular fiber directly through the Gram factor
    with pytest.raises(SingularGram):
        _right_inverse_apply(cube, None, "c0", np.array([0.0, 0.3]), np.array([1.0]))
    collapse = SmoothMap(
        source=plane, target=line,
        raw=lambda cid, c: ("c0", np.array([0.0])),
        raw_jacobian=lambda cid, c: np.array([[0.0, 0.0]]),
    )
    with pytest.raises(NotSubmersion):
        metric_lift_morphism(collapse)


def test_verify_passes_exact_lift():
    plane, _, proj, down = _projection_setup()
    m, _ = lift_system(down, proj)
    report = verify_trajectory_preserving(m, down, samples=200, schedules=3)
    assert report["pass"]
    assert report["worst_residual"] <= 1e-12
    assert report["tolerance"] == 1e-9


def test_verify_fails_corrupted_lift():
    """Scaling the lifted base component by 1.1 leaves residual 0.1 * |Y|."""
    plane, _, proj, down = _projection_setup()
    good = metric_lift_morphism(proj)
    bad = Morphism(
        phi=proj,
        lift_rule=lambda Y: VectorField(
            plane, lambda cid, c, Y=Y: 1.1 * good.lift(Y).func(cid, c)),
        kind="metric-right-inverse",
    )
    report = verify_trajectory_preserving(bad, down, samples=200, schedules=0)
    assert not report["pass"]
    assert report["worst_residual"] == pytest.approx(0.1, abs=1e-9)


def test_verify_finite_difference_tolerance():
    plane, _, proj, down = _projection_setup(analytic=False)
    m, _ = lift_system(down, proj)
    report = verify_trajectory_preserving(m, down, samples=200, schedules=3)
    assert report["pass"]
    assert report["tolerance"] == 1e-6


def test_global_in_time_detects_improper_escape():
    """Deleting a region upstairs makes the lifted flow escape early."""
    holey = union_atlas({"a": [[-2, 0], [-2, 2]], "b": [[-2, 2], [-2, 0.5]]})
    line = interval_atlas(-2, 2)
    proj = SmoothMap(
        source=holey, target=line,
        raw=lambda cid, c: ("c0", c[:1]),
        raw_jacobian=lambda cid, c: np.array([[1.0, 0.0]]),
    )
    Y = VectorField(line, lambda cid, c: np.array([1.0]))
    down = GeneratedSystem(line, (Y,))
    m, _ = lift_system(down, proj)
    blocked = holey.normalize("a", [-1.0, 1.0])
    report = verify_global_in_time(m, down, [blocked], horizon=2.0, h=1e-3)
    assert not report["pass"]
    d = report["details"][0]
    assert d["escape_up"] == pytest.approx(1.0, abs=2e-3)
    assert d["escape_down"] == pytest.approx(2.0)
    clear = holey.normalize("a", [-1.0, 0.2])
    assert verify_global_in_time(m, down, [clear], horizon=2.0, h=1e-3)["pass"]


def test_kernel_projector_idempotent_and_annihilated():
    plane, _, proj, down = _projection_setup()
    P = kernel_projector(proj, None, "c0", np.array([0.3, -0.4]))
    assert_allclose(P @ P, P, atol=1e-12)
    assert_allclose(proj.raw_jac_at("c0", np.array([0.3, -0.4])) @ P,
                    np.zeros((1, 2)), atol=1e-12)
    assert_allclose(P, np.diag([0.0, 1.0]), atol=1e-12)


def test_chartwise_frame_on_mobius_does_not_glue():
    """The projected d/dy frame flips sign across the seam, so chartwise
    sections exist but no global section does."""
    band = mobius_atlas()
    s1_period_one = circle_atlas(period=1.0)
    proj = SmoothMap(
        source=band, target=s1_period_one,
        raw=lambda cid, c: ("c0", c[:1]),
        raw_jacobian=lambda cid, c: np.array([[1.0, 0.0]]),
    )
    m = metric_lift_morphism(proj, proper=True)
    frame = kernel_frame(m, mode="chartwise")
    assert frame.rank == 1
    assert not frame.global_ok
    p = band.normalize("c0", [0.5, 0.5])
    assert_allclose(frame.fields[1].at(p), [0.0, 1.0], atol=1e-12)


def test_global_frame_validation():
    plane, _, proj, down = _projection_setup()
    m = metric_lift_morphism(proj)
    vert = VectorField(plane, lambda cid, c: np.array([0.0, 1.0]), name="vert")
    frame = kernel_frame(m, mode="global", generators=[vert])
    assert frame.rank == 1 and frame.global_ok
    horiz = VectorField(plane, lambda cid, c: np.array([1.0, 0.0]))
    with pytest.raises(NotInKernel):
        kernel_frame(m, mode="global", generators=[horiz])
    dead = VectorField(plane, lambda cid, c: np.array([0.0, 0.0]))
    with pytest.raises(RankDeficient):
        kernel_frame(m, mode="global", generators=[dead])
    with pytest.raises(ValueError):
        kernel_frame(m, mode="nonsense")


def test_augment_with_kernel_adds_fiber_motion():
    plane, _, proj, down = _projection_setup()
    m, lifted = lift_system(down, proj)
    vert = VectorField(plane, lambda cid, c: np.array([0.0, 1.0]))
    frame = kernel_frame(m, mode="global", generators=[vert])
    aug = augment_with_kernel(lifted, frame)
    assert aug.kernel_fields == frame.fields
    assert aug.kernel_base is None
    empty = kernel_frame(m, mode="global", generators=None)
    assert augment_with_kernel(lifted, empty) is lifted


def test_horizontal_lift_flat_connection():
    plane, line, proj, down = _projection_setup()
    m, lifted = horizontal_lift(down, proj)
    p = plane.normalize("c0", [0.2, 0.9])
    assert_allclose(lifted.generators[0].at(p), [1.0, 0.0], atol=1e-12)


def test_horizontal_lift_connection_term():
    """With A(x)(y, v) = a * y * v the fiber component is -a * Y(x) * v."""
    plane, line, proj, down = _projection_setup()
    a = 0.7
    conn = lambda cid, x: np.full((1, 1, 1), a)
    m, lifted = horizontal_lift(down, proj, connection=conn)
    p = plane.normalize("c0", [0.2, 0.9])
    assert_allclose(lifted.generators[0].at(p), [1.0, -a * 1.0 * 0.9], atol=1e-12)
    v = m.phi.jacobian(p) @ lifted.generators[0].at(p)
    assert_allclose(v, [1.0], atol=1e-12)


def test_horizontal_lift_of_zero_is_zero():
    plane, line, proj, _ = _projection_setup()
    zero = VectorField(line, lambda cid, c: np.array([0.0]))
    m, lifted = horizontal_lift(GeneratedSystem(line, (zero,)), proj,
                                connection=lambda cid, x: np.full((1, 1, 1), 0.7))
    p = plane.normalize("c0", [0.2, 0.9])
    assert_allclose(lifted.generators[0].at(p), [0.0, 0.0], atol=1e-12)


def test_check_liftable_finds_lifting_map():
    plane, line, proj, _ = _projection_setup()
    Y1 = VectorField(line, lambda cid, c: np.array([1.0]), name="Y1")
    Y2 = VectorField(line, lambda cid, c: np.array([0.5 * c[0]]), name="Y2")
    down = GeneratedSystem(line, (Y1, Y2))
    m, lifted = lift_system(down, proj)
    sigma1 = control_system_from_tcs(lifted)
    sigma2 = control_system_from_tcs(down)
    ok, mapping = check_liftable(sigma1, sigma2, proj)
    assert ok
    assert all(match is not None for _, match in mapping)
    morphism = morphism_from_lifting(mapping, sigma1, sigma2, proj)
    report = verify_trajectory_preserving(morphism, down, samples=150, schedules=2)
    assert report["pass"]


def test_check_liftable_false_for_cube():
    plane = box_atlas([[-2, 2], [-2, 2]])
    line = interval_atlas(-8.5, 8.5)
    cube = SmoothMap(
        source=plane, target=line,
        raw=lambda cid, c: ("c0", np.array([c[0] ** 3])),
        raw_jacobian=lambda cid, c: np.array([[3 * c[0] ** 2, 0.0]]),
    )
    up = GeneratedSystem(plane, (VectorField(plane, lambda cid, c: np.array([1.0, 0.0])),))
    down = GeneratedSystem(line, (VectorField(line, lambda cid, c: np.array([1.0])),))
    ok, mapping = check_liftable(control_system_from_tcs(up),
                                 control_system_from_tcs(down), cube)
    assert not ok
    assert mapping[0][1] is None
    with pytest.raises(UnmappedControl):
        morphism_from_lifting(mapping, control_system_from_tcs(up),
                              control_system_from_tcs(down), cube)


def test_check_liftable_rejects_dependent_slices():
    _, line, proj, _ = _projection_setup()
    Y = VectorField(line, lambda cid, c: np.array([1.0]))
    Yneg = VectorField(line, lambda cid, c: np.array([-1.0]))
    down = GeneratedSystem(line, (Y, Yneg))
    m, lifted = lift_system(down, proj)
    with pytest.raises(IndependenceViolated):
        check_liftable(control_system_from_tcs(lifted),
                       control_system_from_tcs(down), proj)
