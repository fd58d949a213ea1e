import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupinlab.charts import (
    IteratedChart,
    SphereChartData,
    ball_height_identities,
    build_stage,
    chart_grid,
    chart_roundtrip,
    choose_ball_radii,
    iterate_chart,
    param_invert,
    sphere_chart,
)
from dupinlab.exceptions import OffSurfaceError, PlaneLeafError, StageError


def test_ball_height_identities(rng):
    for m in (1, 2, 3):
        s = rng.uniform(-1, 1, (100, m))
        s *= (0.9 * rng.uniform(size=(100, 1))) / np.linalg.norm(s, axis=1, keepdims=True)
        res = ball_height_identities(s)
        assert res["zeroth"] < 1e-12 and res["first"] < 1e-12 and res["second"] < 1e-12


def test_sphere_chart_anchor_and_membership(torus, rng):
    stage = build_stage(torus.patch, [0.0, 0.0], 1)
    assert np.allclose(stage.center, [2.0, 0.0, 0.0], atol=1e-10)
    assert np.isclose(stage.radius, 1.0)
    assert np.allclose(np.abs(stage.frame[0]), [0.0, 0.0, 1.0], atol=1e-10)
    assert np.array_equal(sphere_chart(stage, [0.0]), stage.anchor)
    p = sphere_chart(stage, [0.1])
    assert abs(np.linalg.norm(p - [2.0, 0.0, 0.0]) - 1.0) < 1e-12
    assert abs(p[1]) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.0, 0.99))
def test_sphere_chart_membership_property(direction, frac):
    center = np.array([0.3, -1.0, 2.0])
    anchor = center + 1.7 * np.array([0.0, 0.6, 0.8])
    frame = np.array([[1.0, 0.0, 0.0], [0.0, 0.8, -0.6]])
    data = SphereChartData(center, anchor, 1.7, frame, ball_radius=0.5)
    d = np.asarray(direction[:2])
    if np.linalg.norm(d) == 0:
        d = np.array([1.0, 0.0])
    s = frac * 0.5 * d / np.linalg.norm(d)
    p = sphere_chart(data, s)
    assert abs(np.linalg.norm(p - center) - 1.7) < 1e-12


def test_sphere_chart_rejects_outside_ball(torus):
    stage = build_stage(torus.patch, [0.0, 0.0], 1, ball_radius=0.5)
    with pytest.raises(ValueError):
        sphere_chart(stage, [0.999])
    with pytest.raises(ValueError):
        sphere_chart(stage, [0.1, 0.1])


def test_param_invert(torus):
    seed = np.array([0.3, 1.0])
    assert np.allclose(param_invert(torus.patch, torus.patch.eval(seed), seed), seed)
    stage = build_stage(torus.patch, [0.0, 0.0], 1)
    target = sphere_chart(stage, [0.1])
    u = param_invert(torus.patch, target, [0.0, 0.0])
    assert np.linalg.norm(torus.patch.eval(u) - target) < 1e-9
    off = torus.patch.eval(seed) + torus.patch.unit_normal(seed)
    with pytest.raises(OffSurfaceError):
        param_invert(torus.patch, off, seed)


def test_param_invert_wraps_periodic_axes(torus):
    u = param_invert(torus.patch, torus.patch.eval([6.25, 0.1]), [0.05, 0.1])
    assert torus.patch.in_domain(u)
    assert np.allclose(torus.patch.eval(u), torus.patch.eval([6.25, 0.1]), atol=1e-9)


def test_build_stage_cases(sphere, flat, torus):
    s = build_stage(sphere.patch, [1.0, 1.0], 0)
    assert np.allclose(s.center, 0.0, atol=1e-12) and np.isclose(s.radius, 1.0)
    assert s.frame.shape == (2, 3)
    assert np.allclose(s.frame @ (s.anchor - s.center), 0.0, atol=1e-9)
    with pytest.raises(PlaneLeafError, match="make_cyclide_by_inversion"):
        build_stage(flat.patch, [0.0, 0.0], 0)
    stage = build_stage(torus.patch, [0.4, 0.7], 0)
    assert abs(np.linalg.norm(stage.anchor - stage.center) - stage.radius) < 1e-9


def test_procrustes_gauge_follows_reference(torus):
    ref = build_stage(torus.patch, [0.0, 0.0], 1).frame
    flipped = build_stage(torus.patch, [0.01, 0.02], 1, prev_frame=-ref).frame
    assert flipped[0] @ -ref[0] > 0.99


def test_iterate_chart_anchor(torus, cyclide, tube):
    for entry, base in [(torus, [0.0, 0.0]), (cyclide, [0.5, 1.0]), (tube, [0.3, 0.7, 1.0])]:
        chart = IteratedChart(entry.patch, base, None)
        zero = np.zeros(sum(chart.signature))
        assert np.linalg.norm(chart(zero) - entry.patch.eval(base)) < 1e-9


def test_iterate_chart_on_torus_quartic(torus):
    p = iterate_chart(torus.patch, [0.0, 0.0], (0.1, 0.2))
    scale = np.max(np.abs(torus.known_implicit.coeffs))
    assert abs(torus.known_implicit(p[None])[0]) / scale < 1e-7


def test_cyclide_chart_grid_on_quartic(cyclide):
    chart = IteratedChart(cyclide.patch, [0.5, 1.0], None)
    S = chart_grid(chart.signature, chart.ball_radii, (16, 16))
    pts = np.array([chart(s) for s in S])
    poly = cyclide.known_implicit
    scale = np.max(np.abs(poly.coeffs))
    assert len(pts) == 256
    assert np.max(np.abs(poly(pts))) / scale < 1e-6


def test_stage_errors_carry_index(torus):
    chart = IteratedChart(torus.patch, [0.0, 0.0], (0.25, 0.25))
    with pytest.raises(StageError) as info:
        chart([0.0, 0.3])
    assert info.value.stage == 1
    with pytest.raises(ValueError):
        IteratedChart(torus.patch, [0.0, 0.0], (0.25,))


def test_chart_grid_shape():
    S = chart_grid((2, 1), (0.2, 0.3), (3, 4))
    assert S.shape == (9 * 4, 3)
    assert np.all(np.linalg.norm(S[:, :2], axis=1) < 0.2)
    assert np.all(np.abs(S[:, 2]) < 0.3)


def test_roundtrip_torus_and_sphere(torus, sphere):
    rep = chart_roundtrip(torus.patch, [0.0, 0.0], 16, (0.3, 0.3))
    assert rep.coverage_count == 256 and rep.max_surface_residual < 1e-7
    assert rep.injective and rep.anchor_error < 1e-9
    rep = chart_roundtrip(sphere.patch, [1.0, 1.0], 8, (0.5,))
    assert rep.coverage_count == 64 and rep.max_surface_residual < 1e-10
    js = rep.to_json()
    assert set(js) >= {"max_surface_residual", "max_param_distance", "coverage_count"}


@pytest.mark.slow
def test_roundtrip_tube(tube):
    rep = chart_roundtrip(tube.patch, [0.3, 0.7, 1.0], 8, (0.2, 0.2, 0.2))
    assert rep.coverage_count == 512
    assert rep.max_surface_residual < 1e-5


def test_roundtrip_cyclide_default_radii(cyclide):
    a = chart_roundtrip(cyclide.patch, [0.5, 1.0], 6)
    assert a.max_surface_residual < 1e-5


def test_choose_ball_radii(torus):
    radii = choose_ball_radii(torus.patch, [0.0, 0.0])
    assert len(radii) == 2
    assert all(1e-3 <= r <= 0.25 for r in radii)
