import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dupinlab.catalog import PointCloud
from dupinlab.curvature import shape_spectrum
from dupinlab.exceptions import GeometryError
from dupinlab.focal import (
    FocalPointError,
    arccot,
    covering_degree_check,
    density_radius,
    distance_index,
    end_count,
    exponential_singular_values,
    focal_branches,
    normal_exponential,
    sample_focal_set,
    sphere_volume,
)
from dupinlab.witness import component_count


def fd_jacobian(patch, u, t, h=1e-6):
    """Central differences of E in the raw coordinates (u, t)."""
    z = np.r_[u, t]
    cols = []
    for k in range(len(z)):
        e = np.zeros_like(z)
        e[k] = h
        hi = normal_exponential(patch, (z + e)[:-1], (z + e)[-1])
        lo = normal_exponential(patch, (z - e)[:-1], (z - e)[-1])
        cols.append((hi - lo) / (2 * h))
    return np.array(cols).T


def test_arccot_branch():
    assert np.isclose(arccot(0.0), np.pi / 2)
    assert 0 < arccot(1e6) < 1e-5 and np.pi - 1e-5 < arccot(-1e6) < np.pi
    lam = np.linspace(-5, 5, 11)
    assert np.allclose(1 / np.tan(arccot(lam)), lam)


def test_normal_exponential_properties(lifted_torus, rng):
    p = lifted_torus.patch
    U = p.sample(1000, rng)
    t = rng.uniform(-np.pi, np.pi, 1000)
    E = normal_exponential(p, U, t)
    assert np.max(np.abs(np.linalg.norm(E, axis=1) - 1)) < 1e-12
    u = U[0]
    x = p.eval(u)
    assert np.allclose(normal_exponential(p, u, 0.0), x, atol=1e-15)
    # E(u, -t) is the reflection of E(u, t) across p within the (p, n) plane
    a, b = normal_exponential(p, u, 0.7), normal_exponential(p, u, -0.7)
    assert np.allclose(a + b, 2 * np.cos(0.7) * x, atol=1e-14)


def test_non_lifted_patch_rejected(torus):
    with pytest.raises(ValueError):
        normal_exponential(torus.patch, [0.1, 0.2], 0.3)


def test_branches_on_lifted_torus(lifted_torus, rng):
    p = lifted_torus.patch
    for u in p.sample(10, rng):
        spec = shape_spectrum(p, u)
        br = focal_branches(p, u, spec)
        assert len(br) == 2 and [b.multiplicity for b in br] == [1, 1]
        for b in br:
            assert 0 < b.t < np.pi
            assert abs(np.linalg.norm(b.focal_point) - 1) < 1e-10
            assert abs(1 / np.tan(b.t) - b.curvature) < 1e-8 * (1 + abs(b.curvature))
            assert np.allclose(b.antipode, -b.focal_point)


def test_lifted_sphere_single_branch(lifted_sphere, rng):
    for u in lifted_sphere.patch.sample(5, rng):
        br = focal_branches(lifted_sphere.patch, u)
        assert len(br) == 1 and br[0].multiplicity == 2


def test_differential_rank_drops_on_branches(lifted_torus, lifted_cyclide, rng):
    for entry in (lifted_torus, lifted_cyclide):
        p = entry.patch
        for u in p.sample(5, rng, margin=0.1):
            spec = shape_spectrum(p, u)
            ts = sorted(b.t for b in focal_branches(p, u, spec))
            for t in ts:
                assert np.linalg.svd(fd_jacobian(p, u, t), compute_uv=False)[-1] < 1e-6
                sv = exponential_singular_values(p, u, t)
                assert sv.min() < 1e-10
            mid = 0.5 * (ts[0] + ts[1])
            assert np.linalg.svd(fd_jacobian(p, u, mid), compute_uv=False)[-1] > 1e-3
            sv = np.sort(exponential_singular_values(p, u, mid))
            expected = np.sort(np.r_[np.abs(np.cos(mid) - spec.curvatures * np.sin(mid)), 1.0])
            assert np.allclose(sv, expected, atol=1e-10)


def test_distance_index_examples(lifted_torus):
    p = lifted_torus.patch
    u = np.array([0.4, 0.9])
    ts = sorted(b.t for b in focal_branches(p, u))
    assert distance_index(p, u, ts[0] / 2) == 0
    assert distance_index(p, u, ts[0] + 1e-3) == 1
    assert distance_index(p, u, np.pi - 1e-3) == 2
    assert distance_index(p, u, -1e-3) == 0
    assert distance_index(p, u, -np.pi + 1e-3) == 2
    with pytest.raises(FocalPointError):
        distance_index(p, u, ts[1])
    with pytest.raises(ValueError):
        distance_index(p, u, 4.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(-3.1, 3.1))
def test_distance_index_locally_constant(lifted_torus, u0, u1, t):
    p = lifted_torus.patch
    u = np.array([u0, u1])
    ts = np.array([b.t for b in focal_branches(p, u)])
    gaps = np.r_[np.abs(ts - t), np.abs(ts - np.pi - t), abs(t)]
    assume(gaps.min() > 1e-3)
    k = distance_index(p, u, t)
    for du in ([1e-4, 0], [-1e-4, 0], [0, 1e-4], [0, -1e-4]):
        assert distance_index(p, u + np.array(du), t) == k
    assert distance_index(p, u, t + 1e-4) == k == distance_index(p, u, t - 1e-4)


def test_sphere_focal_cloud_is_two_points(lifted_sphere):
    cloud = sample_focal_set(lifted_sphere.patch, 16)
    assert cloud.meta["branches"] == 1
    assert component_count(cloud.points, 1e-6).count == 2


@pytest.mark.parametrize("grid", [64, 128])
def test_torus_focal_components(lifted_torus, grid):
    cloud = sample_focal_set(lifted_torus.patch, grid)
    assert cloud.meta["failed"] == 0 and cloud.meta["branches"] == 2
    comps = component_count(cloud.points, cloud.meta["link_radius"])
    # core circle, its antipode, and the axis circle (a great circle, so self-antipodal)
    assert comps.count == 3


def test_focal_cloud_antipodal_symmetry(lifted_cyclide):
    from scipy.spatial import cKDTree

    cloud = sample_focal_set(lifted_cyclide.patch, 24)
    d, _ = cKDTree(cloud.points).query(-cloud.points)
    assert d.max() < 1e-9
    g = cloud.meta["branches"]
    assert set(np.unique(cloud.tags)) == set(range(2 * g))
    no_anti = sample_focal_set(lifted_cyclide.patch, 24, antipodes=False)
    assert len(no_anti.points) == len(cloud.points) // 2


def test_empty_grid(lifted_torus):
    cloud = sample_focal_set(lifted_torus.patch, (0, 8))
    assert cloud.points.shape == (0, 4) and len(cloud.tags) == 0


def test_density_radius():
    assert np.isclose(sphere_volume(2), 4 * np.pi)
    assert np.isclose(sphere_volume(3), 2 * np.pi**2)
    # on S^2 a disk of radius r has area pi r^2: k of N points expected
    r = density_radius(2, 10000, k=8)
    assert np.isclose(10000 * np.pi * r**2 / (4 * np.pi), 8)


def test_end_count_sphere(lifted_sphere):
    cloud = sample_focal_set(lifted_sphere.patch, 16)
    for seed in (0, 1):
        rep = end_count(cloud, seed=seed)
        assert (rep.m, rep.alpha, rep.epsilon) == (2, 1, 2)
        assert rep.formula_holds and rep.stability
    js = rep.to_json()
    assert set(js) == {"m", "alpha", "epsilon", "formula_holds", "stability", "shell_counts", "sampling_params"}


def test_end_count_torus_two_densities(lifted_torus):
    cloud = sample_focal_set(lifted_torus.patch, 64)
    eps = set()
    for seed, mc in [(0, 200_000), (1, 100_000)]:
        rep = end_count(cloud, seed=seed, mc_points=mc)
        assert rep.alpha == 1 and rep.formula_holds
        eps.add(rep.epsilon)
    assert len(eps) == 1


def test_end_count_flags_empty_shells(lifted_sphere):
    cloud = sample_focal_set(lifted_sphere.patch, 8)
    rep = end_count(cloud, shell_radii=(10.0, 8.0), mc_points=5000)
    assert not rep.stability and rep.epsilon is None and not rep.formula_holds
    assert rep.to_json()["formula_holds"] is False


def test_end_count_input_checks():
    with pytest.raises(ValueError):
        end_count(PointCloud(np.zeros((0, 4))))
    pts = PointCloud(np.array([[1.0, 0, 0, 0]]))
    with pytest.raises(ValueError):
        end_count(pts, shell_radii=(0.1, 0.2))


@pytest.mark.parametrize("index, expected", [(0, 1), (1, 2), (2, 1)])
def test_covering_degree_torus(lifted_torus, index, expected):
    rep = covering_degree_check(lifted_torus, index, q_samples=15, seed=index)
    assert rep.expected == expected
    assert rep.ok and rep.hessian_mismatches == 0 and rep.hessian_checked > 0
    assert rep.to_json()["pass"] is True


def test_covering_degree_sphere(lifted_sphere):
    rep = covering_degree_check(lifted_sphere, 1, q_samples=12)
    assert rep.expected == 0 and set(rep.counts) == {0}


def test_covering_checks_arguments(lifted_torus, torus):
    with pytest.raises(ValueError):
        covering_degree_check(lifted_torus, 3)
    with pytest.raises(ValueError):
        covering_degree_check(torus, 0)


def test_covering_needs_enough_directions(lifted_torus):
    with pytest.raises(GeometryError):
        covering_degree_check(lifted_torus, 1, q_samples=5)
