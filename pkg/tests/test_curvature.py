import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from dupinlab.catalog import make_torus
from dupinlab.curvature import (
    curvature_derivative,
    dupin_residual,
    dupin_residuals,
    first_order_frame,
    fundamental_forms,
    shape_spectrum,
    signature_field,
)
from dupinlab.exceptions import MultiplicityError, NotImmersionError


def torus_closed_form(R, r, v):
    return np.sort([1.0 / r, np.cos(v) / (R + r * np.cos(v))])


def test_sphere_is_umbilic(sphere, rng):
    for u in sphere.patch.sample(10, rng):
        g, h, _ = fundamental_forms(sphere.patch, u)
        assert np.allclose(g, h, atol=1e-14)
        spec = shape_spectrum(sphere.patch, u)
        assert spec.signature == (2,)
        assert np.allclose(spec.curvatures, 1.0, atol=1e-13)


def test_sphere_four_dim():
    from dupinlab.catalog import make_sphere

    e = make_sphere(2.0, 4)
    spec = shape_spectrum(e.patch, [1.0, 1.2, 0.5])
    assert spec.signature == (3,)
    assert np.allclose(spec.curvatures, 0.5, atol=1e-13)


def test_torus_outer_equator(torus):
    spec = shape_spectrum(torus.patch, [0.3, 0.0])
    assert spec.signature == (1, 1)
    assert np.allclose(spec.curvatures, [1 / 3, 1.0], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(1.2, 5.0),
    st.floats(0.1, 0.9),
    st.floats(0, 2 * np.pi),
    st.floats(0, 2 * np.pi),
)
def test_torus_closed_form_property(R, frac, u, v):
    r = frac * R * 0.99
    t = make_torus(R, r)
    spec = shape_spectrum(t.patch, [u, v])
    assert np.allclose(spec.curvatures, torus_closed_form(R, r, v), atol=1e-10 / r)


def test_ellipsoid_matches_gauss_and_mean_closed_forms(ellipsoid, rng):
    a, b, c = 3.0, 2.0, 1.0
    for u in ellipsoid.patch.sample(50, rng):
        spec = shape_spectrum(ellipsoid.patch, u)
        x, y, z = spec.point
        q = x**2 / a**4 + y**2 / b**4 + z**2 / c**4
        K = 1.0 / (a * b * c) ** 2 / q**2
        H = (x**2 + y**2 + z**2 - a**2 - b**2 - c**2) / (2 * (a * b * c) ** 2 * q**1.5)
        assert np.isclose(np.prod(spec.curvatures), K, rtol=1e-10)
        # inward normal: both curvatures positive
        assert np.isclose(np.mean(spec.curvatures), abs(H), rtol=1e-10)


def test_spectrum_invariants(cyclide, tube, rng):
    for entry in (cyclide, tube):
        for u in entry.patch.sample(20, rng):
            spec = shape_spectrum(entry.patch, u)
            assert np.all(np.diff(spec.curvatures) >= 0)
            assert np.isclose(
                spec.curvatures.sum(), np.trace(np.linalg.solve(spec.g, spec.h)), atol=1e-10 * (1 + np.abs(spec.curvatures).max())
            )
            S = spec.shape_operator()
            assert np.max(np.abs(S - spec.reconstructed_operator())) < 1e-9 * (1 + np.abs(spec.curvatures).max())
            gram = spec.frame @ spec.frame.T
            assert np.allclose(gram, np.eye(len(gram)), atol=1e-10)
            assert sum(spec.signature) == entry.patch.param_dim


def test_first_order_frame(tube, rng):
    u = tube.patch.sample(1, rng)[0]
    fr = first_order_frame(tube.patch, u)
    E = np.vstack([fr.tangent_frame, fr.normal_frame])
    assert np.allclose(E @ E.T, np.eye(4), atol=1e-10)
    J = tube.patch.jet(u, 1)[1]
    # the tangent frame spans the rows of the order-1 jet
    proj = J @ fr.tangent_frame.T @ fr.tangent_frame
    assert np.allclose(proj, J, atol=1e-10)


def test_non_immersion_raises(sphere):
    with pytest.raises(NotImmersionError):
        fundamental_forms(sphere.patch, [0.0, 1.0])


def test_tube_signatures(tube):
    assert shape_spectrum(tube.patch, [0.3, 0.7, 1.0]).signature == (1, 1, 1)
    assert shape_spectrum(tube.patch, [0.3, 0.7, np.pi / 2]).signature == (2, 1)


def test_derivative_refuses_changing_multiplicity(tube):
    u = [0.3, 0.7, np.pi / 2]
    with pytest.raises(MultiplicityError):
        curvature_derivative(tube.patch, u, i=0)


def test_rigid_motion_invariance(cyclide, rng):
    Q = Rotation.from_rotvec([0.3, -1.1, 0.5]).as_matrix()
    shift = np.array([1.0, -2.0, 0.5])
    base = cyclide.patch.fn

    def moved(*u):
        x = base(*u)
        return [sum(Q[i, j] * x[j] for j in range(3)) + shift[i] for i in range(3)]

    patch = dataclasses.replace(cyclide.patch, fn=moved, orientation=cyclide.patch.orientation)
    for u in cyclide.patch.sample(10, rng):
        a = shape_spectrum(cyclide.patch, u)
        b = shape_spectrum(patch, u)
        assert a.signature == b.signature
        assert np.allclose(a.curvatures, b.curvatures, atol=1e-9)


def test_reflection_invariance(torus):
    base = torus.patch.fn
    patch = dataclasses.replace(torus.patch, fn=lambda u, v: base(-u, v), orientation=-torus.patch.orientation)
    for u, v in [(0.3, 0.4), (1.0, 2.0)]:
        assert shape_spectrum(patch, [-u, v]).signature == shape_spectrum(torus.patch, [u, v]).signature
        assert np.allclose(shape_spectrum(patch, [-u, v]).curvatures, shape_spectrum(torus.patch, [u, v]).curvatures)


def test_curvature_derivative_matches_finite_differences(ellipsoid, cyclide, rng):
    for entry in (ellipsoid, cyclide):
        for u in entry.patch.sample(5, rng, margin=0.15):
            spec = shape_spectrum(entry.patch, u)
            for i in range(len(spec.signature)):
                d = curvature_derivative(entry.patch, u, spec, i)
                comps = np.r_[d.leaf_components, d.normal_components] if i == 0 else np.r_[d.normal_components, d.leaf_components]
                for col, comp in zip(spec.frame_param.T, comps):

                    def central(h):
                        kp = shape_spectrum(entry.patch, u + h * col).group_value(i)
                        km = shape_spectrum(entry.patch, u - h * col).group_value(i)
                        return (kp - km) / (2 * h)

                    fd = (4 * central(5e-5) - central(1e-4)) / 3
                    assert abs(fd - comp) < 1e-6 * (1 + abs(d.kappa) + abs(comp))


def test_sphere_and_torus_derivatives_vanish(sphere, torus):
    d = curvature_derivative(sphere.patch, [1.0, 2.0], i=0)
    assert np.max(np.abs(d.leaf_components)) < 1e-12
    assert len(d.leaf_components) == 2 and len(d.normal_components) == 0
    spec = shape_spectrum(torus.patch, [0.4, 0.9])
    # group 1 is the constant 1/r = 1 profile curvature
    assert np.isclose(spec.group_value(1), 1.0)
    d1 = curvature_derivative(torus.patch, [0.4, 0.9], spec, 1)
    assert abs(d1.leaf_components[0]) < 1e-12
    assert abs(d1.normal_components[0]) < 1e-12


def test_dupin_residuals(torus, cyclide, ellipsoid, rng):
    for u in torus.patch.sample(20, rng):
        for i in range(2):
            assert dupin_residual(torus.patch, u, i=i) < 1e-8
    res, _, valid = dupin_residuals(cyclide.patch, cyclide.patch.grid((32, 32)).reshape(-1, 2))
    assert valid.all() and res.max() < 1e-6
    assert dupin_residual(ellipsoid.patch, [0.7, 1.1], i=0) > 1e-3


def test_dupin_residual_scale_under_inversion(torus, cyclide, rng):
    # both the torus and its inversion are Dupin: residuals vanish on both
    U = torus.patch.sample(100, rng)
    a = dupin_residuals(torus.patch, U)[0].max()
    b = dupin_residuals(cyclide.patch, U)[0].max()
    assert abs(a - b) < 1e-6


def test_signature_field_examples(torus, sphere, tube):
    f = signature_field(torus.patch, (64, 64))
    assert f.summary() == [{"tuple": [1, 1], "count": 4096, "components": 1}]
    assert signature_field(sphere.patch, (16, 16)).signatures == [(2,)]
    tf = signature_field(tube.patch, (32, 32, 64))
    theta = tube.patch.grid_axes((32, 32, 64))[2]
    repeated = tf.signatures.index((2, 1))
    rows = np.unique(np.nonzero(tf.codes == repeated)[2])
    for k in rows:
        dist = min(abs(theta[k] - np.pi / 2), abs(theta[k] - 3 * np.pi / 2))
        assert dist <= 2 * (2 * np.pi / 64)
    js = tf.to_json(include_nodes=True)
    assert js["grid"] == [32, 32, 64] and len(js["nodes"]) == 32 * 32 * 64


def test_signature_field_flags_non_immersion(sphere):
    assert signature_field(sphere.patch, (8, 8)).flagged == 0
    # a single cell centred on the pole: every node is a non-immersion
    polar = dataclasses.replace(sphere.patch, lower=(-0.1, 0.0), upper=(0.1, 2 * np.pi))
    f = signature_field(polar, (1, 4))
    assert f.flagged == 4 and f.signatures == []
