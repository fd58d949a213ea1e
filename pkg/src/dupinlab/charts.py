"""Sphere charts along curvature surfaces and the iterated Dupin chart.

A single stage maps a small ball ``B^{m_i}(eps_i)`` onto the curvature
sphere of the i-th principal foliation through a point.  Iterating one
stage per principal curvature, re-deriving the sphere data at every
intermediate point, parametrizes a neighborhood on a proper Dupin
hypersurface.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._jets import Jet, algebra, sqrt
from .curvature import dupin_residuals, locally_constant, shape_spectrum
from .exceptions import (
    ConvergenceError,
    DupinConditionError,
    GeometryError,
    MultiplicityError,
    OffSurfaceError,
    PlaneLeafError,
    StageError,
)
from .spheres import DUPIN_TOL, curvature_sphere

DEFAULT_BALL_RADIUS = 0.25
MIN_BALL_RADIUS = 1e-3


def ball_height(s):
    """s0 = sqrt(1 - |s|^2); accepts arrays (last axis is s) or jets."""
    if isinstance(s, (list, tuple)):
        return sqrt(1.0 - sum(si * si for si in s))
    s = np.asarray(s, dtype=float)
    return np.sqrt(1.0 - np.sum(s * s, axis=-1))


def ball_height_identities(s):
    """Residuals of the polynomial relations satisfied by s0 and its partials.

    (s0)^2 + (|s|^2 - 1) = 0, (s0)^2 (D_i s0)^2 - s_i^2 = 0 and
    (s0)^6 (D_ij s0)^2 - (delta_ij (1 - |s|^2) + s_i s_j)^2 = 0.  The
    partials come from jet arithmetic, the right-hand sides are the closed
    polynomials.  Returns the max absolute residual of each family.
    """
    s = np.asarray(s, dtype=float)
    dim = s.shape[-1]
    alg = algebra(dim, 2)
    jets = [Jet.variable(alg, k, s[..., k]) for k in range(dim)]
    h = ball_height(jets)
    s0 = h.value
    r2 = np.sum(s * s, axis=-1)
    zeroth = np.abs(s0**2 + (r2 - 1.0))
    first, second = [], []
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        first.append(np.abs(s0**2 * h.derivative(e) ** 2 - s[..., i] ** 2))
        for j in range(i, dim):
            e2 = [0] * dim
            e2[i] += 1
            e2[j] += 1
            a2 = (1.0 - r2) * (i == j) + s[..., i] * s[..., j]
            second.append(np.abs(s0**6 * h.derivative(e2) ** 2 - a2**2))
    return {
        "zeroth": float(np.max(zeroth)),
        "first": float(np.max(first)),
        "second": float(np.max(second)),
    }


@dataclass
class SphereChartData:
    center: np.ndarray
    anchor: np.ndarray
    radius: float
    frame: np.ndarray  # (m_i, n) orthonormal rows tangent to the leaf
    ball_radius: float = DEFAULT_BALL_RADIUS
    param: np.ndarray = field(default=None, repr=False)


def sphere_chart(data, s):
    """center + s0(s) (anchor - center) + radius * sum_a s^a e_a."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape[-1] != len(data.frame):
        raise ValueError(f"chart expects {len(data.frame)} coordinates")
    if np.any(np.linalg.norm(s, axis=-1) >= data.ball_radius):
        raise ValueError(f"|s| must be below the ball radius {data.ball_radius}")
    s0 = ball_height(s)[..., None]
    return data.center + s0 * (data.anchor - data.center) + data.radius * (s @ data.frame)


def param_invert(patch, target, seed, max_iter=50, tol=1e-9, off_surface=1e-6):
    """Gauss-Newton solution of min |f(u) - target|^2 started at ``seed``."""
    target = np.asarray(target, dtype=float)
    u = patch.wrap(np.asarray(seed, dtype=float))
    x, J = patch.jet(u, 1)
    res = np.linalg.norm(x - target)
    best = (res, u)
    scale = 1.0 + np.linalg.norm(target)
    for _ in range(max_iter):
        if res < 1e-14 * scale:
            break
        step, *_ = np.linalg.lstsq(J.T, target - x, rcond=None)
        u = patch.wrap(u + step)
        x, J = patch.jet(u, 1)
        res = np.linalg.norm(x - target)
        if res < best[0]:
            best = (res, u)
        if np.linalg.norm(step) < 1e-15 * (1.0 + np.linalg.norm(u)):
            break
    else:
        if best[0] > tol:
            raise ConvergenceError(
                f"param_invert did not converge in {max_iter} iterations", best[0]
            )
    res, u = best
    if res > off_surface:
        raise OffSurfaceError(f"target is off the surface (residual {res:.3g})")
    if not patch.in_domain(u):
        raise OffSurfaceError("preimage lies outside the parameter domain")
    return u


def _procrustes(frame, prev):
    """Rotate ``frame`` rows within their span to best match ``prev`` rows."""
    M = prev @ frame.T
    U, _, Wt = np.linalg.svd(M)
    return (U @ Wt) @ frame


def _gauge(frame):
    # deterministic default: largest-magnitude component of each row positive
    out = frame.copy()
    for k, row in enumerate(out):
        if row[np.argmax(np.abs(row))] < 0:
            out[k] = -row
    return out


def check_proper_dupin(patch, u, spectrum, tol=DUPIN_TOL):
    if not locally_constant(patch, u, spectrum):
        raise MultiplicityError(f"signature is not locally constant at {u}")
    res, labels, _ = dupin_residuals(patch, u, spectrum.grouping_tol)
    if np.max(res) > tol:
        raise DupinConditionError(f"Dupin residual {np.max(res):.3g} exceeds {tol} at {u}")


def build_stage(patch, u, i, prev_frame=None, ball_radius=DEFAULT_BALL_RADIUS, spectrum=None):
    """Sphere-chart data for group ``i`` at ``u``."""
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    check_proper_dupin(patch, u, spectrum)
    sphere = curvature_sphere(patch, u, spectrum, i)
    if sphere.kind == "plane":
        raise PlaneLeafError(
            "curvature surface lies in a plane; pre-compose with make_cyclide_by_inversion "
            "so every leaf lies on a genuine sphere"
        )
    frame = spectrum.frame[spectrum.group(i)]
    frame = _gauge(frame) if prev_frame is None else _procrustes(frame, np.asarray(prev_frame))
    return SphereChartData(sphere.center, spectrum.point, sphere.radius, frame, ball_radius, u)


@dataclass
class IteratedChart:
    """Composite chart (s_1, ..., s_g) -> R^n about ``base_param``.

    Base frames of every principal foliation are computed once and used as
    the gauge reference for each stage.
    """

    patch: object
    base_param: np.ndarray
    ball_radii: tuple
    signature: tuple = None
    base_frames: list = field(default=None, repr=False)

    def __post_init__(self):
        self.base_param = np.asarray(self.base_param, dtype=float)
        spec = shape_spectrum(self.patch, self.base_param)
        check_proper_dupin(self.patch, self.base_param, spec)
        self.signature = spec.signature
        self.base_frames = [_gauge(spec.frame[spec.group(i)]) for i in range(len(spec.signature))]
        if self.ball_radii is None:
            self.ball_radii = (DEFAULT_BALL_RADIUS,) * len(self.signature)
        self.ball_radii = tuple(float(e) for e in self.ball_radii)
        if len(self.ball_radii) != len(self.signature):
            raise ValueError(
                f"need {len(self.signature)} ball radii for signature {self.signature}"
            )

    @property
    def stage_count(self):
        return len(self.signature)

    def split(self, s):
        s = np.asarray(s, dtype=float).ravel()
        if len(s) != sum(self.signature):
            raise ValueError(f"expected {sum(self.signature)} chart coordinates")
        return np.split(s, np.cumsum(self.signature)[:-1])

    def evaluate(self, s, return_param=False):
        parts = self.split(s)
        u = self.base_param
        point = self.patch.eval(u)
        for k, sk in enumerate(parts):
            try:
                if k > 0:
                    u = param_invert(self.patch, point, u)
                stage = build_stage(
                    self.patch, u, k, self.base_frames[k], self.ball_radii[k]
                )
                point = sphere_chart(stage, sk)
            except (GeometryError, ValueError) as exc:
                raise StageError(k, exc) from exc
        return (point, u) if return_param else point

    __call__ = evaluate


def iterate_chart(patch, base, s, ball_radii=None):
    return IteratedChart(patch, base, ball_radii).evaluate(s)


def choose_ball_radii(patch, base, start=DEFAULT_BALL_RADIUS, floor=MIN_BALL_RADIUS):
    """Halve each stage radius until probes at +/- 0.9 eps along every axis succeed."""
    chart = IteratedChart(patch, base, None)
    radii = [start] * chart.stage_count
    for k, m in enumerate(chart.signature):
        while True:
            chart.ball_radii = tuple(radii)
            ok = True
            for sign, axis in itertools.product((-1, 1), range(m)):
                parts = [np.zeros(mm) for mm in chart.signature]
                parts[k][axis] = sign * 0.9 * radii[k]
                try:
                    chart.evaluate(np.concatenate(parts))
                except StageError:
                    ok = False
                    break
            if ok or radii[k] / 2 < floor:
                break
            radii[k] /= 2
    return tuple(radii)


def _ball_grid(m, eps, count):
    # square grid inscribed in the ball, scaled slightly inside
    side = 0.95 * eps / np.sqrt(m)
    axis = np.linspace(-side, side, count)
    return np.array(list(itertools.product(axis, repeat=m)))


def chart_grid(signature, ball_radii, counts):
    """Product grid over the stage balls; ``counts`` nodes per coordinate axis."""
    per_stage = [_ball_grid(m, e, c) for m, e, c in zip(signature, ball_radii, counts)]
    rows = [np.concatenate(parts) for parts in itertools.product(*per_stage)]
    return np.array(rows)


@dataclass
class ChartReport:
    max_surface_residual: float
    max_param_distance: float
    coverage_count: int
    node_count: int
    injective: bool
    min_separation: float
    anchor_error: float
    failures: list
    rows: list = field(repr=False, default_factory=list)

    def to_json(self):
        return {
            "max_surface_residual": self.max_surface_residual,
            "max_param_distance": self.max_param_distance,
            "coverage_count": self.coverage_count,
            "node_count": self.node_count,
            "injective": self.injective,
            "min_separation": self.min_separation,
            "anchor_error": self.anchor_error,
            "failures": self.failures,
        }


def chart_roundtrip(patch, base, counts, ball_radii=None):
    """Evaluate the iterated chart on an s-grid and project each output back onto the patch."""
    chart = IteratedChart(patch, base, ball_radii)
    if np.isscalar(counts):
        counts = (int(counts),) * chart.stage_count
    S = chart_grid(chart.signature, chart.ball_radii, counts)
    anchor = np.linalg.norm(chart.evaluate(np.zeros(S.shape[1])) - patch.eval(chart.base_param))
    pts, params, residuals, rows, failures = [], [], [], [], []
    for s in S:
        try:
            point, u_last = chart.evaluate(s, return_param=True)
            u = param_invert(patch, point, u_last, off_surface=np.inf)
        except GeometryError as exc:
            failures.append({"s": s.tolist(), "error": str(exc)})
            continue
        r = float(np.linalg.norm(patch.eval(u) - point))
        pts.append(point)
        params.append(u)
        residuals.append(r)
        rows.append((s, point, r))
    pts = np.array(pts)
    min_sep, injective = np.inf, True
    if len(pts) > 1:
        dist, _ = cKDTree(pts).query(pts, k=2)
        min_sep = float(dist[:, 1].min())
        injective = bool(min_sep > 1e-10)
    pdist = (
        float(np.max(np.linalg.norm(patch.param_delta(np.array(params), chart.base_param), axis=1)))
        if params
        else 0.0
    )
    return ChartReport(
        max_surface_residual=float(max(residuals)) if residuals else float("nan"),
        max_param_distance=pdist,
        coverage_count=len(pts),
        node_count=len(S),
        injective=injective,
        min_separation=min_sep,
        anchor_error=float(anchor),
        failures=failures,
        rows=rows,
    )
