"""Concrete immersions with exact derivative oracles.

Every patch is a closed-form map written once against a tiny math facade
(:func:`~dupinlab._jets.sin`, ``cos``, ``sqrt``); evaluating it on
:class:`~dupinlab._jets.Jet` objects yields exact partial derivatives, so
composed surfaces (inversions, stereographic lifts, tubes) get their
oracles through the chain rule for free.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import sympy

from ._jets import Jet, algebra, cos, derivative_tensors, sin
from ._poly import Polynomial

TWO_PI = 2.0 * np.pi


def generalized_cross(rows):
    """Vector orthogonal to the k = n-1 rows of ``rows[..., k, n]`` (cofactor expansion)."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[-1]
    comps = []
    for k in range(n):
        minor = np.delete(rows, k, axis=-1)
        comps.append((-1) ** k * np.linalg.det(minor))
    return np.stack(comps, axis=-1)


@dataclass(frozen=True)
class SurfacePatch:
    """Immersion of an axis-aligned parameter box into R^n.

    ``fn(*u)`` returns the ``ambient_dim`` coordinate functions and must
    accept floats, arrays or jets.  ``orientation`` multiplies the cofactor
    normal; ``0`` means "choose by the default rule" (the normal's last
    nonzero ambient component is positive at the domain center).  A
    ``lifted`` patch lives in the unit sphere S^(n-1) of its ambient space
    and its normal is taken inside the sphere.
    """

    name: str
    ambient_dim: int
    param_dim: int
    lower: tuple
    upper: tuple
    periodic: tuple
    fn: Callable = field(repr=False)
    max_order: int = 4
    orientation: int = 0
    lifted: bool = False

    def __post_init__(self):
        if self.max_order < 3:
            raise ValueError("derivative oracle must reach order 3")
        if self.orientation == 0:
            raw = self._raw_normal(self.center)
            nz = np.flatnonzero(np.abs(raw) > 1e-12 * np.linalg.norm(raw))
            sign = 1 if raw[nz[-1]] > 0 else -1
            object.__setattr__(self, "orientation", sign)

    # -- domain ---------------------------------------------------------
    @property
    def center(self):
        return 0.5 * (np.asarray(self.lower, float) + np.asarray(self.upper, float))

    @property
    def widths(self):
        return np.asarray(self.upper, float) - np.asarray(self.lower, float)

    def wrap(self, u):
        u = np.array(u, dtype=float)
        lo, w = np.asarray(self.lower, float), self.widths
        for k, per in enumerate(self.periodic):
            if per:
                u[..., k] = lo[k] + np.mod(u[..., k] - lo[k], w[k])
        return u

    def in_domain(self, u):
        u = np.asarray(u, dtype=float)
        ok = np.ones(u.shape[:-1], dtype=bool)
        for k, per in enumerate(self.periodic):
            if not per:
                ok &= (u[..., k] > self.lower[k]) & (u[..., k] < self.upper[k])
        return ok

    def param_delta(self, a, b):
        """Componentwise a - b with periodic axes reduced to (-w/2, w/2]."""
        d = np.asarray(a, float) - np.asarray(b, float)
        w = self.widths
        for k, per in enumerate(self.periodic):
            if per:
                d[..., k] = d[..., k] - w[k] * np.round(d[..., k] / w[k])
        return d

    def sample(self, count, rng, margin=0.05):
        """Uniform parameter samples; non-periodic axes keep a relative margin."""
        lo = np.asarray(self.lower, float).copy()
        hi = np.asarray(self.upper, float).copy()
        for k, per in enumerate(self.periodic):
            if not per:
                pad = margin * (hi[k] - lo[k])
                lo[k] += pad
                hi[k] -= pad
        return lo + (hi - lo) * rng.random((count, self.param_dim))

    def grid_axes(self, counts):
        axes = []
        for k, (c, per) in enumerate(zip(counts, self.periodic)):
            w = self.upper[k] - self.lower[k]
            if per:
                axes.append(self.lower[k] + w * np.arange(c) / c)
            else:
                axes.append(self.lower[k] + w * (np.arange(c) + 0.5) / c)
        return axes

    def grid(self, counts):
        """Parameter grid of shape ``counts + (m,)``."""
        mesh = np.meshgrid(*self.grid_axes(counts), indexing="ij")
        return np.stack(mesh, axis=-1)

    # -- oracles --------------------------------------------------------
    def eval(self, u):
        u = np.asarray(u, dtype=float)
        comps = self.fn(*np.moveaxis(u, -1, 0))
        batch = u.shape[:-1]
        return np.stack([np.broadcast_to(np.asarray(c, float), batch) for c in comps], axis=-1)

    def jet(self, u, order=3):
        """Derivative tensors ``[x, D1, ..., D_order]``; ``D_k`` has shape batch+(m,)*k+(n,)."""
        if order > self.max_order:
            raise ValueError(f"order {order} exceeds max_order {self.max_order}")
        u = np.asarray(u, dtype=float)
        alg = algebra(self.param_dim, order)
        variables = [Jet.variable(alg, i, u[..., i]) for i in range(self.param_dim)]
        comps = self.fn(*variables)
        return derivative_tensors(comps, alg, u.shape[:-1], order)

    def partial(self, u, alpha):
        """Partial derivative of the immersion for multi-index ``alpha``."""
        alpha = tuple(int(a) for a in alpha)
        order = sum(alpha)
        u = np.asarray(u, dtype=float)
        if order == 0:
            return self.eval(u)
        alg = algebra(self.param_dim, order)
        variables = [Jet.variable(alg, i, u[..., i]) for i in range(self.param_dim)]
        comps = self.fn(*variables)
        out = []
        for c in comps:
            if isinstance(c, Jet):
                out.append(np.broadcast_to(c.derivative(alpha), u.shape[:-1]))
            else:
                out.append(np.zeros(u.shape[:-1]))
        return np.stack(out, axis=-1)

    def _raw_normal(self, u, x=None, J=None):
        if x is None or J is None:
            x, J = self.jet(u, 1)
        rows = np.concatenate([x[..., None, :], J], axis=-2) if self.lifted else J
        return generalized_cross(rows)

    def normal_from(self, x, J):
        raw = self._raw_normal(None, x, J)
        return self.orientation * raw / np.linalg.norm(raw, axis=-1, keepdims=True)

    def unit_normal(self, u):
        x, J = self.jet(u, 1)
        return self.normal_from(x, J)

    @cached_property
    def diameter(self):
        pts = self.eval(self.sample(2048, np.random.default_rng(0)))
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def orient_toward(patch, reference):
    """Copy of ``patch`` whose normal at the domain center has positive dot with ``reference``."""
    raw = patch._raw_normal(patch.center)
    sign = 1 if float(np.dot(raw, reference)) > 0 else -1
    return dataclasses.replace(patch, orientation=sign)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    patch: SurfacePatch
    betti_z2: tuple
    known_implicit: Optional[Polynomial] = None
    expected_signature: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    @property
    def betti_sum(self):
        return int(sum(self.betti_z2))

    @property
    def euler_characteristic(self):
        return int(sum((-1) ** k * b for k, b in enumerate(self.betti_z2)))

    def implicit_residual(self, count=1000, seed=0):
        """Max normalized residual of the known implicit on random patch points."""
        if self.known_implicit is None:
            return None
        pts = self.patch.eval(self.patch.sample(count, np.random.default_rng(seed)))
        return float(self.known_implicit.normalized_residual(pts).max())


@dataclass
class PointCloud:
    points: np.ndarray
    tags: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 0) if pts.size == 0 else pts[None, :]
        self.points = pts
        if self.tags is not None:
            self.tags = np.asarray(self.tags)
            if len(self.tags) != len(pts):
                raise ValueError("one tag per point required")

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1] if self.points.ndim == 2 else 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = [f"x{i + 1}" for i in range(self.dim)]
            if self.tags is not None:
                header.append("tag")
            w.writerow(header)
            for k, p in enumerate(self.points):
                row = [format(float(v), ".17g") for v in p]
                if self.tags is not None:
                    row.append(str(self.tags[k]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        has_tag = header[-1] == "tag"
        k = len(header) - int(has_tag)
        pts = np.array([[float(v) for v in r[:k]] for r in body]).reshape(-1, k)
        tags = None
        if has_tag:
            raw = [r[k] for r in body]
            try:
                tags = np.array([int(t) for t in raw])
            except ValueError:
                tags = np.array(raw)
        return cls(pts, tags)


# ---------------------------------------------------------------------------
# factories


def _implicit(expr, xs):
    return Polynomial.from_sympy(expr, xs)


def make_sphere(radius=1.0, n=3):
    """Round (n-1)-sphere of the given radius centered at the origin of R^n."""
    if n < 3:
        raise ValueError("ambient dimension must be at least 3")
    if radius <= 0:
        raise ValueError("radius must be positive")

    def fn(*a):
        comps, prod = [], radius
        for ak in a:
            comps.append(prod * cos(ak))
            prod = prod * sin(ak)
        comps.append(prod)
        return comps

    m = n - 1
    patch = SurfacePatch(
        name=f"sphere-{n}",
        ambient_dim=n,
        param_dim=m,
        lower=(0.0,) * m,
        upper=(np.pi,) * (m - 1) + (TWO_PI,),
        periodic=(False,) * (m - 1) + (True,),
        fn=fn,
        orientation=1,
    )
    patch = orient_toward(patch, -patch.eval(patch.center))
    xs = sympy.symbols(f"x1:{n + 1}")
    betti = (1,) + (0,) * (n - 2) + (1,)
    return CatalogEntry(
        name="sphere",
        patch=patch,
        betti_z2=betti,
        known_implicit=_implicit(sum(x**2 for x in xs) - radius**2, xs),
        expected_signature=(m,),
        params={"radius": radius, "n": n},
    )


def torus_point(R, r, u, v):
    return [(R + r * cos(v)) * cos(u), (R + r * cos(v)) * sin(u), r * sin(v)]


def torus_normal(u, v):
    """Outward unit normal of a torus of revolution."""
    return [cos(v) * cos(u), cos(v) * sin(u), sin(v)]


def torus_implicit(R, r):
    xs = sympy.symbols("x1:4")
    x, y, z = xs
    expr = (x**2 + y**2 + z**2 + R**2 - r**2) ** 2 - 4 * R**2 * (x**2 + y**2)
    return _implicit(expr, xs)


def make_torus(R=2.0, r=1.0):
    """Torus of revolution about the x3 axis; normal points into the solid torus."""
    if not R > r > 0:
        raise ValueError("torus requires R > r > 0")

    patch = SurfacePatch(
        name="torus",
        ambient_dim=3,
        param_dim=2,
        lower=(0.0, 0.0),
        upper=(TWO_PI, TWO_PI),
        periodic=(True, True),
        fn=lambda u, v: torus_point(R, r, u, v),
        orientation=1,
    )
    uc = patch.center[0]
    core = np.array([R * np.cos(uc), R * np.sin(uc), 0.0])
    patch = orient_toward(patch, core - patch.eval(patch.center))
    return CatalogEntry(
        name="torus",
        patch=patch,
        betti_z2=(1, 2, 1),
        known_implicit=torus_implicit(R, r),
        expected_signature=(1, 1),
        params={"R": R, "r": r},
    )


def make_tube_over_torus(R=2.0, r=1.0, eps=0.2):
    """Tube of radius eps in R^4 = R^3 x R around a torus of revolution."""
    if not R > r > 0:
        raise ValueError("torus requires R > r > 0")
    if not 0 < eps < min(r, R - r):
        raise ValueError(f"eps must lie in (0, {min(r, R - r)}) for an embedded tube")

    def fn(u, v, t):
        base = torus_point(R, r, u, v)
        nu = torus_normal(u, v)
        ct = eps * cos(t)
        return [b + ct * w for b, w in zip(base, nu)] + [eps * sin(t)]

    patch = SurfacePatch(
        name="tube-over-torus",
        ambient_dim=4,
        param_dim=3,
        lower=(0.0, 0.0, 0.0),
        upper=(TWO_PI,) * 3,
        periodic=(True, True, True),
        fn=fn,
        orientation=1,
    )
    u, v, _ = patch.center
    core = np.array(torus_point(R, r, u, v) + [0.0])
    patch = orient_toward(patch, core - patch.eval(patch.center))
    return CatalogEntry(
        name="tube-over-torus",
        patch=patch,
        betti_z2=(1, 3, 3, 1),
        known_implicit=None,
        expected_signature=(1, 1, 1),
        params={"R": R, "r": r, "eps": eps},
    )


def make_ellipsoid(a=3.0, b=2.0, c=1.0):
    """Triaxial ellipsoid; the non-Dupin control surface."""
    if not a > b > c > 0:
        raise ValueError("ellipsoid axes must satisfy a > b > c > 0")

    patch = SurfacePatch(
        name="ellipsoid",
        ambient_dim=3,
        param_dim=2,
        lower=(0.0, 0.0),
        upper=(TWO_PI, np.pi),
        periodic=(True, False),
        fn=lambda u, v: [a * cos(u) * sin(v), b * sin(u) * sin(v), c * cos(v)],
        orientation=1,
    )
    patch = orient_toward(patch, -patch.eval(patch.center))
    xs = sympy.symbols("x1:4")
    x, y, z = xs
    expr = x**2 / a**2 + y**2 / b**2 + z**2 / c**2 - 1
    return CatalogEntry(
        name="ellipsoid",
        patch=patch,
        betti_z2=(1, 0, 1),
        known_implicit=_implicit(expr, xs),
        expected_signature=None,
        params={"a": a, "b": b, "c": c},
    )


def make_flat_strip(half_width=1.0):
    """Planar square (u, v, 0): the flat, plane-leaf control case."""
    patch = SurfacePatch(
        name="flat-strip",
        ambient_dim=3,
        param_dim=2,
        lower=(-half_width, -half_width),
        upper=(half_width, half_width),
        periodic=(False, False),
        fn=lambda u, v: [u, v, 0.0],
    )
    xs = sympy.symbols("x1:4")
    return CatalogEntry(
        name="flat-strip",
        patch=patch,
        betti_z2=(1, 0, 0),
        known_implicit=_implicit(xs[2], xs),
        expected_signature=(2,),
        params={"half_width": half_width},
    )


def invert_point(x, center, k2):
    d = [xi - ci for xi, ci in zip(x, center)]
    s = sum(di * di for di in d)
    scale = k2 / s
    return [ci + scale * di for ci, di in zip(center, d)]


def _inversion_differential(x, center, k2):
    d = np.asarray(x, float) - center
    s = d @ d
    return k2 / s * (np.eye(len(d)) - 2.0 * np.outer(d, d) / s)


def _invert_implicit(poly, center, k2):
    xs = poly.symbols()
    d = [x - float(c) for x, c in zip(xs, center)]
    s = sum(di * di for di in d)
    sub = {x: float(c) + k2 * di / s for x, c, di in zip(xs, center, d)}
    expr = poly.to_sympy().xreplace(sub)
    num, _ = sympy.fraction(sympy.together(expr))
    num = sympy.Poly(sympy.expand(num), *xs)
    s_poly = sympy.Poly(sympy.expand(s), *xs)
    while True:
        q, rem = sympy.div(num, s_poly)
        if not rem.is_zero:
            break
        num = q
    out = Polynomial.from_sympy(num.as_expr(), xs)
    return Polynomial(out.dim, out.degree, out.coeffs / np.abs(out.coeffs).max())


def make_cyclide_by_inversion(base, center=(0.0, 0.0, 5.0), inv_radius=1.0, min_distance=1e-3):
    """Image of ``base`` under inversion in the sphere (center, inv_radius).

    Applied to a torus this yields a ring Dupin cyclide.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (base.patch.ambient_dim,):
        raise ValueError("inversion center has the wrong dimension")
    if base.patch.lifted:
        raise ValueError("invert the Euclidean surface before lifting")
    counts = (48,) * base.patch.param_dim if base.patch.param_dim <= 2 else (20,) * base.patch.param_dim
    pts = base.patch.eval(base.patch.grid(counts)).reshape(-1, len(center))
    dist = float(np.linalg.norm(pts - center, axis=1).min())
    if dist < min_distance:
        raise ValueError(f"inversion center lies on the surface (distance {dist:.3g})")
    k2 = float(inv_radius) ** 2
    base_fn = base.patch.fn
    c = tuple(center)

    patch = dataclasses.replace(
        base.patch,
        name=f"inverted-{base.patch.name}",
        fn=lambda *u: invert_point(base_fn(*u), c, k2),
        orientation=1,
    )
    uc = base.patch.center
    pushed = _inversion_differential(base.patch.eval(uc), center, k2) @ base.patch.unit_normal(uc)
    patch = orient_toward(patch, pushed)
    implicit = None
    if base.known_implicit is not None:
        implicit = _invert_implicit(base.known_implicit, center, k2)
    name = "cyclide" if base.name == "torus" else f"inverted-{base.name}"
    params = {"base": base.name, **base.params, "center": center.tolist(), "inv_radius": inv_radius}
    return CatalogEntry(
        name=name,
        patch=patch,
        betti_z2=base.betti_z2,
        known_implicit=implicit,
        expected_signature=base.expected_signature,
        params=params,
    )


def inverse_stereographic(x):
    """R^n -> S^n minus the pole e_{n+1}; works on arrays or jets."""
    s = sum(xi * xi for xi in x)
    d = 1.0 / (s + 1.0)
    return [2.0 * xi * d for xi in x] + [(s - 1.0) * d]


def stereographic(y):
    """Projection from the pole e_{n+1}: S^n -> R^n."""
    y = np.asarray(y, dtype=float)
    return y[..., :-1] / (1.0 - y[..., -1:])


def _inverse_stereographic_differential(x):
    x = np.asarray(x, float)
    s = x @ x
    top = 2.0 * np.eye(len(x)) / (s + 1) - 4.0 * np.outer(x, x) / (s + 1) ** 2
    bottom = 4.0 * x / (s + 1) ** 2
    return np.vstack([top, bottom])


def stereographic_lift(entry):
    """Lift an entry into the unit sphere S^n of R^(n+1) by inverse stereographic projection."""
    base = entry.patch
    if base.lifted:
        raise ValueError("entry is already lifted")
    base_fn = base.fn
    patch = dataclasses.replace(
        base,
        name=f"lifted-{base.name}",
        ambient_dim=base.ambient_dim + 1,
        fn=lambda *u: inverse_stereographic(base_fn(*u)),
        orientation=1,
        lifted=True,
    )
    uc = base.center
    pushed = _inverse_stereographic_differential(base.eval(uc)) @ base.unit_normal(uc)
    patch = orient_toward(patch, pushed)
    return CatalogEntry(
        name=f"lifted-{entry.name}",
        patch=patch,
        betti_z2=entry.betti_z2,
        known_implicit=None,
        expected_signature=entry.expected_signature,
        params={**entry.params, "lifted_from": entry.name},
    )


# ---------------------------------------------------------------------------
# point-set fixtures

FIXTURES = ("degenerate-torus", "cartan-umbrella-graph")


def _arclength_samples(curve, t0, t1, spacing, fine=200_001):
    t = np.linspace(t0, t1, fine)
    p = curve(t)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    count = int(np.ceil(s[-1] / spacing)) + 1
    targets = np.linspace(0.0, s[-1], count)
    return curve(np.interp(targets, s, t))


def algebraic_fixture(name, spacing=0.01, seed=0):
    """Point samples of the real algebraic sets used as witness fixtures.

    ``degenerate-torus``: y^2 = x^2 (x - 1) in [-2, 3] x [-5, 5]; the
    unbounded branch through (1, 0) plus the isolated point (0, 0).
    ``cartan-umbrella-graph``: z = x^3 / (x^2 + y^2) over the annulus
    0.1 <= |(x, y)| <= 2.
    """
    if name == "degenerate-torus":
        # x = 1 + t^2, y = t (1 + t^2); x <= 3 caps |t| at sqrt(2)
        def curve(t):
            return np.stack([1.0 + t**2, t * (1.0 + t**2)], axis=-1)

        # sample each half separately so the vertex (1, 0) at t = 0 is included
        upper = _arclength_samples(curve, 0.0, np.sqrt(2.0), spacing)
        branch = np.vstack([upper[:0:-1] * [1.0, -1.0], upper])
        pts = np.vstack([branch, [[0.0, 0.0]]])
        tags = np.r_[np.zeros(len(branch), int), 1]
        return PointCloud(pts, tags, {"fixture": name})
    if name == "cartan-umbrella-graph":
        rng = np.random.default_rng(seed)
        count = 4000
        rho = np.sqrt(rng.uniform(0.1**2, 2.0**2, count))
        phi = rng.uniform(0.0, TWO_PI, count)
        x, y = rho * np.cos(phi), rho * np.sin(phi)
        z = x**3 / (x**2 + y**2)
        return PointCloud(np.stack([x, y, z], axis=1), None, {"fixture": name})
    raise ValueError(f"unknown fixture {name!r}; expected one of {FIXTURES}")
