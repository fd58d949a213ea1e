"""Minimal-degree vanishing polynomials of point samples and sample clustering."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ._poly import Polynomial, design_matrix, n_monomials
from .catalog import PointCloud

NULL_TOL = 1e-8
GRADIENT_FLOOR = 0.1


def _as_points(points):
    if isinstance(points, PointCloud):
        return points.points
    return np.atleast_2d(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class ScaleTransform:
    """x_scaled = (x - center) / scale; maps the cloud into the [-1, 1] box."""

    center: np.ndarray
    scale: float

    @classmethod
    def fit(cls, points):
        lo, hi = points.min(axis=0), points.max(axis=0)
        half = float(np.max(hi - lo)) / 2.0
        return cls((lo + hi) / 2.0, half if half > 0 else 1.0)

    def __call__(self, points):
        return (np.asarray(points, float) - self.center) / self.scale

    def to_json(self):
        return {"center": [float(c) for c in self.center], "scale": float(self.scale)}


def monomial_design_matrix(points, d, transform=None):
    """Graded-lex monomials of degree <= d at each (optionally rescaled) point."""
    pts = _as_points(points)
    if d < 1:
        raise ValueError("degree must be at least 1")
    if pts.size == 0:
        raise ValueError("empty point cloud")
    if transform is not None:
        pts = transform(pts)
    return design_matrix(pts, d)


@dataclass
class ImplicitWitness:
    ambient_dim: int
    degree: int
    coeffs: np.ndarray  # unit vector over the grlex basis, in scaled coordinates
    transform: ScaleTransform
    sv_margin: float
    heldout_rms: float
    null_multiplicity: int = 1
    rejected_margins: dict = field(default_factory=dict)

    @property
    def polynomial(self):
        """Vanishing polynomial in scaled coordinates."""
        return Polynomial(self.ambient_dim, self.degree, self.coeffs)

    def raw_polynomial(self):
        """The same polynomial expressed in the cloud's original coordinates."""
        return self.polynomial.affine_pullback(self.transform.center, self.transform.scale)

    def sampson(self, points):
        pts = self.transform(_as_points(points))
        P = self.polynomial
        grad = np.linalg.norm(P.gradient(pts), axis=-1)
        return np.abs(P(pts)) / np.maximum(grad, GRADIENT_FLOOR)

    def to_json(self):
        return {
            "dim": self.ambient_dim,
            "degree": self.degree,
            "basis": "grlex",
            "scale_transform": self.transform.to_json(),
            "coeffs": [float(c) for c in self.coeffs],
            "sv_margin": float(self.sv_margin),
            "heldout_rms": float(self.heldout_rms),
            "null_multiplicity": int(self.null_multiplicity),
            "rejected_margins": {str(k): float(v) for k, v in sorted(self.rejected_margins.items())},
        }


def _sign_fix(c):
    k = np.argmax(np.abs(c))
    return c if c[k] > 0 else -c


def fit_implicit(points, d_max=4, null_tol=NULL_TOL, holdout_frac=0.2, seed=0):
    """Lowest-degree polynomial vanishing on the sample, validated on a held-out split.

    Returns an :class:`ImplicitWitness` or ``None`` when no degree up to
    ``d_max`` has a numerically null singular vector that also passes the
    held-out Sampson residual test.
    """
    pts = _as_points(points)
    n_train = len(pts) - int(round(holdout_frac * len(pts)))
    need = 2 * n_monomials(pts.shape[1], d_max)
    if n_train < need:
        raise ValueError(f"need at least {need} training points for degree {d_max}, got {n_train}")
    perm = np.random.default_rng(seed).permutation(len(pts))
    train, test = pts[perm[:n_train]], pts[perm[n_train:]]
    transform = ScaleTransform.fit(pts)
    scaled = transform(train)
    margins = {}
    for d in range(1, d_max + 1):
        A = design_matrix(scaled, d)
        _, sv, Vt = np.linalg.svd(A, full_matrices=False)
        ratio = sv[-1] / sv[0]
        if ratio >= null_tol:
            margins[d] = float(ratio)
            continue
        witness = ImplicitWitness(
            ambient_dim=pts.shape[1],
            degree=d,
            coeffs=_sign_fix(Vt[-1] / np.linalg.norm(Vt[-1])),
            transform=transform,
            sv_margin=float(ratio),
            heldout_rms=0.0,
            null_multiplicity=int(np.sum(sv / sv[0] < null_tol)),
            rejected_margins=dict(margins),
        )
        check = test if len(test) else train
        witness.heldout_rms = float(np.sqrt(np.mean(witness.sampson(check) ** 2)))
        if witness.heldout_rms < 10 * null_tol:
            return witness
        margins[d] = float(ratio)
    return None


def witness_residual(witness, points):
    """RMS and max Sampson-normalized residual of ``witness`` on fresh points."""
    pts = _as_points(points)
    if pts.size == 0:
        return {"rms": 0.0, "max": 0.0, "count": 0, "empty": True}
    if pts.shape[1] != witness.ambient_dim:
        raise ValueError("point dimension does not match the witness")
    r = witness.sampson(pts)
    return {"rms": float(np.sqrt(np.mean(r**2))), "max": float(r.max()), "count": len(r), "empty": False}


@dataclass
class Components:
    count: int
    sizes: list  # descending
    labels: np.ndarray


def radius_graph_labels(points, link_radius):
    pts = _as_points(points)
    if len(pts) == 0:
        return 0, np.zeros(0, dtype=int)
    pairs = cKDTree(pts).query_pairs(link_radius, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else ([], ([], [])),
        shape=(len(pts), len(pts)),
    )
    return connected_components(graph, directed=False)


def component_count(points, link_radius):
    """Connected clusters of the graph joining points closer than ``link_radius``."""
    if link_radius <= 0:
        raise ValueError("link_radius must be positive")
    count, labels = radius_graph_labels(points, link_radius)
    sizes = sorted(np.bincount(labels).tolist(), reverse=True) if count else []
    return Components(int(count), sizes, labels)
