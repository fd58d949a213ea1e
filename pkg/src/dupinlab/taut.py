"""Critical points of height functions, tautness audits and the tube focal map."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

GRAD_TOL = 1e-9
DEGENERACY_TOL = 1e-7
DEDUPE_TOL = 1e-5
VALUE_GAP = 1e-9


@dataclass
class CriticalPoint:
    param: np.ndarray
    value: float
    index: int
    nondegenerate: bool
    hessian_min_abs_eig: float

    def to_json(self):
        return {
            "param": [float(c) for c in self.param],
            "value": float(self.value),
            "index": int(self.index),
            "nondegenerate": bool(self.nondegenerate),
            "hessian_min_abs_eig": float(self.hessian_min_abs_eig),
        }


@dataclass
class CriticalSet:
    points: list
    seeds: int
    converged: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def indices(self):
        return sorted(p.index for p in self.points)

    @property
    def all_nondegenerate(self):
        return all(p.nondegenerate for p in self.points)


def _seed_params(patch, seed_grid):
    if isinstance(seed_grid, np.ndarray) and seed_grid.ndim == 2:
        return seed_grid.astype(float)
    counts = (seed_grid,) * patch.param_dim if np.isscalar(seed_grid) else tuple(seed_grid)
    return patch.grid(counts).reshape(-1, patch.param_dim)


def _height_derivatives(patch, U, q):
    D = patch.jet(U, 2)
    J = D[1]
    grad = J @ q
    H = D[2] @ q
    g = np.einsum("...in,...jn->...ij", J, J)
    return D[0] @ q, grad, H, g


def _riemannian_grad_norm(grad, g):
    return np.sqrt(np.abs(np.einsum("...i,...i->...", grad, np.linalg.solve(g, grad[..., None])[..., 0])))


def _newton(patch, U, q, max_iter, max_step):
    U = U.copy()
    active = np.ones(len(U), dtype=bool)
    alive = np.ones(len(U), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active & alive)
        if not len(idx):
            break
        _, grad, H, g = _height_derivatives(patch, U[idx], q)
        done = _riemannian_grad_norm(grad, g) < GRAD_TOL
        active[idx[done]] = False
        idx, grad, H = idx[~done], grad[~done], H[~done]
        if not len(idx):
            break
        try:
            step = np.linalg.solve(H, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(h, b, rcond=None)[0] for h, b in zip(H, grad)])
        norm = np.linalg.norm(step, axis=-1, keepdims=True)
        step = step * np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        nxt = U[idx] - step
        ok = patch.in_domain(nxt) & np.all(np.isfinite(nxt), axis=-1)
        alive[idx[~ok]] = False
        U[idx[ok]] = patch.wrap(nxt[ok])
    return U, alive & ~active


def height_critical_points(patch, q, seed_grid=16, max_iter=60, max_step=0.5):
    """Critical points of u -> q . x(u) by multi-start Newton from a parameter grid.

    Converged points (Riemannian gradient below 1e-9) are deduplicated at
    parameter distance 1e-5 with periodic axes wrapped.  The index counts
    negative eigenvalues of the metric-normalized Hessian, and a point is
    nondegenerate when all of them exceed 1e-7 in absolute value.
    """
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise ValueError("q must be a unit vector")
    seeds = _seed_params(patch, seed_grid)
    U, conv = _newton(patch, seeds, q, max_iter, max_step)
    U = U[conv]
    kept = []
    for u in U:
        if any(np.linalg.norm(patch.param_delta(u, k)) < DEDUPE_TOL for k in kept):
            continue
        kept.append(u)
    points = []
    if kept:
        K = np.array(kept)
        val, _, H, g = _height_derivatives(patch, K, q)
        L = np.linalg.cholesky(g)
        Li = np.linalg.inv(L)
        mu = np.linalg.eigvalsh(Li @ H @ np.swapaxes(Li, -1, -2))
        for u, v, ev in zip(K, val, mu):
            mabs = float(np.min(np.abs(ev)))
            points.append(CriticalPoint(u, float(v), int(np.sum(ev < 0)), mabs > DEGENERACY_TOL, mabs))
        points.sort(key=lambda p: p.value)
    return CriticalSet(points, len(seeds), int(conv.sum()), {"not_converged": int(len(seeds) - conv.sum())})


def uniform_sphere(rng, dim, count=None):
    """Uniform unit vectors in R^dim (Gaussian normalization)."""
    shape = (dim,) if count is None else (count, dim)
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass
class TautAudit:
    trials: int
    kept: int
    passed: int
    expected: int
    euler: int
    counts_histogram: dict
    discarded_reasons: dict
    morse_ok: bool
    failures: list

    @property
    def pass_fraction(self):
        return self.passed / self.kept if self.kept else 0.0

    @property
    def ok(self):
        return self.kept > 0 and self.passed == self.kept and self.morse_ok

    def to_json(self):
        return {
            "trials": self.trials,
            "kept": self.kept,
            "expected_count": self.expected,
            "euler_characteristic": self.euler,
            "pass_fraction": self.pass_fraction,
            "counts_histogram": {str(k): v for k, v in sorted(self.counts_histogram.items())},
            "discarded_reasons": dict(sorted(self.discarded_reasons.items())),
            "morse_alternating_sum_ok": self.morse_ok,
            "pass": self.ok,
        }


class DegenerateAuditError(RuntimeError):
    pass


def taut_audit(entry, trials=50, seed=0, seed_grid=16):
    """Count height-function critical points for random directions against the Betti sum.

    Trials with a degenerate critical point or with two critical values closer
    than 1e-9 are discarded (the function is not Morse or not generic).
    """
    if trials < 10:
        raise ValueError("taut_audit needs at least 10 trials")
    patch = entry.patch
    if not patch.lifted:
        raise ValueError("taut_audit expects a patch lifted into a sphere")
    rng = np.random.default_rng(seed)
    expected, chi = entry.betti_sum, entry.euler_characteristic
    hist, reasons = Counter(), Counter()
    kept = passed = 0
    morse_ok = True
    failures = []
    for trial in range(trials):
        q = uniform_sphere(rng, patch.ambient_dim)
        crit = height_critical_points(patch, q, seed_grid)
        if not crit.all_nondegenerate:
            reasons["degenerate"] += 1
            continue
        vals = np.array([p.value for p in crit])
        if len(vals) > 1 and np.min(np.diff(vals)) <= VALUE_GAP:
            reasons["repeated_value"] += 1
            continue
        kept += 1
        hist[len(crit)] += 1
        alt = sum((-1) ** p.index for p in crit)
        if alt != chi:
            morse_ok = False
        if len(crit) == expected:
            passed += 1
        else:
            failures.append({"trial": trial, "q": q.tolist(), "count": len(crit), "indices": crit.indices})
    if reasons["degenerate"] > trials / 2:
        raise DegenerateAuditError(
            f"{reasons['degenerate']} of {trials} trials had degenerate critical points; "
            "the surface is too symmetric for random height functions or the tolerance is misconfigured"
        )
    return TautAudit(trials, kept, passed, expected, chi, dict(hist), dict(reasons), morse_ok, failures)


def tube_focal_map(entry, eps, u):
    """x - eps * xi for the outward unit normal xi of a tube over a torus."""
    if entry.name != "tube-over-torus":
        raise ValueError("tube_focal_map needs a tube-over-torus entry")
    if not np.isclose(eps, entry.params["eps"], rtol=0, atol=1e-12):
        raise ValueError(f"eps {eps} does not match the tube radius {entry.params['eps']}")
    patch = entry.patch
    u = np.asarray(u, dtype=float)
    x = patch.eval(u)
    N = patch.unit_normal(u)
    x_tt = patch.partial(u, (0, 0, 2))
    # the fiber circle curves toward the core, so the outward normal opposes x_tt
    sign = -np.sign(np.einsum("...n,...n->...", N, x_tt))
    return x - eps * sign[..., None] * N


def core_torus_distance(entry, y):
    """Distance from points of R^4 to the core torus of a tube entry."""
    R, r = entry.params["R"], entry.params["r"]
    y = np.asarray(y, dtype=float)
    rho = np.hypot(y[..., 0], y[..., 1])
    planar = np.hypot(rho - R, y[..., 2])
    return np.hypot(planar - r, y[..., 3])


__all__ = [
    "CriticalPoint",
    "CriticalSet",
    "TautAudit",
    "DegenerateAuditError",
    "height_critical_points",
    "taut_audit",
    "tube_focal_map",
    "core_torus_distance",
    "uniform_sphere",
]
