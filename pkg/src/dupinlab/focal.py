"""Normal exponential map, focal branches and the end count of the focal complement.

Everything here works on patches lifted into the unit sphere S^n of R^(n+1).
Spherical principal curvatures lambda_j give focal distances
t_j = arccot(lambda_j) in (0, pi) along the normal great circle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.spatial import cKDTree

from .catalog import PointCloud
from .curvature import batch_spectra, shape_spectrum
from .exceptions import GeometryError
from .taut import height_critical_points, uniform_sphere
from .witness import component_count, radius_graph_labels

FOCAL_TOL = 1e-6
SHELL_RADII = (0.2, 0.1, 0.05)
MC_POINTS = 200_000


class FocalPointError(GeometryError):
    """(u, t) lies on a focal branch, where the distance index is undefined."""


def _require_lifted(patch):
    if not patch.lifted:
        raise ValueError(f"patch {patch.name} is not lifted into a sphere")


def arccot(lam):
    """Branch of arccot with values in (0, pi)."""
    return 0.5 * np.pi - np.arctan(lam)


def normal_exponential(patch, u, t):
    """E(u, t) = cos(t) p + sin(t) n with n the unit normal of the patch inside S^n."""
    _require_lifted(patch)
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    x, J = patch.jet(u, 1)
    n = patch.normal_from(x, J)
    return np.cos(t)[..., None] * x + np.sin(t)[..., None] * n


def exponential_singular_values(patch, u, t):
    """Singular values of dE at (u, t) in a g-orthonormal tangent frame plus d/dt.

    In that frame the values are |cos t - lambda_j sin t| per principal
    direction together with 1 for the t direction, so the smallest one
    vanishes exactly on the focal branches.
    """
    _require_lifted(patch)
    u = np.asarray(u, dtype=float)
    D = patch.jet(u, 2)
    x, J = D[0], D[1]
    n = patch.normal_from(x, J)
    g = J @ J.T
    h = D[2] @ n
    dn = -h @ np.linalg.solve(g, J)
    cols = np.cos(t) * J + np.sin(t) * dn
    L = np.linalg.cholesky(g)
    cols = np.linalg.solve(L, cols)
    dt = -np.sin(t) * x + np.cos(t) * n
    M = np.vstack([cols, dt]).T
    return np.linalg.svd(M, compute_uv=False)


@dataclass
class FocalBranch:
    source_param: np.ndarray
    t: float
    focal_point: np.ndarray
    multiplicity: int
    curvature: float

    @property
    def antipode(self):
        return -self.focal_point

    def to_json(self):
        return {
            "source_param": [float(c) for c in self.source_param],
            "t": float(self.t),
            "focal_point": [float(c) for c in self.focal_point],
            "multiplicity": int(self.multiplicity),
            "curvature": float(self.curvature),
        }


def focal_branches(patch, u, spectrum=None):
    """One focal branch per distinct spherical principal curvature at ``u``."""
    _require_lifted(patch)
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    out = []
    for i, mult in enumerate(spectrum.signature):
        lam = spectrum.group_value(i)
        t = float(arccot(lam))
        point = np.cos(t) * spectrum.point + np.sin(t) * spectrum.normal
        out.append(FocalBranch(u, t, point, int(mult), lam))
    return out


def distance_index(patch, u, t, spectrum=None, tol=FOCAL_TOL):
    """Morse index at u of the spherical distance from q = E(u, t).

    Counts, with multiplicity, the focal points met along the normal arc
    from the surface point to q: branches with t_j < t for t > 0, and
    antipodal branches t_j - pi > t for t < 0.
    """
    if not -np.pi < t < np.pi:
        raise ValueError("t must lie in (-pi, pi)")
    branches = focal_branches(patch, u, spectrum)
    ts = np.array([b.t for b in branches])
    mult = np.array([b.multiplicity for b in branches])
    if abs(t) <= tol or np.min(np.abs(ts - t)) <= tol or np.min(np.abs(ts - np.pi - t)) <= tol:
        raise FocalPointError(f"(u={u}, t={t}) is focal")
    if t > 0:
        return int(mult[ts < t].sum())
    return int(mult[ts - np.pi > t].sum())


def _grid_counts(patch, grid):
    if np.isscalar(grid):
        return (int(grid),) * patch.param_dim
    return tuple(int(c) for c in grid)


def sample_focal_set(patch, grid=64, antipodes=True, grouping_tol=None):
    """Focal points of all grid nodes, tagged by branch (antipodes get tag + g).

    ``meta['link_radius']`` is 1.5 times the largest chord between focal
    points of grid-adjacent nodes on the same branch (floored at 1e-6),
    a density-matched radius for clustering the cloud.
    """
    _require_lifted(patch)
    counts = _grid_counts(patch, grid)
    dim = patch.ambient_dim
    if min(counts, default=0) <= 0:
        return PointCloud(np.zeros((0, dim)), np.zeros(0, dtype=int), {"failed": 0, "link_radius": FOCAL_TOL})
    U = patch.grid(counts)
    w, _, labels, geo = batch_spectra(patch, U, grouping_tol)
    sig = np.sum(labels[..., None] == np.arange(patch.param_dim), axis=-2)
    # the most common signature defines the branch layout
    keys, freq = np.unique(sig.reshape(-1, patch.param_dim), axis=0, return_counts=True)
    main = keys[np.argmax(freq)]
    ok = geo.valid & np.all(sig == main, axis=-1)
    g = int(np.count_nonzero(main))
    starts = np.concatenate([[0], np.cumsum(main[:g])[:-1]])
    lam = np.stack([w[..., s : s + m].mean(axis=-1) for s, m in zip(starts, main[:g])], axis=-1)
    t = arccot(lam)
    x, n = geo.D[0], geo.normal
    F = np.cos(t)[..., None] * x[..., None, :] + np.sin(t)[..., None] * n[..., None, :]

    link = 0.0
    for ax, per in enumerate(patch.periodic):
        if counts[ax] < 2:
            continue
        nxt = np.roll(F, -1, axis=ax)
        pair_ok = ok & np.roll(ok, -1, axis=ax)
        if not per:
            edge = [slice(None)] * len(counts)
            edge[ax] = -1
            pair_ok[tuple(edge)] = False
        d = np.linalg.norm(nxt - F, axis=-1)
        if pair_ok.any():
            link = max(link, float(d[pair_ok].max()))
    link = max(1.5 * link, FOCAL_TOL)

    pts = F[ok].reshape(-1, dim)
    tags = np.tile(np.arange(g), int(ok.sum()))
    if antipodes:
        pts = np.concatenate([pts, -pts])
        tags = np.concatenate([tags, tags + g])
    return PointCloud(
        pts,
        tags,
        {
            "grid": list(counts),
            "failed": int(ok.size - ok.sum()),
            "branches": g,
            "multiplicities": [int(c) for c in main[:g]],
            "link_radius": link,
            "antipodes": antipodes,
        },
    )


def focal_distance(cloud_tree, points):
    """Spherical distance from unit vectors to the nearest cloud point."""
    chord, _ = cloud_tree.query(points)
    return 2.0 * np.arcsin(np.minimum(chord / 2.0, 1.0))


def _chord(rho):
    return 2.0 * np.sin(np.asarray(rho, float) / 2.0)


def sphere_volume(n):
    """Volume of the unit sphere S^n."""
    return 2.0 * pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


def density_radius(n, count, k=8):
    """Radius of a ball in S^n expected to hold ``k`` of ``count`` uniform points."""
    ball = pi ** (n / 2) / gamma(n / 2 + 1)
    return (k * sphere_volume(n) / (count * ball)) ** (1.0 / n)


def _dedupe(points, decimals=7):
    if not len(points):
        return points
    _, idx = np.unique(np.round(points, decimals), axis=0, return_index=True)
    return points[np.sort(idx)]


def _cluster_count(points, link, min_size):
    if not len(points):
        return 0, 0
    _, labels = radius_graph_labels(points, link)
    sizes = np.bincount(labels)
    return int(np.sum(sizes >= min_size)), int(np.sum(sizes < min_size))


@dataclass
class EndReport:
    m: int
    alpha: int
    epsilon: int | None
    stability: bool
    shell_counts: dict
    sampling_params: dict = field(default_factory=dict)

    @property
    def formula_holds(self):
        return self.stability and self.epsilon is not None and self.epsilon == self.alpha + self.m - 1

    def to_json(self):
        return {
            "m": self.m,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "formula_holds": self.formula_holds,
            "stability": self.stability,
            "shell_counts": {f"{k:.6g}": v for k, v in self.shell_counts.items()},
            "sampling_params": self.sampling_params,
        }


def end_count(focal_cloud, shell_radii=SHELL_RADII, mc_points=MC_POINTS, seed=0,
              link_radius=None, neighbors=8, link_factor=1.5, min_cluster=3):
    """Estimate m, alpha and epsilon for the complement of a focal cloud in S^n.

    m clusters the (deduplicated) cloud at ``link_radius`` (default: the
    cloud's own ``meta['link_radius']``).  Uniform Monte-Carlo points farther
    than ``shell_radii[0]`` from the cloud are clustered to give alpha;
    points at spherical distance in (rho/2, rho) give the end count per
    radius.  Clusters smaller than ``min_cluster`` are treated as sampling
    noise.  Epsilon is the first value on which two successive non-empty
    shells agree; otherwise the report is flagged unstable.
    """
    pts = _dedupe(focal_cloud.points if isinstance(focal_cloud, PointCloud) else np.asarray(focal_cloud))
    if not len(pts):
        raise ValueError("focal cloud is empty")
    radii = [float(r) for r in shell_radii]
    if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("shell radii must be positive and strictly decreasing")
    dim = pts.shape[1]
    n = dim - 1
    if link_radius is None:
        meta = focal_cloud.meta if isinstance(focal_cloud, PointCloud) else {}
        link_radius = float(meta.get("link_radius", FOCAL_TOL))
    m = component_count(pts, link_radius).count

    rng = np.random.default_rng(seed)
    mc = uniform_sphere(rng, dim, mc_points)
    dist = focal_distance(cKDTree(pts), mc)
    mc_link = float(_chord(link_factor * density_radius(n, mc_points, neighbors)))

    alpha, alpha_noise = _cluster_count(mc[dist > radii[0]], mc_link, min_cluster)
    shell_counts, noise = {}, {}
    for rho in radii:
        sel = (dist > rho / 2) & (dist < rho)
        shell_counts[rho], noise[rho] = _cluster_count(mc[sel], mc_link, min_cluster)

    epsilon, stable = None, False
    for a, b in zip(radii, radii[1:]):
        ca, cb = shell_counts[a], shell_counts[b]
        if ca > 0 and ca == cb:
            epsilon, stable = ca, True
            break
    return EndReport(
        m=m,
        alpha=alpha,
        epsilon=epsilon,
        stability=stable,
        shell_counts=shell_counts,
        sampling_params={
            "shell_radii": radii,
            "mc_points": int(mc_points),
            "seed": int(seed),
            "focal_link_radius": float(link_radius),
            "mc_link_chord": mc_link,
            "min_cluster": int(min_cluster),
            "noise_clusters": {"alpha": alpha_noise, **{f"{k:.6g}": v for k, v in noise.items()}},
            "focal_points": int(len(pts)),
        },
    )


@dataclass
class CoveringReport:
    index: int
    expected: int
    counts: list
    rejected: int
    hessian_mismatches: int
    hessian_checked: int

    @property
    def pass_fraction(self):
        if not self.counts:
            return 0.0
        return float(np.mean([c == self.expected for c in self.counts]))

    @property
    def ok(self):
        return self.pass_fraction >= 0.95 and self.hessian_mismatches == 0

    def to_json(self):
        return {
            "index": self.index,
            "expected": self.expected,
            "accepted": len(self.counts),
            "rejected": self.rejected,
            "counts": list(self.counts),
            "pass_fraction": self.pass_fraction,
            "hessian_checked": self.hessian_checked,
            "hessian_mismatches": self.hessian_mismatches,
            "pass": self.ok,
        }


def normal_arc_parameter(spectrum, q):
    """t in (-pi, pi) with q = cos(t) p + sin(t) n, for q critical for the height at p."""
    return float(np.arctan2(q @ spectrum.normal, q @ spectrum.point))


def covering_degree_check(entry, index, q_samples=30, seed=0, focal_grid=64,
                          reject_radius=1e-3, seed_grid=16, hessian_checks=10):
    """For random q count critical points of d_q with Morse index ``index``.

    Each count should equal the Betti number b_index.  Indices come from
    focal branch counting; on up to ``hessian_checks`` critical points they
    are compared with the Hessian of the height function (distance index =
    dim - height index, since d_q decreases as q . p grows).
    """
    patch = entry.patch
    _require_lifted(patch)
    if not 0 <= index < len(entry.betti_z2):
        raise ValueError(f"index {index} outside 0..{len(entry.betti_z2) - 1}")
    expected = int(entry.betti_z2[index])
    cloud = sample_focal_set(patch, focal_grid)
    tree = cKDTree(_dedupe(cloud.points))
    rng = np.random.default_rng(seed)
    counts, rejected, checked, mismatches = [], 0, 0, 0
    attempts = 0
    while len(counts) < q_samples and attempts < 20 * q_samples:
        attempts += 1
        q = uniform_sphere(rng, patch.ambient_dim)
        if focal_distance(tree, q[None])[0] < reject_radius:
            rejected += 1
            continue
        crit = height_critical_points(patch, q, seed_grid)
        if not len(crit) or not crit.all_nondegenerate:
            rejected += 1
            continue
        try:
            idx = []
            for c in crit:
                spec = shape_spectrum(patch, c.param)
                k = distance_index(patch, c.param, normal_arc_parameter(spec, q), spec)
                idx.append(k)
                if checked < hessian_checks:
                    checked += 1
                    mismatches += int(k != patch.param_dim - c.index)
        except FocalPointError:
            rejected += 1
            continue
        counts.append(int(sum(k == index for k in idx)))
    if len(counts) < 10:
        raise GeometryError(f"only {len(counts)} directions accepted; need at least 10")
    return CoveringReport(index, expected, counts, rejected, mismatches, checked)
