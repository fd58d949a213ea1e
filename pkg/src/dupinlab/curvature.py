"""Fundamental forms, principal curvatures, curvature derivatives and the Dupin residual.

The internal ``_batch_*`` helpers work on parameter arrays of shape
``batch + (m,)``; the public functions take one parameter point and return
small dataclasses.  For a patch lifted into a unit sphere the normal is the
unit normal inside the sphere, so the same code yields the spherical shape
operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import MultiplicityError, NotImmersionError

IMMERSION_TOL = 1e-12
CONSTANCY_RADIUS = 1e-4


def default_grouping_tol(curvatures):
    return 1e-6 * (1.0 + np.max(np.abs(curvatures), axis=-1))


def _swap(a):
    return np.swapaxes(a, -1, -2)


@dataclass
class _Geometry:
    U: np.ndarray
    D: list
    g: np.ndarray
    h: np.ndarray
    normal: np.ndarray
    valid: np.ndarray


def _batch_geometry(patch, U, order):
    if not patch.lifted and patch.param_dim != patch.ambient_dim - 1:
        raise ValueError("shape operators are implemented for hypersurfaces only")
    U = np.asarray(U, dtype=float)
    D = patch.jet(U, order)
    x, J = D[0], D[1]
    g = np.einsum("...in,...jn->...ij", J, J)
    ev = np.linalg.eigvalsh(g)
    valid = ev[..., 0] > IMMERSION_TOL * np.maximum(ev[..., -1], 1e-300)
    eye = np.eye(patch.param_dim)
    g = np.where(valid[..., None, None], g, eye)
    with np.errstate(invalid="ignore", divide="ignore"):
        N = patch.normal_from(x, J)
    N = np.where(valid[..., None], N, 0.0)
    h = np.einsum("...ijn,...n->...ij", D[2], N)
    return _Geometry(U, D, g, h, N, valid)


def _batch_eigen(geo):
    L = np.linalg.cholesky(geo.g)
    Linv = np.linalg.inv(L)
    S = Linv @ geo.h @ _swap(Linv)
    S = 0.5 * (S + _swap(S))
    w, Y = np.linalg.eigh(S)
    V = _swap(Linv) @ Y  # columns are g-orthonormal eigenvectors
    return w, V


def _labels(w, tol):
    breaks = np.diff(w, axis=-1) > np.asarray(tol)[..., None]
    zero = np.zeros(w.shape[:-1] + (1,), dtype=int)
    return np.concatenate([zero, np.cumsum(breaks, axis=-1)], axis=-1)


def _signature_of(labels):
    return tuple(int(c) for c in np.bincount(labels))


@dataclass
class _Gradients:
    w: np.ndarray
    V: np.ndarray
    labels: np.ndarray
    kbar: np.ndarray  # group-mean curvature attached to each eigen index
    T: np.ndarray  # T[..., l, j] = d(kappa of group(j))(e_l)
    valid: np.ndarray


def _batch_gradients(patch, U, grouping_tol=None):
    geo = _batch_geometry(patch, U, 3)
    w, V = _batch_eigen(geo)
    tol = default_grouping_tol(w) if grouping_tol is None else np.broadcast_to(grouping_tol, w.shape[:-1])
    labels = _labels(w, tol)
    same = (labels[..., :, None] == labels[..., None, :]).astype(float)
    avg = same / same.sum(axis=-1, keepdims=True)
    kbar = np.einsum("...jq,...q->...j", avg, w)

    _, J, D2, D3 = geo.D[:4]
    ginv = np.linalg.inv(geo.g)
    dg = np.einsum("...ikn,...jn->...kij", D2, J)
    dg = dg + np.swapaxes(dg, -1, -2)
    dN = -np.einsum("...kl,...lp,...pn->...kn", geo.h, ginv, J)
    dh = np.einsum("...ijkn,...n->...kij", D3, geo.normal) + np.einsum(
        "...ijn,...kn->...kij", D2, dN
    )
    Q = np.einsum("...aj,...kab,...bj->...kj", V, dh, V) - kbar[..., None, :] * np.einsum(
        "...aj,...kab,...bj->...kj", V, dg, V
    )
    dk_group = np.einsum("...kq,...jq->...kj", Q, avg)
    T = np.einsum("...kl,...kj->...lj", V, dk_group)
    return _Gradients(w, V, labels, kbar, T, geo.valid), geo


def _leaf_residuals(grad):
    """Per eigen index j: max |d kappa_group(j)(e_l)| over l in the same group."""
    same = grad.labels[..., :, None] == grad.labels[..., None, :]
    return np.max(np.where(same, np.abs(grad.T), 0.0), axis=-2)


# ---------------------------------------------------------------------------
# public API


@dataclass
class FirstOrderFrame:
    base_point: np.ndarray
    tangent_frame: np.ndarray  # (m, n) orthonormal rows
    normal_frame: np.ndarray  # (n - m, n) orthonormal rows


def first_order_frame(patch, u):
    x, J = patch.jet(u, 1)
    q, r = np.linalg.qr(J.T)
    if np.min(np.abs(np.diag(r))) < 1e-10 * np.max(np.abs(np.diag(r))):
        raise NotImmersionError(f"order-1 jet is rank deficient at {u}")
    full, _, _ = np.linalg.svd(J.T, full_matrices=True)
    return FirstOrderFrame(x, q.T, full[:, patch.param_dim:].T)


def fundamental_forms(patch, u):
    """First and second fundamental forms and the oriented unit normal at ``u``."""
    geo = _batch_geometry(patch, np.asarray(u, float), 2)
    if not geo.valid:
        raise NotImmersionError(f"patch {patch.name} is not an immersion at {u}")
    return geo.g, geo.h, geo.normal


@dataclass
class ShapeSpectrum:
    param: np.ndarray
    point: np.ndarray
    normal: np.ndarray
    curvatures: np.ndarray
    frame_param: np.ndarray  # columns: g-orthonormal eigenvectors in parameter coordinates
    frame: np.ndarray  # rows: ambient unit principal vectors
    signature: tuple
    grouping_tol: float
    g: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def group_count(self):
        return len(self.signature)

    def group(self, i):
        if not 0 <= i < len(self.signature):
            raise IndexError(f"group {i} out of range for signature {self.signature}")
        return np.flatnonzero(self.labels == i)

    def group_value(self, i):
        return float(self.curvatures[self.group(i)].mean())

    @property
    def group_values(self):
        return [self.group_value(i) for i in range(len(self.signature))]

    def shape_operator(self):
        """Shape operator as an n x n ambient matrix acting on the tangent space."""
        J = np.asarray(self._J)
        return J.T @ np.linalg.solve(self.g, self.h) @ np.linalg.solve(self.g, J)

    def reconstructed_operator(self):
        return self.frame.T @ np.diag(self.curvatures) @ self.frame


def shape_spectrum(patch, u, grouping_tol=None):
    """Sorted principal curvatures, principal frame and multiplicity signature at ``u``."""
    u = np.asarray(u, dtype=float)
    geo = _batch_geometry(patch, u, 2)
    if not geo.valid:
        raise NotImmersionError(f"patch {patch.name} is not an immersion at {u}")
    w, V = _batch_eigen(geo)
    tol = float(default_grouping_tol(w) if grouping_tol is None else grouping_tol)
    labels = _labels(w, tol)
    J = geo.D[1]
    spec = ShapeSpectrum(
        param=u,
        point=geo.D[0],
        normal=geo.normal,
        curvatures=w,
        frame_param=V,
        frame=V.T @ J,
        signature=_signature_of(labels),
        grouping_tol=tol,
        g=geo.g,
        h=geo.h,
        labels=labels,
    )
    spec._J = J
    return spec


def batch_spectra(patch, U, grouping_tol=None):
    """Curvatures, grouping labels and validity flags for a batch of parameters."""
    geo = _batch_geometry(patch, U, 2)
    w, V = _batch_eigen(geo)
    tol = default_grouping_tol(w) if grouping_tol is None else np.broadcast_to(grouping_tol, w.shape[:-1])
    return w, V, _labels(w, tol), geo


def probe_points(patch, u, radius=CONSTANCY_RADIUS):
    """The 2m axis probes u +/- radius e_k."""
    u = np.asarray(u, dtype=float)
    steps = radius * np.eye(patch.param_dim)
    return patch.wrap(np.concatenate([u + steps, u - steps]))


def locally_constant(patch, u, spectrum, radius=CONSTANCY_RADIUS):
    probes = probe_points(patch, u, radius)
    _, _, labels, geo = batch_spectra(patch, probes, spectrum.grouping_tol)
    if not np.all(geo.valid):
        return False
    return all(_signature_of(lab) == spectrum.signature for lab in labels)


@dataclass
class CurvatureDerivative:
    kappa_index: int
    kappa: float
    leaf_components: np.ndarray  # d kappa(e_j), e_j in the group's eigenspace
    normal_components: np.ndarray  # d kappa(e_a), e_a in the complementary directions
    leaf_directions: np.ndarray  # ambient rows
    normal_directions: np.ndarray  # ambient rows
    param_gradient: np.ndarray  # d kappa / d u_k


def curvature_derivative(patch, u, spectrum=None, i=0, check_constancy=True):
    """Derivatives of the group-averaged curvature along principal directions.

    Uses the order-3 jet: for the generalized eigenproblem ``h v = k g v``
    with ``v' g v = 1`` the derivative of an eigenvalue is ``v'(dh - k dg)v``,
    averaged over the eigenvectors of the group.
    """
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    idx = spectrum.group(i)
    if check_constancy and not locally_constant(patch, u, spectrum):
        raise MultiplicityError(
            f"multiplicities are not locally constant at {u}; curvature derivative is undefined"
        )
    grad, geo = _batch_gradients(patch, u, spectrum.grouping_tol)
    if _signature_of(grad.labels) != spectrum.signature:
        raise MultiplicityError("signature changed between spectrum and derivative evaluation")
    j = idx[0]
    col = grad.T[:, j]
    others = np.setdiff1d(np.arange(patch.param_dim), idx)
    frame = grad.V.T @ geo.D[1]
    # param gradient: components along e_l map back through the dual basis
    pg = np.linalg.solve(grad.V.T, col)
    return CurvatureDerivative(
        kappa_index=i,
        kappa=float(grad.kbar[j]),
        leaf_components=col[idx],
        normal_components=col[others],
        leaf_directions=frame[idx],
        normal_directions=frame[others],
        param_gradient=pg,
    )


def dupin_residual(patch, u, spectrum=None, i=0, check_constancy=True):
    """max |d kappa_i| along the group's own principal directions (0 iff Dupin there)."""
    d = curvature_derivative(patch, u, spectrum, i, check_constancy)
    return float(np.max(np.abs(d.leaf_components)))


def dupin_residuals(patch, U, grouping_tol=None):
    """Batched leaf residuals; returns (residual per eigen index, labels, valid)."""
    grad, _ = _batch_gradients(patch, U, grouping_tol)
    return _leaf_residuals(grad), grad.labels, grad.valid


# ---------------------------------------------------------------------------
# signature fields


@dataclass
class SignatureField:
    counts: tuple
    signatures: list  # distinct signature tuples, code k -> signatures[k]
    codes: np.ndarray  # per-node code, -1 for non-immersion nodes
    components: dict  # signature tuple -> component count
    params: np.ndarray = field(repr=False)

    def summary(self):
        out = []
        for k, sig in enumerate(self.signatures):
            out.append(
                {
                    "tuple": list(sig),
                    "count": int(np.sum(self.codes == k)),
                    "components": int(self.components[sig]),
                }
            )
        return out

    @property
    def flagged(self):
        return int(np.sum(self.codes < 0))

    def signature_at(self, index):
        c = self.codes[index]
        return None if c < 0 else self.signatures[c]

    def to_json(self, include_nodes=False):
        out = {"grid": list(self.counts), "signatures": self.summary(), "flagged": self.flagged}
        if include_nodes:
            out["nodes"] = self.codes.ravel().tolist()
        return out


def _grid_components(codes, periodic):
    shape = codes.shape
    idx = np.arange(codes.size).reshape(shape)
    rows, cols = [], []
    for ax, per in enumerate(periodic):
        a = idx
        b = np.roll(idx, -1, axis=ax)
        ca = codes
        cb = np.roll(codes, -1, axis=ax)
        keep = (ca == cb) & (ca >= 0)
        if not per:
            sl = [slice(None)] * len(shape)
            sl[ax] = slice(shape[ax] - 1, None)
            keep[tuple(sl)] = False
        rows.append(a[keep])
        cols.append(b[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(codes.size, codes.size))
    _, lab = connected_components(graph, directed=False)
    return lab.reshape(shape)


def signature_field(patch, counts, grouping_tol=None, chunk=8192):
    """Multiplicity signature at every node of a parameter grid."""
    counts = tuple(int(c) for c in counts)
    U = patch.grid(counts)
    flat = U.reshape(-1, patch.param_dim)
    label_rows, valid = [], []
    for start in range(0, len(flat), chunk):
        _, _, lab, geo = batch_spectra(patch, flat[start : start + chunk], grouping_tol)
        label_rows.append(lab)
        valid.append(geo.valid)
    labels = np.concatenate(label_rows)
    valid = np.concatenate(valid)
    sigs = [_signature_of(lab) if ok else None for lab, ok in zip(labels, valid)]
    distinct = sorted({s for s in sigs if s is not None}, key=lambda s: (len(s), s))
    lookup = {s: k for k, s in enumerate(distinct)}
    codes = np.array([-1 if s is None else lookup[s] for s in sigs]).reshape(counts)
    comp = _grid_components(codes, patch.periodic)
    components = {}
    for k, s in enumerate(distinct):
        components[s] = len(np.unique(comp[codes == k]))
    return SignatureField(counts, distinct, codes, components, U)
