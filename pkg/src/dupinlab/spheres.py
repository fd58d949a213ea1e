"""Mean curvature normals of principal leaves, curvature spheres and leaf tracing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .catalog import PointCloud
from .curvature import (
    batch_spectra,
    curvature_derivative,
    shape_spectrum,
    _signature_of,
)
from .exceptions import DegenerateSphereError, DupinConditionError

DUPIN_TOL = 1e-4


@dataclass
class CurvatureSphere:
    kind: str  # "sphere" or "plane"
    leaf_dim: int
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    plane_point: Optional[np.ndarray] = None
    plane_basis: Optional[np.ndarray] = None

    def to_json(self):
        out = {"kind": self.kind, "leaf_dim": self.leaf_dim}
        if self.kind == "sphere":
            out["center"] = [float(c) for c in self.center]
            out["radius"] = float(self.radius)
        else:
            out["center"] = None
            out["radius"] = None
            out["plane_point"] = [float(c) for c in self.plane_point]
            out["plane_basis"] = [[float(c) for c in row] for row in self.plane_basis]
        return out


def _leaf_data(patch, u, spectrum, i):
    if patch.lifted:
        raise ValueError("curvature spheres are computed for Euclidean hypersurfaces")
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    deriv = curvature_derivative(patch, u, spectrum, i)
    res = float(np.max(np.abs(deriv.leaf_components)))
    if res > DUPIN_TOL:
        raise DupinConditionError(
            f"curvature {i} is not constant along its leaf at {u} (residual {res:.3g})"
        )
    return spectrum, deriv


def mean_curvature_normal(patch, u, spectrum=None, i=0):
    """Mean curvature normal H of the leaf of principal foliation ``i`` through ``u``.

    H = k e_n - sum c^{ab} k_b e_a, where c = (h_ab - k delta_ab) on the
    complementary principal directions and k_b the normal-to-leaf derivatives.
    """
    spectrum, deriv = _leaf_data(patch, u, spectrum, i)
    kappa = deriv.kappa
    H = kappa * spectrum.normal
    if len(deriv.normal_components):
        others = np.setdiff1d(np.arange(patch.param_dim), spectrum.group(i))
        lam = spectrum.curvatures[others]
        c = np.diag(lam - kappa)
        scale = 1.0 + np.max(np.abs(spectrum.curvatures))
        if np.min(np.abs(lam - kappa)) / scale < 1e-12:
            raise DegenerateSphereError("curvature sphere degenerate: c is singular")
        coef = np.linalg.solve(c, deriv.normal_components)
        H = H - coef @ deriv.normal_directions
    return H


def plane_tolerance(patch):
    return 1e-8 * (1.0 + 1.0 / max(patch.diameter, 1e-12))


def curvature_sphere(patch, u, spectrum=None, i=0, plane_tol=None):
    """Sphere (or plane) containing the leaf of principal foliation ``i`` through ``u``."""
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    H = mean_curvature_normal(patch, u, spectrum, i)
    tol = plane_tolerance(patch) if plane_tol is None else plane_tol
    nH = float(np.linalg.norm(H))
    m_i = spectrum.signature[i]
    if nH > tol:
        return CurvatureSphere(
            kind="sphere", leaf_dim=m_i, center=spectrum.point + H / nH**2, radius=1.0 / nH
        )
    deriv = curvature_derivative(patch, u, spectrum, i, check_constancy=False)
    flat = abs(deriv.kappa) <= tol and np.all(np.abs(deriv.normal_components) <= tol)
    if not flat:
        raise DegenerateSphereError(f"|H| = {nH:.3g} vanishes but the leaf is not planar")
    return CurvatureSphere(
        kind="plane",
        leaf_dim=m_i,
        plane_point=spectrum.point,
        plane_basis=spectrum.frame[spectrum.group(i)],
    )


# ---------------------------------------------------------------------------
# leaf tracing


def _direction(patch, u, i, ref, signature, grouping_tol):
    """Unit principal velocity in parameter space aligned with ambient ``ref``."""
    w, V, labels, geo = batch_spectra(patch, u, grouping_tol)
    if not geo.valid or _signature_of(labels) != signature:
        return None, None
    idx = np.flatnonzero(labels == i)
    E = V[:, idx].T @ geo.D[1]  # ambient rows spanning the eigenspace
    coeff = E @ ref
    if len(idx) == 1:
        coeff = np.sign(coeff) if coeff[0] != 0 else np.ones(1)
    nrm = np.linalg.norm(coeff)
    if nrm == 0:
        return None, None
    coeff = coeff / nrm
    return V[:, idx] @ coeff, coeff @ E


def leaf_trace(patch, u, spectrum=None, i=0, step=0.05, count=100, direction=None):
    """Trace the leaf of principal foliation ``i`` from ``u`` by RK4 in parameter space.

    For a multi-dimensional eigenspace the trace follows ``direction`` (an
    ambient tangent vector, default the first principal vector) projected
    into the eigenspace at every step.  Points are returned as a
    PointCloud whose meta holds parameters, curvature values and a
    truncation flag.
    """
    u = np.asarray(u, dtype=float)
    if spectrum is None:
        spectrum = shape_spectrum(patch, u)
    sig, tol = spectrum.signature, spectrum.grouping_tol
    ref = spectrum.frame[spectrum.group(i)[0]] if direction is None else np.asarray(direction, float)
    params, kappas = [u.copy()], [spectrum.group_value(i)]
    truncated, reason = False, None
    for _ in range(count):
        k1, ref1 = _direction(patch, u, i, ref, sig, tol)
        if k1 is None:
            truncated, reason = True, "signature change"
            break
        k2, _ = _direction(patch, patch.wrap(u + 0.5 * step * k1), i, ref1, sig, tol)
        k3, _ = (None, None) if k2 is None else _direction(
            patch, patch.wrap(u + 0.5 * step * k2), i, ref1, sig, tol
        )
        k4, _ = (None, None) if k3 is None else _direction(
            patch, patch.wrap(u + step * k3), i, ref1, sig, tol
        )
        if k4 is None:
            truncated, reason = True, "signature change"
            break
        nxt = u + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not patch.in_domain(nxt):
            truncated, reason = True, "left domain"
            break
        u = patch.wrap(nxt)
        ref = ref1
        w, _, labels, _ = batch_spectra(patch, u, tol)
        params.append(u.copy())
        kappas.append(float(w[labels == i].mean()))
    params = np.array(params)
    return PointCloud(
        patch.eval(params),
        None,
        {
            "params": params,
            "curvature": np.array(kappas),
            "truncated": truncated,
            "reason": reason,
            "group": i,
        },
    )
