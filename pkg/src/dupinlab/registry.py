"""Named surface factories with parameter schemas, in a fixed listing order."""
from __future__ import annotations

from dataclasses import dataclass

from .catalog import (
    make_cyclide_by_inversion,
    make_ellipsoid,
    make_flat_strip,
    make_sphere,
    make_torus,
    make_tube_over_torus,
)


def _cyclide(R=2.0, r=1.0, center=(0.0, 0.0, 5.0), inv_radius=1.0):
    return make_cyclide_by_inversion(make_torus(R, r), center=tuple(center), inv_radius=inv_radius)


@dataclass(frozen=True)
class SurfaceSpec:
    name: str
    factory: object
    defaults: dict
    description: str

    def build(self, **params):
        unknown = sorted(set(params) - set(self.defaults))
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.name}: {', '.join(unknown)}")
        return self.factory(**{**self.defaults, **params})


SURFACES = {
    s.name: s
    for s in [
        SurfaceSpec("sphere", make_sphere, {"radius": 1.0, "n": 3}, "round (n-1)-sphere in R^n"),
        SurfaceSpec("torus", make_torus, {"R": 2.0, "r": 1.0}, "torus of revolution in R^3"),
        SurfaceSpec(
            "tube-over-torus",
            make_tube_over_torus,
            {"R": 2.0, "r": 1.0, "eps": 0.2},
            "tube of radius eps around a torus in R^4",
        ),
        SurfaceSpec(
            "cyclide",
            _cyclide,
            {"R": 2.0, "r": 1.0, "center": [0.0, 0.0, 5.0], "inv_radius": 1.0},
            "Dupin cyclide: inversion of a torus in a sphere",
        ),
        SurfaceSpec("ellipsoid", make_ellipsoid, {"a": 3.0, "b": 2.0, "c": 1.0}, "triaxial ellipsoid (non-Dupin control)"),
        SurfaceSpec("flat-strip", make_flat_strip, {"half_width": 1.0}, "planar square (plane-leaf control)"),
    ]
}


def make_entry(name, **params):
    if name not in SURFACES:
        raise KeyError(f"unknown surface {name!r}; choose from {', '.join(SURFACES)}")
    return SURFACES[name].build(**params)


def catalog_list():
    """One record per catalog surface, built at default parameters."""
    out = []
    for spec in SURFACES.values():
        entry = spec.build()
        implicit = entry.known_implicit
        out.append(
            {
                "name": spec.name,
                "description": spec.description,
                "params": dict(spec.defaults),
                "ambient_dim": entry.patch.ambient_dim,
                "param_dim": entry.patch.param_dim,
                "betti_z2": list(entry.betti_z2),
                "implicit_degree": None if implicit is None else int(implicit.degree),
                "expected_signature": None if entry.expected_signature is None else list(entry.expected_signature),
            }
        )
    return out
