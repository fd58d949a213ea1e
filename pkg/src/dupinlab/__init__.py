"""Numerical laboratory for Dupin hypersurfaces: curvature, curvature spheres,
iterated sphere charts, implicit witnesses, focal sets and tautness audits."""

from .catalog import (
    CatalogEntry,
    PointCloud,
    SurfacePatch,
    algebraic_fixture,
    make_cyclide_by_inversion,
    make_ellipsoid,
    make_flat_strip,
    make_sphere,
    make_torus,
    make_tube_over_torus,
    stereographic_lift,
)
from .charts import IteratedChart, chart_roundtrip, iterate_chart
from .curvature import (
    curvature_derivative,
    dupin_residual,
    shape_spectrum,
    signature_field,
)
from .focal import (
    covering_degree_check,
    distance_index,
    end_count,
    focal_branches,
    normal_exponential,
    sample_focal_set,
)
from .registry import catalog_list, make_entry
from .spheres import curvature_sphere, leaf_trace, mean_curvature_normal
from .taut import height_critical_points, taut_audit, tube_focal_map
from .witness import component_count, fit_implicit, monomial_design_matrix, witness_residual

__version__ = "0.1.0"
