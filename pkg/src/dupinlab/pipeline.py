"""Config-driven stage runner behind the command line.

A run config is a mapping::

    surface: {name: torus, params: {R: 2, r: 1}}
    seed: 0
    output_dir: out
    pipeline:
      - stage: analyze
        grid: [64, 64]
        expect: {signatures: [[1, 1]], max_dupin_residual: {le: 1.0e-6}}

Expectations compare top-level report keys: a bare value means equality
(numbers to 1e-12 relative), a mapping uses ``le``, ``ge``, ``lt``, ``gt`` or
``eq``.  The whole config is validated before any stage runs or any file is
written.
"""
from __future__ import annotations

import copy
import numbers
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import registry
from .catalog import FIXTURES, PointCloud, algebraic_fixture, stereographic_lift
from .charts import DEFAULT_BALL_RADIUS, IteratedChart, chart_grid, chart_roundtrip, choose_ball_radii
from .curvature import dupin_residuals, shape_spectrum, signature_field
from .focal import SHELL_RADII, covering_degree_check, end_count, sample_focal_set
from .reporting import write_cloud_csv, write_json, write_rows_csv
from .spheres import curvature_sphere
from .taut import taut_audit
from .witness import fit_implicit, witness_residual

NON_DUPIN_LEVEL = 1e-3


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (usage error)."""


# option name -> default (None: unset)
STAGE_OPTIONS = {
    "analyze": {"grid": 32, "dupin_samples": 200, "grouping_tol": None},
    "spheres": {"samples": 10},
    "chart": {"base": None, "grid": None, "ball_radii": None, "write_csv": True},
    "fit": {
        "source": "direct",
        "samples": 2000,
        "d_max": 4,
        "null_tol": 1e-8,
        "holdout_frac": 0.2,
        "fixture": None,
        "points_csv": None,
        "chart_grid": 12,
        "base": None,
    },
    "focal": {
        "grid": 128,
        "shell_radii": list(SHELL_RADII),
        "mc_points": 200_000,
        "covering_indices": None,
        "q_samples": 30,
        "write_csv": True,
    },
    "taut": {"trials": 50, "seed_grid": 16},
}

REPORT_KEYS = {
    "analyze": {"signatures", "max_dupin_residual", "fraction_non_dupin", "flagged", "signature_components"},
    "spheres": {"errors", "count"},
    "chart": {"max_surface_residual", "max_param_distance", "coverage_count", "node_count", "injective", "anchor_error"},
    "fit": {"degree", "sv_margin", "heldout_rms", "cosine_to_known", "fresh_rms"},
    "focal": {"m", "alpha", "epsilon", "formula_holds", "stability", "covering_pass"},
    "taut": {"pass", "pass_fraction", "kept"},
}

FIT_SOURCES = ("direct", "chart", "fixture", "csv")
COMPARATORS = {
    "le": lambda a, b: a <= b,
    "lt": lambda a, b: a < b,
    "ge": lambda a, b: a >= b,
    "gt": lambda a, b: a > b,
    "eq": lambda a, b: _equal(a, b),
}


@dataclass
class StageSpec:
    name: str
    options: dict
    expect: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    surface: str
    params: dict
    seed: int
    output_dir: Path
    stages: list

    def to_json(self):
        return {
            "surface": {"name": self.surface, "params": self.params},
            "seed": self.seed,
            "pipeline": [{"stage": s.name, **s.options, "expect": s.expect} for s in self.stages],
        }


def _positive(name, value):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def _check_option(stage, key, value):
    label = f"{stage}.{key}"
    if value is None:
        return
    if key in ("grouping_tol", "null_tol", "holdout_frac"):
        _positive(label, value)
        if key == "holdout_frac" and value >= 1:
            raise ConfigError(f"{label} must be below 1")
    elif key in ("dupin_samples", "samples", "d_max", "mc_points", "q_samples", "trials", "seed_grid", "chart_grid"):
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ConfigError(f"{label} must be a positive integer, got {value!r}")
    elif key == "grid":
        vals = [value] if isinstance(value, int) else value
        if not isinstance(vals, list) or not vals or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in vals):
            raise ConfigError(f"{label} must be a positive integer or a list of them")
    elif key in ("shell_radii", "ball_radii", "base"):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{label} must be a non-empty list")
        if key != "base":
            for v in value:
                _positive(label, v)
        if key == "shell_radii" and any(b >= a for a, b in zip(value, value[1:])):
            raise ConfigError(f"{label} must be strictly decreasing")
    elif key == "source":
        if value not in FIT_SOURCES:
            raise ConfigError(f"{label} must be one of {', '.join(FIT_SOURCES)}")
    elif key == "covering_indices":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in value):
            raise ConfigError(f"{label} must be a list of non-negative integers")
    elif key == "write_csv":
        if not isinstance(value, bool):
            raise ConfigError(f"{label} must be true or false")
    elif key in ("fixture", "points_csv"):
        if not isinstance(value, str):
            raise ConfigError(f"{label} must be a string")


def _check_dimensions(stage, options, entry):
    m = entry.patch.param_dim
    grid = options.get("grid")
    if stage in ("analyze", "focal") and isinstance(grid, list) and len(grid) != m:
        raise ConfigError(f"{stage}.grid needs {m} entries for {entry.name}")
    base = options.get("base")
    if base is not None and len(base) != m:
        raise ConfigError(f"{stage}.base needs {m} entries for {entry.name}")
    if stage == "fit" and options["source"] == "fixture" and options["fixture"] not in FIXTURES:
        raise ConfigError(f"unknown fixture {options['fixture']!r}; choose from {', '.join(FIXTURES)}")


def _check_expect(stage, expect):
    if not isinstance(expect, dict):
        raise ConfigError(f"{stage}.expect must be a mapping")
    for key, spec in expect.items():
        if key not in REPORT_KEYS[stage]:
            raise ConfigError(
                f"{stage}.expect: unknown key {key!r}; available: {', '.join(sorted(REPORT_KEYS[stage]))}"
            )
        if isinstance(spec, dict):
            bad = sorted(set(spec) - set(COMPARATORS))
            if bad or not spec:
                raise ConfigError(f"{stage}.expect.{key}: comparators must be among {', '.join(COMPARATORS)}")


def parse_config(raw, output_dir=None, seed=None):
    """Validate a raw mapping into a RunConfig; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(raw) - {"surface", "seed", "output_dir", "pipeline"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    surface = raw.get("surface")
    if isinstance(surface, str):
        surface = {"name": surface}
    if not isinstance(surface, dict) or "name" not in surface:
        raise ConfigError("surface must name a catalog entry")
    name = surface["name"]
    params = surface.get("params") or {}
    if set(surface) - {"name", "params"}:
        raise ConfigError("surface accepts only 'name' and 'params'")
    if name not in registry.SURFACES:
        raise ConfigError(f"unknown surface {name!r}; choose from {', '.join(registry.SURFACES)}")
    if not isinstance(params, dict):
        raise ConfigError("surface.params must be a mapping")
    try:
        entry = registry.make_entry(name, **params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {name}: {exc}") from exc

    run_seed = raw.get("seed", 0) if seed is None else seed
    if isinstance(run_seed, bool) or not isinstance(run_seed, int) or run_seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    out = output_dir if output_dir is not None else raw.get("output_dir")
    if not out:
        raise ConfigError("output_dir is required (config key or --out)")

    pipeline = raw.get("pipeline")
    if not isinstance(pipeline, list) or not pipeline:
        raise ConfigError("pipeline must be a non-empty list of stages")
    stages = []
    for item in pipeline:
        if isinstance(item, str):
            item = {"stage": item}
        if not isinstance(item, dict) or "stage" not in item:
            raise ConfigError("each pipeline entry needs a 'stage' name")
        item = dict(item)
        stage = item.pop("stage")
        if stage not in STAGE_OPTIONS:
            raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGE_OPTIONS)}")
        expect = item.pop("expect", None) or {}
        bad = sorted(set(item) - set(STAGE_OPTIONS[stage]))
        if bad:
            raise ConfigError(f"unknown option(s) for stage {stage}: {', '.join(bad)}")
        options = copy.deepcopy(STAGE_OPTIONS[stage])
        options.update(item)
        for key, value in options.items():
            _check_option(stage, key, value)
        if stage == "fit":
            if options["source"] == "fixture" and not options["fixture"]:
                raise ConfigError("fit.source 'fixture' needs fit.fixture")
            if options["source"] == "csv" and not options["points_csv"]:
                raise ConfigError("fit.source 'csv' needs fit.points_csv")
        _check_dimensions(stage, options, entry)
        _check_expect(stage, expect)
        stages.append(StageSpec(stage, options, expect))
    names = [s.name for s in stages]
    if len(set(names)) != len(names):
        raise ConfigError("each stage may appear at most once")
    return RunConfig(name, dict(params), int(run_seed), Path(out), stages)


def load_config(path, output_dir=None, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(raw, output_dir, seed)


# ---------------------------------------------------------------------------
# stages


def _grid_counts(grid, dim):
    return (grid,) * dim if isinstance(grid, int) else tuple(grid)


def _base(patch, base):
    return patch.center if base is None else np.asarray(base, dtype=float)


def _stage_analyze(entry, opts, seed, out):
    patch = entry.patch
    counts = _grid_counts(opts["grid"], patch.param_dim)
    field_ = signature_field(patch, counts, opts["grouping_tol"])
    U = patch.sample(opts["dupin_samples"], np.random.default_rng(seed))
    res, _, valid = dupin_residuals(patch, U, opts["grouping_tol"])
    worst = res.max(axis=-1)[valid]
    sig_json = field_.to_json()
    write_json(out / "signatures.json", sig_json)
    return {
        "surface": patch.name,
        "signatures": [list(s) for s in field_.signatures],
        "signature_components": {",".join(map(str, s)): int(c) for s, c in field_.components.items()},
        "signature_field": sig_json,
        "flagged": field_.flagged,
        "dupin_samples": int(len(U)),
        "max_dupin_residual": float(worst.max()) if len(worst) else 0.0,
        "median_dupin_residual": float(np.median(worst)) if len(worst) else 0.0,
        "fraction_non_dupin": float(np.mean(worst > NON_DUPIN_LEVEL)) if len(worst) else 0.0,
    }


def _stage_spheres(entry, opts, seed, out):
    patch = entry.patch
    rng = np.random.default_rng(seed)
    rows, errors = [], 0
    for u in patch.sample(opts["samples"], rng):
        spec = shape_spectrum(patch, u)
        for i in range(spec.group_count):
            row = {"param": u, "group": i, "curvature": spec.group_value(i)}
            try:
                row["sphere"] = curvature_sphere(patch, u, spec, i).to_json()
            except ValueError as exc:
                errors += 1
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return {"surface": patch.name, "count": len(rows), "errors": errors, "spheres": rows}


def _chart_radii(patch, base, radii):
    if radii is None:
        return choose_ball_radii(patch, base, DEFAULT_BALL_RADIUS)
    return tuple(radii)


def _stage_chart(entry, opts, seed, out):
    patch = entry.patch
    base = _base(patch, opts["base"])
    radii = _chart_radii(patch, base, opts["ball_radii"])
    grid = opts["grid"] if opts["grid"] is not None else (16 if patch.param_dim <= 2 else 8)
    rep = chart_roundtrip(patch, base, grid if isinstance(grid, int) else tuple(grid), radii)
    if opts["write_csv"] and rep.rows:
        k, n = len(rep.rows[0][0]), len(rep.rows[0][1])
        header = [f"s{i + 1}" for i in range(k)] + [f"x{i + 1}" for i in range(n)] + ["residual"]
        write_rows_csv(out / "chart.csv", header, [[*s, *x, r] for s, x, r in rep.rows])
    return {"surface": patch.name, "base": base, "ball_radii": list(radii), **rep.to_json()}


def _fit_points(entry, opts, seed):
    kind = opts["source"]
    if kind == "fixture":
        cloud = algebraic_fixture(opts["fixture"], seed=seed)
        return cloud.points, opts["fixture"], None
    if kind == "csv":
        return PointCloud.from_csv(opts["points_csv"]).points, opts["points_csv"], None
    patch = entry.patch
    if kind == "chart":
        base = _base(patch, opts["base"])
        radii = _chart_radii(patch, base, None)
        chart = IteratedChart(patch, base, radii)
        S = chart_grid(chart.signature, chart.ball_radii, (opts["chart_grid"],) * chart.stage_count)
        pts = np.array([chart(s) for s in S])
        return pts, "chart", entry.known_implicit
    pts = patch.eval(patch.sample(opts["samples"], np.random.default_rng(seed)))
    return pts, "direct", entry.known_implicit


def _stage_fit(entry, opts, seed, out):
    pts, source, known = _fit_points(entry, opts, seed)
    w = fit_implicit(pts, opts["d_max"], opts["null_tol"], opts["holdout_frac"], seed)
    report = {"source": source, "points": int(len(pts)), "witness": None, "degree": None}
    if w is None:
        return report
    report.update(
        witness=w.to_json(), degree=w.degree, sv_margin=w.sv_margin, heldout_rms=w.heldout_rms
    )
    if known is not None:
        report["cosine_to_known"] = float(w.raw_polynomial().cosine(known))
    if opts["source"] in ("direct", "chart"):
        fresh = entry.patch.eval(entry.patch.sample(500, np.random.default_rng(seed + 1)))
        stats = witness_residual(w, fresh)
        report["fresh_residual"] = stats
        report["fresh_rms"] = stats["rms"]
    return report


def _lifted(entry):
    return entry if entry.patch.lifted else stereographic_lift(entry)


def _stage_focal(entry, opts, seed, out):
    lifted = _lifted(entry)
    cloud = sample_focal_set(lifted.patch, opts["grid"])
    ends = end_count(cloud, opts["shell_radii"], opts["mc_points"], seed)
    if opts["write_csv"]:
        write_cloud_csv(out / "focal_cloud.csv", cloud)
    indices = opts["covering_indices"]
    if indices is None:
        indices = list(range(len(lifted.betti_z2)))
    covering = [
        covering_degree_check(lifted, k, opts["q_samples"], seed).to_json() for k in indices
    ]
    return {
        "surface": lifted.name,
        **ends.to_json(),
        "focal_cloud": {k: v for k, v in cloud.meta.items()} | {"points": len(cloud)},
        "covering": covering,
        "covering_pass": all(c["pass"] for c in covering),
    }


def _stage_taut(entry, opts, seed, out):
    lifted = _lifted(entry)
    audit = taut_audit(lifted, opts["trials"], seed, opts["seed_grid"])
    return {"surface": lifted.name, **audit.to_json()}


STAGES = {
    "analyze": _stage_analyze,
    "spheres": _stage_spheres,
    "chart": _stage_chart,
    "fit": _stage_fit,
    "focal": _stage_focal,
    "taut": _stage_taut,
}


# ---------------------------------------------------------------------------
# expectations and run


def _equal(a, b):
    if isinstance(a, numbers.Real) and isinstance(b, numbers.Real) and not isinstance(a, bool):
        return bool(np.isclose(a, b, rtol=1e-12, atol=0))
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return a == b


def check_expectations(report, expect):
    failures = []
    for key, spec in sorted(expect.items()):
        actual = report.get(key)
        checks = spec.items() if isinstance(spec, dict) else [("eq", spec)]
        for op, target in checks:
            try:
                ok = actual is not None and COMPARATORS[op](actual, target)
            except TypeError:
                ok = False
            if not ok:
                failures.append({"key": key, "op": op, "expected": target, "actual": actual})
    return failures


@dataclass
class RunResult:
    exit_code: int
    stages: list
    failed_stage: str | None = None


def run(config: RunConfig, log=print):
    """Run all stages in order; each writes <stage>.json into the output directory."""
    entry = registry.make_entry(config.surface, **config.params)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    summary, failed = [], None
    for spec in config.stages:
        try:
            report = STAGES[spec.name](entry, spec.options, config.seed, out)
        except Exception as exc:  # stage failure is a failed assertion, not a crash
            report = {"error": f"{type(exc).__name__}: {exc}"}
            failures = [{"key": "error", "op": "none", "expected": None, "actual": report["error"]}]
        else:
            failures = check_expectations(report, spec.expect)
        report = {"stage": spec.name, "seed": config.seed, "options": spec.options, **report}
        report["assertions"] = {"checked": sorted(spec.expect), "failures": failures, "pass": not failures}
        write_json(out / f"{spec.name}.json", report)
        summary.append({"stage": spec.name, "pass": not failures, "failures": failures})
        log(f"{spec.name}: {'ok' if not failures else 'FAILED'}")
        for f in failures:
            log(f"  {f['key']}: expected {f['op']} {f['expected']!r}, got {f['actual']!r}")
        if failures and failed is None:
            failed = spec.name
    code = 0 if failed is None else 1
    write_json(
        out / "run.json",
        {"config": config.to_json(), "stages": summary, "exit_code": code, "failed_stage": failed},
    )
    return RunResult(code, summary, failed)
