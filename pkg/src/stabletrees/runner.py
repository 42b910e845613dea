"""Experiment orchestration: config parsing, dispatch, and emission.

The runner turns a flat INI config into one of six canned experiments,
fans replicate blocks over worker processes, and writes deterministic
CSV and JSON artifacts.  Reproducibility contract: (config, seed)
fixes every output byte on one platform, and the worker count never
changes results, only wall time.  Replicates draw from per-block
generator streams keyed by (seed, block index), so the block list, not
the process pool, owns the randomness.  Wall-clock timings are printed
to the console and kept out of the emitted files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analytic import (
    DomainError,
    csbp_semigroup,
    csbp_semigroup_ode,
    level_ball_lt,
    mass_ball_lt,
    occupation_exponent,
    occupation_exponent_residual,
    tail_constants,
)
from .fractal import (
    LevelMeasure,
    MassMeasure,
    density_profile,
    dichotomy_report,
    merge_profiles,
    profile_with_gauge,
    report_summary,
)
from .gauges import SERIES_KINDS, format_gauge, parse_gauge, series_classify
from .samplers.brownian import brownian_excursion, step_scale
from .samplers.galton_watson import gw_tree_coding
from .samplers.spinal import spinal_level_ball_batch, spinal_mass_ball_batch
from .samplers.streams import make_rng
from .tree import (
    EmptyLevel,
    build_tree,
    distance,
    distances_from,
    four_point_residual,
    mass_balls,
)

SCHEMA_VERSION = 1
EXPERIMENT_NAMES = (
    "analytic-check",
    "simulate-tree",
    "spinal-sample",
    "density-exp",
    "series-test",
    "calibrate",
)
#: replicate blocks per experiment; fixed so results never depend on workers
_N_BLOCKS = 16
#: survival levels (walk units) and pool size for the calibrate experiment
_CAL_LOW = 16
_CAL_HIGH = 32
_CAL_POOL = 16

_CSV_FIELDS = (
    "experiment",
    "params",
    "statistic",
    "value",
    "error",
    "target",
    "tol",
    "passed",
    "module",
    "source",
    "note",
)

__all__ = [
    "ConfigError",
    "EXPERIMENT_NAMES",
    "ExperimentConfig",
    "ExperimentRecord",
    "RunResult",
    "SCHEMA_VERSION",
    "emit",
    "load_config",
    "main",
    "records_from_summary",
    "run",
]


class ConfigError(ValueError):
    """Config file rejected; the message names the key and the reason."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one experiment run."""

    experiment: str
    gamma: float
    seed: int
    replicates: int = 1
    out_dir: str | None = None
    tol: float | None = None
    n_grid: int = 0
    a: float = 0.3
    radii: tuple[float, ...] = ()
    eps_trunc: float | None = None
    gauges: tuple = ()
    kind: str = ""
    n_points: int = 10
    n_min: int = 4
    n_max: int = 9
    window: int = 2
    min_levels: int = 3
    eps_level: float = 0.0


@dataclass(frozen=True)
class ExperimentRecord:
    """One measured statistic with its target and audit trail.

    passed is true when no target exists, otherwise iff
    |value - target| <= tol.  runtime is wall-clock seconds and is
    deliberately excluded from emitted files so outputs stay
    byte-stable across runs.
    """

    experiment: str
    params: str
    statistic: str
    value: float
    error: float
    target: float
    tol: float
    passed: bool
    runtime: float
    module: str
    source: str
    note: str = ""


@dataclass(frozen=True)
class RunResult:
    records: tuple[ExperimentRecord, ...]
    extras: dict
    paths: dict
    all_passed: bool
    runtime: float


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

#: per-experiment (required, optional) keys beyond the common ones
_EXPERIMENT_KEYS = {
    "analytic-check": ((), ()),
    "simulate-tree": (("replicates", "n_grid"), ("a",)),
    "spinal-sample": (("replicates", "a", "radii"), ("eps_trunc",)),
    "density-exp": (
        ("replicates", "n_grid", "a", "gauges", "kind"),
        ("n_points", "n_min", "n_max", "window", "min_levels", "eps_level"),
    ),
    "series-test": (("gauges", "kind"), ()),
    "calibrate": (("replicates",), ("n_grid",)),
}
_COMMON_REQUIRED = ("experiment", "gamma", "seed")
_COMMON_OPTIONAL = ("out_dir", "tol")


def _parse_scalar(items: dict, key: str, cast: Callable, kind: str):
    raw = items[key]
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: expected {kind}, got {raw!r}") from None


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate an INI experiment config.

    Strict: unknown sections or keys are rejected, every value is
    bounds-checked, and error messages name the offending key.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from None
    sections = parser.sections()
    if sections != ["experiment"]:
        raise ConfigError(
            f"config must hold exactly one [experiment] section, got {sections!r}"
        )
    items = dict(parser["experiment"])

    if "experiment" not in items:
        raise ConfigError("config key 'experiment': missing")
    name = items["experiment"]
    if name not in _EXPERIMENT_KEYS:
        raise ConfigError(
            f"config key 'experiment': must be one of {EXPERIMENT_NAMES}, got {name!r}"
        )
    required, optional = _EXPERIMENT_KEYS[name]
    allowed = set(_COMMON_REQUIRED) | set(_COMMON_OPTIONAL) | set(required) | set(optional)
    for key in items:
        if key not in allowed:
            raise ConfigError(
                f"config key {key!r}: not accepted by experiment {name!r}"
            )
    for key in (*_COMMON_REQUIRED, *required):
        if key not in items:
            raise ConfigError(f"config key {key!r}: required by experiment {name!r}")

    gamma = _parse_scalar(items, "gamma", float, "a float")
    if not 1.0 < gamma <= 2.0:
        raise ConfigError(f"config key 'gamma': must lie in (1, 2], got {gamma}")
    seed = _parse_scalar(items, "seed", int, "an integer")
    if seed < 0:
        raise ConfigError(f"config key 'seed': must be >= 0, got {seed}")

    kwargs: dict = {"experiment": name, "gamma": gamma, "seed": seed}
    if "out_dir" in items:
        kwargs["out_dir"] = items["out_dir"]
    if "tol" in items:
        tol = _parse_scalar(items, "tol", float, "a float")
        if tol <= 0:
            raise ConfigError(f"config key 'tol': must be > 0, got {tol}")
        kwargs["tol"] = tol
    if "replicates" in items:
        reps = _parse_scalar(items, "replicates", int, "an integer")
        if reps < 1:
            raise ConfigError(f"config key 'replicates': must be >= 1, got {reps}")
        kwargs["replicates"] = reps
    if "n_grid" in items:
        n_grid = _parse_scalar(items, "n_grid", int, "an integer")
        if n_grid < 8:
            raise ConfigError(f"config key 'n_grid': must be >= 8, got {n_grid}")
        kwargs["n_grid"] = n_grid
    if "a" in items:
        a = _parse_scalar(items, "a", float, "a float")
        if a <= 0:
            raise ConfigError(f"config key 'a': must be > 0, got {a}")
        kwargs["a"] = a
    if "radii" in items:
        try:
            radii = tuple(float(tok) for tok in items["radii"].split(",") if tok.strip())
        except ValueError:
            raise ConfigError(
                f"config key 'radii': expected comma-separated floats, got {items['radii']!r}"
            ) from None
        if not radii or any(r <= 0 for r in radii):
            raise ConfigError(f"config key 'radii': need positive radii, got {radii}")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigError(
                f"config key 'radii': must be strictly decreasing, got {radii}"
            )
        kwargs["radii"] = radii
    if "eps_trunc" in items:
        eps_trunc = _parse_scalar(items, "eps_trunc", float, "a float")
        if eps_trunc <= 0:
            raise ConfigError(f"config key 'eps_trunc': must be > 0, got {eps_trunc}")
        kwargs["eps_trunc"] = eps_trunc
    if "gauges" in items:
        texts = [tok.strip() for tok in items["gauges"].split(";") if tok.strip()]
        if not texts:
            raise ConfigError("config key 'gauges': need at least one gauge")
        parsed = []
        for text in texts:
            try:
                parsed.append(parse_gauge(text))
            except (DomainError, ValueError) as exc:
                raise ConfigError(f"config key 'gauges': {exc}") from None
        kwargs["gauges"] = tuple(parsed)
    if "kind" in items:
        kind = items["kind"]
        if kind not in SERIES_KINDS:
            raise ConfigError(
                f"config key 'kind': must be one of {SERIES_KINDS}, got {kind!r}"
            )
        kwargs["kind"] = kind
    for key, lo in (
        ("n_points", 1),
        ("n_min", 1),
        ("n_max", 1),
        ("window", 1),
        ("min_levels", 2),
    ):
        if key in items:
            val = _parse_scalar(items, key, int, "an integer")
            if val < lo:
                raise ConfigError(f"config key {key!r}: must be >= {lo}, got {val}")
            kwargs[key] = val
    if "eps_level" in items:
        eps_level = _parse_scalar(items, "eps_level", float, "a float")
        if eps_level <= 0:
            raise ConfigError(f"config key 'eps_level': must be > 0, got {eps_level}")
        kwargs["eps_level"] = eps_level

    cfg = ExperimentConfig(**kwargs)
    if cfg.n_min > cfg.n_max:
        raise ConfigError(
            f"config key 'n_min': must not exceed n_max, got {cfg.n_min} > {cfg.n_max}"
        )
    if name == "spinal-sample" and max(cfg.radii) > 2.0 * cfg.a:
        raise ConfigError(
            f"config key 'radii': spinal draws need radii <= 2a = {2.0 * cfg.a}, "
            f"got {max(cfg.radii)}"
        )
    if name == "calibrate" and cfg.gamma != 2.0:
        raise ConfigError(
            "config key 'gamma': calibrate runs the random-walk height lattice "
            f"and needs gamma = 2, got {cfg.gamma}"
        )
    if name == "calibrate" and cfg.n_grid and cfg.n_grid <= _CAL_HIGH:
        raise ConfigError(
            f"config key 'n_grid': calibrate ceiling must exceed {_CAL_HIGH}, got {cfg.n_grid}"
        )
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError(f"config key 'seed': must be >= 0, got {seed_override}")
        cfg = ExperimentConfig(**{**kwargs, "seed": seed_override})
    return cfg


# ---------------------------------------------------------------------------
# records and emission
# ---------------------------------------------------------------------------

def _record(
    cfg: ExperimentConfig,
    statistic: str,
    value: float,
    *,
    module: str,
    source: str,
    params: str = "",
    error: float = math.nan,
    target: float = math.nan,
    tol: float = math.nan,
    note: str = "",
    runtime: float = 0.0,
) -> ExperimentRecord:
    if math.isfinite(target):
        passed = abs(value - target) <= tol
    else:
        passed = True
    return ExperimentRecord(
        experiment=cfg.experiment,
        params=params,
        statistic=statistic,
        value=float(value),
        error=float(error),
        target=float(target),
        tol=float(tol),
        passed=bool(passed),
        runtime=float(runtime),
        module=module,
        source=source,
        note=note,
    )


def _fmt_cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _none_if_nan(x: float):
    return None if math.isnan(x) else x


def _json_sanitize(obj):
    """Recursively map NaN to null so emitted JSON stays strict."""
    if isinstance(obj, float):
        return _none_if_nan(obj)
    if isinstance(obj, dict):
        return {k: _json_sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_sanitize(v) for v in obj]
    return obj


def _record_dict(r: ExperimentRecord) -> dict:
    return {
        "experiment": r.experiment,
        "params": r.params,
        "statistic": r.statistic,
        "value": _none_if_nan(r.value),
        "error": _none_if_nan(r.error),
        "target": _none_if_nan(r.target),
        "tol": _none_if_nan(r.tol),
        "passed": r.passed,
        "module": r.module,
        "source": r.source,
        "note": r.note,
    }


def records_from_summary(summary: dict) -> list[ExperimentRecord]:
    """Rebuild records from a parsed summary.json payload.

    Wall-clock runtime is not emitted, so it comes back as zero.
    """
    out = []
    for d in summary["records"]:
        nums = {
            k: (math.nan if d[k] is None else float(d[k]))
            for k in ("value", "error", "target", "tol")
        }
        out.append(
            ExperimentRecord(
                experiment=d["experiment"],
                params=d["params"],
                statistic=d["statistic"],
                passed=bool(d["passed"]),
                runtime=0.0,
                module=d["module"],
                source=d["source"],
                note=d["note"],
                **nums,
            )
        )
    return out


def _config_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "experiment": cfg.experiment,
        "gamma": cfg.gamma,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
    }
    if cfg.tol is not None:
        out["tol"] = cfg.tol
    if cfg.n_grid:
        out["n_grid"] = cfg.n_grid
    if cfg.experiment in ("simulate-tree", "spinal-sample", "density-exp"):
        out["a"] = cfg.a
    if cfg.radii:
        out["radii"] = list(cfg.radii)
    if cfg.eps_trunc is not None:
        out["eps_trunc"] = cfg.eps_trunc
    if cfg.gauges:
        out["gauges"] = [format_gauge(g) for g in cfg.gauges]
    if cfg.kind:
        out["kind"] = cfg.kind
    if cfg.experiment == "density-exp":
        out.update(
            n_points=cfg.n_points,
            n_min=cfg.n_min,
            n_max=cfg.n_max,
            window=cfg.window,
            min_levels=cfg.min_levels,
            eps_level=cfg.eps_level,
        )
    return out


def emit(
    records: Sequence[ExperimentRecord],
    out_dir,
    *,
    config: ExperimentConfig | None = None,
    extras: dict | None = None,
) -> dict:
    """Write records.csv, summary.json and any extra artifacts.

    Field order and float formatting are fixed; NaN cells emit empty in
    CSV and null in JSON.  Extras map file names to (header, rows) for
    .csv entries or to a JSON-ready object for .json entries.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    rec_path = out / "records.csv"
    with open(rec_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for r in records:
            writer.writerow([_fmt_cell(getattr(r, f)) for f in _CSV_FIELDS])
    paths["records.csv"] = rec_path
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": config.experiment if config else (records[0].experiment if records else ""),
        "config": _config_dict(config) if config else {},
        "all_passed": all(r.passed for r in records),
        "records": [_record_dict(r) for r in records],
    }
    sum_path = out / "summary.json"
    with open(sum_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    paths["summary.json"] = sum_path
    for name, payload in (extras or {}).items():
        p = out / name
        if name.endswith(".json"):
            with open(p, "w") as fh:
                json.dump(_json_sanitize(payload), fh, indent=2, sort_keys=True, allow_nan=False)
                fh.write("\n")
        else:
            header, rows = payload
            with open(p, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt_cell(v) for v in row])
        paths[name] = p
    return paths


# ---------------------------------------------------------------------------
# parallel plumbing
# ---------------------------------------------------------------------------

def _split_blocks(reps: int, n_blocks: int = _N_BLOCKS) -> list[tuple[int, int]]:
    """Contiguous (block_id, count) splits, independent of worker count."""
    k = min(reps, n_blocks)
    base, extra = divmod(reps, k)
    out = []
    for b in range(k):
        out.append((b, base + (1 if b < extra else 0)))
    return out


def _parallel_map(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# analytic-check
# ---------------------------------------------------------------------------

def _run_analytic_check(cfg: ExperimentConfig, workers: int):
    gammas = sorted({1.2, 1.5, 1.8, 2.0} | {cfg.gamma})
    lams = (0.5, 1.0, 2.0)
    records = []

    def tol_or(default):
        return cfg.tol if cfg.tol is not None else default

    gap = 0.0
    for g in gammas:
        for t in (0.25, 1.0):
            for lam in lams:
                gap = max(gap, abs(csbp_semigroup(g, t, lam) - csbp_semigroup_ode(g, t, lam)))
    records.append(
        _record(
            cfg, "semigroup_ode_gap_max", gap, target=0.0, tol=tol_or(1e-8),
            module="analytic", source="csbp_semigroup vs csbp_semigroup_ode",
            params=f"gammas={gammas};t=0.25,1.0;lam=0.5,1.0,2.0",
        )
    )

    gap = 0.0
    for g in gammas:
        for t, s in ((0.25, 0.5), (1.0, 0.25)):
            for lam in lams:
                flow = csbp_semigroup(g, t, csbp_semigroup(g, s, lam))
                gap = max(gap, abs(csbp_semigroup(g, t + s, lam) - flow))
    records.append(
        _record(
            cfg, "semigroup_flow_residual_max", gap, target=0.0, tol=tol_or(1e-10),
            module="analytic", source="csbp_semigroup two-step composition",
        )
    )

    gap = 0.0
    for g in gammas:
        for lam in lams:
            gap = max(gap, occupation_exponent_residual(occupation_exponent(g, 1.0, lam)))
    records.append(
        _record(
            cfg, "occupation_exponent_residual_max", gap, target=0.0, tol=tol_or(1e-6),
            module="analytic", source="occupation_exponent implicit identity",
        )
    )

    gap = 0.0
    for lam in (0.5, 1.0, 4.0):
        sol = occupation_exponent(2.0, 1.0, lam)
        for a in (0.3, 0.7, 1.0):
            gap = max(gap, abs(sol.at(a) - math.sqrt(lam) * math.tanh(a * math.sqrt(lam))))
    records.append(
        _record(
            cfg, "exponent_tanh_gap_max", gap, target=0.0, tol=tol_or(1e-9),
            module="analytic", source="occupation_exponent vs sqrt(lam)*tanh",
            params="gamma=2.0",
        )
    )

    gap = 0.0
    for r in (0.5, 1.0):
        for lam in lams:
            closed = 1.0 / math.cosh(r * math.sqrt(lam)) ** 2
            gap = max(gap, abs(mass_ball_lt(2.0, r, lam) - closed))
    records.append(
        _record(
            cfg, "mass_ball_sech_gap_max", gap, target=0.0, tol=tol_or(1e-9),
            module="analytic", source="mass_ball_lt vs 1/cosh^2",
            params="gamma=2.0",
        )
    )

    for g in (1.2, 1.5, 1.8):
        tc = tail_constants(g)
        gap = max(
            abs(tc.level_ball_tail - g / (2.0 * math.gamma(2.0 - g))),
            abs(tc.mass_ball_tail - 1.0 / math.gamma(2.0 - g)),
        )
        records.append(
            _record(
                cfg, "tail_constant_gap", gap, target=0.0, tol=tol_or(1e-10),
                module="analytic", source="tail_constants vs math.gamma",
                params=f"gamma={g!r}",
            )
        )
    return records, {}


# ---------------------------------------------------------------------------
# simulate-tree
# ---------------------------------------------------------------------------

def _simulate_tree_task(args):
    gamma, n_grid, a, seed, rep = args
    rng = make_rng(seed, stream_id=rep)
    if gamma == 2.0:
        cod = brownian_excursion(n_grid, rng=rng)
    else:
        cod = gw_tree_coding(gamma, n_grid, rng=rng, min_height=a)
    tree = build_tree(cod)
    n = tree.n

    quads = rng.integers(0, n + 1, size=(4, 10_000))
    four_pt = max(0.0, float(np.max(four_point_residual(tree, *quads))))

    pairs = rng.integers(0, n + 1, size=(2, 1_000))
    vals = tree.coding.values
    gap = 0.0
    for s, t in pairs.T:
        lo, hi = (s, t) if s <= t else (t, s)
        brute = vals[s] + vals[t] - 2.0 * float(vals[lo : hi + 1].min())
        gap = max(gap, abs(distance(tree, int(s), int(t)) - brute))

    far = int(np.argmax(distances_from(tree, 0)))
    reach = distances_from(tree, far)
    diam = float(reach.max())
    center = int(rng.integers(0, n + 1))
    ladder = diam * np.array([0.1, 0.25, 0.5, 0.75, 1.0])
    masses = mass_balls(tree, center, ladder)
    monotone_violations = int(np.sum(np.diff(masses) < 0))
    exhaustive_gap = abs(float(mass_balls(tree, far, np.array([diam]))[0]) - n * tree.coding.delta)
    return four_pt, gap, monotone_violations, exhaustive_gap


def _run_simulate_tree(cfg: ExperimentConfig, workers: int):
    tasks = [
        (cfg.gamma, cfg.n_grid, cfg.a, cfg.seed, rep) for rep in range(cfg.replicates)
    ]
    parts = _parallel_map(_simulate_tree_task, tasks, workers)
    four_pt = max(p[0] for p in parts)
    dist_gap = max(p[1] for p in parts)
    mono = sum(p[2] for p in parts)
    exhaust = max(p[3] for p in parts)
    params = f"gamma={cfg.gamma!r};n_grid={cfg.n_grid};replicates={cfg.replicates}"
    tol = cfg.tol if cfg.tol is not None else 1e-12
    records = [
        _record(
            cfg, "four_point_residual_max", four_pt, target=0.0, tol=tol,
            module="tree", source="four_point_residual on random quadruples",
            params=params, note="10000 quadruples per tree",
        ),
        _record(
            cfg, "distance_brute_force_gap_max", dist_gap, target=0.0, tol=0.0,
            module="tree", source="distance vs direct interval minimum",
            params=params, note="1000 pairs per tree",
        ),
        _record(
            cfg, "mass_ball_monotone_violations", float(mono), target=0.0, tol=0.0,
            module="tree", source="mass_balls on a radius ladder",
            params=params,
        ),
        _record(
            cfg, "mass_ball_exhaustive_gap_max", exhaust, target=0.0, tol=tol,
            module="tree", source="mass_balls at the diameter vs total mass",
            params=params,
        ),
    ]
    return records, {}


# ---------------------------------------------------------------------------
# spinal-sample
# ---------------------------------------------------------------------------

def _spinal_block(args):
    gamma, a, radii, eps_trunc, seed, block, count = args
    rad = np.asarray(radii, dtype=np.float64)
    lstar, shells = spinal_level_ball_batch(gamma, a, rad, count, make_rng(seed, stream_id=block))
    masses = np.empty((count, rad.size))
    bounds = np.empty((count, rad.size))
    for j, r in enumerate(rad):
        m, bb, _ = spinal_mass_ball_batch(
            gamma, a, float(r), eps_trunc, count,
            make_rng(seed, stream_id=_N_BLOCKS * (j + 1) + block),
        )
        masses[:, j] = m
        bounds[:, j] = bb
    return block, lstar, shells, masses, bounds


def _run_spinal_sample(cfg: ExperimentConfig, workers: int):
    tasks = [
        (cfg.gamma, cfg.a, cfg.radii, cfg.eps_trunc, cfg.seed, block, count)
        for block, count in _split_blocks(cfg.replicates)
    ]
    parts = _parallel_map(_spinal_block, tasks, workers)
    parts.sort(key=lambda p: p[0])
    lstar = np.vstack([p[1] for p in parts])
    masses = np.vstack([p[3] for p in parts])
    bounds = np.vstack([p[4] for p in parts])

    rows = []
    for block, l_b, s_b, m_b, b_b in parts:
        for i in range(l_b.shape[0]):
            for j, r in enumerate(cfg.radii):
                shell = math.nan if j == 0 else float(s_b[i, j - 1])
                rows.append(
                    (
                        cfg.seed,
                        block,
                        cfg.gamma,
                        cfg.a,
                        r,
                        float(l_b[i, j]),
                        shell,
                        float(m_b[i, j]),
                        float(b_b[i, j]),
                    )
                )

    reps = cfg.replicates
    records = []
    for j, r in enumerate(cfg.radii):
        params = f"gamma={cfg.gamma!r};a={cfg.a!r};r={r!r};lam=1.0"
        emp = np.exp(-lstar[:, j])
        se = float(emp.std(ddof=1) / math.sqrt(reps))
        target = level_ball_lt(cfg.gamma, r, 1.0)
        tol = cfg.tol if cfg.tol is not None else 3.0 * se
        records.append(
            _record(
                cfg, "level_ball_lt_at_1", float(emp.mean()), error=se,
                target=target, tol=tol, params=params,
                module="samplers", source="spinal_level_ball_batch vs level_ball_lt",
            )
        )
        emp = np.exp(-masses[:, j])
        se = float(emp.std(ddof=1) / math.sqrt(reps))
        bias = float(bounds[:, j].mean())
        target = mass_ball_lt(cfg.gamma, r, 1.0)
        tol = cfg.tol if cfg.tol is not None else 3.0 * se + bias
        records.append(
            _record(
                cfg, "mass_ball_lt_at_1", float(emp.mean()), error=se,
                target=target, tol=tol, params=params,
                module="samplers", source="spinal_mass_ball_batch vs mass_ball_lt",
                note="tolerance includes the reported truncation bias bound",
            )
        )
    header = (
        "seed", "stream_id", "gamma", "a", "r",
        "L_star", "Lambda", "M_star", "bias_bound",
    )
    return records, {"draws.csv": (header, rows)}


# ---------------------------------------------------------------------------
# density-exp
# ---------------------------------------------------------------------------

def _density_tree_task(args):
    (gamma, n_grid, a, eps_level, n_points, n_min, n_max, window, gauge_text, seed, rep,
     kind_name) = args
    rng = make_rng(seed, stream_id=rep)
    gauge = parse_gauge(gauge_text)
    kind = MassMeasure() if kind_name == "HausMass" else LevelMeasure(a)
    if kind_name == "HausMass":
        eps_level = 0.0
    while True:
        if gamma == 2.0:
            cod = brownian_excursion(n_grid, rng=rng)
        else:
            cod = gw_tree_coding(
                gamma, n_grid, rng=rng, min_height=a, height_cap=a + 4.0 / n_grid
            )
        try:
            tree = build_tree(cod)
            return density_profile(
                tree, kind, gauge, gamma, n_points, n_min, n_max, eps_level, rng,
                window=window,
            )
        except EmptyLevel:
            continue


def _run_density_exp(cfg: ExperimentConfig, workers: int):
    if cfg.eps_level > 0:
        eps_level = cfg.eps_level
    elif cfg.gamma == 2.0:
        eps_level = step_scale(cfg.n_grid)
    else:
        eps_level = 1.0 / cfg.n_grid
    base_text = format_gauge(cfg.gauges[0])
    tasks = [
        (
            cfg.gamma, cfg.n_grid, cfg.a, eps_level, cfg.n_points,
            cfg.n_min, cfg.n_max, cfg.window, base_text, cfg.seed, rep, cfg.kind,
        )
        for rep in range(cfg.replicates)
    ]
    base_profiles = _parallel_map(_density_tree_task, tasks, workers)
    merged = [
        merge_profiles([profile_with_gauge(p, g) for p in base_profiles])
        for g in cfg.gauges
    ]
    report = dichotomy_report(merged, cfg.kind, min_levels=cfg.min_levels)

    records = []
    for trend in report.trends:
        params = f"gauge={format_gauge(trend.gauge)};kind={cfg.kind};gamma={cfg.gamma!r}"
        note = f"{trend.classification} vs {trend.verdict}"
        if trend.agrees is None:
            records.append(
                _record(
                    cfg, "trend_verdict_agrees", math.nan, params=params,
                    module="fractal", source="dichotomy_report vs series_classify",
                    note=note + " (series test inconclusive)",
                )
            )
        else:
            records.append(
                _record(
                    cfg, "trend_verdict_agrees", 1.0 if trend.agrees else 0.0,
                    target=1.0, tol=0.0, params=params,
                    module="fractal", source="dichotomy_report vs series_classify",
                    note=note,
                )
            )
        records.append(
            _record(
                cfg, "trend_sign_agreement", trend.agreement, params=params,
                module="fractal", source="per-point slope signs",
                note=f"n_used={trend.n_used}",
            )
        )
        records.append(
            _record(
                cfg, "trend_median_slope", trend.median_slope, params=params,
                module="fractal", source="rolling-extremum log slope",
            )
        )

    prof_rows = []
    ns = np.arange(cfg.n_min, cfg.n_max + 1)
    for g, prof in zip(cfg.gauges, merged):
        text = format_gauge(g)
        for i, pid in enumerate(prof.point_ids):
            for j, n in enumerate(ns):
                prof_rows.append((text, i, int(pid), int(n), float(prof.ratios[i, j])))
    extras = {
        "profiles.csv": (("gauge", "row", "point_id", "level", "ratio"), prof_rows),
        "report.json": report_summary(report),
    }
    return records, extras


# ---------------------------------------------------------------------------
# series-test
# ---------------------------------------------------------------------------

def _run_series_test(cfg: ExperimentConfig, workers: int):
    side_value = {"Converges": 1.0, "Diverges": -1.0, "Unknown": 0.0}
    records = []
    for g in cfg.gauges:
        verdict = series_classify(g, cfg.gamma, cfg.kind)
        records.append(
            _record(
                cfg, "series_classification", side_value[verdict],
                params=f"gauge={format_gauge(g)};kind={cfg.kind};gamma={cfg.gamma!r}",
                module="gauges", source="series_classify",
                note=verdict,
            )
        )
    return records, {}


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def _calibrate_block(args):
    seed, block, count, k_top = args
    rng = make_rng(seed, stream_id=block)
    walks = count * _CAL_POOL
    pos = np.ones(walks, dtype=np.int64)
    hit_low = np.zeros(walks, dtype=bool)
    hit_high = np.zeros(walks, dtype=bool)
    active = np.ones(walks, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        pos[idx] += rng.integers(0, 2, size=idx.size) * 2 - 1
        hit_low[idx] |= pos[idx] >= _CAL_LOW
        hit_high[idx] |= pos[idx] >= _CAL_HIGH
        active[idx] = (pos[idx] > 0) & (pos[idx] < k_top)
    pooled = hit_high.reshape(count, _CAL_POOL).sum(axis=1)
    return block, int(hit_low.sum()), int(hit_high.sum()), pooled


def _run_calibrate(cfg: ExperimentConfig, workers: int):
    k_top = cfg.n_grid if cfg.n_grid else 64
    tasks = [
        (cfg.seed, block, count, k_top) for block, count in _split_blocks(cfg.replicates)
    ]
    parts = _parallel_map(_calibrate_block, tasks, workers)
    parts.sort(key=lambda p: p[0])
    n_low = sum(p[1] for p in parts)
    n_high = sum(p[2] for p in parts)
    pooled = np.concatenate([p[3] for p in parts]).astype(np.float64)

    params = f"levels={_CAL_LOW},{_CAL_HIGH};pool={_CAL_POOL};ceiling={k_top}"
    records = []
    # walks start one step up, so P(reach k before 0) = 1/k exactly and
    # the count ratio targets the level ratio with no lattice bias
    ratio = n_high / n_low if n_low else math.nan
    se = math.sqrt(ratio * (1.0 - ratio) / n_low) if n_low else math.nan
    tol = cfg.tol if cfg.tol is not None else 3.0 * se
    records.append(
        _record(
            cfg, "survival_ratio", ratio, error=se,
            target=_CAL_LOW / _CAL_HIGH, tol=tol, params=params,
            module="samplers", source="lattice walk first-passage counts",
            note=f"{n_high}/{n_low} walks of {cfg.replicates * _CAL_POOL}",
        )
    )

    mean = float(pooled.mean())
    var = float(pooled.var(ddof=1))
    disp = var / mean if mean else math.nan
    centered = pooled - mean
    influence = (centered**2 - var - disp * centered) / mean
    se = float(influence.std(ddof=1) / math.sqrt(pooled.size))
    target = 1.0 - 1.0 / _CAL_HIGH
    tol = cfg.tol if cfg.tol is not None else 3.0 * se
    records.append(
        _record(
            cfg, "branching_dispersion_index", disp, error=se,
            target=target, tol=tol, params=params,
            module="samplers", source="pooled first-passage count dispersion",
            note="independent walk counts keep variance at binomial level",
        )
    )
    return records, {}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

_DISPATCH = {
    "analytic-check": _run_analytic_check,
    "simulate-tree": _run_simulate_tree,
    "spinal-sample": _run_spinal_sample,
    "density-exp": _run_density_exp,
    "series-test": _run_series_test,
    "calibrate": _run_calibrate,
}


def run(
    cfg: ExperimentConfig,
    *,
    workers: int = 1,
    out_dir=None,
) -> RunResult:
    """Execute the configured experiment and write artifacts.

    out_dir=None runs in memory without touching the filesystem.
    """
    t0 = time.perf_counter()
    records, extras = _DISPATCH[cfg.experiment](cfg, max(1, workers))
    runtime = time.perf_counter() - t0
    records = tuple(records)
    paths = {}
    if out_dir is not None:
        paths = emit(records, out_dir, config=cfg, extras=extras)
    return RunResult(
        records=records,
        extras=extras,
        paths=paths,
        all_passed=all(r.passed for r in records),
        runtime=runtime,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stabletrees",
        description="Seeded simulation experiments on stable continuum trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment described by an INI config")
    run_p.add_argument("config_path", help="path to the experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--workers", type=int, default=1, help="worker processes")
    run_p.add_argument(
        "--out",
        default=None,
        help="output directory (overrides STABLETREES_OUT and the config out_dir)",
    )
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config_path, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or os.environ.get("STABLETREES_OUT") or cfg.out_dir or "results"
    try:
        result = run(cfg, workers=max(1, args.workers), out_dir=out_dir)
    except DomainError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 2

    for r in result.records:
        flag = "PASS" if r.passed else "FAIL"
        line = f"[{flag}] {r.statistic} = {r.value:.6g}"
        if math.isfinite(r.target):
            line += f" (target {r.target:.6g}, tol {r.tol:.3g})"
        if r.params:
            line += f"  {r.params}"
        print(line)
    n_pass = sum(r.passed for r in result.records)
    status = "all passed" if result.all_passed else "FAILURES"
    print(
        f"{cfg.experiment}: {n_pass}/{len(result.records)} records passed "
        f"({status}) in {result.runtime:.2f}s -> {out_dir}"
    )
    return 0 if result.all_passed else 1
