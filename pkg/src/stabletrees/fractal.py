"""Fractal measure estimators and dyadic density experiments on trees.

Greedy ball packings give lower brackets for gauge packing pre-measures,
nested net covers give upper bounds in the Hausdorff direction, and
density profiles record ball-measure to gauge ratios over dyadic radii
at sampled points.  Trend reports over the observed radius window are
compared with the dyadic series tests; no limit statement is ever
extrapolated from the finite window.

The liminf and limsup proxies are rolling extrema of the ratio sequence
over a short trailing window of dyadic levels.  A full-history minimum
is non-increasing by construction and cannot exhibit the rising lower
envelope that separates the convergent side, so the rolling version is
what the trend regressions consume; the whole-window extrema are still
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .analytic import DomainError
from .gauges import (
    CONVERGES,
    CustomTable,
    DIVERGES,
    Gauge,
    SERIES_KINDS,
    format_gauge,
    gauge_domain_max,
    gauge_eval,
    series_classify,
)
from .tree import (
    RealTree,
    branch_min_from,
    distance,
    distances_from,
    level_strip,
    occupation_local_time,
    sample_from_level,
    sample_from_mass,
)

_MAX_SAMPLE = 5000
#: claimed packing radii are shrunk by this factor so the strict
#: disjointness inequality survives rounding
_SHRINK = 1.0 - 1e-9
#: smallest claimable radius as a fraction of eps; without a floor the
#: greedy cascade emits balls too small for the shrink margin to beat
#: float rounding in the disjointness check
_RADIUS_FLOOR = 1e-5
#: honest radii must exceed this many height quanta and strip widths
_RESOLUTION_FACTOR = 8.0
_MIN_TREND_LEVELS = 4

CONVERGENT_SIDE = "Convergent-side"
DIVERGENT_SIDE = "Divergent-side"

__all__ = [
    "CONVERGENT_SIDE",
    "DIVERGENT_SIDE",
    "ComparisonRecord",
    "CoverEstimate",
    "DensityProfile",
    "DichotomyReport",
    "GaugeTrend",
    "LevelMeasure",
    "MassMeasure",
    "PackingEstimate",
    "ball_measure_profile",
    "density_comparison_check",
    "density_profile",
    "dichotomy_report",
    "hausdorff_premeasure_estimate",
    "measure_resolution",
    "measure_total",
    "merge_profiles",
    "packing_premeasure_estimate",
    "pairwise_distances",
    "profile_long_rows",
    "profile_with_gauge",
    "report_summary",
]


@dataclass(frozen=True)
class LevelMeasure:
    """Local-time measure of the level set at height a."""

    a: float

    def __post_init__(self):
        if self.a <= 0:
            raise DomainError(f"level height must be > 0, got {self.a!r}")


@dataclass(frozen=True)
class MassMeasure:
    """Time measure of the whole tree (supported on the leaves)."""


MeasureKind = Union[LevelMeasure, MassMeasure]


@dataclass(frozen=True)
class PackingEstimate:
    """Greedy packing value bracket.

    lower sums the gauge over one admissible packing, a lower bound for
    the packing pre-measure's supremum; upper re-evaluates the gauge at
    doubled radii, the usual covering-side companion.  centers and radii
    describe the claimed balls so disjointness can be rechecked exactly.
    """

    gamma: float
    gauge: Gauge
    eps: float
    centers: np.ndarray
    radii: np.ndarray
    lower: float
    upper: float
    n_sample: int


@dataclass(frozen=True)
class CoverEstimate:
    """Nested net cover value.

    rung_radii are the net radii eps/2 * 2**j down the refinement
    ladder; each rung's value is its ball count times the gauge at the
    2r diameter estimate.  value is the running minimum over rungs whose
    diameter estimate fits the gauge domain, an upper bound for the
    cover-class infimum; centers is the finest net.
    """

    gamma: float
    gauge: Gauge
    eps: float
    rung_radii: np.ndarray
    rung_counts: np.ndarray
    rung_values: np.ndarray
    value: float
    centers: np.ndarray


@dataclass(frozen=True)
class DensityProfile:
    """Ball-measure to gauge ratios over dyadic radii at sampled points.

    ratios[i, j] = mu(B(center_i, radii[j])) / g(radii[j]), NaN where
    the radius sits below the recorded resolution, outside the gauge
    domain, or where the measured ball is empty.  running_min and
    running_max are rolling extrema of the ratio rows over `window`
    trailing dyadic levels.
    """

    gamma: float
    kind: MeasureKind
    gauge: Gauge
    n_min: int
    n_max: int
    radii: np.ndarray
    point_ids: np.ndarray
    ball_measure: np.ndarray
    ratios: np.ndarray
    running_min: np.ndarray
    running_max: np.ndarray
    window: int
    resolution: float

    @property
    def n_points(self) -> int:
        return self.point_ids.size

    def valid_levels(self) -> np.ndarray:
        """Number of usable ratio entries per sampled point."""
        return np.count_nonzero(np.isfinite(self.ratios), axis=1)


@dataclass(frozen=True)
class GaugeTrend:
    """Per-gauge trend summary inside a dichotomy report."""

    gauge: Gauge
    classification: str
    expected_sign: int
    n_points: int
    n_used: int
    slopes: np.ndarray
    median_slope: float
    frac_positive: float
    frac_below_low: float
    frac_above_high: float
    verdict: str
    agreement: float
    agrees: bool | None


@dataclass(frozen=True)
class DichotomyReport:
    """Trend verdicts for a collection of gauges on one series kind."""

    kind: str
    trends: Tuple[GaugeTrend, ...]
    straddles: bool
    thresholds: Tuple[float, float]


@dataclass(frozen=True)
class ComparisonRecord:
    """Directional density-vs-measure consistency check (report only)."""

    mu_total: float
    doubling_c: float
    n_points: int
    liminf_applicable: bool
    packing_lower: float
    packing_required: float
    packing_holds: bool | None
    tol_packing: float
    limsup_applicable: bool
    hausdorff_value: float
    hausdorff_required: float
    hausdorff_holds: bool | None
    tol_hausdorff: float
    inconclusive: bool


# ---------------------------------------------------------------------------
# shared geometry helpers
# ---------------------------------------------------------------------------

def _check_sample(tree: RealTree, sample) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(sample, dtype=np.int64))
    if idx.size == 0:
        raise DomainError("empty sample")
    if idx.size > _MAX_SAMPLE:
        raise DomainError(f"sample of {idx.size} exceeds the cap {_MAX_SAMPLE}")
    if np.any(idx < 0) or np.any(idx > tree.n):
        raise DomainError("sample indices outside the coding grid")
    return idx


def pairwise_distances(tree: RealTree, sample) -> np.ndarray:
    """Symmetric matrix of tree distances between the sampled indices."""
    idx = _check_sample(tree, sample)
    m = idx.size
    out = np.zeros((m, m))
    for i in range(m - 1):
        row = distance(tree, np.full(m - i - 1, idx[i]), idx[i + 1 :])
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return out


def _height_quantum(tree: RealTree) -> float:
    steps = np.abs(np.diff(tree.coding.values))
    pos = steps[steps > 0]
    return float(pos.min()) if pos.size else tree.coding.delta


def measure_resolution(tree: RealTree, kind: MeasureKind, eps_level: float = 0.0) -> float:
    """Smallest radius at which ball measures are trusted on this grid.

    Ball radii translate into height cuts, so they must clear several
    height quanta; level balls additionally need the strip width to be
    small against the radius, or the strip thickness leaks into the
    ball criterion.
    """
    q = _height_quantum(tree)
    if isinstance(kind, LevelMeasure):
        return _RESOLUTION_FACTOR * max(q, eps_level)
    return _RESOLUTION_FACTOR * q


def measure_total(tree: RealTree, kind: MeasureKind, eps_level: float = 0.0) -> float:
    """Total measure carried by the grid under the given kind."""
    if isinstance(kind, LevelMeasure):
        if eps_level <= 0:
            raise DomainError("level measure needs a positive strip width")
        return occupation_local_time(tree, kind.a, eps_level)
    return tree.n * tree.coding.delta


# ---------------------------------------------------------------------------
# packing estimator
# ---------------------------------------------------------------------------

def packing_premeasure_estimate(
    tree: RealTree,
    point_sample,
    gauge: Gauge,
    gamma: float,
    eps: float,
) -> PackingEstimate:
    """Greedy maximal packing of the sampled set with radii at most eps.

    Repeatedly claims the point with the largest admissible radius (ties
    by sample order); a radius is admissible when the new ball stays
    strictly disjoint from every claimed ball.  Claims stop once the
    best admissible radius drops under 1e-5 * eps, at which point every
    unclaimed point sits within one floor radius of a claimed ball, so
    the claimed balls cover the sample up to that slack and the
    doubled-radius sum is a meaningful companion bracket.  Only the
    pre-measure is estimated; the countable-split infimum of the packing
    outer measure is below any such value and out of estimator reach.
    """
    idx = _check_sample(tree, point_sample)
    if eps <= tree.coding.delta:
        raise DomainError(f"eps must exceed the grid step {tree.coding.delta!r}")
    r0 = gauge_domain_max(gauge)
    if 2.0 * eps >= r0:
        raise DomainError(f"need 2*eps < {r0!r}, the gauge domain end")
    dist = pairwise_distances(tree, idx)
    m = idx.size
    floor = _RADIUS_FLOOR * eps
    avail = np.full(m, float(eps))
    order: list[int] = []
    radii: list[float] = []
    while True:
        i = int(np.argmax(avail))
        r = float(avail[i])
        if r <= floor:
            break
        order.append(i)
        radii.append(r)
        avail = np.minimum(avail, _SHRINK * (dist[:, i] - r))
        avail[i] = -np.inf
    centers = idx[np.asarray(order, dtype=np.int64)]
    rads = np.asarray(radii)
    lower = float(np.sum(gauge_eval(gauge, gamma, rads)))
    upper = float(np.sum(gauge_eval(gauge, gamma, 2.0 * rads)))
    return PackingEstimate(
        gamma=float(gamma),
        gauge=gauge,
        eps=float(eps),
        centers=centers,
        radii=rads,
        lower=lower,
        upper=upper,
        n_sample=m,
    )


# ---------------------------------------------------------------------------
# cover estimator
# ---------------------------------------------------------------------------

def hausdorff_premeasure_estimate(
    tree: RealTree,
    subset_sample,
    gauge: Gauge,
    gamma: float,
    eps: float,
) -> CoverEstimate:
    """Upper bound from nested greedy nets refined down to radius eps/2.

    Net centers are accumulated rung by rung along the ladder
    eps/2 * 2**j, never discarded, so a call at eps/2 reuses every rung
    of the call at eps plus one finer rung; the returned running
    minimum is therefore non-increasing as eps halves.  Ball diameters
    are estimated as twice the net radius, a conservative convention
    for tree balls.
    """
    idx = _check_sample(tree, subset_sample)
    if eps <= tree.coding.delta:
        raise DomainError(f"eps must exceed the grid step {tree.coding.delta!r}")
    r0 = gauge_domain_max(gauge)
    if eps >= r0:
        raise DomainError(f"need eps < {r0!r}, the gauge domain end")
    dist = pairwise_distances(tree, idx)
    m = idx.size
    base = 0.5 * eps
    span = float(dist.max())
    top = 0 if span <= base else int(math.ceil(math.log2(span / base)))
    rungs = base * np.exp2(np.arange(top, -1, -1, dtype=np.float64))
    mindist = np.full(m, np.inf)
    centers: list[int] = []
    counts = np.zeros(rungs.size, dtype=np.int64)
    values = np.full(rungs.size, np.nan)
    best = math.inf
    for j, rung in enumerate(rungs):
        for p in range(m):
            if mindist[p] > rung:
                centers.append(p)
                np.minimum(mindist, dist[:, p], out=mindist)
        counts[j] = len(centers)
        diam = 2.0 * rung
        if diam < r0:
            values[j] = counts[j] * gauge_eval(gauge, gamma, diam)
            best = min(best, float(values[j]))
    if not math.isfinite(best):
        raise DomainError("no ladder rung fits inside the gauge domain")
    return CoverEstimate(
        gamma=float(gamma),
        gauge=gauge,
        eps=float(eps),
        rung_radii=rungs,
        rung_counts=counts,
        rung_values=values,
        value=best,
        centers=idx[np.asarray(centers, dtype=np.int64)],
    )


# ---------------------------------------------------------------------------
# density profiles
# ---------------------------------------------------------------------------

def _ball_measures_at(
    tree: RealTree,
    kind: MeasureKind,
    center: int,
    radii: np.ndarray,
    eps_level: float,
    strip: np.ndarray,
) -> np.ndarray:
    if isinstance(kind, LevelMeasure):
        b = np.sort(branch_min_from(tree, center)[strip])
        cuts = kind.a - 0.5 * radii
        counts = b.size - np.searchsorted(b, cuts, side="left")
        return (tree.coding.delta / eps_level) * counts
    d = distances_from(tree, center)[: tree.n]
    d.sort()
    counts = np.searchsorted(d, radii, side="right")
    return tree.coding.delta * counts


def ball_measure_profile(
    tree: RealTree,
    kind: MeasureKind,
    centers,
    n_min: int,
    n_max: int,
    eps_level: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw ball measures mu(B(center, 2**-n)) with resolution truncation.

    Returns (radii, matrix); matrix rows follow centers, columns the
    dyadic radii, NaN where the radius falls below the trusted grid
    resolution.  Gauge-independent, so one matrix serves any number of
    gauges.
    """
    idx = _check_sample(tree, centers)
    if not 1 <= n_min <= n_max:
        raise DomainError(f"need 1 <= n_min <= n_max, got {n_min!r}..{n_max!r}")
    radii = np.exp2(-np.arange(n_min, n_max + 1, dtype=np.float64))
    if isinstance(kind, LevelMeasure):
        if eps_level <= 0:
            raise DomainError("level profiles need a positive strip width")
        q = _height_quantum(tree)
        h = tree.coding.values[idx]
        if np.any(h <= kind.a - q) or np.any(h > kind.a + eps_level + q):
            raise DomainError("level centers must lie in the sampled strip")
        strip = level_strip(tree, kind.a, eps_level)
    else:
        strip = np.empty(0, dtype=np.int64)
    res = measure_resolution(tree, kind, eps_level)
    out = np.empty((idx.size, radii.size))
    for i, c in enumerate(idx):
        out[i] = _ball_measures_at(tree, kind, int(c), radii, eps_level, strip)
    out[:, radii < res] = np.nan
    return radii, out


def _rolling_extrema(ratios: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = ratios.shape
    rmin = np.full((rows, cols), np.nan)
    rmax = np.full((rows, cols), np.nan)
    for i in range(rows):
        valid = np.flatnonzero(np.isfinite(ratios[i]))
        vals = ratios[i, valid]
        for k in range(valid.size):
            lo = max(0, k - window + 1)
            rmin[i, valid[k]] = vals[lo : k + 1].min()
            rmax[i, valid[k]] = vals[lo : k + 1].max()
    return rmin, rmax


def _profile_from_raw(
    tree_gamma: float,
    kind: MeasureKind,
    gauge: Gauge,
    n_min: int,
    n_max: int,
    radii: np.ndarray,
    point_ids: np.ndarray,
    raw: np.ndarray,
    window: int,
    resolution: float,
) -> DensityProfile:
    r0 = gauge_domain_max(gauge)
    lo = gauge.radii[0] if isinstance(gauge, CustomTable) else 0.0
    gvals = np.full(radii.size, np.nan)
    inside = (radii < r0) & (radii > lo)
    if np.any(inside):
        gvals[inside] = gauge_eval(gauge, tree_gamma, radii[inside])
    ratios = raw / gvals[None, :]
    ratios[~np.isfinite(ratios)] = np.nan
    zero = np.isfinite(ratios) & (ratios == 0.0)
    ratios[zero] = np.nan
    rmin, rmax = _rolling_extrema(ratios, window)
    return DensityProfile(
        gamma=float(tree_gamma),
        kind=kind,
        gauge=gauge,
        n_min=int(n_min),
        n_max=int(n_max),
        radii=radii,
        point_ids=point_ids,
        ball_measure=raw,
        ratios=ratios,
        running_min=rmin,
        running_max=rmax,
        window=int(window),
        resolution=float(resolution),
    )


def density_profile(
    tree: RealTree,
    kind: MeasureKind,
    gauge: Gauge,
    gamma: float,
    n_points: int,
    n_min: int,
    n_max: int,
    eps_level: float,
    rng: np.random.Generator,
    *,
    window: int = 3,
    centers=None,
) -> DensityProfile:
    """Sampled ball-density ratios over the dyadic radius ladder.

    Centers are drawn from the measure itself (strip-uniform for level
    kinds, grid-uniform for mass) unless supplied; rows are annotated
    with rolling extrema over `window` trailing levels.  An empty level
    strip raises through sample_from_level.
    """
    if n_points < 1:
        raise DomainError(f"n_points must be positive, got {n_points!r}")
    if window < 1:
        raise DomainError(f"window must be positive, got {window!r}")
    if centers is None:
        if isinstance(kind, LevelMeasure):
            ids = [sample_from_level(tree, kind.a, eps_level, rng) for _ in range(n_points)]
        else:
            ids = [sample_from_mass(tree, rng) for _ in range(n_points)]
        point_ids = np.asarray(ids, dtype=np.int64)
    else:
        point_ids = _check_sample(tree, centers)
    radii, raw = ball_measure_profile(tree, kind, point_ids, n_min, n_max, eps_level)
    res = measure_resolution(tree, kind, eps_level)
    return _profile_from_raw(
        float(gamma), kind, gauge, n_min, n_max, radii, point_ids, raw, window, res
    )


def merge_profiles(profiles: Sequence[DensityProfile]) -> DensityProfile:
    """Pool sampled points from profiles with identical settings.

    The underlying trees may differ; gauge, measure kind, index, radius
    range and window must match.  Rows keep their per-tree NaN
    truncation and the pooled resolution records the coarsest
    constituent.
    """
    if not profiles:
        raise DomainError("need at least one profile")
    first = profiles[0]
    for p in profiles[1:]:
        same = (
            p.gauge == first.gauge
            and p.kind == first.kind
            and p.gamma == first.gamma
            and p.n_min == first.n_min
            and p.n_max == first.n_max
            and p.window == first.window
        )
        if not same:
            raise DomainError("profiles to merge must share gauge and settings")
    return DensityProfile(
        gamma=first.gamma,
        kind=first.kind,
        gauge=first.gauge,
        n_min=first.n_min,
        n_max=first.n_max,
        radii=first.radii,
        point_ids=np.concatenate([p.point_ids for p in profiles]),
        ball_measure=np.vstack([p.ball_measure for p in profiles]),
        ratios=np.vstack([p.ratios for p in profiles]),
        running_min=np.vstack([p.running_min for p in profiles]),
        running_max=np.vstack([p.running_max for p in profiles]),
        window=first.window,
        resolution=max(p.resolution for p in profiles),
    )


def profile_with_gauge(profile: DensityProfile, gauge: Gauge) -> DensityProfile:
    """Re-derive a profile for another gauge from the same measurements."""
    return _profile_from_raw(
        profile.gamma,
        profile.kind,
        gauge,
        profile.n_min,
        profile.n_max,
        profile.radii,
        profile.point_ids,
        profile.ball_measure,
        profile.window,
        profile.resolution,
    )


def profile_long_rows(profile: DensityProfile) -> list[tuple[int, int, float]]:
    """(point_id, n, ratio) rows in long format for CSV emission."""
    rows = []
    ns = np.arange(profile.n_min, profile.n_max + 1)
    for i, pid in enumerate(profile.point_ids):
        for j, n in enumerate(ns):
            rows.append((int(pid), int(n), float(profile.ratios[i, j])))
    return rows


# ---------------------------------------------------------------------------
# dichotomy report
# ---------------------------------------------------------------------------

def _trend_slopes(profile: DensityProfile, use_max: bool, min_levels: int) -> np.ndarray:
    proxy = profile.running_max if use_max else profile.running_min
    ns = np.arange(profile.n_min, profile.n_max + 1, dtype=np.float64)
    slopes = []
    for i in range(profile.n_points):
        ok = np.isfinite(proxy[i]) & (proxy[i] > 0)
        if np.count_nonzero(ok) < min_levels:
            continue
        slopes.append(np.polyfit(ns[ok], np.log(proxy[i, ok]), 1)[0])
    return np.asarray(slopes)


def _expected_sign(kind: str, classification: str) -> int:
    if classification == CONVERGES:
        return 1 if kind == "PackLevel" else -1
    if classification == DIVERGES:
        return -1 if kind == "PackLevel" else 1
    return 0


def dichotomy_report(
    profiles: Sequence[DensityProfile],
    kind: str,
    *,
    thresholds: Tuple[float, float] = (0.1, 10.0),
    min_levels: int = _MIN_TREND_LEVELS,
) -> DichotomyReport:
    """Finite-window trend verdicts against the dyadic series test.

    For each profile the log of the rolling extremum (minimum for the
    packing kind, maximum for the cover kinds) is regressed against the
    dyadic level at every sampled point with enough resolved levels.
    A rising lower envelope lands on the convergent side of the packing
    series, a rising upper envelope on the divergent side of the cover
    series; the verdict takes the median slope's side and agreement is
    the fraction of points whose slope sign matches the series side.
    """
    if kind not in SERIES_KINDS:
        raise DomainError(f"kind must be one of {SERIES_KINDS}, got {kind!r}")
    if not profiles:
        raise DomainError("need at least one profile")
    use_max = kind != "PackLevel"
    low, high = thresholds
    trends = []
    for prof in profiles:
        if prof.n_max - prof.n_min + 1 < min_levels:
            raise DomainError(
                f"profile spans {prof.n_max - prof.n_min + 1} levels, "
                f"fewer than the required {min_levels}"
            )
        slopes = _trend_slopes(prof, use_max, min_levels)
        if slopes.size == 0:
            raise DomainError(
                "no sampled point resolves enough dyadic levels for a trend"
            )
        classification = series_classify(prof.gauge, prof.gamma, kind)
        expected = _expected_sign(kind, classification)
        median = float(np.median(slopes))
        if kind == "PackLevel":
            verdict = DIVERGENT_SIDE if median < 0 else CONVERGENT_SIDE
        else:
            verdict = DIVERGENT_SIDE if median > 0 else CONVERGENT_SIDE
        proxy = prof.running_max if use_max else prof.running_min
        finite = np.isfinite(proxy)
        per_point_low = np.any(finite & (proxy < low), axis=1)
        per_point_high = np.any(finite & (proxy > high), axis=1)
        measured = finite.any(axis=1)
        n_meas = max(1, int(np.count_nonzero(measured)))
        agreement = float(np.mean((slopes > 0) == (expected > 0))) if expected else math.nan
        agrees: bool | None
        if expected == 0:
            agrees = None
        else:
            agrees = (verdict == CONVERGENT_SIDE) == (classification == CONVERGES)
        trends.append(
            GaugeTrend(
                gauge=prof.gauge,
                classification=classification,
                expected_sign=expected,
                n_points=prof.n_points,
                n_used=slopes.size,
                slopes=slopes,
                median_slope=median,
                frac_positive=float(np.mean(slopes > 0)),
                frac_below_low=float(np.count_nonzero(per_point_low) / n_meas),
                frac_above_high=float(np.count_nonzero(per_point_high) / n_meas),
                verdict=verdict,
                agreement=agreement,
                agrees=agrees,
            )
        )
    sides = {t.classification for t in trends}
    return DichotomyReport(
        kind=kind,
        trends=tuple(trends),
        straddles=(CONVERGES in sides and DIVERGES in sides),
        thresholds=(float(low), float(high)),
    )


def report_summary(report: DichotomyReport) -> dict:
    """JSON-ready summary of a dichotomy report."""
    return {
        "kind": report.kind,
        "straddles": report.straddles,
        "thresholds": list(report.thresholds),
        "gauges": [
            {
                "gauge": format_gauge(t.gauge),
                "classification": t.classification,
                "verdict": t.verdict,
                "agrees": t.agrees,
                "agreement": None if math.isnan(t.agreement) else t.agreement,
                "median_slope": t.median_slope,
                "frac_positive": t.frac_positive,
                "frac_below_low": t.frac_below_low,
                "frac_above_high": t.frac_above_high,
                "n_points": t.n_points,
                "n_used": t.n_used,
            }
            for t in report.trends
        ],
    }


# ---------------------------------------------------------------------------
# density vs measure consistency
# ---------------------------------------------------------------------------

def density_comparison_check(
    packing: PackingEstimate,
    cover: CoverEstimate,
    profile: DensityProfile,
    mu_total: float,
    doubling_c: float,
) -> ComparisonRecord:
    """Directional density-theorem inequalities at estimator level.

    Where every sampled liminf proxy stays at or below 1 the packing
    bracket should reach mu_total / C**2 up to tolerance, and where
    every limsup proxy stays at or below 1 the cover value should reach
    mu_total / C.  Tolerances combine the sampling error of the density
    condition with the gauge cost of one grid quantum of radius, and
    are reported rather than absorbed.  Report-only: nothing is raised
    on failure, and a tiny sample sets the inconclusive flag.
    """
    if doubling_c < 1.0:
        raise DomainError(f"doubling constant must be >= 1, got {doubling_c!r}")
    pts = profile.n_points
    finite_min = np.isfinite(profile.running_min)
    finite_max = np.isfinite(profile.running_max)
    liminf_ok = bool(
        finite_min.any()
        and np.all(profile.running_min[finite_min] <= 1.0)
        and finite_min.any(axis=1).all()
    )
    limsup_ok = bool(
        finite_max.any()
        and np.all(profile.running_max[finite_max] <= 1.0)
        and finite_max.any(axis=1).all()
    )
    quantum = profile.resolution / _RESOLUTION_FACTOR
    sample_tol = 2.0 * mu_total / math.sqrt(max(1, pts))
    gq = 0.0
    if packing.radii.size and 0.0 < quantum < float(packing.radii.min()):
        try:
            gq = gauge_eval(packing.gauge, packing.gamma, quantum)
        except DomainError:
            gq = 0.0
    tol_pack = sample_tol + packing.radii.size * gq
    tol_haus = sample_tol + float(cover.rung_counts[-1]) * gq
    pack_req = mu_total / doubling_c**2 - tol_pack
    haus_req = mu_total / doubling_c - tol_haus
    inconclusive = pts < 4
    return ComparisonRecord(
        mu_total=float(mu_total),
        doubling_c=float(doubling_c),
        n_points=pts,
        liminf_applicable=liminf_ok,
        packing_lower=packing.lower,
        packing_required=pack_req,
        packing_holds=(packing.lower >= pack_req) if liminf_ok else None,
        tol_packing=tol_pack,
        limsup_applicable=limsup_ok,
        hausdorff_value=cover.value,
        hausdorff_required=haus_req,
        hausdorff_holds=(cover.value >= haus_req) if limsup_ok else None,
        tol_hausdorff=tol_haus,
        inconclusive=inconclusive,
    )
