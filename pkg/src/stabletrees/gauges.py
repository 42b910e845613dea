"""Gauge-function families, doubling checks, and dyadic series tests.

A gauge g: (0, r0) -> (0, inf) calibrates fractal measure constructions.
This module evaluates the built-in families, measures their doubling
constants on geometric grids, and sums or classifies the three dyadic
series that decide packing/Hausdorff finiteness for level sets and the
mass measure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .analytic import DomainError

LOG2 = math.log(2.0)

SERIES_KINDS = ("PackLevel", "HausLevel", "HausMass")

CONVERGES = "Converges"
DIVERGES = "Diverges"
UNKNOWN = "Unknown"

#: sentinel returned by doubling_constant when the ratio exceeds the cap
NOT_DOUBLING = math.inf


@dataclass(frozen=True)
class PureExponent:
    """g(r) = r**q."""

    q: float


@dataclass(frozen=True)
class LevelCritical:
    """g(r) = r**(1/(gamma-1)) / ((log(1/r) ... log_p(1/r))**(1/gamma) * log_{p+1}(1/r)**theta)."""

    p: int
    theta: float

    def __post_init__(self):
        if self.p < 1:
            raise DomainError(f"p must be a positive integer, got {self.p!r}")


@dataclass(frozen=True)
class MassPacking:
    """g(r) = r**(gamma/(gamma-1)) / (loglog(1/r))**(1/(gamma-1))."""


@dataclass(frozen=True)
class MassCritical:
    """g(r) = r**(gamma/(gamma-1)) * (log(1/r))**(1/(gamma-1)) * (loglog(1/r))**u."""

    u: float


@dataclass(frozen=True)
class LevelCritical2:
    """g(r) = r**(1/(gamma-1)) * (log(1/r))**(1/(gamma-1)) * (loglog(1/r))**u."""

    u: float


@dataclass(frozen=True)
class CustomTable:
    """Tabulated gauge; evaluation interpolates log-linearly between knots."""

    radii: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.size < 2 or r.size != v.size:
            raise DomainError("table needs at least two (r, g) pairs of equal length")
        if not (np.all(np.diff(r) > 0) and r[0] > 0):
            raise DomainError("table radii must be positive and strictly increasing")
        if not (np.all(v > 0) and np.all(np.diff(v) >= 0)):
            raise DomainError("table values must be positive and non-decreasing")


Gauge = Union[PureExponent, LevelCritical, MassPacking, MassCritical, LevelCritical2, CustomTable]


def _check_gamma(gamma: float) -> None:
    if not (1.0 < gamma <= 2.0):
        raise DomainError(f"gamma must lie in (1, 2], got {gamma!r}")


def _iter_exp(k: int) -> float:
    """exp applied k-1 times to 1: 1, e, e**e, ..."""
    t = 1.0
    for _ in range(k - 1):
        t = math.exp(t)
    return t


def gauge_domain_max(g: Gauge) -> float:
    """Right end r0 of the gauge's domain (0, r0).

    For the iterated-log families this is the radius below which every
    iterated logarithm in the formula stays positive.
    """
    if isinstance(g, PureExponent):
        return 1.0
    if isinstance(g, LevelCritical):
        # need log_{p+1}(1/r) > 0
        return math.exp(-_iter_exp(g.p))
    if isinstance(g, (MassPacking, MassCritical, LevelCritical2)):
        # need loglog(1/r) > 0
        return math.exp(-1.0)
    if isinstance(g, CustomTable):
        return g.radii[-1]
    raise TypeError(f"not a gauge: {g!r}")


def _eval_array(g: Gauge, gamma: float, r: np.ndarray) -> np.ndarray:
    r0 = gauge_domain_max(g)
    lo = g.radii[0] if isinstance(g, CustomTable) else 0.0
    if np.any(r <= lo) or np.any(r >= r0):
        raise DomainError(f"radius outside gauge domain ({lo!r}, {r0!r})")
    if isinstance(g, PureExponent):
        return r**g.q
    b = 1.0 / (gamma - 1.0)
    if isinstance(g, LevelCritical):
        log_j = np.log(1.0 / r)
        prod = log_j.copy()
        for _ in range(g.p - 1):
            log_j = np.log(log_j)
            prod *= log_j
        last = np.log(log_j)
        return r**b / (prod ** (1.0 / gamma) * last**g.theta)
    l1 = np.log(1.0 / r)
    l2 = np.log(l1)
    if isinstance(g, MassPacking):
        return r ** (gamma * b) / l2**b
    if isinstance(g, MassCritical):
        return r ** (gamma * b) * l1**b * l2**g.u
    if isinstance(g, LevelCritical2):
        return r**b * l1**b * l2**g.u
    if isinstance(g, CustomTable):
        xs = np.log(np.asarray(g.radii))
        ys = np.log(np.asarray(g.values))
        return np.exp(np.interp(np.log(r), xs, ys))
    raise TypeError(f"not a gauge: {g!r}")


def gauge_eval(g: Gauge, gamma: float, r) -> float:
    """Evaluate the gauge at radius r; raises DomainError outside (0, r0)."""
    _check_gamma(gamma)
    out = _eval_array(g, gamma, np.atleast_1d(np.asarray(r, dtype=float)))
    return float(out[0]) if np.isscalar(r) or np.asarray(r).ndim == 0 else out


def gauge_profile(g: Gauge, gamma: float, r_min: float, r_max: float, points: int = 400):
    """(radii, values) on a geometric grid, for monotonicity checks and plots."""
    _check_gamma(gamma)
    if not 0.0 < r_min < r_max:
        raise DomainError("need 0 < r_min < r_max")
    radii = np.geomspace(r_min, r_max, points)
    return radii, _eval_array(g, gamma, radii)


def doubling_constant(
    g: Gauge,
    gamma: float,
    r_min: float,
    r_max: float,
    points: int = 1024,
    cap: float = 1e6,
) -> float:
    """Max of g(2r)/g(r) over a geometric grid; NOT_DOUBLING past the cap."""
    _check_gamma(gamma)
    if points < 1000:
        raise DomainError("need at least 1000 grid points")
    r0 = gauge_domain_max(g)
    if not 0.0 < r_min < r_max <= 0.5 * r0:
        raise DomainError(f"need 0 < r_min < r_max <= r0/2 with r0 = {r0!r}")
    radii = np.geomspace(r_min, r_max, points)
    ratio = _eval_array(g, gamma, 2.0 * radii) / _eval_array(g, gamma, radii)
    worst = float(np.max(ratio))
    return NOT_DOUBLING if worst > cap else worst


# ---------------------------------------------------------------------------
# dyadic series
# ---------------------------------------------------------------------------

def series_start(g: Gauge) -> int:
    """Smallest n with 2**-n inside the gauge domain."""
    r0 = gauge_domain_max(g)
    n = max(1, int(math.floor(math.log2(1.0 / r0))) + 1)
    while 2.0**-n >= r0:
        n += 1
    return n


def _log_g_dyadic(g: Gauge, gamma: float, n: np.ndarray) -> np.ndarray:
    """log g(2**-n) in closed form, stable for n far beyond float range of 2**-n."""
    b = 1.0 / (gamma - 1.0)
    l1 = n * LOG2
    if isinstance(g, PureExponent):
        return -g.q * l1
    if isinstance(g, LevelCritical):
        log_j = l1
        acc = np.log(log_j)
        for _ in range(g.p - 1):
            log_j = np.log(log_j)
            acc = acc + np.log(log_j)
        last = np.log(log_j)
        return -b * l1 - acc / gamma - g.theta * np.log(last)
    l2 = np.log(l1)
    if isinstance(g, MassPacking):
        return -gamma * b * l1 - b * np.log(l2)
    if isinstance(g, MassCritical):
        return -gamma * b * l1 + b * l2 + g.u * np.log(l2)
    if isinstance(g, LevelCritical2):
        return -b * l1 + b * l2 + g.u * np.log(l2)
    if isinstance(g, CustomTable):
        r = 2.0 ** (-n.astype(float))
        return np.log(_eval_array(g, gamma, r))
    raise TypeError(f"not a gauge: {g!r}")


def _log_terms(g: Gauge, gamma: float, kind: str, n: np.ndarray) -> np.ndarray:
    if kind not in SERIES_KINDS:
        raise DomainError(f"kind must be one of {SERIES_KINDS}, got {kind!r}")
    lg = _log_g_dyadic(g, gamma, n)
    l1 = n * LOG2
    if kind == "PackLevel":
        return gamma * (l1 / (gamma - 1.0) + lg)
    if kind == "HausLevel":
        return -l1 - (gamma - 1.0) * lg
    return -gamma * l1 - (gamma - 1.0) * lg


def series_partial(g: Gauge, gamma: float, kind: str, n_terms: int) -> np.ndarray:
    """First n_terms partial sums, starting at the first dyadic n in domain."""
    _check_gamma(gamma)
    if n_terms < 1:
        raise DomainError("n_terms must be >= 1")
    n0 = series_start(g)
    n = np.arange(n0, n0 + n_terms)
    return np.cumsum(np.exp(_log_terms(g, gamma, kind, n)))


def series_classify(g: Gauge, gamma: float, kind: str) -> str:
    """Convergence verdict for the selected dyadic series.

    PureExponent and the PackLevel rule for LevelCritical are decided in
    closed form; tabulated gauges are never guessed at; everything else
    goes through a numeric slope fit that may return Unknown.
    """
    _check_gamma(gamma)
    if kind not in SERIES_KINDS:
        raise DomainError(f"kind must be one of {SERIES_KINDS}, got {kind!r}")
    if isinstance(g, CustomTable):
        return UNKNOWN
    b = 1.0 / (gamma - 1.0)
    if isinstance(g, PureExponent):
        # term = 2**(n*e) with e from the exact exponent algebra
        if kind == "PackLevel":
            e = gamma * (b - g.q)
        elif kind == "HausLevel":
            e = g.q * (gamma - 1.0) - 1.0
        else:
            e = g.q * (gamma - 1.0) - gamma
        return CONVERGES if e < 0.0 else DIVERGES
    if isinstance(g, LevelCritical) and kind == "PackLevel":
        return CONVERGES if gamma * g.theta > 1.0 else DIVERGES
    return _classify_numeric(g, gamma, kind)


def _classify_numeric(g: Gauge, gamma: float, kind: str) -> str:
    """Slope heuristic: geometric decay/growth first, then a Bertrand fit.

    Models log(term) ~ c + a*n - alpha*log(L1) - s*log(L2) with L1 = n log 2;
    the fit is exact for the built-in families, so tight margins are safe.
    """
    n0 = max(series_start(g), 4)
    n = np.unique(np.round(np.geomspace(n0, 2.0**20, 96)).astype(np.int64))
    lt = _log_terms(g, gamma, kind, n)
    # change of log(term) over the last doubling: polynomial-in-n tails move
    # by alpha*log(2), geometric ones by thousands
    drop = float(
        _log_terms(g, gamma, kind, np.array([2**20], dtype=np.int64))[0]
        - _log_terms(g, gamma, kind, np.array([2**19], dtype=np.int64))[0]
    )
    if drop < -50.0:
        return CONVERGES
    if drop > 50.0:
        return DIVERGES
    sel = n >= 256
    l1 = n[sel] * LOG2
    design = np.column_stack([np.ones(sel.sum()), np.log(l1), np.log(np.log(l1))])
    coef, *_ = np.linalg.lstsq(design, lt[sel], rcond=None)
    alpha, s = -coef[1], -coef[2]
    if alpha > 1.05:
        return CONVERGES
    if alpha < 0.95:
        return DIVERGES
    if s > 1.2:
        return CONVERGES
    if s < 0.8:
        return DIVERGES
    return UNKNOWN


# ---------------------------------------------------------------------------
# config serialization
# ---------------------------------------------------------------------------

_GAUGE_RE = re.compile(r"^\s*([A-Za-z0-9]+)\s*(?:\(\s*(.*?)\s*\))?\s*$")


def format_gauge(g: Gauge) -> str:
    if isinstance(g, PureExponent):
        return f"PureExponent(q={g.q!r})"
    if isinstance(g, LevelCritical):
        return f"LevelCritical(p={g.p}, theta={g.theta!r})"
    if isinstance(g, MassPacking):
        return "MassPacking"
    if isinstance(g, MassCritical):
        return f"MassCritical(u={g.u!r})"
    if isinstance(g, LevelCritical2):
        return f"LevelCritical2(u={g.u!r})"
    if isinstance(g, CustomTable):
        pairs = ";".join(f"{r!r}:{v!r}" for r, v in zip(g.radii, g.values))
        return f"CustomTable({pairs})"
    raise TypeError(f"not a gauge: {g!r}")


def parse_gauge(text: str) -> Gauge:
    """Inverse of format_gauge; accepts keyword or bare positional values."""
    m = _GAUGE_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse gauge descriptor {text!r}")
    name, args = m.group(1), m.group(2)

    def kwargs():
        out = {}
        for part in (args or "").split(","):
            part = part.strip()
            if not part:
                continue
            if "=" in part:
                k, v = part.split("=", 1)
                out[k.strip()] = v.strip()
            else:
                out.setdefault("_pos", []).append(part)
        return out

    kw = kwargs()
    pos = kw.pop("_pos", [])
    try:
        if name == "PureExponent":
            return PureExponent(q=float(kw.get("q", pos[0] if pos else None)))
        if name == "LevelCritical":
            p = kw.get("p", pos[0] if pos else None)
            theta = kw.get("theta", pos[1] if len(pos) > 1 else None)
            return LevelCritical(p=int(p), theta=float(theta))
        if name == "MassPacking":
            return MassPacking()
        if name == "MassCritical":
            return MassCritical(u=float(kw.get("u", pos[0] if pos else None)))
        if name == "LevelCritical2":
            return LevelCritical2(u=float(kw.get("u", pos[0] if pos else None)))
        if name == "CustomTable":
            pairs = [p.split(":") for p in (args or "").split(";") if p]
            radii = tuple(float(a) for a, _ in pairs)
            values = tuple(float(b) for _, b in pairs)
            return CustomTable(radii=radii, values=values)
    except (TypeError, ValueError, IndexError) as exc:
        raise DomainError(f"bad gauge arguments in {text!r}: {exc}") from exc
    raise DomainError(f"unknown gauge family {name!r}")
