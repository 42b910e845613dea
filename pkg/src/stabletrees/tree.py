"""Discretized coding functions and the real trees they span.

A coding function is a nonnegative excursion h sampled on a uniform grid
with step delta. The tree metric is d(s,t) = h[s] + h[t] - 2*min h over
[s, t]; grid indices stand in for points of the quotient tree. The mass
measure puts weight delta on each of the n indices 0..n-1, so the total
mass equals the lifetime n*delta. Range minima come from a blocked sparse
table: O(n) extra memory, O(1) queries, vectorized over query arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .analytic import DomainError, height_tail

_MAGIC = b"CFN1"
_BLOCK = 64
_LOG_BLOCK = 6


class EmptyLevel(DomainError):
    """Raised when a level strip contains no grid points."""


@dataclass(eq=False)
class CodingFunction:
    """Grid excursion with generation metadata.

    delta is the time step, values the n+1 heights h[0..n] with
    h[0] = h[n] = 0. gamma and seed record how the excursion was produced
    and ride along through serialization.
    """

    delta: float
    values: np.ndarray
    gamma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.delta <= 0:
            raise DomainError(f"delta must be > 0, got {self.delta!r}")
        if self.values.ndim != 1 or self.values.size < 2:
            raise DomainError("values must be a 1-d array of at least 2 heights")
        if self.values[0] != 0.0 or self.values[-1] != 0.0:
            raise DomainError("coding function must start and end at 0")
        if np.any(self.values < 0.0):
            raise DomainError("coding function must be nonnegative")
        if not np.any(self.values > 0.0):
            raise DomainError("coding function must not be identically 0")

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def lifetime(self) -> float:
        return self.n * self.delta


def save_coding(coding: CodingFunction, path) -> None:
    """Binary layout: magic, n (u64), delta/gamma (f64), seed (u64), values."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QddQ", coding.n, coding.delta, coding.gamma, coding.seed))
        fh.write(coding.values.astype("<f8", copy=False).tobytes())


def load_coding(path) -> CodingFunction:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DomainError(f"{path!r} is not a coding-function file")
        n, delta, gamma, seed = struct.unpack("<QddQ", fh.read(32))
        values = np.frombuffer(fh.read(8 * (n + 1)), dtype="<f8")
        if values.size != n + 1:
            raise DomainError(f"{path!r} is truncated")
    return CodingFunction(delta=delta, values=values.copy(), gamma=gamma, seed=int(seed))


class _BlockRMQ:
    """Blocked sparse table over the height array.

    Per 64-wide block: running minima from the left edge (prefix) and to
    the right edge (suffix); across blocks: a dyadic sparse table over
    block minima. Cross-block queries combine three O(1) lookups;
    same-block queries gather the at most 64 covered cells.
    """

    def __init__(self, values: np.ndarray):
        self.values = values
        m = values.size
        nb = (m + _BLOCK - 1) // _BLOCK
        padded = np.full(nb * _BLOCK, np.inf)
        padded[:m] = values
        blocks = padded.reshape(nb, _BLOCK)
        self.prefix = np.minimum.accumulate(blocks, axis=1).ravel()[:m]
        self.suffix = np.minimum.accumulate(blocks[:, ::-1], axis=1)[:, ::-1].ravel()[:m]
        block_min = blocks.min(axis=1)
        levels = max(1, int(nb).bit_length())
        table = np.full((levels, nb), np.inf)
        table[0] = block_min
        for k in range(1, levels):
            span = 1 << (k - 1)
            table[k, : nb - 2 * span + 1] = np.minimum(
                table[k - 1, : nb - 2 * span + 1], table[k - 1, span : nb - span + 1]
            )
        self.table = table
        self.logtab = np.zeros(nb + 1, dtype=np.int64)
        for j in range(2, nb + 1):
            self.logtab[j] = self.logtab[j >> 1] + 1

    def range_min(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Min of values over inclusive [lo, hi], elementwise; lo <= hi."""
        v = self.values
        bs = lo >> _LOG_BLOCK
        bt = hi >> _LOG_BLOCK
        out = np.empty(lo.shape, dtype=np.float64)
        same = bs == bt
        if np.any(same):
            ls = lo[same]
            width = hi[same] - ls
            offs = np.arange(_BLOCK)
            idx = np.minimum(ls[:, None] + offs[None, :], v.size - 1)
            vals = v[idx]
            vals[offs[None, :] > width[:, None]] = np.inf
            out[same] = vals.min(axis=1)
        cross = ~same
        if np.any(cross):
            lc = lo[cross]
            hc = hi[cross]
            best = np.minimum(self.suffix[lc], self.prefix[hc])
            j0 = (lc >> _LOG_BLOCK) + 1
            j1 = (hc >> _LOG_BLOCK) - 1
            mid = j1 >= j0
            if np.any(mid):
                a = j0[mid]
                b = j1[mid]
                k = self.logtab[b - a + 1]
                span = (np.int64(1) << k) - 1
                best[mid] = np.minimum(
                    best[mid],
                    np.minimum(self.table[k, a], self.table[k, b - span]),
                )
            out[cross] = best
        return out


@dataclass(eq=False)
class RealTree:
    """Immutable queryable tree; build once, query concurrently."""

    coding: CodingFunction
    rmq: _BlockRMQ = field(repr=False)

    @property
    def n(self) -> int:
        return self.coding.n


def build_tree(coding: CodingFunction, max_points: int = 2**26) -> RealTree:
    """Index a coding function for O(1) branch-point queries."""
    if coding.values.size > max_points:
        raise DomainError(
            f"{coding.values.size} grid points exceed the cap {max_points}"
        )
    return RealTree(coding=coding, rmq=_BlockRMQ(coding.values))


def _as_index(tree: RealTree, s) -> np.ndarray:
    arr = np.asarray(s)
    if arr.dtype.kind not in "iu":
        raise DomainError(f"indices must be integers, got dtype {arr.dtype}")
    if np.any(arr < 0) or np.any(arr > tree.n):
        raise DomainError(f"index out of range 0..{tree.n}")
    return arr.astype(np.int64, copy=False)


def branch_min(tree: RealTree, s, t):
    """Exact min of the coding function over the inclusive index interval."""
    si = _as_index(tree, s)
    ti = _as_index(tree, t)
    lo = np.minimum(si, ti)
    hi = np.maximum(si, ti)
    out = tree.rmq.range_min(np.atleast_1d(lo), np.atleast_1d(hi))
    return float(out[0]) if lo.ndim == 0 else out


def distance(tree: RealTree, s, t):
    """Tree pseudometric h[s] + h[t] - 2 * branch_min(s, t)."""
    si = _as_index(tree, s)
    ti = _as_index(tree, t)
    v = tree.coding.values
    d = v[si] + v[ti] - 2.0 * branch_min(tree, si, ti)
    return float(d) if np.ndim(d) == 0 else d


def distances_from(tree: RealTree, center: int) -> np.ndarray:
    """Distances from one index to every grid index, by cumulative minima."""
    c = int(_as_index(tree, center))
    v = tree.coding.values
    left = np.minimum.accumulate(v[: c + 1][::-1])[::-1]
    right = np.minimum.accumulate(v[c:])
    b = np.concatenate([left[:-1], right])
    return v[c] + v - 2.0 * b


def branch_min_from(tree: RealTree, center: int) -> np.ndarray:
    """branch_min(center, i) for every grid index i, by cumulative minima."""
    c = int(_as_index(tree, center))
    v = tree.coding.values
    left = np.minimum.accumulate(v[: c + 1][::-1])[::-1]
    right = np.minimum.accumulate(v[c:])
    return np.concatenate([left[:-1], right])


def four_point_residual(tree: RealTree, s1, s2, s3, s4):
    """d(s1,s2) + d(s3,s4) - max of the other two pairings; <= 0 on a tree."""
    d12 = distance(tree, s1, s2)
    d34 = distance(tree, s3, s4)
    d13 = distance(tree, s1, s3)
    d24 = distance(tree, s2, s4)
    d14 = distance(tree, s1, s4)
    d23 = distance(tree, s2, s3)
    return d12 + d34 - np.maximum(d13 + d24, d14 + d23)


def tree_height(tree: RealTree) -> float:
    return float(tree.coding.values.max())


def tree_diameter_upper(tree: RealTree) -> float:
    """Cheap bound max d <= 2 * height, tight when two deep arms exist."""
    return 2.0 * tree_height(tree)


def mass_ball(tree: RealTree, center: int, r: float) -> float:
    """Mass of the closed ball: delta per grid index 0..n-1 within distance r."""
    if r < 0:
        raise DomainError("r must be >= 0")
    d = distances_from(tree, center)[: tree.n]
    return tree.coding.delta * int(np.count_nonzero(d <= r))


def mass_balls(tree: RealTree, center: int, radii) -> np.ndarray:
    """mass_ball at many radii via one sorted sweep of the distances."""
    rs = np.asarray(radii, dtype=float)
    if np.any(rs < 0):
        raise DomainError("radii must be >= 0")
    d = np.sort(distances_from(tree, center)[: tree.n])
    counts = np.searchsorted(d, rs, side="right")
    return tree.coding.delta * counts


def level_count(tree: RealTree, a: float, eps: float):
    """Excursions of h above a that reach a + eps, and the local-time estimate.

    The estimate rescales the count by the excursion-measure height tail:
    count * ((gamma-1) * eps)**(1/(gamma-1)).
    """
    if a <= 0:
        raise DomainError("a must be > 0")
    if eps <= 0:
        raise DomainError("eps must be > 0")
    v = tree.coding.values
    mask = v > a
    if not mask.any():
        return 0, 0.0
    edges = np.diff(mask.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    if mask[0]:
        starts = np.concatenate([[0], starts])
    # reduceat segments run start-to-start; the sub-a gaps they absorb
    # cannot raise a segment max past a + eps, so peaks are run maxima
    peaks = np.maximum.reduceat(v, starts)
    count = int(np.count_nonzero(peaks >= a + eps))
    gamma = tree.coding.gamma
    return count, count / height_tail(gamma, eps)


def occupation_local_time(tree: RealTree, a: float, eps: float) -> float:
    """(delta/eps) * #{i < n : a < h[i] <= a + eps}."""
    if eps <= 0:
        raise DomainError("eps must be > 0")
    v = tree.coding.values[: tree.n]
    c = int(np.count_nonzero((v > a) & (v <= a + eps)))
    return tree.coding.delta / eps * c


def level_strip(tree: RealTree, a: float, eps: float) -> np.ndarray:
    """Grid indices i < n with a < h[i] <= a + eps."""
    if eps <= 0:
        raise DomainError("eps must be > 0")
    v = tree.coding.values[: tree.n]
    return np.flatnonzero((v > a) & (v <= a + eps))


def level_ball_local_time(
    tree: RealTree, a: float, center: int, r: float, eps: float, tol: float | None = None
) -> float:
    """Occupation estimate restricted to the ball: strip indices whose
    branch point with center sits at height >= a - r/2.
    """
    if r <= 0:
        raise DomainError("r must be > 0")
    if eps <= 0:
        raise DomainError("eps must be > 0")
    c = int(_as_index(tree, center))
    if tol is None:
        tol = max(tree.coding.delta, eps)
    if abs(float(tree.coding.values[c]) - a) > tol:
        raise DomainError("center is not approximately on the level")
    strip = level_strip(tree, a, eps)
    if strip.size == 0:
        return 0.0
    b = branch_min_from(tree, c)[strip]
    return tree.coding.delta / eps * int(np.count_nonzero(b >= a - 0.5 * r))


def sample_from_mass(tree: RealTree, rng: np.random.Generator) -> int:
    """Uniform grid index: a mass-measure draw up to discretization."""
    return int(rng.integers(0, tree.n))


def sample_from_level(tree: RealTree, a: float, eps: float, rng: np.random.Generator) -> int:
    """Uniform index of the occupation strip (a, a + eps].

    Weighting strip points equally biases against thin excursions by O(eps);
    halve eps to bound it empirically.
    """
    strip = level_strip(tree, a, eps)
    if strip.size == 0:
        raise EmptyLevel(f"no grid heights in ({a}, {a + eps}]")
    return int(strip[rng.integers(0, strip.size)])


def is_leaf(tree: RealTree, t: int) -> bool:
    """Strict local max after merging equal-value plateaus."""
    ti = int(t)
    if not 0 < ti < tree.n:
        raise DomainError("leaf test needs an interior index")
    v = tree.coding.values
    lo = ti
    while lo > 0 and v[lo - 1] == v[ti]:
        lo -= 1
    hi = ti
    while hi < tree.n and v[hi + 1] == v[ti]:
        hi += 1
    if lo == 0 or hi == tree.n:
        return False
    return bool(v[lo - 1] < v[ti] and v[hi + 1] < v[ti])
