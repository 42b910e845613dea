"""Brownian tree codings via conditioned random-walk excursions.

Lattice calibration: a walk step of +-sqrt(2*delta) per time delta makes
the harvested excursion measure match the continuum normalization: with
s = sqrt(2/n) the measure assigning each walk excursion weight 1/s
satisfies  N(sup >= k*s) = 1/(k*s)  exactly on lattice levels and gives
unit level local-time mean.  Survival conditioning is therefore exact at
lattice heights, which the tests exploit.
"""

from __future__ import annotations

import math

import numpy as np

from ..analytic import DomainError
from ..tree import CodingFunction
from .streams import make_rng

_CHUNK = 1 << 20
_OPEN_LIMIT = 1 << 26


class BudgetError(RuntimeError):
    """Raised when a rejection sampler exhausts its step budget."""


def step_scale(n: int) -> float:
    """Lattice height unit for resolution n (time step 1/n)."""
    return math.sqrt(2.0 / n)


def _dyck_interior(m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform nonnegative lattice path of m steps from 0 to 0 (m even).

    Cycle lemma: of the m+1 rotations of a uniform arrangement of m/2
    up-steps and m/2+1 down-steps, exactly one stays nonnegative until
    its final step; rotating just past the first minimum selects it.
    """
    half = m // 2
    steps = np.concatenate(
        [np.ones(half, dtype=np.int64), -np.ones(half + 1, dtype=np.int64)]
    )
    rng.shuffle(steps)
    walk = np.cumsum(steps)
    pivot = int(np.argmin(walk))
    rotated = np.concatenate([steps[pivot + 1 :], steps[: pivot + 1]])
    heights = np.concatenate([[0], np.cumsum(rotated[:-1])])
    return heights


def brownian_excursion(
    n: int,
    seed: int | None = None,
    min_height: float = 0.0,
    *,
    rng: np.random.Generator | None = None,
    height_cap: float | None = None,
    max_steps: int = 50_000_000,
) -> CodingFunction:
    """One excursion of the quadratic-mechanism height process.

    min_height = 0 returns the unit-duration excursion on n lattice
    steps (n even).  min_height = b > 0 returns an excursion of the
    excursion measure conditioned on sup >= b, harvested from a
    reflected walk at resolution n steps per unit time; its duration is
    random.  height_cap additionally conditions on sup < height_cap,
    which keeps the rejection budget finite for tall targets.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    if rng is None:
        rng = make_rng(0 if seed is None else seed)
    if min_height < 0.0:
        raise DomainError("min_height must be nonnegative")
    if min_height == 0.0:
        if n % 2 != 0:
            raise DomainError("n must be even for the fixed-duration excursion")
        interior = _dyck_interior(n - 2, rng) + 1
        lattice = np.concatenate([[0], interior, [0]])
        values = step_scale(n) * lattice
        return CodingFunction(delta=1.0 / n, values=values, gamma=2.0, seed=seed or 0)
    heights = excursion_harvest(
        n, min_height, 1, rng, height_cap=height_cap, max_steps=max_steps
    )[0]
    return CodingFunction(
        delta=1.0 / n,
        values=step_scale(n) * heights,
        gamma=2.0,
        seed=seed or 0,
    )


def excursion_harvest(
    n: int,
    min_height: float,
    count: int,
    rng: np.random.Generator,
    *,
    height_cap: float | None = None,
    max_steps: int = 500_000_000,
) -> list[np.ndarray]:
    """Harvest `count` walk excursions conditioned on sup >= min_height.

    Returns lattice height arrays (int64, zero endpoints); multiply by
    step_scale(n) for continuum heights.  With height_cap set, the
    conditioning is min_height <= sup < height_cap; open excursions that
    exceed the cap are discarded on the fly, which bounds memory.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    if min_height <= 0.0:
        raise DomainError("min_height must be positive for harvesting")
    if count < 1:
        raise DomainError("count must be positive")
    s = step_scale(n)
    k_min = max(1, math.ceil(min_height / s - 1e-9))
    k_cap = None
    if height_cap is not None:
        if height_cap <= min_height:
            raise DomainError("height_cap must exceed min_height")
        k_cap = math.ceil(height_cap / s - 1e-9)
    collected: list[np.ndarray] = []
    open_parts: list[np.ndarray] = [np.zeros(1, dtype=np.int64)]
    open_len = 1
    open_max = 0
    last_x = np.int64(0)
    last_min = np.int64(0)
    used = 0
    while len(collected) < count:
        if used >= max_steps:
            raise BudgetError(
                f"step budget {max_steps} exhausted after {len(collected)} "
                f"of {count} excursions (min_height={min_height})"
            )
        steps = rng.integers(0, 2, size=_CHUNK, dtype=np.int64) * 2 - 1
        used += _CHUNK
        pos = 0
        while pos < _CHUNK and len(collected) < count:
            x = last_x + np.cumsum(steps[pos:])
            runmin = np.minimum.accumulate(np.minimum(x, last_min))
            h = x - runmin
            reset = False
            if k_cap is not None:
                over = h >= k_cap
                if over.any():
                    # The walk's current excursion will be rejected anyway,
                    # so abort it here and restart from zero.  This is what
                    # keeps the expected cost per excursion finite: excursion
                    # durations have infinite mean without the cutoff.
                    cut = int(np.argmax(over))
                    h = h[:cut]
                    reset = True
            if h.size:
                zeros = np.flatnonzero(h == 0)
                if zeros.size == 0:
                    open_max = max(open_max, int(h.max()))
                    open_parts.append(h.copy())
                    open_len += h.size
                    if open_len > _OPEN_LIMIT:
                        raise BudgetError(
                            "open excursion exceeds retention limit; "
                            "set height_cap to bound excursion length"
                        )
                else:
                    first = zeros[0]
                    open_max = max(open_max, int(h[: first + 1].max(initial=0)))
                    if open_max >= k_min:
                        open_parts.append(h[: first + 1].copy())
                        collected.append(np.concatenate(open_parts))
                    if zeros.size > 1 and len(collected) < count:
                        # reduceat over all zeros: entry i is the max over
                        # [z_i, z_{i+1}); the last entry covers the open
                        # tail and is dropped.
                        maxima = np.maximum.reduceat(h, zeros)[:-1]
                        for i in np.flatnonzero(maxima >= k_min):
                            collected.append(h[zeros[i] : zeros[i + 1] + 1].copy())
                            if len(collected) >= count:
                                break
                    tail = h[zeros[-1] :]
                    open_parts = [tail.copy()]
                    open_len = tail.size
                    open_max = int(tail.max(initial=0))
            if reset:
                open_parts = [np.zeros(1, dtype=np.int64)]
                open_len = 1
                open_max = 0
                last_x = np.int64(0)
                last_min = np.int64(0)
                pos += h.size + 1
            else:
                last_x = x[-1]
                last_min = runmin[-1]
                pos = _CHUNK
    return collected[:count]
