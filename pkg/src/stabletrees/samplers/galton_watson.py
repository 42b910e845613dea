"""Critical Galton-Watson trees with a stable offspring law.

The offspring generating function is f(s) = s + (1-s)**gamma / gamma.
Its coefficients are alternating binomial series terms, which gives a
closed-form tail and a one-line recurrence for the probability table.
Trees conditioned to be tall, with depth-first height codings rescaled
so that level occupation approximates the continuum local time, are the
gamma < 2 workhorse everywhere a coding function is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numba import njit

from ..analytic import DomainError
from ..tree import CodingFunction
from .brownian import BudgetError
from .streams import make_rng

_TABLE_QUANTILE = 1e-12
_TABLE_CAP = 1 << 20
_BUF = 1 << 16
_STACK0 = 1 << 12

__all__ = [
    "OffspringLaw",
    "gw_offspring",
    "gw_tree_coding",
    "gw_time_step",
]


def _check_gamma(gamma: float) -> float:
    g = float(gamma)
    if not 1.0 < g <= 2.0:
        raise DomainError(f"gamma must lie in (1, 2], got {gamma!r}")
    return g


def gw_time_step(gamma: float, p: int) -> float:
    """Time-measure weight of one vertex at scale p.

    One generation is 1/p of height; matching the level-occupation
    normalization then forces gamma**(1/(gamma-1)) * p**(-gamma/(gamma-1))
    of time per vertex (2/p**2 in the quadratic case).
    """
    g = _check_gamma(gamma)
    return g ** (1.0 / (g - 1.0)) * float(p) ** (-g / (g - 1.0))


def _tail_closed_form(gamma: float, k: np.ndarray) -> np.ndarray:
    # P(offspring > k) for k >= 1, from the alternating partial sum:
    # sum_{j<=k} (-1)^j C(gamma, j) = (-1)^k C(gamma-1, k).
    lg = np.vectorize(math.lgamma)
    out = np.exp(
        math.log(gamma - 1.0) + lg(k + 1.0 - gamma) - math.lgamma(2.0 - gamma) - lg(k + 1.0)
    ) / gamma
    return out


@dataclass(frozen=True)
class OffspringLaw:
    """Probability table plus analytic tail for the critical offspring law.

    pmf[k] covers k = 0 .. K; tail_mass is P(offspring > K), handled by
    inversion of the closed-form survival function when sampling.
    """

    gamma: float
    pmf: np.ndarray
    tail_mass: float

    @property
    def table_size(self) -> int:
        return self.pmf.size - 1

    def survival(self, k):
        """P(offspring > k), closed form, valid for k >= 1."""
        k = np.asarray(k, dtype=np.float64)
        if np.any(k < 1):
            raise DomainError("closed-form survival needs k >= 1")
        if self.gamma == 2.0:
            return np.where(k < 2, 0.5, 0.0)
        return _tail_closed_form(self.gamma, k)

    def mean(self) -> float:
        """Table mean plus the closed-form tail mean (criticality check).

        k*pmf[k] telescopes the same way the pmf does, leaving
        Gamma(K+1-gamma) / (Gamma(2-gamma) Gamma(K)) above the table.
        """
        k = np.arange(self.pmf.size, dtype=np.float64)
        head = math.fsum((k * self.pmf).tolist())
        if self.tail_mass == 0.0:
            return head
        kk = float(self.table_size)
        tail = math.exp(
            math.lgamma(kk + 1.0 - self.gamma) - math.lgamma(2.0 - self.gamma) - math.lgamma(kk)
        )
        return head + tail

    @cached_property
    def _alias(self):
        return _build_alias(np.concatenate([self.pmf, [self.tail_mass]]))

    def sample(self, rng: np.random.Generator, size=None):
        """Alias-table draw with analytic inversion beyond the table."""
        scalar = size is None
        n = 1 if scalar else int(size)
        prob, alias = self._alias
        idx = rng.integers(0, prob.size, size=n)
        take = rng.random(n) < prob[idx]
        out = np.where(take, idx, alias[idx]).astype(np.int64)
        tail = out == prob.size - 1
        if tail.any():
            kk = self.table_size
            u = rng.random(int(tail.sum()))
            draw = np.floor(kk * u ** (-1.0 / self.gamma)).astype(np.int64)
            out[tail] = np.maximum(draw, kk + 1)
        return int(out[0]) if scalar else out


def _build_alias(weights: np.ndarray):
    """Vose alias construction over the given weight vector (sums to 1)."""
    n = weights.size
    scaled = weights * n
    prob = np.ones(n, dtype=np.float64)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return prob, alias


@lru_cache(maxsize=8)
def gw_offspring(gamma: float) -> OffspringLaw:
    """Critical offspring law descriptor for the given index.

    The table extends to the 1 - 1e-12 quantile or one million entries,
    whichever is smaller; the analytic tail covers the remainder either
    way, so the cap only swaps exact table entries for the asymptotic
    inversion at relative mass below 1e-8.
    """
    g = _check_gamma(gamma)
    if g == 2.0:
        return OffspringLaw(gamma=2.0, pmf=np.array([0.5, 0.0, 0.5]), tail_mass=0.0)
    lo, hi = 2, _TABLE_CAP
    if _tail_closed_form(g, np.array([float(hi)]))[0] > _TABLE_QUANTILE:
        size = hi
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _tail_closed_form(g, np.array([float(mid)]))[0] > _TABLE_QUANTILE:
                lo = mid
            else:
                hi = mid
        size = hi
    pmf = np.zeros(size + 1, dtype=np.float64)
    pmf[0] = 1.0 / g
    if size >= 2:
        # ratio recurrence xi(k+1) = xi(k) * (k - gamma) / (k + 1)
        k = np.arange(2, size, dtype=np.float64)
        ratios = np.concatenate([[(g - 1.0) / 2.0], (k - g) / (k + 1.0)])
        pmf[2:] = np.cumprod(ratios)
    tail = float(_tail_closed_form(g, np.array([float(size)]))[0])
    return OffspringLaw(gamma=g, pmf=pmf, tail_mass=tail)


@njit(cache=True)
def _gw_run(rstate, meta, stack, buf, i0, prob, alias, ktab, gamma, kcap,
            k_min, max_nodes, tries_left):
    """Rejection loop over depth-first trees, preorder depths into buf.

    meta = [sp, total, height]; per-depth pending-child counts live in
    stack, which makes the deepest nonempty entry the DFS frontier.
    Vertices at depth kcap get no children (depth censoring; everything
    strictly below is untouched). Trees that die below k_min, or grow
    past max_nodes, are rewound in place and retried. Returns
    (status, fill, tries): 0 accepted tree complete in buf[:fill],
    1 buffer full mid-tree (grow and resume), 3 stack array full
    (grow and resume), 4 tries exhausted.
    """
    s = rstate[0]
    sp = meta[0]
    total = meta[1]
    height = meta[2]
    ncat = prob.size
    i = i0
    tries = 0
    status = -1
    while status < 0:
        if total >= max_nodes:
            # abandon the oversized tree and start a fresh one
            tries += 1
            if tries >= tries_left:
                status = 4
                break
            stack[:] = 0
            stack[0] = 1
            sp = 0
            total = 0
            height = 0
            i = 0
            continue
        if i >= buf.size:
            status = 1
            break
        d = sp
        stack[d] -= 1
        buf[i] = d
        i += 1
        total += 1
        if d > height:
            height = d
        if d >= kcap:
            c = 0
        else:
            # xorshift64* twice: category index and acceptance uniform
            s ^= s >> np.uint64(12)
            s ^= s << np.uint64(25)
            s ^= s >> np.uint64(27)
            r1 = s * np.uint64(2685821657736338717)
            s ^= s >> np.uint64(12)
            s ^= s << np.uint64(25)
            s ^= s >> np.uint64(27)
            r2 = s * np.uint64(2685821657736338717)
            u1 = (r1 >> np.uint64(11)) * 1.1102230246251565e-16
            u2 = (r2 >> np.uint64(11)) * 1.1102230246251565e-16
            idx = int(u1 * ncat)
            if idx >= ncat:
                idx = ncat - 1
            if u2 < prob[idx]:
                c = idx
            else:
                c = alias[idx]
            if c == ncat - 1:
                # analytic tail: survival ~ (k / ktab)**(-gamma) past the table
                s ^= s >> np.uint64(12)
                s ^= s << np.uint64(25)
                s ^= s >> np.uint64(27)
                r3 = s * np.uint64(2685821657736338717)
                u3 = (r3 >> np.uint64(11)) * 1.1102230246251565e-16
                if u3 < 1e-15:
                    u3 = 1e-15
                fc = ktab * math.exp(-math.log(u3) / gamma)
                if fc > 4e18:
                    fc = 4e18
                c = int(fc)
                if c <= ktab:
                    c = ktab + 1
        if c > 0:
            if sp + 1 >= stack.size:
                # no room to push: roll the emission back and report; the
                # caller grows the stack and the vertex is re-drawn (an
                # independent copy of the same law, so no bias)
                stack[d] += 1
                i -= 1
                total -= 1
                status = 3
                break
            stack[sp + 1] += c
            sp += 1
        else:
            while sp >= 0 and stack[sp] == 0:
                sp -= 1
            if sp < 0:
                if height >= k_min:
                    status = 0
                    break
                # too short: rewind and retry
                tries += 1
                if tries >= tries_left:
                    status = 4
                    break
                stack[0] = 1
                sp = 0
                total = 0
                height = 0
                i = 0
    rstate[0] = s
    meta[0] = sp
    meta[1] = total
    meta[2] = height
    return status, i, tries


def _simulate_depths(law: OffspringLaw, rstate, k_min, k_cap, max_nodes, max_tries):
    """Preorder depth array of a conditioned tree, growing scratch space.

    Trees that would exceed max_nodes are abandoned and retried inside
    the kernel, which conditions the law on staying below the cap; the
    cap is sized so the event is rare at intended scales.
    """
    prob, alias = law._alias
    ktab = np.int64(law.table_size)
    gamma = float(law.gamma)
    stack = np.zeros(_STACK0, dtype=np.int64)
    buf = np.empty(min(_BUF, max_nodes + 1), dtype=np.int64)
    meta = np.zeros(3, dtype=np.int64)
    stack[0] = 1
    i0 = 0
    tries_left = max_tries
    while True:
        status, fill, tries = _gw_run(
            rstate, meta, stack, buf, i0, prob, alias, ktab, gamma,
            np.int64(k_cap), np.int64(k_min), np.int64(max_nodes),
            np.int64(tries_left),
        )
        tries_left -= tries
        if status == 0:
            return buf[:fill].copy()
        if status == 1:
            bigger = np.empty(min(2 * buf.size, max_nodes + 1), dtype=np.int64)
            bigger[:fill] = buf[:fill]
            buf = bigger
            i0 = fill
            continue
        if status == 3:
            stack = np.concatenate([stack, np.zeros(stack.size, dtype=np.int64)])
            i0 = fill
            continue
        raise BudgetError(
            f"no Galton-Watson tree reached lattice height {k_min} "
            f"within {max_tries} tries (node cap {max_nodes})"
        )


def gw_tree_coding(
    gamma: float,
    p: int,
    seed: int | None = None,
    min_height: float = 1.0,
    *,
    rng: np.random.Generator | None = None,
    height_cap: float | None = None,
    max_nodes: int = 5_000_000,
    max_tries: int = 100_000,
) -> CodingFunction:
    """Height coding of a critical tree conditioned on height > min_height.

    Generations become height 1/p each and every vertex carries
    gw_time_step(gamma, p) of time measure, so level occupation over a
    one-generation strip estimates continuum local time directly.

    height_cap prunes the tree at that height: vertices above it are
    dropped, everything below is exact, and the conditioning event is
    unaffected as long as the cap clears min_height. Conditioned trees
    have infinite mean size, so capping is what keeps bulk draws cheap
    when only the lower part of the tree matters.
    """
    g = _check_gamma(gamma)
    p = int(p)
    if p < 1:
        raise DomainError(f"p must be a positive integer, got {p!r}")
    if min_height <= 0:
        raise DomainError(f"min_height must be > 0, got {min_height!r}")
    if rng is None:
        rng = make_rng(0 if seed is None else seed)
    law = gw_offspring(g)
    rstate = np.array([rng.integers(1, 2**63 - 1, dtype=np.int64)], dtype=np.uint64)
    k_min = int(math.floor(p * min_height + 1e-9)) + 1
    if height_cap is None:
        k_cap = 1 << 62
    else:
        k_cap = int(math.ceil(p * height_cap - 1e-9))
        if k_cap < k_min:
            raise DomainError("height_cap must not cut below min_height")
    depths = _simulate_depths(law, rstate, k_min, k_cap, max_nodes, max_tries)
    values = np.concatenate([depths.astype(np.float64) / p, [0.0]])
    return CodingFunction(
        delta=gw_time_step(g, p),
        values=values,
        gamma=g,
        seed=0 if seed is None else seed,
    )
