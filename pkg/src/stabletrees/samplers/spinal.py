"""Spinal-decomposition samplers for ball and shell masses.

A marked point at height a carries a spine toward the root; subtrees
hang off the spine as a Poisson field.  Parametrized by the depth s
below the mark, subtrees arrive with intensity dU_s against the spine
subordinator, and the ones felt by a level ball of radius r are those
within depth r/2 that survive back up to the mark's level, each
contributing an independent conditioned level mass.  Mass balls see
every subtree down to depth r through its occupation below the ball
boundary.  Both constructions make disjoint depth strata independent,
which is what the shell laws and their tests rely on.

The compound transform of the level construction integrates to
(1 + (gamma-1) r lam^(gamma-1) / 2)^(-gamma/(gamma-1)) exactly, so the
sampler and the analytic module are independent routes to one law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from ..analytic import DomainError, mass_ball_lt
from .brownian import BudgetError, step_scale
from .inversion import level_atom_table
from .subordinator import (
    jump_intensity_constant,
    sample_jump_sizes,
    small_jump_mean,
    spectrally_positive_stable,
)

_DYADIC_DEPTH = 40
_ETA = 0.1
_NU_BIG = 1.0e4
_JUMPS_PER_SPAN = 48.0
_WALK_LEVELS = 6
_MAX_ATOMS = 50_000_000
_MAX_HALVINGS = 6
_EULER_STEPS = 4096

__all__ = [
    "MassBallDraw",
    "SpinalDraw",
    "spinal_level_ball",
    "spinal_level_ball_batch",
    "spinal_mass_ball",
    "spinal_mass_ball_batch",
    "spinal_mass_shells",
    "spinal_mass_shells_batch",
]


@dataclass(frozen=True)
class SpinalDraw:
    """One spinal sample: cumulative level masses plus shell increments.

    radii is decreasing; level_masses[i] is the ball mass at radii[i],
    shell_masses[i] the increment between radii[i+1] and radii[i].
    mass_balls, when filled, carries the occupation-ball draws and
    mass_bias_bounds the standard-deviation bound on their compensated
    remainder (an LT error at lam is at most lam**2 * bound**2 / 2).
    """

    gamma: float
    a: float
    radii: np.ndarray
    level_masses: np.ndarray
    shell_masses: np.ndarray
    mass_balls: np.ndarray | None = None
    mass_bias_bounds: np.ndarray | None = None
    eps_trunc: float | None = None


@dataclass(frozen=True)
class MassBallDraw:
    """Occupation ball mass with its truncation-compensation bound."""

    mass: float
    bias_bound: float
    eps_trunc: float
    degenerate: bool


def _check_gamma(gamma: float) -> float:
    g = float(gamma)
    if not 1.0 < g <= 2.0:
        raise DomainError(f"gamma must lie in (1, 2], got {gamma!r}")
    return g


def _ratio2_strata(lo: float, hi: float):
    """Split (lo, hi] into geometric pieces of ratio at most 2."""
    n = max(1, int(math.ceil(math.log2(hi / lo) - 1e-12)))
    bounds = np.geomspace(lo, hi, n + 1)
    return [(float(bounds[i]), float(bounds[i + 1])) for i in range(n)]


def _level_stratum_gamma2(reps, lo, hi, rng, out):
    """Exact atoms for the quadratic case: drift subordinator dU = 2 ds."""
    lam = 2.0 * math.log(hi / lo)
    counts = rng.poisson(lam, reps)
    total = int(counts.sum())
    if total == 0:
        return
    rep_idx = np.repeat(np.arange(reps), counts)
    s = lo * (hi / lo) ** rng.random(total)
    masses = s * rng.exponential(1.0, total)
    out += np.bincount(rep_idx, weights=masses, minlength=reps)


def _level_stratum_stable(gamma, reps, lo, hi, rng, out, atom_scale):
    """Jump-driven atoms for gamma < 2 on one depth stratum.

    Large subordinator jumps carry Poisson clusters of conditioned level
    masses; the accumulated drift of sub-threshold jumps feeds a thin
    Poisson dust with the correct first moment.  Clusters too big to
    enumerate use the stable limit of the compound sum.
    """
    beta = 1.0 / (gamma - 1.0)
    c = jump_intensity_constant(gamma)
    span = hi - lo
    delta = _ETA * ((gamma - 1.0) * lo) ** beta
    rate = c * delta ** (1.0 - gamma) / (gamma - 1.0)
    jc = rng.poisson(span * rate, reps)
    j_total = int(jc.sum())
    if j_total:
        j_rep = np.repeat(np.arange(reps), jc)
        s = rng.uniform(lo, hi, j_total)
        x = sample_jump_sizes(gamma, delta, rng, j_total)
        mu = ((gamma - 1.0) * s) ** beta
        nu = x * ((gamma - 1.0) * s) ** (-beta)
        big = nu > _NU_BIG
        if big.any():
            nb = int(big.sum())
            fluct = spectrally_positive_stable(gamma, rng, nb)
            t = nu[big] * mu[big] + (nu[big] * mu[big] * s[big]) ** (1.0 / gamma) * fluct
            out += np.bincount(
                j_rep[big], weights=np.maximum(t, 0.0), minlength=reps
            )
        small = ~big
        if small.any():
            ac = rng.poisson(nu[small])
            a_total = int(ac.sum())
            if a_total:
                if a_total > _MAX_ATOMS:
                    raise BudgetError("level-ball atom budget exceeded")
                a_rep = np.repeat(j_rep[small], ac)
                a_s = np.repeat(s[small], ac)
                masses = atom_scale(a_total) * a_s**beta
                out += np.bincount(a_rep, weights=masses, minlength=reps)
    # dust: mean drift of sub-threshold jumps against the v(s) intensity
    m_small = small_jump_mean(gamma, delta)
    vint = (gamma - 1.0) ** (-beta) * (hi ** (1.0 - beta) - lo ** (1.0 - beta)) / (
        1.0 - beta
    )
    dc = rng.poisson(m_small * vint, reps)
    d_total = int(dc.sum())
    if d_total:
        d_rep = np.repeat(np.arange(reps), dc)
        u = rng.random(d_total)
        d_s = (lo ** (1.0 - beta) + u * (hi ** (1.0 - beta) - lo ** (1.0 - beta))) ** (
            1.0 / (1.0 - beta)
        )
        masses = atom_scale(d_total) * d_s**beta
        out += np.bincount(d_rep, weights=masses, minlength=reps)


def spinal_level_ball_batch(gamma, a, radii, reps, rng):
    """Vectorized spinal level-ball draws.

    Returns (level_masses, shell_masses) with shapes (reps, len(radii))
    and (reps, len(radii) - 1); radii must be strictly decreasing with
    values in (0, 2a].
    """
    g = _check_gamma(gamma)
    if a <= 0:
        raise DomainError(f"a must be > 0, got {a!r}")
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 1 or radii.size == 0:
        raise DomainError("radii must be a nonempty 1-d grid")
    if radii.size > 1 and not (np.diff(radii) < 0).all():
        raise DomainError("radii must be strictly decreasing")
    if radii[0] > 2.0 * a + 1e-12 or radii[-1] <= 0:
        raise DomainError("radii must lie in (0, 2a]")
    reps = int(reps)
    if reps < 1:
        raise DomainError("reps must be >= 1")
    if g < 2.0:
        table = level_atom_table(g)

        def atom_scale(n):
            return table.sample(rng, n)

    else:
        atom_scale = None
    depths = radii / 2.0
    nr = radii.size
    shells = np.zeros((reps, nr - 1)) if nr > 1 else np.zeros((reps, 0))
    core = np.zeros(reps)
    for j in range(nr - 1):
        buf = shells[:, j]
        for lo, hi in _ratio2_strata(depths[j + 1], depths[j]):
            if g == 2.0:
                _level_stratum_gamma2(reps, lo, hi, rng, buf)
            else:
                _level_stratum_stable(g, reps, lo, hi, rng, buf, atom_scale)
    # innermost core: dyadic strata below the smallest depth, truncated
    # where the remaining transform defect is ~ lam**(gamma-1) * depth
    d = float(depths[-1])
    for _ in range(_DYADIC_DEPTH):
        if g == 2.0:
            _level_stratum_gamma2(reps, d / 2.0, d, rng, core)
        else:
            _level_stratum_stable(g, reps, d / 2.0, d, rng, core, atom_scale)
        d /= 2.0
    levels = np.empty((reps, nr))
    acc = core
    for j in range(nr - 1, -1, -1):
        levels[:, j] = acc
        if j > 0:
            acc = acc + shells[:, j - 1]
    return levels, shells


def spinal_level_ball(gamma, a, radii, rng, eps_trunc=None):
    """One spinal draw; optionally fills mass balls at every radius <= a."""
    if rng is None or not isinstance(rng, np.random.Generator):
        raise DomainError("rng must be a numpy Generator")
    levels, shells = spinal_level_ball_batch(gamma, a, radii, 1, rng)
    radii = np.asarray(radii, dtype=np.float64)
    mass = bounds = None
    eps_used = None
    if eps_trunc is not None:
        mass = np.full(radii.size, np.nan)
        bounds = np.full(radii.size, np.nan)
        for i, r in enumerate(radii):
            if r <= a + 1e-12:
                d = spinal_mass_ball(gamma, a, float(min(r, a)), eps_trunc, rng)
                mass[i] = d.mass
                bounds[i] = d.bias_bound
                eps_used = d.eps_trunc
    return SpinalDraw(
        gamma=float(gamma),
        a=float(a),
        radii=radii,
        level_masses=levels[0],
        shell_masses=shells[0],
        mass_balls=mass,
        mass_bias_bounds=bounds,
        eps_trunc=eps_used,
    )


# ---------------------------------------------------------------------------
# mass balls


def _occ_mean_small(gamma, b, eps):
    """Mean occupation below b carried by excursions of height <= eps.

    Per unit of subordinator mass; the level weight under the height
    restriction is ((eps-y)/eps)**(gamma/(gamma-1)) for y < eps, and the
    unrestricted per-level mean is 1.
    """
    q = gamma / (gamma - 1.0)
    top = np.minimum(b, eps)
    return eps / (q + 1.0) * (1.0 - ((eps - top) / eps) ** (q + 1.0))


def _occ_mean_small_integral(gamma, r, eps):
    """Integral of _occ_mean_small(gamma, r - s, eps) over s in (0, r]."""
    q = gamma / (gamma - 1.0)
    full = eps / (q + 1.0)
    head = full * max(r - eps, 0.0)
    w = min(r, eps)
    wedge = full * (w - eps / (q + 2.0) * (1.0 - ((eps - w) / eps) ** (q + 2.0)))
    return head + wedge


def _occ_var_bound(gamma, eps):
    """Second-moment bound for the occupation of a height <= eps excursion.

    Per unit of subordinator mass.  The two-level correlation under the
    height restriction is bounded by gamma*((gamma-1)(eps-z))**q
    / ((gamma-1)*eps) at the higher level z, and integrating twice over
    the triangle gives the closed bound below (conservative by roughly
    an order of magnitude, which the callers absorb).
    """
    q = gamma / (gamma - 1.0)
    return (
        2.0
        * gamma
        * (gamma - 1.0) ** (q - 1.0)
        * eps ** (q + 1.0)
        / ((q + 1.0) * (q + 2.0))
    )


def _occ_second_moment_full(gamma, b):
    """Second moment of the unrestricted occupation below b, per unit mass.

    Closed form only for gamma = 2; the stable cases have infinite
    second moments.
    """
    if gamma == 2.0:
        return 2.0 * b**3 / 3.0
    return math.inf


@lru_cache(maxsize=16)
def _occ_tail_coeff(gamma: float) -> float:
    """Coefficient K in the expansion of the occupation transform.

    The excursion transform of the occupation below b expands as
    lam*b - K * b**(gamma+1) * lam**gamma + O(lam**2); K is extracted
    from the analytic ball transform at small lam, and the power of b
    follows from the scaling of the excursion measure.  K = 1/3 when
    gamma = 2.
    """
    lam = 1e-3
    kappa = (lam * (1.0 - mass_ball_lt(gamma, 1.0, lam))) ** (1.0 / gamma)
    return float((lam - kappa) / lam**gamma)


@njit(cache=True)
def _occupation_kernel(rstate, kb, keps, ktop, max_steps):
    """Visits below kb of lattice excursions conditioned to reach keps.

    Each entry of kb is one atom; the walk is censored at the matching
    ktop (at the top it always steps down, standing in for the skipped
    sub-excursion above, which is valid because no visible level at or
    above ktop is ever counted or tested).  Returns -1 for every
    remaining atom once the shared step budget runs out.
    """
    s = rstate[0]
    out = np.empty(kb.size, dtype=np.int64)
    steps = 0
    for i in range(kb.size):
        kbi = kb[i]
        kei = keps[i]
        kti = ktop[i]
        while True:
            x = 1
            good = 1 >= kei
            vis = 1 if 1 < kbi else 0
            dead = False
            while x > 0:
                if steps >= max_steps:
                    dead = True
                    break
                steps += 1
                if x == kti:
                    x -= 1
                else:
                    s ^= s >> np.uint64(12)
                    s ^= s << np.uint64(25)
                    s ^= s >> np.uint64(27)
                    r = s * np.uint64(2685821657736338717)
                    if r >> np.uint64(63):
                        x += 1
                    else:
                        x -= 1
                if x > 0:
                    if x >= kei:
                        good = True
                    if x < kbi:
                        vis += 1
            if dead:
                for j in range(i, kb.size):
                    out[j] = -1
                rstate[0] = s
                return out
            if good:
                out[i] = vis
                break
    rstate[0] = s
    return out


def _mass_atoms_gamma2(r, eps_k, s_lat, depths_s, rng, max_steps=4_000_000_000):
    """Explicit occupation draws for the quadratic case, one per depth.

    Visit counts are exact against the continuum level density at
    interior lattice levels (checked by linear solve), leaving only the
    trapezoid end-correction s/2 * g(b) per atom, which is added back
    deterministically; g is the per-level density at the ball boundary.
    """
    kb = np.rint((r - depths_s) / s_lat).astype(np.int64)
    keps = np.full(depths_s.size, eps_k, dtype=np.int64)
    ktop = np.maximum(kb, eps_k)
    live = kb >= 1
    occ = np.zeros(depths_s.size)
    if live.any():
        rstate = np.array(
            [rng.integers(1, 2**63 - 1, dtype=np.int64)], dtype=np.uint64
        )
        vis = _occupation_kernel(rstate, kb[live], keps[live], ktop[live], max_steps)
        if (vis < 0).any():
            raise BudgetError("mass-ball walk budget exceeded")
        eps_lat = eps_k * s_lat
        b = kb[live] * s_lat
        gap = np.clip((eps_lat - b) / eps_lat, 0.0, 1.0)
        g_b = 1.0 - gap**2
        occ[live] = vis * (s_lat * s_lat / 2.0) + eps_lat * (s_lat / 2.0) * g_b
    return occ


def _walk_grid(resolution, eps):
    """Lattice size for the censored walk, fine enough to resolve eps."""
    n = max(int(resolution), int(math.ceil(2.0 * (_WALK_LEVELS / eps) ** 2)))
    s_lat = step_scale(n)
    eps_k = max(1, int(round(eps / s_lat)))
    return s_lat, eps_k


def _halved_eps(gamma, r, eps_start):
    """Apply the halving rule against the quadratic closed-form mean."""
    eps = eps_start
    if gamma == 2.0:
        mean = r * r
        for _ in range(_MAX_HALVINGS):
            if math.sqrt(2.0 * r * _occ_var_bound(gamma, eps)) < 0.01 * mean:
                break
            eps /= 2.0
    return eps


def spinal_mass_ball_batch(gamma, a, r, eps_trunc, reps, rng, *, resolution=4096):
    """Vectorized occupation-ball draws.

    Returns (masses, bias_bounds, degenerate).  For gamma = 2 the
    excursions taller than eps_trunc are simulated explicitly and the
    remainder is compensated by its exact mean; bias_bounds are then
    standard-deviation bounds on that remainder, in mass units, and the
    induced Laplace-transform error at lam is at most
    lam**2 * bound**2 / 2.  For gamma < 2 the whole ball is one
    immigrating branching flow with no truncation at all, and the bound
    only covers the jump-placement rounding of the lattice.
    eps_trunc=None applies the default r/20 with automatic halving
    while the bound exceeds 1% of the mean (closed-form for gamma = 2;
    immaterial for the stable cases).
    """
    g = _check_gamma(gamma)
    if a <= 0:
        raise DomainError(f"a must be > 0, got {a!r}")
    if not 0.0 < r <= a + 1e-12:
        raise DomainError("r must lie in (0, a]")
    reps = int(reps)
    if reps < 1:
        raise DomainError("reps must be >= 1")
    if eps_trunc is None:
        eps_trunc = _halved_eps(g, r, r / 20.0)
    if eps_trunc <= 0:
        raise DomainError("eps_trunc must be > 0")
    if eps_trunc >= r:
        return _degenerate_batch(g, r, reps, rng)
    masses = np.zeros(reps)
    bounds = np.zeros(reps)
    if g == 2.0:
        s_lat, eps_k = _walk_grid(resolution, eps_trunc)
        eps_lat = eps_k * s_lat
        rate = (1.0 / eps_lat) * 2.0 * r
        counts = rng.poisson(rate, reps)
        total = int(counts.sum())
        rep_idx = np.repeat(np.arange(reps), counts)
        depths_s = rng.uniform(0.0, r, total)
        occ = _mass_atoms_gamma2(r, eps_k, s_lat, depths_s, rng)
        masses += np.bincount(rep_idx, weights=occ, minlength=reps)
        masses += 2.0 * _occ_mean_small_integral(g, r, eps_lat)
        bounds[:] = math.sqrt(2.0 * r * _occ_var_bound(g, eps_lat))
        return masses, bounds, False
    for i in range(reps):
        masses[i], bounds[i] = _stable_mass_one(g, r, rng)
    return masses, bounds, False


def _degenerate_batch(gamma, r, reps, rng):
    """eps_trunc >= r: every excursion is compensated by its mean."""
    if gamma == 2.0:
        masses = np.full(reps, r * r)
        bounds = np.full(reps, math.sqrt(r**4 / 3.0))
        return masses, bounds, True
    masses = np.empty(reps)
    for i in range(reps):
        s, x, m_small = _stable_jumps(gamma, r, rng)
        masses[i] = float((r - s) @ x) + m_small * r * r / 2.0
    bounds = np.full(reps, math.inf)
    return masses, bounds, True


def _stable_jumps(gamma, r, rng):
    """Jump representation of the spine subordinator over (0, r]."""
    c = jump_intensity_constant(gamma)
    delta = (_JUMPS_PER_SPAN * (gamma - 1.0) / (c * r)) ** (1.0 / (1.0 - gamma))
    rate = c * delta ** (1.0 - gamma) / (gamma - 1.0)
    nj = rng.poisson(r * rate)
    s = rng.uniform(0.0, r, nj)
    x = sample_jump_sizes(gamma, delta, rng, nj)
    m_small = small_jump_mean(gamma, delta)
    return s, x, m_small


def _stable_mass_one(gamma, r, rng):
    """One stable-case ball draw as a single immigrating branching flow.

    Every subordinator jump of size x at depth s grafts a branching
    population of initial mass x whose occupation counts below r - s,
    and the sub-threshold jump dust acts as continuous immigration.  In
    the ball coordinate all of them add up to one continuous-state
    branching process with immigration, and the ball mass is its
    integral over (0, r].  Each lattice step uses the two-term
    branching transition (exact mean, index-gamma fluctuation), making
    the transform of the discrete integral the Euler discretization of
    the exponent flow dk/db = lam - k**gamma; the mean is exact and the
    remaining bias is bounded by the jump-placement rounding, at most
    one step of occupation per unit of injected mass.
    """
    s, x, m_small = _stable_jumps(gamma, r, rng)
    h = r / _EULER_STEPS
    inj = np.zeros(_EULER_STEPS)
    if x.size:
        bins = np.minimum((s / h).astype(np.int64), _EULER_STEPS - 1)
        inj = np.bincount(bins, weights=x, minlength=_EULER_STEPS)
    fluct = spectrally_positive_stable(gamma, rng, _EULER_STEPS)
    inv_g = 1.0 / gamma
    drift = m_small * h
    z = 0.0
    occ = 0.0
    for k in range(_EULER_STEPS):
        z += drift + inj[k]
        occ += h * z
        z = z + (h * z) ** inv_g * fluct[k]
        if z < 0.0:
            z = 0.0
    bound = h * (float(x.sum()) + m_small * r)
    return occ, bound


def spinal_mass_ball(gamma, a, r, eps_trunc, rng, *, resolution=4096) -> MassBallDraw:
    """One occupation-ball draw with its compensation bound."""
    if rng is None or not isinstance(rng, np.random.Generator):
        raise DomainError("rng must be a numpy Generator")
    eff = eps_trunc
    if eff is None:
        eff = _halved_eps(_check_gamma(gamma), r, r / 20.0)
    masses, bounds, degenerate = spinal_mass_ball_batch(
        gamma, a, r, eff, 1, rng, resolution=resolution
    )
    return MassBallDraw(
        mass=float(masses[0]),
        bias_bound=float(bounds[0]),
        eps_trunc=float(eff),
        degenerate=degenerate,
    )


def spinal_mass_shells(gamma, a, radii, eps_trunc, rng, *, resolution=4096):
    """Independent shell masses for consecutive radius pairs.

    Each shell's law is the width-only occupation ball, drawn
    independently per shell; the full ball is not their sum, which the
    tests assert rather than hide.  Returns (shell_masses, bias_bounds).
    """
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 1 or radii.size < 2:
        raise DomainError("radii must have at least two entries")
    if not (np.diff(radii) < 0).all():
        raise DomainError("radii must be strictly decreasing")
    widths = radii[:-1] - radii[1:]
    out = np.empty(widths.size)
    bounds = np.empty(widths.size)
    for i, w in enumerate(widths):
        eff = None if eps_trunc is None else min(eps_trunc, 0.9 * w)
        d = spinal_mass_ball(gamma, a, float(w), eff, rng, resolution=resolution)
        out[i] = d.mass
        bounds[i] = d.bias_bound
    return out, bounds


def spinal_mass_shells_batch(gamma, a, radii, eps_trunc, reps, rng, *, resolution=4096):
    """Vectorized independent shell masses.

    Returns (shell_masses, bias_bounds), both of shape (reps, n-1).
    """
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 1 or radii.size < 2:
        raise DomainError("radii must have at least two entries")
    if not (np.diff(radii) < 0).all():
        raise DomainError("radii must be strictly decreasing")
    widths = radii[:-1] - radii[1:]
    out = np.empty((int(reps), widths.size))
    bounds = np.empty((int(reps), widths.size))
    for i, w in enumerate(widths):
        eff = None if eps_trunc is None else min(eps_trunc, 0.9 * w)
        m, b, _ = spinal_mass_ball_batch(
            gamma, a, float(w), eff, int(reps), rng, resolution=resolution
        )
        out[:, i] = m
        bounds[:, i] = b
    return out, bounds
