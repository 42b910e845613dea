"""Stable subordinators and stable variate generators.

The spine of a ball decomposition carries a subordinator with Laplace
exponent gamma * lam**(gamma-1).  For gamma = 2 that exponent is linear,
so the subordinator is the deterministic drift U_t = 2t.  For gamma < 2
it is a pure-jump stable subordinator of index gamma - 1 with jump
density c * x**(-gamma), and increments are themselves positive stable
variables, which we draw exactly with Kanter's representation.
"""

from __future__ import annotations

import math

import numpy as np

from ..analytic import DomainError
from .streams import make_rng


def _check_gamma(gamma: float) -> None:
    if not 1.0 < gamma <= 2.0:
        raise DomainError(f"gamma must lie in (1, 2], got {gamma}")


def kanter_stable(alpha: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Positive stable draw(s) with Laplace transform exp(-lam**alpha).

    Kanter's representation: X = (A(U)/W)**((1-alpha)/alpha) with U
    uniform on (0, pi), W standard exponential and
    A(u) = sin(alpha*u)**(alpha/(1-alpha)) * sin((1-alpha)*u)
           / sin(u)**(1/(1-alpha)).
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    u = rng.uniform(0.0, math.pi, size=size)
    w = rng.standard_exponential(size=size)
    ratio = alpha / (1.0 - alpha)
    log_a = (
        ratio * np.log(np.sin(alpha * u))
        + np.log(np.sin((1.0 - alpha) * u))
        - (1.0 + ratio) * np.log(np.sin(u))
    )
    return np.exp((log_a - np.log(w)) / ratio)


def spectrally_positive_stable(
    alpha: float, rng: np.random.Generator, size=None
) -> np.ndarray:
    """Stable draw(s) of index alpha in (1, 2) with E[exp(-lam*X)] = exp(lam**alpha).

    Chambers-Mallows-Stuck for the totally skewed case beta = 1, scaled
    so the Laplace exponent has unit constant.  Used as the limit law
    when collapsing very large Poisson clusters of atom masses.
    """
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1, 2), got {alpha}")
    theta0 = math.atan(math.tan(math.pi * alpha / 2.0)) / alpha
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=size)
    w = rng.standard_exponential(size=size)
    av = alpha * (v + theta0)
    s = (
        np.sin(av)
        / (math.cos(alpha * theta0) * np.cos(v)) ** (1.0 / alpha)
        * (np.cos(av - v) / w) ** ((1.0 - alpha) / alpha)
    )
    return abs(math.cos(math.pi * alpha / 2.0)) ** (1.0 / alpha) * s


def subordinator_increments(
    gamma: float, lengths: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Exact increments of the spine subordinator over intervals of the given lengths.

    The increment over an interval of length t has Laplace transform
    exp(-t*gamma*lam**(gamma-1)), i.e. it is (t*gamma)**(1/(gamma-1))
    times a standard positive stable variable of index gamma - 1.
    """
    _check_gamma(gamma)
    lengths = np.asarray(lengths, dtype=np.float64)
    if np.any(lengths < 0.0):
        raise DomainError("interval lengths must be non-negative")
    if gamma == 2.0:
        return 2.0 * lengths
    scale = (lengths * gamma) ** (1.0 / (gamma - 1.0))
    return scale * kanter_stable(gamma - 1.0, rng, size=lengths.shape)


def stable_subordinator(
    gamma: float,
    horizon: float,
    seed: int | None = None,
    *,
    steps: int = 256,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Increment path of the spine subordinator on a uniform grid.

    Returns (times, increments) where times are the right endpoints of
    the grid cells and increments sum to U_horizon.
    """
    _check_gamma(gamma)
    if horizon <= 0.0:
        raise DomainError("horizon must be positive")
    if steps < 1:
        raise DomainError("steps must be positive")
    if rng is None:
        rng = make_rng(0 if seed is None else seed)
    dt = horizon / steps
    times = dt * np.arange(1, steps + 1)
    increments = subordinator_increments(gamma, np.full(steps, dt), rng)
    return times, increments


def jump_intensity_constant(gamma: float) -> float:
    """Constant c in the jump density c*x**(-gamma) of the spine subordinator."""
    _check_gamma(gamma)
    if gamma == 2.0:
        return 0.0
    return gamma * (gamma - 1.0) / math.gamma(2.0 - gamma)


def jump_rate_above(gamma: float, threshold: float) -> float:
    """Expected jumps per unit length with size above the threshold."""
    if threshold <= 0.0:
        raise DomainError("threshold must be positive")
    c = jump_intensity_constant(gamma)
    return c * threshold ** (1.0 - gamma) / (gamma - 1.0)


def small_jump_mean(gamma: float, threshold: float) -> float:
    """Expected total size per unit length of jumps below the threshold."""
    if threshold <= 0.0:
        raise DomainError("threshold must be positive")
    c = jump_intensity_constant(gamma)
    return c * threshold ** (2.0 - gamma) / (2.0 - gamma)


def sample_jump_sizes(
    gamma: float, threshold: float, rng: np.random.Generator, size=None
) -> np.ndarray:
    """Jump sizes conditioned to exceed the threshold (Pareto inversion)."""
    _check_gamma(gamma)
    if gamma == 2.0:
        raise DomainError("gamma=2 subordinator has no jumps")
    if threshold <= 0.0:
        raise DomainError("threshold must be positive")
    u = rng.random(size=size)
    return threshold * u ** (-1.0 / (gamma - 1.0))
