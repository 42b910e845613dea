"""Simulation and verification lab for critical stable continuum random trees.

Layout:

- analytic: closed forms (semigroup, height tail, ball/shell Laplace
  transforms, occupation exponent ODE, tail constants)
- gauges: gauge-function families, doubling constants, series tests
- tree: coding functions, the metric/measure structure, local-time estimators
- samplers: excursion, Galton-Watson, subordinator, transform-inversion and
  spinal-decomposition samplers
- fractal: packing/covering premeasure estimators and density dichotomy
  experiments
- runner: config-driven experiment driver with a CLI entry point
"""

from stabletrees.analytic import (
    DomainError,
    TailConstants,
    csbp_semigroup,
    csbp_semigroup_ode,
    height_tail,
    level_ball_lt,
    level_mass_small_cdf,
    level_shell_lt,
    mass_ball_lt,
    mass_shell_lt,
    occupation_exponent,
    occupation_exponent_residual,
    tail_constants,
    zolotarev_lt,
)
from stabletrees.gauges import (
    CustomTable,
    Gauge,
    LevelCritical,
    LevelCritical2,
    MassCritical,
    MassPacking,
    PureExponent,
    doubling_constant,
    format_gauge,
    gauge_eval,
    parse_gauge,
    series_classify,
    series_partial,
)

__version__ = "0.1.0"

__all__ = [
    "CustomTable",
    "DomainError",
    "Gauge",
    "LevelCritical",
    "LevelCritical2",
    "MassCritical",
    "MassPacking",
    "PureExponent",
    "TailConstants",
    "doubling_constant",
    "format_gauge",
    "gauge_eval",
    "parse_gauge",
    "series_classify",
    "series_partial",
    "csbp_semigroup",
    "csbp_semigroup_ode",
    "height_tail",
    "level_ball_lt",
    "level_mass_small_cdf",
    "level_shell_lt",
    "mass_ball_lt",
    "mass_shell_lt",
    "occupation_exponent",
    "occupation_exponent_residual",
    "tail_constants",
    "zolotarev_lt",
    "__version__",
]
