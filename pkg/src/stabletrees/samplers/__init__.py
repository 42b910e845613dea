"""Random generation: stable variates, tree codings, spinal ball masses."""

from .brownian import BudgetError, brownian_excursion, excursion_harvest, step_scale
from .galton_watson import OffspringLaw, gw_offspring, gw_time_step, gw_tree_coding
from .inversion import (
    CdfTable,
    InversionError,
    invert_survival,
    level_atom_table,
    level_ball_table,
    lt_inversion_sampler,
    sample_level_mass_atom,
    stehfest_coefficients,
)
from .spinal import (
    MassBallDraw,
    SpinalDraw,
    spinal_level_ball,
    spinal_level_ball_batch,
    spinal_mass_ball,
    spinal_mass_ball_batch,
    spinal_mass_shells,
    spinal_mass_shells_batch,
)
from .streams import RngStream, make_rng, replicate_map
from .subordinator import (
    jump_intensity_constant,
    jump_rate_above,
    kanter_stable,
    sample_jump_sizes,
    small_jump_mean,
    spectrally_positive_stable,
    stable_subordinator,
    subordinator_increments,
)

__all__ = [
    "BudgetError",
    "CdfTable",
    "InversionError",
    "MassBallDraw",
    "OffspringLaw",
    "RngStream",
    "SpinalDraw",
    "brownian_excursion",
    "excursion_harvest",
    "gw_offspring",
    "gw_time_step",
    "gw_tree_coding",
    "invert_survival",
    "jump_intensity_constant",
    "jump_rate_above",
    "kanter_stable",
    "level_atom_table",
    "level_ball_table",
    "lt_inversion_sampler",
    "make_rng",
    "replicate_map",
    "sample_jump_sizes",
    "sample_level_mass_atom",
    "small_jump_mean",
    "spectrally_positive_stable",
    "spinal_level_ball",
    "spinal_level_ball_batch",
    "spinal_mass_ball",
    "spinal_mass_ball_batch",
    "spinal_mass_shells",
    "spinal_mass_shells_batch",
    "stable_subordinator",
    "stehfest_coefficients",
    "subordinator_increments",
]
