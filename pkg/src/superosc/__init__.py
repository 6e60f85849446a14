"""Superoscillatory wave functions from linear constraints."""

from .constraints import ConstraintSet, Family, PhysicalConfig, gram_entry, kernel_momentum, kernel_position
from .errors import (
    BoundaryJump,
    ConstraintError,
    DegenerateEigenvalue,
    DenominatorVanishing,
    NoConvergence,
    NotPositiveDefinite,
    PrecisionExhausted,
    SuperoscError,
    ZeroInSlit,
)
from .quadratic import QuadraticKernel, QuadraticProblem, solve_quadratic
from .solver import (
    EigenPair,
    GramMatrix,
    Solution,
    assemble_gram,
    construct,
    extreme_coefficients,
    norm_squared,
    solve,
    successive_constraint_value,
)
from .wavefield import (
    EmergingWave,
    IdealTemplate,
    MomentumStats,
    WaveField,
    derivative,
    ideal_template,
    momentum_stats,
    project_slit,
    zero_crossings,
)

__version__ = "0.1.0"
