"""Velocity-jump transport: diffusion matrices, spectral solver, particle walks."""

from vjump.dispersion import (
    diffusion_matrix_forest,
    diffusion_matrix_minor,
    diffusion_matrix_paired,
    diffusion_report,
    drift_velocity_minor,
    drift_velocity_symmetric,
    hessian_oracle,
    lambda_branch,
    recenter,
    spectral_abscissa_scan,
)
from vjump.errors import (
    NumericalGuardError,
    PreconditionError,
    ValidationError,
    VJumpError,
)
from vjump.forests import enumerate_forests, forest_minor, forest_pairs, i1, principal_minor
from vjump.model import (
    VelocityModel,
    build_transition_matrix,
    check_irreducible,
    check_sk_condition,
    check_span_condition,
)
from vjump.spectral import Grid, SpectralField, solve_hyperbolic, solve_parabolic

__version__ = "0.1.0"
