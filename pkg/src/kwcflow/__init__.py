"""Implicit gradient-flow solver and audits for the regularized
Kobayashi-Warren-Carter grain-boundary system."""

from .analysis import (
    AuditReport,
    GammaTable,
    Interpolants,
    OmegaReport,
    RefinementReport,
    energy_inequality_audit,
    gamma_diagnostic,
    max_principle_audit,
    omega_limit_audit,
    refinement_experiment,
)
from .energy import (
    EnergyBreakdown,
    free_energy,
    generalized_weighted_tv,
    relaxed_free_energy,
    relaxed_wtv,
    time_integrated,
    weighted_tv,
)
from .errors import (
    ConfigError,
    GridMismatchError,
    KwcError,
    PreconditionError,
    SnapshotFormatError,
    SolverError,
    StepSizeError,
)
from .grid import (
    FaceVectorField,
    Grid,
    ScalarField,
    divergence,
    gradient,
    integrate,
    neumann_laplacian,
    read_field,
    read_state,
    write_field,
    write_state,
)
from .model import (
    ModelFunctions,
    StabilityConstants,
    canonical,
    stability_constants,
    validate_hypotheses,
)
from .regularizers import Ap2Profile, FAMILIES, Regularizer, verify_suitability
from .stepper import (
    RunConfig,
    SolverOptions,
    State,
    StepReport,
    Trajectory,
    eta_step,
    make_initial,
    run,
    step,
    theta_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
