"""Threshold times and overshoot of AR(1) processes with phase-type
positive innovations: analytic transforms, optimal stopping via
continuous fit, and a Monte Carlo oracle."""

from .errors import (
    ArphaseError,
    BranchError,
    ConvergenceError,
    NumericalConsistencyError,
    PoleError,
    SingularSystemError,
    ValidationError,
)
from .gains import GainFunction
from .innovations import Innovation, NegativePart, psi, psi1, psi2, t_laplace_matrix
from .montecarlo import (
    Estimate,
    PathRecord,
    default_max_steps,
    estimate_joint,
    estimate_phi,
    overshoot_given_phase,
    simulate_crossing,
)
from .passage import (
    CrossingTransform,
    PassageProblem,
    ResidueSystem,
    build_residue_system,
    closed_form_exp,
    closed_form_exp_general,
    derivative_identity_check,
    joint_functional,
    laplace_tau,
    overshoot_expectation,
    solve_phi,
)
from .phasetype import (
    ChainSample,
    PhaseTypeDist,
    SpectralData,
    cdf,
    laplace,
    matrix_function,
    pdf,
    restart_vector,
    sample,
    validate,
)
from .qseries import euler_phi, q_pochhammer, q_pochhammer_inf
from .stopping import (
    StoppingSolution,
    VerificationReport,
    continuous_fit_probe,
    f_of_b,
    psi_of,
    solve_threshold_exp_identity,
    solve_threshold_general,
    verify_solution,
)
from .transforms import AR1Model, TransformEngine

__all__ = [name for name in dir() if not name.startswith("_")]
