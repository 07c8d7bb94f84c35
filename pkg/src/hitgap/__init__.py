"""Hitting-time exponential moments, blow-up thresholds and spectral gaps of Markov chains."""

from .chain_model import (
    DiffusionSpec1D,
    FiniteChain,
    InvariantMeasure,
    TargetSet,
    build_birth_death,
    chain_from_conductances,
    discretize_diffusion_1d,
    double_well_spec,
    invariant_measure,
    ou_spec,
    target,
    validate,
)
from .dirichlet_spectral import (
    DirichletForm,
    SpectralReport,
    dirichlet_eigenvalue,
    spectral_gap,
    variance,
)
from .errors import (
    BlowupError,
    ChainValidationError,
    ConfigError,
    DomainError,
    GeometryError,
    HitgapError,
    IrreducibilityError,
    NotReversibleError,
    PsiModeError,
    TruncationError,
)
from .potentials import (
    Potential,
    ThresholdReport,
    blowup_threshold,
    exp_moment_potential,
    lyapunov_potential,
    moment_potential,
    psi_potential_contour,
    psi_potential_direct,
    z_potential,
)
from .psi import PsiFunction, bump, smoothstep
from .verify import CycleBoundSpec, VerificationReport, cycle_bound, run_suite

__version__ = "0.1.0"
