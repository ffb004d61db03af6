"""Alpha-circulant ParaDiag preconditioners for linear-quadratic parabolic control."""

from .allatonce import ControlProblem, Objective, StackedState
from .experiments import RunConfig, SweepSpec, run_solve, run_spectrum, run_sweep, solve_problem
from .krylov import GmresConfig, KrylovOutcome, gmres
from .precond import AlphaCirculantSpec, alpha_circulant_spec, make_preconditioner
from .spatial import (
    DenseOperator,
    SpectralOperator,
    build_advdiff_2d_periodic,
    build_laplacian_1d_isolated,
    build_laplacian_2d_periodic,
)
from .spectra import ModeParams, semidisk_check, terminal_omega, tracking_omega
from .validate import run_validate

__version__ = "0.1.0"

__all__ = [
    "ControlProblem",
    "Objective",
    "StackedState",
    "RunConfig",
    "SweepSpec",
    "run_solve",
    "run_spectrum",
    "run_sweep",
    "solve_problem",
    "GmresConfig",
    "KrylovOutcome",
    "gmres",
    "AlphaCirculantSpec",
    "alpha_circulant_spec",
    "make_preconditioner",
    "DenseOperator",
    "SpectralOperator",
    "build_advdiff_2d_periodic",
    "build_laplacian_1d_isolated",
    "build_laplacian_2d_periodic",
    "ModeParams",
    "semidisk_check",
    "terminal_omega",
    "tracking_omega",
    "run_validate",
]
