"""Experiment drivers: problem data, single solves, sweeps, spectrum tables.

Problem data for the 2-D equations (periodic unit square, ``m x m`` points
at ``x_j = j/m``)::

    y_d(t, x)  = ((12 pi^2 + 1/(12 pi^2 gamma)) (t - T) - (1 + 1/((12 pi^2)^2 gamma)))
                 * sin(2 pi x1) sin(2 pi x2)
    y_target   = sin(2 pi x1) sin(2 pi x2)
    y_init     = (1 - T)/(12 pi^2 gamma) * sign(sin(2 pi x1)) * sin(2 pi x2)^2

The 1-D isolated-boundary problem samples at cell centres ``(j + 1/2)/m``
and uses the Gaussian ``exp(-100 (x - 1/2)^2)`` for every data field.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .allatonce import (
    ControlProblem,
    Objective,
    StackedState,
    apply_operator,
    assemble_rhs,
    reconstruct_control,
    rescale_adjoint,
)
from .krylov import GmresConfig, gmres
from .precond import DEFAULT_ALPHA, make_preconditioner
from .spatial import build_advdiff_2d_periodic, build_laplacian_1d_isolated, build_laplacian_2d_periodic
from .spectra import mode_thetas

__all__ = [
    "EQUATIONS",
    "RunConfig",
    "SweepSpec",
    "SolveRecord",
    "SOLVE_COLUMNS",
    "SPECTRUM_COLUMNS",
    "NOT_CONVERGED",
    "build_operator",
    "build_problem",
    "solve_problem",
    "run_solve",
    "run_sweep",
    "run_spectrum",
    "sweep_rows",
]

log = logging.getLogger(__name__)

EQUATIONS = ("diffusion1d", "diffusion2d", "advdiff2d")
SCALE_MODES = ("horizon", "timestep")
SWEEP_COLUMNS = ("T_ref", "gamma", "d")
DESK_MAX_L = 300
NOT_CONVERGED = "inf-iters"

SOLVE_COLUMNS = (
    "objective", "equation", "L", "M", "T", "tau", "gamma", "d", "alpha",
    "iterations", "converged", "final_relres_precond", "final_relres_true", "wall_ms",
)
SPECTRUM_COLUMNS = (
    "sigma_hat", "gamma_hat", "phi", "psi",
    "theta1_re", "theta1_im", "theta2_re", "theta2_im", "in_semidisk",
)


@dataclass(frozen=True)
class RunConfig:
    """One experiment.  ``T`` overrides the horizon; by default ``T = T_ref``."""

    objective: str = "tracking"
    equation: str = "diffusion2d"
    m: int = 32
    L: int = 30
    T_ref: float = 2.0
    gamma: float = 0.05
    d: float = 0.1
    alpha: complex | None = None
    rel_tol: float = 1e-6
    max_iter: int = 25
    scale_mode: str = "horizon"
    T: float | None = None
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective).value)
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}; choose from {EQUATIONS}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"unknown scale mode {self.scale_mode!r}")
        for name in ("T_ref", "gamma", "d", "rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def horizon(self) -> float:
        return self.T_ref if self.T is None else self.T

    @property
    def alpha_used(self) -> complex:
        a = DEFAULT_ALPHA[Objective(self.objective)] if self.alpha is None else self.alpha
        return complex(a)


@dataclass(frozen=True)
class SweepSpec:
    """Rows: ``L`` values.  Columns: values of one parameter of ``base``."""

    base: RunConfig
    L_values: tuple = (30, 100, 300)
    column: str = "T_ref"
    values: tuple = (2.0,)
    allow_large: bool = False

    def __post_init__(self):
        column = "T_ref" if self.column == "T" else self.column
        object.__setattr__(self, "column", column)
        if column not in SWEEP_COLUMNS:
            raise ValueError(f"sweep column must be one of {SWEEP_COLUMNS} (or T)")
        if not self.L_values or not self.values:
            raise ValueError("sweep needs at least one L and one value")
        if any(not v > 0 for v in self.values) or any(int(l) != l or l < 2 for l in self.L_values):
            raise ValueError("sweep values must be positive and L values integers >= 2")
        if max(self.L_values) > DESK_MAX_L:
            if not self.allow_large:
                raise ValueError(f"L above {DESK_MAX_L} needs allow_large")
            warnings.warn(f"L up to {max(self.L_values)}: expect long runtimes", RuntimeWarning, stacklevel=2)

    def cell_config(self, L, value) -> RunConfig:
        cfg = replace(self.base, L=int(L), **{self.column: float(value)})
        if cfg.scale_mode == "horizon":
            tau = cfg.T_ref / min(self.L_values)
            return replace(cfg, T=L * tau)
        return replace(cfg, T=cfg.T_ref)


def build_operator(equation: str, m: int, d: float = 0.1):
    if equation == "diffusion1d":
        return build_laplacian_1d_isolated(m)
    if equation == "diffusion2d":
        return build_laplacian_2d_periodic(m)
    if equation == "advdiff2d":
        return build_advdiff_2d_periodic(m, d)
    raise ValueError(f"unknown equation {equation!r}")


def _clean(v, tol=1e-12):
    # sin(pi) etc. evaluate to ~1e-16; treat them as the exact zeros they stand for
    v = np.array(v)
    v[np.abs(v) < tol] = 0.0
    return v


def _data_2d(m, gamma, T, L, tau):
    x = np.arange(m) / m
    s1 = _clean(np.sin(2 * np.pi * x))
    s2 = _clean(np.sin(2 * np.pi * x))
    shape = np.outer(s1, s2).ravel()
    c = 12 * np.pi**2
    t = tau * np.arange(1, L)
    amp = (c + 1 / (c * gamma)) * (t - T) - (1 + 1 / (c * c * gamma))
    y_d = amp[:, None] * shape[None, :]
    y_init = ((1 - T) / (c * gamma) * np.outer(np.sign(s1), s2**2)).ravel()
    return y_init, y_d, shape.copy()


def _data_1d(m, L):
    x = (np.arange(m) + 0.5) / m
    g = np.exp(-100 * (x - 0.5) ** 2)
    return g.copy(), np.tile(g, (L - 1, 1)), g.copy()


def build_problem(cfg: RunConfig) -> ControlProblem:
    K = build_operator(cfg.equation, cfg.m, cfg.d)
    T, L = cfg.horizon, cfg.L
    if cfg.equation == "diffusion1d":
        y_init, y_d, y_target = _data_1d(cfg.m, L)
    else:
        y_init, y_d, y_target = _data_2d(cfg.m, cfg.gamma, T, L, T / L)
    if cfg.objective == Objective.TRACKING.value:
        return ControlProblem(Objective.TRACKING, K, cfg.gamma, T, L, y_init, y_d=y_d)
    return ControlProblem(Objective.TERMINAL, K, cfg.gamma, T, L, y_init, y_target=y_target)


@dataclass
class SolveRecord:
    objective: str
    equation: str
    L: int
    M: int
    T: float
    tau: float
    gamma: float
    d: float
    alpha: complex
    iterations: int
    converged: bool
    final_relres_precond: float
    final_relres_true: float
    wall_ms: float
    state: StackedState | None = None  # unscaled y and lam
    control: np.ndarray | None = None
    residual_history: list | None = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SOLVE_COLUMNS}


def solve_problem(p: ControlProblem, alpha=None, gmres_cfg: GmresConfig | None = None, workers: int = 1):
    """Solve the all-at-once system of ``p`` with preconditioned GMRES.

    Returns ``(state, control, outcome, true_relres)``; ``state`` carries the
    unscaled adjoint.  The true residual is measured on the system GMRES
    iterates on (the rescaled one for tracking).
    """
    pre = make_preconditioner(p, alpha, workers)
    b_state = assemble_rhs(p)
    b = b_state.to_vector()
    rescaled = b_state.rescaled
    n, m = p.n_steps, p.M

    def apply_A(v):
        return apply_operator(p, StackedState.from_vector(v, n, m, rescaled)).to_vector()

    out = gmres(apply_A, pre, b, gmres_cfg)
    x = out.solution
    bnorm = np.linalg.norm(b)
    true_res = float(np.linalg.norm(b - apply_A(x)) / bnorm) if bnorm > 0 else 0.0
    sol = StackedState.from_vector(x, n, m, rescaled)
    if rescaled:
        sol = rescale_adjoint(sol, p.gamma, to_rescaled=False)
    return sol, reconstruct_control(sol.lam, p.gamma), out, true_res


def run_solve(cfg: RunConfig, keep_solution: bool = True) -> SolveRecord:
    p = build_problem(cfg)
    start = time.perf_counter()
    sol, u, out, true_res = solve_problem(
        p, cfg.alpha_used, GmresConfig(cfg.rel_tol, cfg.max_iter), cfg.workers
    )
    wall = 1e3 * (time.perf_counter() - start)
    log.info("%s %s L=%d: %d iterations, converged=%s", cfg.objective, cfg.equation, cfg.L, out.iterations, out.converged)
    return SolveRecord(
        cfg.objective, cfg.equation, p.L, p.M, p.T, p.tau, p.gamma, cfg.d, cfg.alpha_used,
        out.iterations, out.converged, out.final_residual, true_res, wall,
        sol if keep_solution else None, u if keep_solution else None, out.residual_history,
    )


def run_sweep(spec: SweepSpec, workers: int = 1):
    """Iteration-count table; returns ``(header_comment, columns, rows, records)``.

    Cells hold the iteration count or ``NOT_CONVERGED``; the trailing
    ``converged`` column is false when any cell of the row failed.
    """
    cells = [(i, j, L, v) for i, L in enumerate(spec.L_values) for j, v in enumerate(spec.values)]

    def one(cell):
        i, j, L, v = cell
        cfg = spec.cell_config(L, v)
        try:
            return run_solve(cfg, keep_solution=False)
        except (ArithmeticError, ValueError) as exc:
            log.warning("sweep cell L=%s %s=%s failed: %s", L, spec.column, v, exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, cells))
    else:
        results = [one(c) for c in cells]
    records = {(c[0], c[1]): r for c, r in zip(cells, results)}

    base = spec.base
    if base.scale_mode == "horizon":
        regime = f"regime=horizon tau=T_ref/{min(spec.L_values)} T=L*tau"
    else:
        regime = "regime=timestep T=T_ref tau=T/L"
    fixed = {k: v for k, v in asdict(base).items() if k not in ("L", "T", "out", "workers", spec.column, "scale_mode")}
    fixed["alpha"] = base.alpha_used
    header = "# " + regime + f" column={spec.column} " + " ".join(f"{k}={_fmt(v)}" for k, v in fixed.items())
    columns = ["L"] + [_fmt(v) for v in spec.values] + ["converged"]
    rows = []
    for i, L in enumerate(spec.L_values):
        row = [str(int(L))]
        ok = True
        for j in range(len(spec.values)):
            r = records[(i, j)]
            if r is None or not r.converged:
                row.append(NOT_CONVERGED)
                ok = False
            else:
                row.append(str(r.iterations))
        row.append("true" if ok else "false")
        rows.append(row)
    return header, columns, rows, records


def sweep_rows(spec: SweepSpec, workers: int = 1):
    """Iteration counts as ``{L: [count or None, ...]}`` (``None`` = not converged)."""
    _, _, rows, _ = run_sweep(spec, workers)
    return {int(r[0]): [None if c == NOT_CONVERGED else int(c) for c in r[1:-1]] for r in rows}


def run_spectrum(cfg: RunConfig, sigmas=None):
    """Analytic ``(theta1, theta2)`` per spatial mode; rows follow ``SPECTRUM_COLUMNS``."""
    K = build_operator(cfg.equation, cfg.m, cfg.d)
    if sigmas is None:
        if not K.self_adjoint or K.eigenvalues() is None:
            raise ValueError(f"{cfg.equation}: no closed-form real spectrum, supply the eigenvalues")
        sigmas = K.eigenvalues().real
    T = cfg.horizon
    report = mode_thetas(sigmas, T / cfg.L, cfg.gamma, cfg.alpha_used, cfg.L, cfg.objective)
    rows = []
    for r in report.records:
        rows.append(
            [r.sigma_hat, r.gamma_hat, r.phi, r.psi, r.theta1.real, r.theta1.imag,
             r.theta2.real, r.theta2.imag, r.in_semidisk]
        )
    return report, rows


def _fmt(v) -> str:
    """Deterministic text form for CSV cells."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        if v.imag == 0:
            return _fmt(v.real)
        return f"{_fmt(v.real)}{'+' if v.imag >= 0 else '-'}{_fmt(abs(v.imag))}j"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"
        if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return format(v, ".12g")
    return "" if v is None else str(v)
