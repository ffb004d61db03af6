"""All-at-once systems of the implicit-Euler optimality conditions.

Unknowns are stored time-major as arrays of shape ``(n, M)``: row ``l`` is
the spatial vector at time index ``l``.  For the tracking objective the
stacks hold ``l = 1..L-1`` (``n = L - 1``); for terminal cost they hold
``l = 1..L`` (``n = L``).

Tracking (``g = tau/sqrt(gamma)`` after rescaling ``lam_hat = lam/sqrt(gamma)``)::

    [ B (x) I + tau I (x) K      g I                       ] [y      ]   [b1    ]
    [ -g I                       B^T (x) I + tau I (x) K^* ] [lam_hat] = [b2_hat]

Terminal cost::

    [ B (x) I + tau I (x) K      (tau/gamma) I             ] [y  ]   [b1]
    [ -E (x) (I + tau K^*)       B^T (x) I + tau I (x) K^* ] [lam] = [b2]

``B`` is the lower bidiagonal ``(-1, 1)`` matrix and ``E`` selects the last
time index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .spatial import SpatialOperator

__all__ = [
    "Objective",
    "TimeScheme",
    "ControlProblem",
    "StackedState",
    "assemble_tracking_rhs",
    "assemble_terminal_rhs",
    "apply_tracking_operator",
    "apply_terminal_operator",
    "apply_operator",
    "assemble_rhs",
    "rescale_adjoint",
    "reconstruct_control",
    "dense_tracking_matrix",
    "dense_terminal_matrix",
]


class Objective(str, Enum):
    TRACKING = "tracking"
    TERMINAL = "terminal"


class TimeScheme(str, Enum):
    """Time discretization; only implicit Euler (top-left entry of B equal to 1) exists."""

    IMPLICIT_EULER = "implicit_euler"


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """A discretized linear-quadratic control problem.

    ``y_d`` holds the target trajectory sampled at ``t = l*tau`` for
    ``l = 1..L-1`` (shape ``(L-1, M)``); ``y_target`` is the terminal target.
    Only the field matching ``objective`` is required.
    """

    objective: Objective
    K: SpatialOperator
    gamma: float
    T: float
    L: int
    y_init: np.ndarray
    y_d: np.ndarray | None = None
    y_target: np.ndarray | None = None
    scheme: TimeScheme = TimeScheme.IMPLICIT_EULER

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "scheme", TimeScheme(self.scheme))
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError("need L >= 2 time steps")
        object.__setattr__(self, "L", int(self.L))
        y0 = np.asarray(self.y_init, dtype=float)
        if y0.shape != (self.M,):
            raise ValueError(f"y_init must have shape ({self.M},), got {y0.shape}")
        object.__setattr__(self, "y_init", y0)
        if self.y_d is not None:
            yd = np.asarray(self.y_d, dtype=float)
            if yd.shape != (self.L - 1, self.M):
                raise ValueError(f"y_d must have shape ({self.L - 1}, {self.M}), got {yd.shape}")
            object.__setattr__(self, "y_d", yd)
        if self.y_target is not None:
            yt = np.asarray(self.y_target, dtype=float)
            if yt.shape != (self.M,):
                raise ValueError(f"y_target must have shape ({self.M},), got {yt.shape}")
            object.__setattr__(self, "y_target", yt)

    @property
    def M(self) -> int:
        return self.K.size

    @property
    def tau(self) -> float:
        return self.T / self.L

    @property
    def n_steps(self) -> int:
        """Number of stacked time indices."""
        return self.L - 1 if self.objective is Objective.TRACKING else self.L

    @property
    def coupling(self) -> float:
        """Off-diagonal weight of the (rescaled) system: ``tau/sqrt(gamma)`` or ``tau/gamma``."""
        if self.objective is Objective.TRACKING:
            return self.tau / math.sqrt(self.gamma)
        return self.tau / self.gamma


@dataclass
class StackedState:
    """State and adjoint stacks, each of shape ``(n, M)``."""

    y: np.ndarray
    lam: np.ndarray
    rescaled: bool = False

    @property
    def shape(self):
        return self.y.shape

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.y.ravel(), self.lam.ravel()])

    @classmethod
    def from_vector(cls, vec, n, m, rescaled=False):
        vec = np.asarray(vec)
        if vec.shape != (2 * n * m,):
            raise ValueError(f"vector of length {vec.shape} does not hold 2 x {n} x {m} unknowns")
        return cls(vec[: n * m].reshape(n, m), vec[n * m :].reshape(n, m), rescaled)

    @classmethod
    def zeros(cls, n, m, rescaled=False):
        return cls(np.zeros((n, m)), np.zeros((n, m)), rescaled)


def _b_apply(y):
    """``(B (x) I) y`` with ``B`` lower bidiagonal ``(-1, 1)``."""
    out = y.copy()
    out[1:] -= y[:-1]
    return out


def _bt_apply(lam):
    out = lam.copy()
    out[:-1] -= lam[1:]
    return out


def _check_stack(p: ControlProblem, x: StackedState):
    want = (p.n_steps, p.M)
    if x.y.shape != want or x.lam.shape != want:
        raise ValueError(f"stacks must have shape {want}, got {x.y.shape} and {x.lam.shape}")


def assemble_tracking_rhs(p: ControlProblem):
    """Return ``(b1, b2_hat)`` of the rescaled tracking system."""
    if p.objective is not Objective.TRACKING:
        raise ValueError("problem does not have a tracking objective")
    if p.y_d is None:
        raise ValueError("tracking problem needs a target trajectory y_d")
    b1 = np.zeros((p.n_steps, p.M))
    b1[0] = p.y_init
    b2_hat = -p.tau * p.y_d / math.sqrt(p.gamma)
    return b1, b2_hat


def assemble_terminal_rhs(p: ControlProblem) -> StackedState:
    """Right-hand side ``[y_init, 0, ..., 0 | 0, ..., 0, -(I + tau K^*) y_target]``."""
    if p.objective is not Objective.TERMINAL:
        raise ValueError("problem does not have a terminal-cost objective")
    if p.y_target is None:
        raise ValueError("terminal-cost problem needs y_target")
    b = StackedState.zeros(p.n_steps, p.M)
    b.y[0] = p.y_init
    b.lam[-1] = -(p.y_target + p.tau * p.K.apply(p.y_target, adjoint=True))
    return b


def assemble_rhs(p: ControlProblem) -> StackedState:
    """Right-hand side of the system the solver iterates on (rescaled for tracking)."""
    if p.objective is Objective.TRACKING:
        b1, b2 = assemble_tracking_rhs(p)
        return StackedState(b1, b2, rescaled=True)
    return assemble_terminal_rhs(p)


def apply_tracking_operator(p: ControlProblem, x: StackedState) -> StackedState:
    """Matrix-free product with the tracking all-at-once matrix.

    Uses the rescaled matrix when ``x.rescaled`` and the original one
    (coupling ``tau/gamma`` above, ``-tau`` below) otherwise.
    """
    if p.objective is not Objective.TRACKING:
        raise ValueError("problem does not have a tracking objective")
    _check_stack(p, x)
    tau = p.tau
    if x.rescaled:
        upper = lower = tau / math.sqrt(p.gamma)
    else:
        upper, lower = tau / p.gamma, tau
    ky = p.K.apply(x.y)
    kl = p.K.apply(x.lam, adjoint=True)
    top = _b_apply(x.y) + tau * ky + upper * x.lam
    bottom = -lower * x.y + _bt_apply(x.lam) + tau * kl
    return StackedState(top, bottom, x.rescaled)


def apply_terminal_operator(p: ControlProblem, x: StackedState) -> StackedState:
    """Matrix-free product with the terminal-cost all-at-once matrix."""
    if p.objective is not Objective.TERMINAL:
        raise ValueError("problem does not have a terminal-cost objective")
    _check_stack(p, x)
    tau = p.tau
    top = _b_apply(x.y) + tau * p.K.apply(x.y) + (tau / p.gamma) * x.lam
    bottom = _bt_apply(x.lam) + tau * p.K.apply(x.lam, adjoint=True)
    y_last = x.y[-1]
    bottom[-1] -= y_last + tau * p.K.apply(y_last, adjoint=True)
    return StackedState(top, bottom, False)


def apply_operator(p: ControlProblem, x: StackedState) -> StackedState:
    if p.objective is Objective.TRACKING:
        return apply_tracking_operator(p, x)
    return apply_terminal_operator(p, x)


def rescale_adjoint(x: StackedState, gamma: float, to_rescaled: bool, objective=Objective.TRACKING) -> StackedState:
    """Switch the adjoint stack between ``lam`` and ``lam_hat = lam/sqrt(gamma)``.

    Only the tracking system is rescaled; passing the terminal objective raises.
    """
    if Objective(objective) is not Objective.TRACKING:
        raise ValueError("the terminal-cost system is solved unscaled")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if to_rescaled == x.rescaled:
        raise ValueError(f"state is already {'rescaled' if x.rescaled else 'unscaled'}")
    factor = 1.0 / math.sqrt(gamma) if to_rescaled else math.sqrt(gamma)
    return replace(x, lam=x.lam * factor, rescaled=to_rescaled)


def reconstruct_control(lam, gamma: float) -> np.ndarray:
    """Control ``u = -lam/gamma`` from the unscaled adjoint."""
    return -np.asarray(lam) / gamma


def _bidiag(n):
    return np.eye(n) - np.eye(n, k=-1)


def dense_tracking_matrix(p: ControlProblem, rescaled: bool = True) -> np.ndarray:
    """Assemble the tracking all-at-once matrix explicitly (for small checks)."""
    n, m = p.n_steps, p.M
    k = p.K.to_dense()
    b = _bidiag(n)
    i_n, i_m = np.eye(n), np.eye(m)
    if rescaled:
        upper = lower = p.tau / math.sqrt(p.gamma)
    else:
        upper, lower = p.tau / p.gamma, p.tau
    return np.block(
        [
            [np.kron(b, i_m) + p.tau * np.kron(i_n, k), upper * np.eye(n * m)],
            [-lower * np.eye(n * m), np.kron(b.T, i_m) + p.tau * np.kron(i_n, k.conj().T)],
        ]
    )


def dense_terminal_matrix(p: ControlProblem) -> np.ndarray:
    """Assemble the terminal-cost all-at-once matrix explicitly."""
    n, m = p.n_steps, p.M
    k = p.K.to_dense()
    b = _bidiag(n)
    i_n, i_m = np.eye(n), np.eye(m)
    e = np.zeros((n, n))
    e[-1, -1] = 1.0
    kh = k.conj().T
    return np.block(
        [
            [np.kron(b, i_m) + p.tau * np.kron(i_n, k), (p.tau / p.gamma) * np.eye(n * m)],
            [-np.kron(e, i_m) - p.tau * np.kron(e, kh), np.kron(b.T, i_m) + p.tau * np.kron(i_n, kh)],
        ]
    )
