"""Alpha-circulant ParaDiag preconditioners.

The alpha-circulant difference matrix ``C(alpha)`` equals ``B`` plus the
corner entry ``-alpha`` in its top-right position.  It factors as
``C = Gamma^{-1} F^* D F Gamma`` with ``F`` the unitary Fourier matrix
(positive exponent), ``Gamma = diag(alpha^{k/n})`` (principal branch) and
``D_j = 1 - alpha^{1/n} exp(2 pi i j/n)``.

In numpy terms ``F x = sqrt(n) ifft(x)`` and ``F^* x = fft(x)/sqrt(n)``;
the ``sqrt(n)`` factors cancel in ``F^* (...) F`` so the code below uses the
plain ``ifft``/``fft`` pair along the time axis.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .allatonce import ControlProblem, Objective, StackedState
from .numkit import SingularMatrixError
from .spatial import DenseOperator

__all__ = [
    "AlphaCirculantSpec",
    "alpha_circulant_spec",
    "alpha_circulant_matrix",
    "TrackingPreconditioner",
    "TerminalPreconditioner",
    "make_preconditioner",
    "apply_tracking_precond",
    "apply_terminal_precond",
    "dense_tracking_precond",
    "dense_terminal_precond",
    "DEFAULT_ALPHA",
]

DEFAULT_ALPHA = {Objective.TRACKING: -1.0, Objective.TERMINAL: 1e-4}
UNIT_TOL = 1e-14
REAL_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class AlphaCirculantSpec:
    """Diagonalization data of ``C(alpha)`` of order ``n``."""

    alpha: complex
    n: int
    weights: np.ndarray  # diagonal of Gamma_alpha
    eigs: np.ndarray  # diagonal of D(alpha)

    @property
    def unit_modulus(self) -> bool:
        return abs(abs(self.alpha) - 1.0) <= UNIT_TOL

    @property
    def is_real(self) -> bool:
        return complex(self.alpha).imag == 0.0


def alpha_circulant_matrix(alpha, n: int) -> np.ndarray:
    """Dense ``C(alpha)``: ones on the diagonal, ``-1`` below, ``-alpha`` in the corner."""
    if n < 1:
        raise ValueError("order must be positive")
    dtype = float if complex(alpha).imag == 0 else complex
    alpha = complex(alpha).real if dtype is float else complex(alpha)
    c = np.eye(n, dtype=dtype) - np.eye(n, k=-1, dtype=dtype)
    c[0, n - 1] -= alpha
    return c


def alpha_circulant_spec(alpha, n: int) -> AlphaCirculantSpec:
    """Weights and eigenvalues of ``C(alpha)``.

    The eigenvalues come from the closed form and are cross-checked against
    the DFT of ``Gamma c1``, ``c1`` being the first column of ``C(alpha)``.
    """
    alpha = complex(alpha)
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    if n < 1:
        raise ValueError("order must be positive")
    root = cmath.exp(cmath.log(alpha) / n)  # principal n-th root
    k = np.arange(n)
    weights = np.exp(k * cmath.log(alpha) / n)
    eigs = 1.0 - root * np.exp(2j * np.pi * k / n)
    c1 = alpha_circulant_matrix(alpha, n)[:, 0]
    via_dft = n * np.fft.ifft(weights * c1)  # sqrt(n) F (Gamma c1)
    if not np.allclose(via_dft, eigs, rtol=0, atol=1e-12 * max(1.0, abs(alpha))):
        raise ArithmeticError("alpha-circulant eigenvalues inconsistent with the DFT")
    return AlphaCirculantSpec(alpha, n, weights, eigs)


def _truncate_real(arr, label):
    im = np.max(np.abs(arr.imag), initial=0.0)
    re = np.max(np.abs(arr.real), initial=0.0)
    if im > REAL_RTOL * max(re, np.finfo(float).tiny) and im > 1e-300:
        raise ArithmeticError(f"{label}: imaginary residue {im:.3g} relative to {re:.3g}")
    return np.ascontiguousarray(arr.real)


class _Base:
    objective: Objective

    def __init__(self, problem: ControlProblem, alpha=None, workers: int = 1):
        if problem.objective is not self.objective:
            raise ValueError(f"{type(self).__name__} needs a {self.objective.value} problem")
        if alpha is None:
            alpha = DEFAULT_ALPHA[self.objective]
        self.problem = problem
        self.spec = alpha_circulant_spec(alpha, problem.n_steps)
        self.workers = max(1, int(workers))
        self._dense = isinstance(problem.K, DenseOperator)

    @property
    def alpha(self):
        return self.spec.alpha

    def _per_index(self, fn, n):
        """Run ``fn(j)`` for every time frequency; independent, so optionally threaded."""
        if self.workers == 1 or n == 1:
            return [fn(j) for j in range(n)]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, range(n)))

    def _real_in_real_out(self, *arrays):
        return self.spec.is_real and self.problem.K.real and all(np.isrealobj(a) for a in arrays)

    def __call__(self, vec):
        """Apply to a flat vector ``[v; w]`` (GMRES callback form)."""
        p = self.problem
        x = StackedState.from_vector(vec, p.n_steps, p.M)
        xs, zs = self.apply(x.y, x.lam)
        return np.concatenate([xs.ravel(), zs.ravel()])

    def apply(self, v, w):
        raise NotImplementedError


class TrackingPreconditioner(_Base):
    """Inverse of the tracking preconditioner ``P(alpha)``, ``|alpha| = 1``.

    Transform both stacks with ``F Gamma`` along time, solve one coupled
    ``2M x 2M`` block per time frequency, transform back with
    ``Gamma^{-1} F^*``.  Works for non-self-adjoint ``K``.
    """

    objective = Objective.TRACKING

    def __init__(self, problem, alpha=None, workers=1):
        super().__init__(problem, alpha, workers)
        if not self.spec.unit_modulus:
            raise ValueError(f"tracking preconditioner needs |alpha| = 1, got |alpha| = {abs(self.spec.alpha)}")
        self.coupling = problem.coupling
        if self._dense:
            problem.K.prepare_coupled(self.spec.eigs, problem.tau, self.coupling)

    def apply(self, v, w):
        p, spec = self.problem, self.spec
        v = np.asarray(v)
        w = np.asarray(w)
        want = (p.n_steps, p.M)
        if v.shape != want or w.shape != want:
            raise ValueError(f"stacks must have shape {want}")
        gam = spec.weights[:, None]
        r1 = np.fft.ifft(gam * v, axis=0)
        s1 = np.fft.ifft(gam * w, axis=0)
        if self._dense:

            def solve(j):
                try:
                    return p.K.coupled_block_solve(spec.eigs[j], p.tau, self.coupling, r1[j], s1[j])
                except SingularMatrixError as exc:
                    raise SingularMatrixError(f"time frequency {j}: {exc}", index=j) from None

            parts = self._per_index(solve, p.n_steps)
            r2 = np.stack([a for a, _ in parts])
            s2 = np.stack([b for _, b in parts])
        else:
            try:
                r2, s2 = p.K.coupled_block_solve(spec.eigs, p.tau, self.coupling, r1, s1)
            except SingularMatrixError:
                raise SingularMatrixError(
                    f"time frequency {self._offending_index()}: coupled block singular",
                    index=self._offending_index(),
                ) from None
        x = np.fft.fft(r2, axis=0) / gam
        z = np.fft.fft(s2, axis=0) / gam
        if self._real_in_real_out(v, w):
            x = _truncate_real(x, "tracking preconditioner")
            z = _truncate_real(z, "tracking preconditioner")
        return x, z

    def _offending_index(self):
        k = self.problem.K.symbol
        for j, d in enumerate(self.spec.eigs):
            a = d + self.problem.tau * k
            if np.min(np.abs(a) ** 2 + self.coupling**2) == 0:
                return j
        return None


class TerminalPreconditioner(_Base):
    """Inverse of the block upper-triangular terminal-cost preconditioner.

    Phase 1 solves the adjoint block ``C^*(alpha) (x) I + tau I (x) K^*``,
    phase 2 the state block with the updated right-hand side.
    """

    objective = Objective.TERMINAL

    def __init__(self, problem, alpha=None, workers=1):
        super().__init__(problem, alpha, workers)
        if self._dense:
            problem.K.prepare_shifted(self.spec.eigs.conj(), problem.tau, adjoint=True)
            problem.K.prepare_shifted(self.spec.eigs, problem.tau, adjoint=False)

    def _solve_shifted(self, shifts, rhs, adjoint):
        p = self.problem
        if self._dense:

            def solve(j):
                try:
                    return p.K.shifted_solve(shifts[j], p.tau, rhs[j], adjoint=adjoint)
                except SingularMatrixError as exc:
                    raise SingularMatrixError(f"time frequency {j}: {exc}", index=j) from None

            return np.stack(self._per_index(solve, p.n_steps))
        try:
            return p.K.shifted_solve(shifts, p.tau, rhs, adjoint=adjoint)
        except SingularMatrixError:
            sym = p.K.symbol.conj() if adjoint else p.K.symbol
            bad = next(j for j, s in enumerate(shifts) if np.min(np.abs(s + p.tau * sym)) < 1e-14 * max(np.max(np.abs(s + p.tau * sym)), 1.0))
            raise SingularMatrixError(f"time frequency {bad}: shifted block singular (choose alpha != 1?)", index=bad) from None

    def apply(self, v, w):
        p, spec = self.problem, self.spec
        v = np.asarray(v)
        w = np.asarray(w)
        want = (p.n_steps, p.M)
        if v.shape != want or w.shape != want:
            raise ValueError(f"stacks must have shape {want}")
        gam = spec.weights[:, None]
        gam_c = gam.conj()
        # phase 1: adjoint block, Gamma^{-*} in, Gamma^* out
        s1 = np.fft.ifft(w / gam_c, axis=0)
        s2 = self._solve_shifted(spec.eigs.conj(), s1, adjoint=True)
        z = gam_c * np.fft.fft(s2, axis=0)
        # phase 2: state block
        r1 = v - (p.tau / p.gamma) * z
        r2 = np.fft.ifft(gam * r1, axis=0)
        r3 = self._solve_shifted(spec.eigs, r2, adjoint=False)
        x = np.fft.fft(r3, axis=0) / gam
        if self._real_in_real_out(v, w):
            x = _truncate_real(x, "terminal preconditioner")
            z = _truncate_real(z, "terminal preconditioner")
        return x, z


def make_preconditioner(problem: ControlProblem, alpha=None, workers: int = 1):
    if problem.objective is Objective.TRACKING:
        return TrackingPreconditioner(problem, alpha, workers)
    return TerminalPreconditioner(problem, alpha, workers)


def apply_tracking_precond(p: ControlProblem, spec: AlphaCirculantSpec, v, w):
    """Functional form of :meth:`TrackingPreconditioner.apply`."""
    return TrackingPreconditioner(p, spec.alpha).apply(v, w)


def apply_terminal_precond(p: ControlProblem, spec: AlphaCirculantSpec, v, w):
    """Functional form of :meth:`TerminalPreconditioner.apply`."""
    return TerminalPreconditioner(p, spec.alpha).apply(v, w)


def dense_tracking_precond(p: ControlProblem, alpha) -> np.ndarray:
    """Explicit tracking ``P(alpha)`` (rescaled coupling ``tau/sqrt(gamma)``)."""
    n, m = p.n_steps, p.M
    c = alpha_circulant_matrix(alpha, n)
    k = p.K.to_dense()
    g = p.tau / math.sqrt(p.gamma)
    i_n, i_m = np.eye(n), np.eye(m)
    return np.block(
        [
            [np.kron(c, i_m) + p.tau * np.kron(i_n, k), g * np.eye(n * m)],
            [-g * np.eye(n * m), np.kron(c.conj().T, i_m) + p.tau * np.kron(i_n, k.conj().T)],
        ]
    )


def dense_terminal_precond(p: ControlProblem, alpha) -> np.ndarray:
    """Explicit block upper-triangular terminal-cost ``P(alpha)``."""
    n, m = p.n_steps, p.M
    c = alpha_circulant_matrix(alpha, n)
    k = p.K.to_dense()
    i_n, i_m = np.eye(n), np.eye(m)
    return np.block(
        [
            [np.kron(c, i_m) + p.tau * np.kron(i_n, k), (p.tau / p.gamma) * np.eye(n * m)],
            [np.zeros((n * m, n * m)), np.kron(c.conj().T, i_m) + p.tau * np.kron(i_n, k.conj().T)],
        ]
    )
