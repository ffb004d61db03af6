"""Left-preconditioned full GMRES.

Solves ``P^{-1} A x = P^{-1} b`` from ``x0 = 0`` with Arnoldi (classical
Gram-Schmidt, applied twice) and Givens rotations.  The stopping test uses
the preconditioned relative residual ``||P^{-1}(b - A x_k)|| / ||P^{-1} b||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = ["GmresConfig", "KrylovOutcome", "gmres"]


@dataclass(frozen=True)
class GmresConfig:
    rel_tol: float = 1e-6
    max_iter: int = 25

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class KrylovOutcome:
    solution: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    breakdown: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _givens(a, b):
    """``(c, s, r)`` with ``[[c, s], [-conj(s), c]] @ [a, b] = [r, 0]``, ``c`` real."""
    if b == 0:
        return 1.0, 0.0, a
    if a == 0:
        return 0.0, 1.0, b
    r = np.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s, (a / abs(a)) * r


def gmres(
    apply_A: Callable[[np.ndarray], np.ndarray],
    apply_Pinv: Callable[[np.ndarray], np.ndarray],
    b,
    cfg: GmresConfig | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> KrylovOutcome:
    """Left-preconditioned GMRES without restarts.

    ``callback(k, x_k)`` is called after every iteration with the current
    iterate (formed only when a callback is given).  Arithmetic stays real
    as long as ``b`` and both callbacks return real arrays.
    """
    cfg = cfg or GmresConfig()
    b = np.asarray(b)
    if b.ndim != 1:
        raise ValueError("b must be a vector")
    if not np.all(np.isfinite(b)):
        raise ValueError("b has non-finite entries")
    n = b.shape[0]

    def op(v):
        out = apply_Pinv(apply_A(v))
        if out.shape != (n,):
            raise ValueError(f"operator returned shape {out.shape}, expected ({n},)")
        if not np.all(np.isfinite(out)):
            raise ArithmeticError("non-finite value in preconditioned operator")
        return out

    r0 = np.asarray(apply_Pinv(b))
    if r0.shape != (n,):
        raise ValueError(f"preconditioner returned shape {r0.shape}, expected ({n},)")
    beta = float(np.linalg.norm(r0))
    if not np.isfinite(beta):
        raise ArithmeticError("non-finite preconditioned right-hand side")
    dtype = np.result_type(r0.dtype, float)
    if beta == 0.0:
        return KrylovOutcome(np.zeros(n, dtype=dtype), 0, [0.0], True)

    kmax = int(min(cfg.max_iter, n))
    V = np.zeros((kmax + 1, n), dtype=dtype)  # Krylov basis, one vector per row
    H = np.zeros((kmax + 1, kmax), dtype=dtype)
    cs = np.zeros(kmax)
    sn = np.zeros(kmax, dtype=dtype)
    g = np.zeros(kmax + 1, dtype=dtype)
    g[0] = beta
    V[0] = r0 / beta
    history = [1.0]
    breakdown = False
    k = 0

    def iterate(k):
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k])
        return y @ V[:k]

    while k < kmax:
        w = op(V[k])
        if np.iscomplexobj(w) and not np.iscomplexobj(V):
            V, H, sn, g = (a.astype(complex) for a in (V, H, sn, g))
        wnorm0 = np.linalg.norm(w)
        # CGS2: two passes keep the basis orthogonal to working precision
        h = V[: k + 1].conj() @ w
        w = w - h @ V[: k + 1]
        h2 = V[: k + 1].conj() @ w
        w = w - h2 @ V[: k + 1]
        h = h + h2
        hnext = float(np.linalg.norm(w))
        H[: k + 1, k] = h
        H[k + 1, k] = hnext
        for i in range(k):
            a, c = H[i, k], H[i + 1, k]
            H[i, k] = cs[i] * a + sn[i] * c
            H[i + 1, k] = -np.conj(sn[i]) * a + cs[i] * c
        cs[k], sn[k], H[k, k] = _givens(H[k, k], H[k + 1, k])
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        res = float(abs(g[k])) / beta
        history.append(res)
        if callback is not None:
            callback(k, iterate(k))
        if res <= cfg.rel_tol:
            break
        if hnext <= 1e-14 * max(wnorm0, np.finfo(float).tiny):
            # invariant subspace: the current iterate is the exact solution
            breakdown = True
            break
        V[k] = w / hnext

    x = iterate(k)
    return KrylovOutcome(x, k, history, history[-1] <= cfg.rel_tol, breakdown)
