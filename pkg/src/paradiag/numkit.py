"""Small numerical kernels shared by the rest of the package.

The discrete Fourier transform follows numpy's convention: the forward
transform uses the negative exponent and no scaling, the inverse uses the
positive exponent and a factor ``1/n``.  Callers that need the unitary
Fourier matrix with positive exponent convert explicitly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError",
    "RankConsistencyError",
    "LuFactors",
    "lu_factor",
    "lu_solve",
    "dft",
    "dft_direct",
    "eigvals_2x2",
    "rank2_eigs_from_traces",
]

PIVOT_RTOL = 1e-14


class SingularMatrixError(ArithmeticError):
    """Raised when a factorization or block solve hits a (numerically) zero pivot."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RankConsistencyError(ArithmeticError):
    """Raised when trace identities contradict the assumed rank-two structure."""


@dataclass(frozen=True)
class LuFactors:
    """Partial-pivoting LU factors as produced by LAPACK ``getrf``.

    ``lu`` holds ``L`` (unit lower, below the diagonal) and ``U`` packed
    together; ``piv`` is the LAPACK row-interchange sequence.
    """

    lu: np.ndarray
    piv: np.ndarray
    singular: bool

    @property
    def order(self) -> int:
        return self.lu.shape[0]

    def permutation(self) -> np.ndarray:
        """Return the permutation matrix ``P`` with ``P @ A = L @ U``."""
        n = self.order
        perm = np.arange(n)
        for i, p in enumerate(self.piv):
            perm[i], perm[p] = perm[p], perm[i]
        return np.eye(n)[perm]

    def unpack(self):
        """Return ``(P, L, U)``."""
        lower = np.tril(self.lu, -1) + np.eye(self.order)
        upper = np.triu(self.lu)
        return self.permutation(), lower, upper


def lu_factor(a) -> LuFactors:
    """Factor a square matrix with partial pivoting.

    The ``singular`` flag is set when a pivot falls below
    ``1e-14 * max|A|``; such factors refuse to solve.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"lu_factor needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.shape[0] == 0:
        return LuFactors(a.copy(), np.zeros(0, dtype=np.int32), False)
    with warnings.catch_warnings():
        # exactly singular input is reported through the flag instead
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    scale = np.max(np.abs(a))
    singular = bool(scale == 0.0 or np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * scale)
    return LuFactors(lu, piv, singular)


def lu_solve(factors: LuFactors, b) -> np.ndarray:
    """Solve ``A x = b`` with factors from :func:`lu_factor`.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    if factors.singular:
        raise SingularMatrixError("matrix is singular to working precision")
    b = np.asarray(b)
    if b.shape[0] != factors.order:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {factors.order}")
    return scipy.linalg.lu_solve((factors.lu, factors.piv), b, check_finite=False)


def dft(v, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """Discrete Fourier transform of any length along ``axis``.

    Forward: ``X_j = sum_k v_k exp(-2 pi i jk/n)``.
    Inverse: ``x_k = (1/n) sum_j X_j exp(+2 pi i jk/n)``.
    """
    v = np.asarray(v)
    if v.shape[axis] == 0:
        raise ValueError("cannot transform an empty axis")
    return np.fft.ifft(v, axis=axis) if inverse else np.fft.fft(v, axis=axis)


def dft_direct(v, inverse: bool = False) -> np.ndarray:
    """O(n^2) reference transform of a 1-D vector, same convention as :func:`dft`."""
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    if n == 0:
        raise ValueError("cannot transform an empty vector")
    jk = np.outer(np.arange(n), np.arange(n))
    sign = 1.0 if inverse else -1.0
    out = np.exp(sign * 2j * np.pi * jk / n) @ v
    return out / n if inverse else out


def _quadratic_roots(trace, det):
    """Roots of ``x^2 - trace*x + det``, avoiding cancellation."""
    trace = complex(trace)
    det = complex(det)
    root = np.sqrt(trace * trace - 4.0 * det)
    # pick the sign that adds magnitudes
    if (trace.conjugate() * root).real < 0:
        root = -root
    q = 0.5 * (trace + root)
    if q == 0:
        return 0j, 0j
    return q, det / q


def eigvals_2x2(m) -> tuple[complex, complex]:
    """Eigenvalues of a 2x2 matrix from its trace and determinant."""
    m = np.asarray(m)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
    return _quadratic_roots(m[0, 0] + m[1, 1], m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def rank2_eigs_from_traces(m, rtol: float = 1e-8) -> tuple[complex, complex]:
    """Non-trivial eigenvalues of a matrix known to have rank at most two.

    With power sums ``p_k = tr(M^k)`` Newton's identities give the
    elementary symmetric functions ``e1 = p1``, ``e2 = (p1^2 - p2)/2`` of the
    two possibly non-zero eigenvalues.  ``p3`` must then equal
    ``r1^3 + r2^3``; otherwise the rank assumption is violated and
    :class:`RankConsistencyError` is raised.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    m2 = m @ m
    p1 = np.trace(m)
    p2 = np.trace(m2)
    p3 = np.sum(m2 * m.T)  # tr(M^2 M) without forming M^3
    r1, r2 = _quadratic_roots(p1, 0.5 * (p1 * p1 - p2))
    cubes = r1**3 + r2**3
    scale = abs(r1) ** 3 + abs(r2) ** 3
    # round-off bound of the power sums themselves; matters when M ~ 0
    a = np.abs(m)
    a2 = a @ a
    rmax = max(abs(r1), abs(r2))
    floor = 16 * m.shape[0] * np.finfo(float).eps * (
        np.sum(a2 * a.T) + 3 * rmax * np.trace(a2) + 3 * rmax**2 * np.trace(a)
    )
    if abs(p3 - cubes) > rtol * scale + floor:
        raise RankConsistencyError(
            f"tr(M^3)={complex(p3):.6g} disagrees with e1^3+e2^3={complex(cubes):.6g}; rank > 2?"
        )
    return complex(r1), complex(r2)
