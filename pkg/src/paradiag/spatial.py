"""Spatial operators ``K`` of the semi-discrete state equation ``y' = -K y + u``.

Two storage variants exist.  :class:`DenseOperator` keeps an explicit
``M x M`` matrix and solves shifted systems by cached LU factors.
:class:`SpectralOperator` represents a periodic constant-coefficient stencil
on an ``m1 x m2`` grid by its symbol under numpy's 2-D DFT, so that
``K v = ifft2(symbol * fft2(v))``.

Every operator accepts either a single vector of length ``M`` or a stack of
vectors with shape ``(n, M)`` (one row per time index).
"""

from __future__ import annotations

import threading

import numpy as np

from .numkit import SingularMatrixError, lu_factor, lu_solve

__all__ = [
    "SpatialOperator",
    "DenseOperator",
    "SpectralOperator",
    "build_laplacian_1d_isolated",
    "build_laplacian_2d_periodic",
    "build_advdiff_2d_periodic",
]

REAL_RTOL = 1e-10


def _as_real_if(out, want_real: bool):
    """Drop a round-off imaginary part after checking it really is round-off."""
    if not want_real or not np.iscomplexobj(out):
        return out
    re_mag = np.max(np.abs(out.real), initial=0.0)
    im_mag = np.max(np.abs(out.imag), initial=0.0)
    if im_mag > REAL_RTOL * max(re_mag, np.finfo(float).tiny) and im_mag > 1e-300:
        raise ArithmeticError(
            f"real operator produced imaginary part {im_mag:.3g} (real part {re_mag:.3g})"
        )
    return np.ascontiguousarray(out.real)


class SpatialOperator:
    """Common interface; see :class:`DenseOperator` and :class:`SpectralOperator`."""

    size: int
    self_adjoint: bool
    real: bool

    def apply(self, v, adjoint: bool = False) -> np.ndarray:
        raise NotImplementedError

    def shifted_solve(self, shift, tau, v, adjoint: bool = False) -> np.ndarray:
        raise NotImplementedError

    def coupled_block_solve(self, shift, tau, coupling, r, s):
        raise NotImplementedError

    def eigenvalues(self):
        """Closed-form spectrum, or ``None`` when it is not known analytically."""
        return None

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.size)
        return self.apply(eye).T

    def _check(self, v):
        v = np.asarray(v)
        if v.shape[-1] != self.size:
            raise ValueError(f"vector length {v.shape[-1]} does not match operator size {self.size}")
        return v


class DenseOperator(SpatialOperator):
    """Explicit matrix ``K``.

    Shifted and coupled solves are LU based; factors are cached per
    ``(shift, tau, ...)`` key.  :meth:`prepare_shifted` and
    :meth:`prepare_coupled` fill the cache up front.
    """

    def __init__(self, matrix, eigenvalues=None):
        matrix = np.array(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"K must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("K has non-finite entries")
        if np.isrealobj(matrix):
            matrix = matrix.astype(float)
        self.matrix = matrix
        self.size = matrix.shape[0]
        self.real = np.isrealobj(matrix)
        scale = max(np.max(np.abs(matrix), initial=0.0), 1.0)
        self.self_adjoint = bool(np.allclose(matrix, matrix.conj().T, rtol=0, atol=1e-12 * scale))
        self._eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues)
        self._cache = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"DenseOperator(size={self.size}, self_adjoint={self.self_adjoint})"

    def eigenvalues(self):
        return self._eigenvalues

    def to_dense(self):
        return self.matrix.copy()

    def _mat(self, adjoint):
        return self.matrix.conj().T if adjoint else self.matrix

    def apply(self, v, adjoint=False):
        v = self._check(v)
        return v @ self._mat(adjoint).T

    def _factors(self, key, build):
        f = self._cache.get(key)
        if f is None:
            f = lu_factor(build())
            with self._lock:
                self._cache.setdefault(key, f)
        return f

    def _shifted_factors(self, shift, tau, adjoint):
        shift = complex(shift)
        key = ("shift", shift, float(tau), bool(adjoint))
        eye = np.eye(self.size)

        def build():
            s = shift.real if shift.imag == 0 and self.real else shift
            return s * eye + tau * self._mat(adjoint)

        return self._factors(key, build)

    def _coupled_factors(self, shift, tau, coupling):
        shift = complex(shift)
        key = ("coupled", shift, float(tau), float(coupling))
        eye = np.eye(self.size)

        def build():
            k = self.matrix
            return np.block(
                [
                    [shift * eye + tau * k, coupling * eye],
                    [-coupling * eye, shift.conjugate() * eye + tau * k.conj().T],
                ]
            )

        return self._factors(key, build)

    def prepare_shifted(self, shifts, tau, adjoint=False):
        for s in shifts:
            self._shifted_factors(s, tau, adjoint)

    def prepare_coupled(self, shifts, tau, coupling):
        for s in shifts:
            self._coupled_factors(s, tau, coupling)

    def shifted_solve(self, shift, tau, v, adjoint=False):
        """Solve ``(shift*I + tau*K) x = v`` (``K^*`` when ``adjoint``)."""
        v = self._check(v)
        f = self._shifted_factors(shift, tau, adjoint)
        try:
            return lu_solve(f, v.T).T
        except SingularMatrixError:
            raise SingularMatrixError(f"shift {complex(shift)} makes shift*I + tau*K singular") from None

    def coupled_block_solve(self, shift, tau, coupling, r, s):
        """Solve ``[[shift I + tau K, g I], [-g I, conj(shift) I + tau K^*]] [x; z] = [r; s]``."""
        r = self._check(r)
        s = self._check(s)
        f = self._coupled_factors(shift, tau, coupling)
        rhs = np.concatenate([r, s], axis=-1)
        try:
            sol = lu_solve(f, rhs.T).T
        except SingularMatrixError:
            raise SingularMatrixError(f"coupled block with shift {complex(shift)} is singular") from None
        return sol[..., : self.size], sol[..., self.size :]


class SpectralOperator(SpatialOperator):
    """Periodic stencil operator diagonalized by the 2-D DFT.

    ``symbol`` has shape ``grid``; entry ``(p, q)`` is the eigenvalue of the
    Fourier mode ``exp(2 pi i (p j1 + q j2) / m)``.  Vectors are grid fields
    flattened in row-major order (``x1`` index first).
    """

    def __init__(self, grid, symbol, real: bool = True):
        grid = tuple(int(g) for g in grid)
        symbol = np.asarray(symbol, dtype=complex)
        if symbol.shape != grid:
            raise ValueError(f"symbol shape {symbol.shape} does not match grid {grid}")
        self.grid = grid
        self.symbol = symbol
        self.size = int(np.prod(grid))
        self.real = real
        self.self_adjoint = bool(np.max(np.abs(symbol.imag), initial=0.0) <= 1e-12 * max(np.max(np.abs(symbol)), 1.0))

    def __repr__(self):
        return f"SpectralOperator(grid={self.grid}, self_adjoint={self.self_adjoint})"

    def eigenvalues(self):
        return self.symbol.ravel().copy()

    def _sym(self, adjoint):
        return self.symbol.conj() if adjoint else self.symbol

    def _forward(self, v):
        return np.fft.fft2(v.reshape(v.shape[:-1] + self.grid))

    def _backward(self, vh, real):
        out = np.fft.ifft2(vh).reshape(vh.shape[:-2] + (self.size,))
        return _as_real_if(out, real)

    def apply(self, v, adjoint=False):
        v = self._check(v)
        real = self.real and np.isrealobj(v)
        return self._backward(self._sym(adjoint) * self._forward(v), real)

    def shifted_solve(self, shift, tau, v, adjoint=False):
        """Solve ``(shift*I + tau*K) x = v`` by division in Fourier space.

        ``shift`` may be an array broadcasting against the leading axes of ``v``.
        """
        v = self._check(v)
        shift = np.asarray(shift)
        denom = shift[..., None, None] + tau * self._sym(adjoint)
        if np.any(denom == 0) or np.min(np.abs(denom)) < 1e-14 * max(np.max(np.abs(denom)), 1.0):
            raise SingularMatrixError("shifted operator has a zero Fourier mode")
        real = self.real and np.isrealobj(v) and np.isrealobj(shift)
        return self._backward(self._forward(v) / denom, real)

    def coupled_block_solve(self, shift, tau, coupling, r, s):
        """Per-mode 2x2 solves of ``[[a, g], [-g, conj(a)]]`` with ``a = shift + tau*symbol``.

        The determinant is ``|a|^2 + g^2``, so the block is singular only when
        ``g = 0`` and ``a`` vanishes on some mode.
        """
        r = self._check(r)
        s = self._check(s)
        shift = np.asarray(shift)
        a = shift[..., None, None] + tau * self.symbol
        det = (a * a.conj()).real + coupling**2
        if np.min(det) <= 1e-28 * max(np.max(det), 1.0):
            raise SingularMatrixError("coupled block is singular on some Fourier mode")
        rh = self._forward(r)
        sh = self._forward(s)
        xh = (a.conj() * rh - coupling * sh) / det
        zh = (coupling * rh + a * sh) / det
        real = self.real and np.isrealobj(r) and np.isrealobj(s) and np.isrealobj(shift)
        return self._backward(xh, real), self._backward(zh, real)

    def to_dense(self):
        eye = np.eye(self.size)
        out = np.fft.ifft2(self.symbol * np.fft.fft2(eye.reshape((self.size,) + self.grid)))
        dense = out.reshape(self.size, self.size).T
        return _as_real_if(dense, self.real)


def build_laplacian_1d_isolated(m: int) -> DenseOperator:
    """``-d^2/dx^2`` on ``[0, 1]`` with isolated (zero-flux) ends, ``dx = 1/m``.

    Tridiagonal ``(-1, 2, -1)/dx^2`` with both corner diagonal entries equal
    to ``1/dx^2``.  Its spectrum is ``2(1 - cos(k pi/m))/dx^2``.
    """
    if m < 2:
        raise ValueError("need at least two grid cells")
    h2 = float(m) ** 2
    k = 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    k[0, 0] = k[-1, -1] = 1.0
    eig = 2.0 * (1.0 - np.cos(np.arange(m) * np.pi / m)) * h2
    return DenseOperator(h2 * k, eigenvalues=eig)


def _symbol_angles(m):
    theta = 2.0 * np.pi * np.arange(m) / m
    return theta[:, None], theta[None, :]


def build_laplacian_2d_periodic(m: int) -> SpectralOperator:
    """Five-point ``-Laplacian`` on the periodic unit square, ``m x m`` points."""
    if m < 2:
        raise ValueError("grid side must be at least 2")
    tp, tq = _symbol_angles(m)
    symbol = (4.0 - 2.0 * np.cos(tp) - 2.0 * np.cos(tq)) * float(m) ** 2
    return SpectralOperator((m, m), symbol + 0j)


def build_advdiff_2d_periodic(m: int, d: float) -> SpectralOperator:
    """``-d Laplacian + d/dx1 + d/dx2`` with central differences, periodic.

    This is ``K`` for ``y_t = d Lap y - y_x1 - y_x2 + u``.
    """
    if m < 2:
        raise ValueError("grid side must be at least 2")
    if not d > 0:
        raise ValueError("diffusion coefficient must be positive")
    tp, tq = _symbol_angles(m)
    diffusion = d * (4.0 - 2.0 * np.cos(tp) - 2.0 * np.cos(tq)) * float(m) ** 2
    advection = (np.sin(tp) + np.sin(tq)) * float(m)
    return SpectralOperator((m, m), diffusion + 1j * advection)
