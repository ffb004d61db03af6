"""Closed-form spectra of the preconditioned all-at-once systems.

For a self-adjoint ``K`` the preconditioned matrix decouples into one scalar
problem per eigenvalue ``sigma`` of ``K``.  Each scalar problem depends on
two numbers only::

    phi = 1/(1 + tau*sigma),    psi = gamma_hat/(1 + tau*sigma)

with ``gamma_hat = tau/sqrt(gamma)`` (tracking) or ``tau/gamma`` (terminal
cost).  ``P^{-1} A`` then has the eigenvalue 1 with high multiplicity plus
two further eigenvalues ``theta = 1 + omega``.  This module evaluates
``omega`` in closed form, its limits, the corner entries of the inverses
the derivation relies on, and a dense brute-force oracle.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .allatonce import ControlProblem, Objective
from .numkit import eigvals_2x2, lu_factor, lu_solve, rank2_eigs_from_traces

__all__ = [
    "TheoryDomainError",
    "ModeParams",
    "Region",
    "ModeRecord",
    "SpectrumReport",
    "z_pair",
    "tracking_omega",
    "terminal_mred",
    "terminal_omega",
    "semidisk_check",
    "in_semidisk",
    "tracking_thetas",
    "terminal_thetas",
    "mode_thetas",
    "corner_entries_tracking",
    "corner_entries_terminal",
    "horizon_limits",
    "timestep_limits",
    "scalar_circulant",
    "oracle_matrices",
    "oracle_preconditioned_spectrum",
]

SEMIDISK_TOL = 1e-9
ORACLE_MAX = 200


class TheoryDomainError(ValueError):
    """Parameters outside the hypotheses under which a formula holds."""


@dataclass(frozen=True)
class ModeParams:
    """Per-mode scalars.  Build with :meth:`from_scaled` or :meth:`from_phi_psi`.

    ``theory=True`` additionally demands ``0 < phi < 1`` (positive definite K).
    """

    sigma_hat: float
    gamma_hat: float
    phi: float
    psi: float
    theory: bool = True

    def __post_init__(self):
        if self.theory and not 0.0 < self.phi < 1.0:
            raise TheoryDomainError(f"phi = {self.phi} outside (0, 1)")

    @classmethod
    def from_scaled(cls, sigma_hat, gamma_hat, theory=True):
        sigma_hat = float(sigma_hat)
        gamma_hat = float(gamma_hat)
        if sigma_hat == -1.0:
            raise TheoryDomainError("sigma_hat = -1 makes 1 + sigma_hat vanish")
        phi = 1.0 / (1.0 + sigma_hat)
        return cls(sigma_hat, gamma_hat, phi, gamma_hat * phi, theory)

    @classmethod
    def from_phi_psi(cls, phi, psi, theory=True):
        phi = float(phi)
        psi = float(psi)
        if phi == 0.0:
            raise TheoryDomainError("phi must be non-zero")
        return cls(1.0 / phi - 1.0, psi / phi, phi, psi, theory)

    @classmethod
    def for_mode(cls, sigma, tau, gamma, objective, theory=True):
        """Mode parameters of eigenvalue ``sigma`` at step ``tau``."""
        objective = Objective(objective)
        gh = tau / math.sqrt(gamma) if objective is Objective.TRACKING else tau / gamma
        return cls.from_scaled(tau * sigma, gh, theory)


class Region(str, Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def semidisk_check(theta, tol: float = SEMIDISK_TOL) -> Region:
    """Locate ``theta`` relative to the closed right half-disk of centre and radius 1/2."""
    theta = complex(theta)
    re = theta.real
    dist = abs(theta - 0.5)
    if re < 0.5 - tol or dist > 0.5 + tol:
        return Region.OUTSIDE
    if re < 0.5 + tol or dist > 0.5 - tol:
        return Region.BOUNDARY
    return Region.INSIDE


def in_semidisk(theta, tol: float = SEMIDISK_TOL) -> bool:
    return semidisk_check(theta, tol) is not Region.OUTSIDE


def z_pair(m: ModeParams):
    """Roots ``z1 >= z2`` of ``phi z^2 - (1 + phi^2 + psi^2) z + phi``.

    ``z2`` is computed as ``phi/z1``-style quotient so it keeps full relative
    accuracy when it is tiny.
    """
    phi, psi = m.phi, m.psi
    if phi == 0.0:
        raise TheoryDomainError("phi must be non-zero")
    s = 1.0 + phi * phi + psi * psi
    # s^2 - 4 phi^2 factored to avoid cancellation
    r = math.sqrt(((1.0 - phi) ** 2 + psi * psi) * ((1.0 + phi) ** 2 + psi * psi))
    z1 = (s + r) / (2.0 * phi)
    z2 = 2.0 * phi / (s + r)
    if abs(z1 * z2 - 1.0) > 1e-12:
        raise ArithmeticError(f"z1*z2 = {z1 * z2!r} differs from 1")
    if 0.0 < phi < 1.0 and not 0.0 < z2 < 1.0 < z1:
        raise ArithmeticError(f"expected 0 < z2 < 1 < z1, got z1={z1}, z2={z2}")
    return z1, z2


def _inv_one_minus(alpha, z, zinv, n):
    """``1/(1 - alpha z^n)`` without forming a huge ``z^n`` (``zinv = 1/z``)."""
    if abs(z) <= 1.0:
        return 1.0 / (1.0 - alpha * z**n)
    t = zinv**n
    return t / (t - alpha)


def _check_alpha_pm1(alpha):
    alpha = complex(alpha)
    if alpha not in (1, -1):
        raise TheoryDomainError(f"closed-form tracking spectrum needs alpha = +1 or -1, got {alpha}")
    return int(alpha.real)


def tracking_omega(m: ModeParams, alpha, n: int):
    """``(omega1, omega2)`` for the tracking objective with ``n = L - 1`` stacked steps.

    ``omega1`` carries ``+psi i``, ``omega2`` its conjugate.
    """
    alpha = _check_alpha_pm1(alpha)
    if n <= 3:
        raise TheoryDomainError("closed form holds for more than 3 stacked steps")
    if m.phi == 0.0 or m.psi == 0.0:
        raise TheoryDomainError("phi and psi must be non-zero")
    z1, z2 = z_pair(m)
    u1 = _inv_one_minus(alpha, z1, z2, n)
    u2 = _inv_one_minus(alpha, z2, z1, n)
    out = []
    for sign in (1.0, -1.0):
        shift = sign * m.psi * 1j - m.phi
        out.append(((z1 + shift) * u1 - (z2 + shift) * u2) / (z2 - z1))
    w = tuple(complex(x) for x in out)
    if not all(cmath.isfinite(x) for x in w):
        raise ArithmeticError("non-finite omega")
    return w


def _geom_sq_sum(phi, L):
    """``sum_{j<L} phi^(2j)``; equals ``(1 - phi^(2L))/(1 - phi^2)`` off ``|phi| = 1``."""
    if abs(phi) == 1.0:
        return float(L)
    return -math.expm1(2 * L * math.log(abs(phi))) / (1.0 - phi * phi) if phi != 0 else 1.0


def _mred(phi, psi, alpha, L):
    q = 1.0 - alpha * phi**L
    if q == 0.0:
        raise TheoryDomainError("alpha * phi^L = 1")
    s = _geom_sq_sum(phi, L)
    return np.array(
        [
            [alpha * phi**L / q + psi * s / q**2, -alpha * phi * psi * s / q**2],
            [-(phi ** (L - 1)) / q, alpha * phi**L / q],
        ]
    )


def terminal_mred(m: ModeParams, alpha, L: int) -> np.ndarray:
    """The 2x2 matrix whose eigenvalues are the terminal-cost ``omega`` pair."""
    alpha = float(alpha)
    if alpha == 0.0:
        raise TheoryDomainError("alpha must be non-zero")
    if abs(m.phi) == 1.0:
        raise TheoryDomainError("phi = +-1 is excluded")
    if L < 2:
        raise TheoryDomainError("need L >= 2")
    return _mred(m.phi, m.psi, alpha, int(L))


def terminal_omega(m: ModeParams, alpha, L: int):
    """``(omega1, omega2)`` with ``omega1`` the eigenvalue of larger modulus."""
    a, b = eigvals_2x2(terminal_mred(m, alpha, L))
    return (a, b) if abs(a) >= abs(b) else (b, a)


@dataclass(frozen=True)
class ModeRecord:
    sigma_hat: float
    gamma_hat: float
    phi: float
    psi: float
    theta1: complex
    theta2: complex
    region1: Region
    region2: Region

    @property
    def in_semidisk(self) -> bool:
        return self.region1 is not Region.OUTSIDE and self.region2 is not Region.OUTSIDE


@dataclass
class SpectrumReport:
    objective: Objective
    alpha: complex
    n: int  # stacked time steps
    records: list = field(default_factory=list)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([[r.theta1, r.theta2] for r in self.records]).reshape(-1, 2)

    @property
    def semidisk_flags(self) -> list:
        return [r.in_semidisk for r in self.records]

    @property
    def max_dist(self) -> float:
        """``max |theta - 1/2|`` over all modes."""
        return float(np.max(np.abs(self.thetas - 0.5))) if self.records else float("nan")

    @property
    def min_real(self) -> float:
        return float(np.min(self.thetas.real)) if self.records else float("nan")


def mode_thetas(sigmas, tau, gamma, alpha, L, objective, tol=SEMIDISK_TOL) -> SpectrumReport:
    """Non-unit eigenvalues for every spatial eigenvalue in ``sigmas``.

    Modes with ``sigma = 0`` (``phi = 1``) are evaluated as well; they are
    simply outside the positive-definite theory, which is not enforced here.
    """
    objective = Objective(objective)
    sig = np.asarray(sigmas)
    if np.iscomplexobj(sig):
        if np.max(np.abs(sig.imag), initial=0.0) > 1e-12 * max(np.max(np.abs(sig)), 1.0):
            raise TheoryDomainError("closed-form spectra need real spatial eigenvalues")
        sig = sig.real
    n = L - 1 if objective is Objective.TRACKING else L
    report = SpectrumReport(objective, complex(alpha), n)
    for s in np.asarray(sig, dtype=float).ravel():
        mp = ModeParams.for_mode(s, tau, gamma, objective, theory=False)
        if objective is Objective.TRACKING:
            w1, w2 = tracking_omega(mp, alpha, n)
        else:
            a, b = eigvals_2x2(_mred(mp.phi, mp.psi, float(np.real(alpha)), L))
            w1, w2 = (a, b) if abs(a) >= abs(b) else (b, a)
        t1, t2 = 1.0 + w1, 1.0 + w2
        report.records.append(
            ModeRecord(mp.sigma_hat, mp.gamma_hat, mp.phi, mp.psi, t1, t2, semidisk_check(t1, tol), semidisk_check(t2, tol))
        )
    return report


def _sigma_source(p: ControlProblem, sigmas):
    if sigmas is not None:
        return sigmas
    if not p.K.self_adjoint:
        raise TheoryDomainError("non-self-adjoint K: supply the spatial eigenvalues explicitly")
    sig = p.K.eigenvalues()
    if sig is None:
        raise TheoryDomainError("K has no closed-form spectrum: supply the spatial eigenvalues explicitly")
    return sig


def tracking_thetas(p: ControlProblem, sigmas=None, alpha=-1.0) -> SpectrumReport:
    if p.objective is not Objective.TRACKING:
        raise ValueError("problem does not have a tracking objective")
    return mode_thetas(_sigma_source(p, sigmas), p.tau, p.gamma, alpha, p.L, p.objective)


def terminal_thetas(p: ControlProblem, sigmas=None, alpha=1e-4) -> SpectrumReport:
    if p.objective is not Objective.TERMINAL:
        raise ValueError("problem does not have a terminal-cost objective")
    return mode_thetas(_sigma_source(p, sigmas), p.tau, p.gamma, alpha, p.L, p.objective)


def corner_entries_tracking(m: ModeParams, alpha, n: int):
    """Corner entries ``(h_first_first, h_first_last)`` of ``psi (psi^2 I + C C^T)^{-1}``.

    ``C = C_phi(alpha)`` is the scaled alpha-circulant difference matrix of
    order ``n``: ones on the diagonal, ``-phi`` below, ``-alpha phi`` in the corner.
    """
    alpha = _check_alpha_pm1(alpha)
    if not 0.0 < m.phi < 1.0:
        raise TheoryDomainError("corner formulas need 0 < phi < 1")
    z1, z2 = z_pair(m)
    c = m.psi / (m.phi * (z2 - z1))
    u1 = _inv_one_minus(alpha, z1, z2, n)
    u2 = _inv_one_minus(alpha, z2, z1, n)
    return c * (u1 - u2), alpha * c * (z1 * u1 - z2 * u2)


def corner_entries_terminal(m: ModeParams, alpha, L: int):
    """``(h_last_first, g_last_last)`` for ``H = C_phi(alpha)^{-1}`` and ``G = H H^T``."""
    alpha = float(alpha)
    if abs(m.phi) == 1.0:
        raise TheoryDomainError("phi = +-1 is excluded")
    q = 1.0 - alpha * m.phi**L
    if q == 0.0:
        raise TheoryDomainError("alpha * phi^L = 1")
    return m.phi ** (L - 1) / q, _geom_sq_sum(m.phi, L) / q**2


def horizon_limits(m: ModeParams, objective):
    """Limits of ``(theta1, theta2)`` as the number of steps grows at fixed ``tau``.

    Tracking: identical for ``alpha = +-1``.  Terminal: the ``alpha -> 0``
    limit; ``theta2`` is exactly 1 there.
    """
    objective = Objective(objective)
    if not 0.0 < m.phi < 1.0:
        raise TheoryDomainError("horizon limits need 0 < phi < 1")
    if objective is Objective.TRACKING:
        z1, z2 = z_pair(m)
        return tuple(complex(z1 - m.phi + s * m.psi * 1j) / (z1 - z2) for s in (1.0, -1.0))
    return complex(1.0 + m.psi / (1.0 - m.phi**2)), 1.0 + 0j


def timestep_limits(sigma, gamma, T, alpha, objective):
    """Limits of ``(theta1, theta2)`` as ``tau -> 0`` at fixed horizon ``T``.

    Terminal: with ``1 - phi^2 ~ 2 tau sigma`` the dominant eigenvalue tends
    to ``1 + (1 - exp(-2 sigma T))/(2 gamma sigma)``.
    """
    objective = Objective(objective)
    if not (sigma > 0 and gamma > 0 and T > 0):
        raise TheoryDomainError("need sigma, gamma, T > 0")
    if objective is Objective.TRACKING:
        alpha = _check_alpha_pm1(alpha)
        root = math.sqrt(gamma * sigma**2 + 1.0)
        th = math.tanh(T * root / (2.0 * math.sqrt(gamma))) ** (-alpha)
        return tuple(0.5 + th * complex(math.sqrt(gamma) * sigma, s) / (2.0 * root) for s in (1.0, -1.0))
    return complex(1.0 - math.expm1(-2.0 * sigma * T) / (2.0 * gamma * sigma)), 1.0 + 0j


def scalar_circulant(phi, alpha, n):
    """``C_phi(alpha) = I - phi * subdiag - alpha*phi * e_0 e_{n-1}^T``."""
    c = np.eye(n) - phi * np.eye(n, k=-1)
    c[0, n - 1] -= alpha * phi
    return c


def oracle_matrices(m: ModeParams, alpha, n: int, objective):
    """Dense scalar-mode ``(P, A)`` with ``n`` stacked time steps (``R = A - P``)."""
    objective = Objective(objective)
    alpha = float(np.real(alpha))
    phi, psi = m.phi, m.psi
    c = scalar_circulant(phi, alpha, n)
    c0 = scalar_circulant(phi, 0.0, n)
    eye = np.eye(n)
    if objective is Objective.TRACKING:
        p = np.block([[c, psi * eye], [-psi * eye, c.T]])
        a = np.block([[c0, psi * eye], [-psi * eye, c0.T]])
    else:
        e = np.zeros((n, n))
        e[-1, -1] = 1.0
        p = np.block([[c, psi * eye], [np.zeros((n, n)), c.T]])
        a = np.block([[c0, psi * eye], [-e, c0.T]])
    return p, a


def oracle_preconditioned_spectrum(m: ModeParams, alpha, n: int, objective):
    """The two non-trivial eigenvalues of ``P^{-1} R`` by brute force.

    ``n`` is the number of stacked steps (``L - 1`` for tracking, ``L`` for
    terminal cost).  Returned with the larger imaginary part first, then the
    larger modulus.
    """
    if n > ORACLE_MAX:
        raise ValueError(f"oracle limited to {ORACLE_MAX} steps")
    p, a = oracle_matrices(m, alpha, n, objective)
    pr = lu_solve(lu_factor(p), a - p)
    r1, r2 = rank2_eigs_from_traces(pr)
    return tuple(sorted((r1, r2), key=lambda w: (-round(w.imag, 12), -abs(w))))
