"""Desk-scale battery of oracle and property checks across all modules.

Every check compares two independent routes (closed form vs brute force,
FFT path vs dense LU, ...).  Functions are looked up through their modules
at call time so that a patched implementation is what gets checked.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import allatonce, krylov, numkit, precond, spatial, spectra
from .experiments import solve_problem

__all__ = ["CheckResult", "CHECKS", "run_validate"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _pair_err(a, b):
    """Relative distance between two unordered pairs."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    scale = max(np.max(np.abs(b)), 1e-300)
    return min(np.max(np.abs(a - b)), np.max(np.abs(a - b[::-1]))) / scale


def check_dft():
    rng = np.random.default_rng(0)
    worst = 0.0
    for n in (1, 2, 3, 7, 16, 31):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        for inv in (False, True):
            worst = max(worst, np.max(np.abs(numkit.dft(v, inv) - numkit.dft_direct(v, inv))))
    return worst < 1e-12, f"max |fft - direct| = {worst:.2e}"


def check_lu():
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (1, 4, 9):
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        f = numkit.lu_factor(a)
        p, l, u = f.unpack()
        worst = max(worst, np.max(np.abs(p @ a - l @ u)))
        b = rng.standard_normal(n)
        worst = max(worst, np.max(np.abs(a @ numkit.lu_solve(f, b) - b)))
    return worst < 1e-12, f"max factor/solve error = {worst:.2e}"


def check_alpha_circulant():
    worst = 0.0
    for alpha, n in itertools.product((1, -1, 1e-4, 0.3, np.exp(0.7j)), (1, 2, 5, 8)):
        s = precond.alpha_circulant_spec(alpha, n)
        c = precond.alpha_circulant_matrix(alpha, n)
        ev = np.linalg.eigvals(c)
        err = max(np.min(np.abs(ev - e)) for e in s.eigs)
        worst = max(worst, err / max(1.0, abs(alpha)))
    return worst < 1e-8, f"max eig mismatch = {worst:.2e}"


def _small_problems():
    k1 = spatial.build_laplacian_1d_isolated(2)
    rng = np.random.default_rng(2)
    kn = spatial.DenseOperator(np.array([[2.0, 1.0], [-0.5, 1.5]]))
    ks = spatial.DenseOperator(np.array([[1.0]]))
    for K, obj, L in itertools.product((k1, kn, ks), ("tracking", "terminal"), (3, 5)):
        m = K.size
        yield allatonce.ControlProblem(
            obj, K, 0.7, 0.9, L, rng.standard_normal(m),
            y_d=rng.standard_normal((L - 1, m)), y_target=rng.standard_normal(m),
        )


def check_preconditioners():
    rng = np.random.default_rng(3)
    worst = 0.0
    for p in _small_problems():
        alphas = (-1.0, 1.0) if p.objective is allatonce.Objective.TRACKING else (1e-4, 0.3)
        for alpha in alphas:
            pre = precond.make_preconditioner(p, alpha)
            dense = (
                precond.dense_tracking_precond(p, alpha)
                if p.objective is allatonce.Objective.TRACKING
                else precond.dense_terminal_precond(p, alpha)
            )
            v = rng.standard_normal(dense.shape[0])
            worst = max(worst, np.linalg.norm(pre(v) - np.linalg.solve(dense, v)) / np.linalg.norm(v))
    return worst < 1e-9, f"max FFT vs dense LU = {worst:.2e}"


def check_gmres():
    out = krylov.gmres(lambda v: np.array([1.0, 2.0]) * v, lambda v: v, np.array([1.0, 1.0]))
    ok = out.iterations == 2 and np.allclose(out.solution, [1.0, 0.5]) and abs(out.residual_history[1] - 1 / math.sqrt(10)) < 1e-14
    rng = np.random.default_rng(4)
    a = rng.standard_normal((20, 20)) + 6 * np.eye(20)
    b = rng.standard_normal(20)
    o2 = krylov.gmres(lambda v: a @ v, lambda v: v, b, krylov.GmresConfig(1e-13, 20))
    res = np.linalg.norm(a @ o2.solution - b) / np.linalg.norm(b)
    mono = all(y <= x + 1e-14 for x, y in zip(o2.residual_history, o2.residual_history[1:]))
    return ok and res < 1e-10 and mono, f"2x2 example ok={ok}, dense n=20 residual {res:.1e}, monotone={mono}"


def _grid_tracking():
    return itertools.product(np.arange(1, 10) / 10, (0.01, 0.5, 2.0, 10.0), (1, -1), (5, 8, 13, 21))


def _grid_terminal():
    return itertools.product(np.arange(1, 10) / 10, (0.01, 0.5, 2.0, 10.0), (1e-4, 0.3), (5, 8, 13, 21))


def check_tracking_spectrum():
    worst, count = 0.0, 0
    for phi, psi, alpha, n in _grid_tracking():
        m = spectra.ModeParams.from_phi_psi(phi, psi)
        w = spectra.tracking_omega(m, alpha, n)
        o = spectra.oracle_preconditioned_spectrum(m, alpha, n, "tracking")
        worst = max(worst, _pair_err(w, o))
        count += 1
    return worst < 1e-8, f"{count} cases, max relative error {worst:.2e}"


def check_terminal_spectrum():
    worst, count = 0.0, 0
    for phi, psi, alpha, L in _grid_terminal():
        m = spectra.ModeParams.from_phi_psi(phi, psi)
        w = spectra.terminal_omega(m, alpha, L)
        o = spectra.oracle_preconditioned_spectrum(m, alpha, L, "terminal")
        worst = max(worst, _pair_err(w, o))
        count += 1
    return worst < 1e-8, f"{count} cases, max relative error {worst:.2e}"


def check_semidisk():
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(200):
        m = spectra.ModeParams.from_phi_psi(rng.uniform(0.01, 0.99), rng.uniform(0.01, 5.0))
        n = int(rng.integers(5, 51))
        for th in spectra.tracking_omega(m, -1, n):
            bad += not spectra.in_semidisk(1 + th, tol=1e-12)
    m = spectra.ModeParams.from_phi_psi(0.5, 0.5)
    outside = not spectra.in_semidisk(1 + spectra.tracking_omega(m, 1, 4)[0], tol=1e-12)
    return bad == 0 and outside, f"alpha=-1 violations {bad}/400; alpha=+1 contrast outside={outside}"


def check_corners():
    worst, prod = 0.0, 0.0
    for phi, psi, alpha, n in _grid_tracking():
        m = spectra.ModeParams.from_phi_psi(phi, psi)
        z1, z2 = spectra.z_pair(m)
        prod = max(prod, abs(z1 * z2 - 1))
        c = spectra.scalar_circulant(phi, alpha, n)
        h = psi * np.linalg.inv(psi**2 * np.eye(n) + c @ c.T)
        h00, h0n = spectra.corner_entries_tracking(m, alpha, n)
        worst = max(worst, abs(h00 - h[0, 0]), abs(h0n - h[0, -1]))
    for phi, alpha, L in itertools.product(np.arange(1, 10) / 10, (1e-4, 0.3, 1.0), (2, 4, 9)):
        m = spectra.ModeParams.from_phi_psi(phi, 1.0)
        h = np.linalg.inv(spectra.scalar_circulant(phi, alpha, L))
        hl0, gll = spectra.corner_entries_terminal(m, alpha, L)
        worst = max(worst, abs(hl0 - h[-1, 0]), abs(gll - h[-1] @ h[-1]))
    return worst < 1e-10 and prod < 1e-12, f"max corner error {worst:.2e}, max |z1 z2 - 1| {prod:.1e}"


def check_limits():
    worst_h = 0.0
    for phi, psi in itertools.product((0.1, 0.5, 0.9), (0.01, 0.5, 2.0)):
        m = spectra.ModeParams.from_phi_psi(phi, psi)
        lim = spectra.horizon_limits(m, "tracking")
        for alpha in (1, -1):
            worst_h = max(worst_h, _pair_err(np.array(spectra.tracking_omega(m, alpha, 500)) + 1, lim))
        tl = spectra.horizon_limits(m, "terminal")[0]
        worst_h = max(worst_h, abs(1 + spectra.terminal_omega(m, 1e-12, 500)[0] - tl) / abs(tl))
    worst_t = 0.0
    L = 100_000
    for sigma, gamma, T in ((1.0, 1.0, 1.0), (3.0, 0.05, 2.0), (0.5, 2.0, 0.3)):
        tau = T / L
        for alpha in (1, -1):
            m = spectra.ModeParams.for_mode(sigma, tau, gamma, "tracking")
            fin = np.array(spectra.tracking_omega(m, alpha, L - 1)) + 1
            worst_t = max(worst_t, _pair_err(fin, spectra.timestep_limits(sigma, gamma, T, alpha, "tracking")))
        m = spectra.ModeParams.for_mode(sigma, tau, gamma, "terminal")
        fin = 1 + spectra.terminal_omega(m, 1e-12, L)[0]
        lim = spectra.timestep_limits(sigma, gamma, T, 1e-12, "terminal")[0]
        worst_t = max(worst_t, abs(fin - lim) / abs(lim))
    return worst_h < 1e-6 and worst_t < 1e-4, f"horizon {worst_h:.1e}, timestep {worst_t:.1e}"


def check_dense_solve():
    worst = 0.0
    for p in _small_problems():
        if p.L != 5 and p.objective is allatonce.Objective.TRACKING:
            continue
        sol, u, out, _ = solve_problem(p, gmres_cfg=krylov.GmresConfig(1e-12, 40))
        if p.objective is allatonce.Objective.TRACKING:
            a = allatonce.dense_tracking_matrix(p, rescaled=False)
            b1, b2 = allatonce.assemble_tracking_rhs(p)
            b = np.concatenate([b1.ravel(), math.sqrt(p.gamma) * b2.ravel()])
        else:
            a = allatonce.dense_terminal_matrix(p)
            b = allatonce.assemble_terminal_rhs(p).to_vector()
        ref = np.linalg.solve(a, b)
        worst = max(worst, np.linalg.norm(sol.to_vector() - ref) / np.linalg.norm(ref))
        worst = max(worst, np.max(np.abs(u + sol.lam / p.gamma)))
    return worst < 1e-7, f"max matrix-free vs dense LU {worst:.2e}"


CHECKS = {
    "dft": check_dft,
    "lu": check_lu,
    "alpha_circulant": check_alpha_circulant,
    "preconditioners": check_preconditioners,
    "gmres": check_gmres,
    "tracking_spectrum": check_tracking_spectrum,
    "terminal_spectrum": check_terminal_spectrum,
    "semidisk": check_semidisk,
    "corners": check_corners,
    "limits": check_limits,
    "dense_solve": check_dense_solve,
}


def run_validate(names=None, echo=print) -> list:
    """Run the checks (all by default); returns a list of :class:`CheckResult`."""
    names = list(names or CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for name in names:
        start = time.perf_counter()
        try:
            passed, detail = CHECKS[name]()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(passed), detail, time.perf_counter() - start)
        results.append(res)
        if echo is not None:
            echo(f"{'PASS' if res.passed else 'FAIL'}  {name:<18} {detail}")
    return results
