import math
from dataclasses import replace

import numpy as np
import pytest

from paradiag.allatonce import (
    ControlProblem,
    assemble_terminal_rhs,
    assemble_tracking_rhs,
    dense_terminal_matrix,
    dense_tracking_matrix,
)
from paradiag.experiments import (
    NOT_CONVERGED,
    SOLVE_COLUMNS,
    RunConfig,
    SweepSpec,
    build_problem,
    run_solve,
    run_spectrum,
    run_sweep,
    solve_problem,
)
from paradiag.krylov import GmresConfig
from paradiag.spatial import DenseOperator, build_laplacian_2d_periodic
from paradiag.spectra import ModeParams, tracking_omega


class TestData:
    def test_initial_condition_sign_zeros(self):
        p = build_problem(RunConfig("tracking", "diffusion2d", m=8, L=4, T_ref=0.5, gamma=1.0))
        f = p.y_init.reshape(8, 8)
        # x1 = 0 and x1 = 1/2 are zeros of sin(2 pi x1): sign 0 there
        assert not np.any(f[0]) and not np.any(f[4])
        c = 12 * math.pi**2
        assert f[2, 2] == pytest.approx((1 - 0.5) / c)  # sin^2(pi/2) = 1
        assert f[6, 2] == pytest.approx(-(1 - 0.5) / c)

    def test_tracking_target(self):
        cfg = RunConfig("tracking", "diffusion2d", m=4, L=4, T_ref=2.0, gamma=0.5)
        p = build_problem(cfg)
        c = 12 * math.pi**2
        t = 0.5  # first unknown, l = 1
        amp = (c + 1 / (c * 0.5)) * (t - 2.0) - (1 + 1 / (c * c * 0.5))
        assert p.y_d.shape == (3, 16)
        assert p.y_d[0].reshape(4, 4)[1, 1] == pytest.approx(amp)

    def test_terminal_target(self):
        p = build_problem(RunConfig("terminal", "diffusion2d", m=4, L=4))
        assert p.y_target.reshape(4, 4)[1, 1] == pytest.approx(1.0)
        assert p.y_target.reshape(4, 4)[1, 3] == pytest.approx(-1.0)

    def test_gaussian_1d(self):
        p = build_problem(RunConfig("tracking", "diffusion1d", m=16, L=5))
        x = (np.arange(16) + 0.5) / 16
        assert np.allclose(p.y_init, np.exp(-100 * (x - 0.5) ** 2))
        assert np.allclose(p.y_d, p.y_init[None, :])

    def test_bad_config(self):
        with pytest.raises(ValueError):
            RunConfig(equation="heat")
        with pytest.raises(ValueError):
            RunConfig(gamma=0.0)


class TestSolve:
    def test_zero_data(self):
        K = build_laplacian_2d_periodic(4)
        p = ControlProblem("tracking", K, 0.05, 1.0, 6, np.zeros(16), y_d=np.zeros((5, 16)))
        sol, u, out, _ = solve_problem(p)
        assert out.iterations <= 1 and out.converged
        assert not np.any(sol.y) and not np.any(u)

    def test_small_t_alpha_one_converges(self):
        rec = run_solve(RunConfig("tracking", "diffusion1d", m=16, L=128, T_ref=1.0, gamma=1e-5, alpha=1.0))
        assert rec.converged and rec.iterations <= 25

    @pytest.mark.parametrize("objective", ["tracking", "terminal"])
    @pytest.mark.parametrize("equation", ["diffusion2d", "advdiff2d"])
    def test_true_residual(self, objective, equation):
        rec = run_solve(RunConfig(objective, equation, m=8, L=20))
        assert rec.converged
        assert rec.final_relres_true <= 10 * 1e-6
        assert np.array_equal(rec.control, -rec.state.lam / rec.gamma)

    def test_record_row_order(self):
        rec = run_solve(RunConfig(m=4, L=6))
        assert list(rec.row()) == list(SOLVE_COLUMNS)

    def test_tracking_dense_reference(self):
        rng = np.random.default_rng(0)
        K = DenseOperator(np.array([[2.0, -1.0], [-1.0, 2.0]]))
        p = ControlProblem("tracking", K, 0.3, 1.0, 5, rng.standard_normal(2), y_d=rng.standard_normal((4, 2)))
        sol, u, out, _ = solve_problem(p, gmres_cfg=GmresConfig(1e-12, 40))
        b1, b2 = assemble_tracking_rhs(p)
        ref = np.linalg.solve(dense_tracking_matrix(p, False), np.concatenate([b1.ravel(), math.sqrt(p.gamma) * b2.ravel()]))
        assert np.allclose(sol.to_vector(), ref, atol=1e-9)

    def test_workers(self):
        a = run_solve(RunConfig("tracking", "diffusion1d", m=8, L=12))
        b = run_solve(RunConfig("tracking", "diffusion1d", m=8, L=12, workers=3))
        assert a.iterations == b.iterations
        assert np.allclose(a.state.to_vector(), b.state.to_vector(), atol=1e-12)


class TestSweep:
    def test_regimes(self):
        base = RunConfig(m=4)
        h = SweepSpec(base, (30, 100), "T_ref", (2.0, 0.2))
        taus = {round(h.cell_config(L, 2.0).horizon / L, 15) for L in (30, 100)}
        assert len(taus) == 1
        t = SweepSpec(RunConfig(m=4, scale_mode="timestep"), (30, 100), "T_ref", (2.0,))
        assert {t.cell_config(L, 2.0).horizon for L in (30, 100)} == {2.0}
        # first row reproduces (T_ref, L_min)
        assert h.cell_config(30, 0.2).horizon == pytest.approx(0.2)

    def test_single_cell_equals_solve(self):
        base = RunConfig("terminal", "diffusion2d", m=4, L=10)
        _, _, rows, _ = run_sweep(SweepSpec(base, (10,), "gamma", (0.05,)))
        assert rows[0][1] == str(run_solve(replace(base, T=base.T_ref)).iterations)

    def test_not_converged_marker(self):
        base = RunConfig("tracking", "diffusion2d", m=4, max_iter=1)
        header, cols, rows, recs = run_sweep(SweepSpec(base, (10, 20), "T_ref", (2.0,)))
        assert header.startswith("#") and "regime=horizon" in header
        assert cols == ["L", "2", "converged"]
        for row in rows:
            assert row[1] == NOT_CONVERGED and row[-1] == "false"
        assert all(r.iterations <= 1 for r in recs.values())

    def test_large_l_guard(self):
        with pytest.raises(ValueError):
            SweepSpec(RunConfig(), (30, 1000))
        with pytest.warns(RuntimeWarning):
            SweepSpec(RunConfig(), (30, 1000), allow_large=True)

    def test_parallel_matches_serial(self):
        spec = SweepSpec(RunConfig(m=4), (10, 20), "gamma", (0.05, 5.0))
        assert run_sweep(spec, workers=1)[2] == run_sweep(spec, workers=3)[2]


class TestSpectrum:
    def test_count_and_containment(self):
        report, rows = run_spectrum(RunConfig("tracking", "diffusion1d", m=16, L=20, T_ref=1.0))
        assert len(rows) == 16
        # the constant mode (sigma = 0) sits outside the positive-definite theory; the rest must be inside
        assert all(r[-1] for r in rows if r[0] > 0)

    def test_worked_row(self):
        # tau = 1, gamma = 1, sigma = 1 -> phi = psi = 0.5
        _, rows = run_spectrum(RunConfig("tracking", "diffusion1d", m=4, L=5, T_ref=5.0, gamma=1.0), sigmas=[1.0])
        row = rows[0]
        w = tracking_omega(ModeParams.from_phi_psi(0.5, 0.5), -1, 4)[0]
        assert row[2:4] == pytest.approx([0.5, 0.5])
        assert row[4] == pytest.approx(1 + w.real) and row[5] == pytest.approx(w.imag)

    def test_needs_sigma_for_advection(self):
        with pytest.raises(ValueError):
            run_spectrum(RunConfig(equation="advdiff2d", m=4))


def test_terminal_dense_reference():
    rng = np.random.default_rng(1)
    K = DenseOperator(np.array([[1.0, 0.4], [-0.3, 2.0]]))
    p = ControlProblem("terminal", K, 0.3, 1.0, 4, rng.standard_normal(2), y_target=rng.standard_normal(2))
    sol, _, _, _ = solve_problem(p, gmres_cfg=GmresConfig(1e-12, 40))
    ref = np.linalg.solve(dense_terminal_matrix(p), assemble_terminal_rhs(p).to_vector())
    assert np.allclose(sol.to_vector(), ref, atol=1e-9)
