import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem, scalar_op
from paradiag.numkit import SingularMatrixError
from paradiag.precond import (
    TerminalPreconditioner,
    TrackingPreconditioner,
    alpha_circulant_matrix,
    alpha_circulant_spec,
    apply_terminal_precond,
    apply_tracking_precond,
    dense_terminal_precond,
    dense_tracking_precond,
    make_preconditioner,
)
from paradiag.spatial import DenseOperator, build_advdiff_2d_periodic, build_laplacian_1d_isolated, build_laplacian_2d_periodic


def dense_of(p, alpha):
    if p.objective.value == "tracking":
        return dense_tracking_precond(p, alpha)
    return dense_terminal_precond(p, alpha)


class TestAlphaCirculant:
    def test_alpha_one_two(self):
        assert np.allclose(sorted(alpha_circulant_spec(1, 2).eigs.real), [0.0, 2.0])

    def test_alpha_minus_one_two(self):
        s = alpha_circulant_spec(-1, 2)
        assert s.weights[1] == pytest.approx(1j)
        assert np.allclose(s.eigs, [1 - 1j, 1 + 1j])

    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_alpha_one_zero_eig(self, n):
        assert abs(alpha_circulant_spec(1, n).eigs[0]) < 1e-15

    def test_order_one(self):
        assert alpha_circulant_spec(0.3, 1).eigs[0] == pytest.approx(0.7)

    def test_principal_branch(self):
        s = alpha_circulant_spec(-1, 4)
        assert s.weights[1] == pytest.approx(np.exp(1j * np.pi / 4))

    def test_zero_alpha(self):
        with pytest.raises(ValueError):
            alpha_circulant_spec(0, 3)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.05, 3.0), st.floats(-np.pi, np.pi), st.integers(1, 12)
    )
    def test_diagonalization(self, mod, arg, n):
        alpha = mod * np.exp(1j * arg)
        s = alpha_circulant_spec(alpha, n)
        c = alpha_circulant_matrix(alpha, n)
        # C = Gamma^{-1} F^* D F Gamma with F unitary, positive exponent
        F = np.exp(2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
        recon = np.diag(1 / s.weights) @ F.conj().T @ np.diag(s.eigs) @ F @ np.diag(s.weights)
        assert np.allclose(recon, c, atol=1e-11 * max(1, mod))

    def test_unit_modulus_weights(self):
        s = alpha_circulant_spec(np.exp(0.4j), 7)
        assert np.allclose(1 / s.weights, s.weights.conj(), atol=1e-14, rtol=0)


class TestTracking:
    def test_zero(self):
        p = make_problem("tracking", scalar_op(), 3)
        x, z = apply_tracking_precond(p, alpha_circulant_spec(-1, 2), np.zeros((2, 1)), np.zeros((2, 1)))
        assert not np.any(x) and not np.any(z)

    def test_scalar_example(self):
        # L=3, M=1, K=1, tau=1, gamma=1
        p = make_problem("tracking", scalar_op(1.0), 3, gamma=1.0, T=3.0)
        P = dense_tracking_precond(p, -1)
        rng = np.random.default_rng(0)
        pre = TrackingPreconditioner(p, -1)
        for _ in range(5):
            v = rng.standard_normal(4)
            assert np.allclose(pre(v), np.linalg.solve(P, v), atol=1e-10, rtol=0)
            # round trip through the assembled matrix
            assert np.allclose(P @ pre(v), v, atol=1e-9)
            assert np.allclose(pre(P @ v), v, atol=1e-9)

    def test_requires_unit_modulus(self):
        with pytest.raises(ValueError):
            TrackingPreconditioner(make_problem("tracking", scalar_op(), 4), 0.5)

    def test_wrong_objective(self):
        with pytest.raises(ValueError):
            TrackingPreconditioner(make_problem("terminal", scalar_op(), 4))

    def test_general_unit_alpha_is_complex(self):
        p = make_problem("tracking", build_laplacian_1d_isolated(3), 5)
        pre = TrackingPreconditioner(p, np.exp(0.9j))
        v = np.random.default_rng(1).standard_normal(2 * 4 * 3)
        out = pre(v)
        assert np.iscomplexobj(out)
        assert np.allclose(dense_tracking_precond(p, np.exp(0.9j)) @ out, v)

    @pytest.mark.parametrize("alpha", [1.0, -1.0])
    def test_real_in_real_out(self, alpha):
        p = make_problem("tracking", build_advdiff_2d_periodic(3, 0.2), 6)
        v = np.random.default_rng(2).standard_normal(2 * 5 * 9)
        out = TrackingPreconditioner(p, alpha)(v)
        assert np.isrealobj(out)
        assert np.allclose(dense_tracking_precond(p, alpha) @ out, v, atol=1e-9)


class TestTerminal:
    def test_scalar_example(self):
        # L=2, M=1, K=1, tau=0.5, gamma=1, alpha=1e-4
        p = make_problem("terminal", scalar_op(1.0), 2, gamma=1.0, T=1.0)
        P = dense_terminal_precond(p, 1e-4)
        pre = TerminalPreconditioner(p, 1e-4)
        rng = np.random.default_rng(3)
        for _ in range(5):
            v = rng.standard_normal(4)
            assert np.allclose(pre(v), np.linalg.solve(P, v), atol=1e-10, rtol=0)

    def test_zero_adjoint_rhs(self):
        p = make_problem("terminal", build_laplacian_1d_isolated(3), 4)
        v = np.random.default_rng(4).standard_normal((4, 3))
        pre = TerminalPreconditioner(p, 0.3)
        x, z = pre.apply(v, np.zeros((4, 3)))
        assert np.allclose(z, 0.0)
        # phase 2 alone: (C(alpha) (x) I + tau I (x) K) x = v
        n, m = 4, 3
        state_block = np.kron(alpha_circulant_matrix(0.3, n), np.eye(m)) + p.tau * np.kron(np.eye(n), p.K.to_dense())
        assert np.allclose(state_block @ x.ravel(), v.ravel())

    def test_alpha_one_singular_reports_index(self):
        # C(1) has a zero eigenvalue at frequency 0 and the periodic Laplacian a zero mode
        p = make_problem("terminal", build_laplacian_2d_periodic(3), 4)
        with pytest.raises(SingularMatrixError) as info:
            TerminalPreconditioner(p, 1.0).apply(np.ones((4, 9)), np.ones((4, 9)))
        assert info.value.index == 0

    def test_dense_singular_reports_index(self):
        p = make_problem("terminal", build_laplacian_1d_isolated(2), 4)
        with pytest.raises(SingularMatrixError) as info:
            TerminalPreconditioner(p, 1.0).apply(np.ones((4, 2)), np.ones((4, 2)))
        assert info.value.index == 0

    def test_functional_form(self):
        p = make_problem("terminal", scalar_op(2.0), 5)
        v, w = np.ones((5, 1)), np.arange(5.0)[:, None]
        x, z = apply_terminal_precond(p, alpha_circulant_spec(1e-4, 5), v, w)
        x2, z2 = TerminalPreconditioner(p, 1e-4).apply(v, w)
        assert np.array_equal(x, x2) and np.array_equal(z, z2)


@pytest.mark.parametrize("objective,alphas", [("tracking", (-1.0, 1.0)), ("terminal", (1e-4, 0.3))])
@pytest.mark.parametrize("L", [3, 5])
def test_dense_equivalence(small_K, objective, alphas, L):
    rng = np.random.default_rng(L)
    p = make_problem(objective, small_K, L)
    for alpha in alphas:
        pre = make_preconditioner(p, alpha)
        P = dense_of(p, alpha)
        for _ in range(10):
            v = rng.standard_normal(P.shape[0])
            out = pre(v)
            assert np.isrealobj(out)
            assert np.allclose(out, np.linalg.solve(P, v), atol=1e-9, rtol=0)
            assert np.allclose(pre(P @ v), v, atol=1e-9, rtol=0)


@pytest.mark.parametrize("objective,alpha", [("tracking", -1.0), ("terminal", 1e-4)])
def test_spectral_matches_dense_operator(objective, alpha):
    """Vectorized spectral path agrees with the per-index dense path for the same K."""
    ks = build_advdiff_2d_periodic(3, 0.4)
    kd = DenseOperator(ks.to_dense())
    ps = make_problem(objective, ks, 6)
    pd = make_problem(objective, kd, 6)
    v = np.random.default_rng(5).standard_normal(2 * ps.n_steps * 9)
    assert np.allclose(make_preconditioner(ps, alpha)(v), make_preconditioner(pd, alpha)(v), atol=1e-12)


@pytest.mark.parametrize("objective,alpha", [("tracking", -1.0), ("terminal", 1e-4)])
def test_threads_agree(objective, alpha):
    p = make_problem(objective, build_laplacian_1d_isolated(6), 9)
    v = np.random.default_rng(6).standard_normal(2 * p.n_steps * 6)
    one = make_preconditioner(p, alpha, workers=1)(v)
    again = make_preconditioner(p, alpha, workers=1)(v)
    many = make_preconditioner(p, alpha, workers=4)(v)
    assert np.array_equal(one, again)
    assert np.allclose(one, many, atol=1e-12, rtol=0)
