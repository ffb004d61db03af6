import math

import numpy as np
import pytest

from conftest import make_problem, scalar_op, small_operators
from paradiag.allatonce import (
    ControlProblem,
    Objective,
    StackedState,
    apply_terminal_operator,
    apply_tracking_operator,
    assemble_terminal_rhs,
    assemble_tracking_rhs,
    dense_terminal_matrix,
    dense_tracking_matrix,
    reconstruct_control,
    rescale_adjoint,
)
from paradiag.spatial import DenseOperator


def columns_of(apply, p, rescaled):
    n, m = p.n_steps, p.M
    size = 2 * n * m
    cols = []
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        cols.append(apply(p, StackedState.from_vector(e, n, m, rescaled)).to_vector())
    return np.array(cols).T


class TestProblem:
    def test_tau(self):
        p = make_problem("tracking", scalar_op(), 7, T=2.1)
        assert p.tau * p.L == pytest.approx(2.1, rel=1e-15)
        assert p.n_steps == 6
        assert make_problem("terminal", scalar_op(), 7).n_steps == 7

    @pytest.mark.parametrize("kw", [{"gamma": 0.0}, {"T": -1.0}, {"L": 1}])
    def test_rejects(self, kw):
        args = dict(objective="tracking", K=scalar_op(), gamma=1.0, T=1.0, L=4, y_init=np.zeros(1))
        args.update(kw)
        with pytest.raises(ValueError):
            ControlProblem(**args)

    def test_y_d_shape(self):
        with pytest.raises(ValueError):
            ControlProblem("tracking", scalar_op(), 1.0, 1.0, 4, np.zeros(1), y_d=np.zeros((4, 1)))


class TestRhs:
    def test_tracking_hand_value(self):
        p = ControlProblem("tracking", scalar_op(), 4.0, 1.5, 3, np.array([0.0]), y_d=np.ones((2, 1)))
        b1, b2 = assemble_tracking_rhs(p)
        assert np.allclose(b2.ravel(), [-0.25, -0.25])
        assert np.allclose(b1, 0.0)

    def test_tracking_zero_target(self):
        p = ControlProblem("tracking", scalar_op(), 1.0, 1.0, 4, np.array([2.0]), y_d=np.zeros((3, 1)))
        b1, b2 = assemble_tracking_rhs(p)
        assert np.allclose(b2, 0.0)
        assert np.allclose(b1.ravel(), [2.0, 0.0, 0.0])

    def test_terminal_hand_value(self):
        p = ControlProblem("terminal", scalar_op(1.0), 1.0, 1.0, 2, np.array([0.0]), y_target=np.array([2.0]))
        b = assemble_terminal_rhs(p)
        assert b.lam.ravel() == pytest.approx([0.0, -3.0])

    def test_terminal_zero_operator(self):
        v = np.array([1.0, -2.0])
        p = ControlProblem("terminal", DenseOperator(np.zeros((2, 2))), 1.0, 1.0, 3, np.zeros(2), y_target=v)
        assert np.allclose(assemble_terminal_rhs(p).lam[-1], -v)

    def test_missing_data(self):
        with pytest.raises(ValueError):
            assemble_tracking_rhs(ControlProblem("tracking", scalar_op(), 1.0, 1.0, 3, np.zeros(1)))
        with pytest.raises(ValueError):
            assemble_terminal_rhs(ControlProblem("terminal", scalar_op(), 1.0, 1.0, 3, np.zeros(1)))

    def test_wrong_objective(self):
        with pytest.raises(ValueError):
            assemble_terminal_rhs(make_problem("tracking", scalar_op(), 4))


class TestOperators:
    def test_tracking_first_column(self):
        p = ControlProblem("tracking", scalar_op(1.0), 1.0, 3.0, 3, np.zeros(1), y_d=np.zeros((2, 1)))
        x = StackedState(np.array([[1.0], [0.0]]), np.zeros((2, 1)), rescaled=True)
        assert np.allclose(apply_tracking_operator(p, x).to_vector(), [2, -1, -1, 0])

    @pytest.mark.parametrize("L", [3, 5])
    @pytest.mark.parametrize("rescaled", [True, False])
    def test_tracking_matches_dense(self, small_K, L, rescaled):
        p = make_problem("tracking", small_K, L)
        cols = columns_of(apply_tracking_operator, p, rescaled)
        assert np.allclose(cols, dense_tracking_matrix(p, rescaled), atol=1e-12, rtol=0)

    @pytest.mark.parametrize("L", [2, 3, 5])
    def test_terminal_matches_dense(self, small_K, L):
        p = make_problem("terminal", small_K, L)
        cols = columns_of(apply_terminal_operator, p, False)
        assert np.allclose(cols, dense_terminal_matrix(p), atol=1e-12, rtol=0)

    def test_terminal_only_last_row_sees_state(self):
        p = make_problem("terminal", scalar_op(2.0), 4)
        y = np.arange(1.0, 5.0)[:, None]
        out = apply_terminal_operator(p, StackedState(y, np.zeros((4, 1))))
        assert np.allclose(out.lam[:-1], 0.0)
        assert out.lam[-1, 0] == pytest.approx(-(1 + p.tau * 2.0) * 4.0)

    def test_zero_maps_to_zero(self, small_K):
        for obj, apply in (("tracking", apply_tracking_operator), ("terminal", apply_terminal_operator)):
            p = make_problem(obj, small_K, 4)
            out = apply(p, StackedState.zeros(p.n_steps, p.M))
            assert not np.any(out.to_vector())

    def test_dimension_mismatch(self):
        p = make_problem("tracking", scalar_op(), 4)
        with pytest.raises(ValueError):
            apply_tracking_operator(p, StackedState.zeros(4, 1))


class TestRescaling:
    def test_values(self):
        x = StackedState(np.zeros((2, 1)), np.array([[1.0], [2.0]]), rescaled=True)
        assert rescale_adjoint(x, 4.0, to_rescaled=False).lam.ravel() == pytest.approx([2.0, 4.0])

    def test_round_trip(self):
        x = StackedState(np.ones((3, 2)), np.arange(6.0).reshape(3, 2))
        back = rescale_adjoint(rescale_adjoint(x, 0.3, True), 0.3, False)
        assert np.allclose(back.lam, x.lam) and not back.rescaled

    def test_gamma_one_identity(self):
        x = StackedState(np.ones((2, 1)), np.array([[3.0], [5.0]]))
        assert np.array_equal(rescale_adjoint(x, 1.0, True).lam, x.lam)

    def test_refuses_terminal_and_double(self):
        x = StackedState.zeros(2, 1)
        with pytest.raises(ValueError):
            rescale_adjoint(x, 1.0, True, objective=Objective.TERMINAL)
        with pytest.raises(ValueError):
            rescale_adjoint(x, 1.0, False)

    def test_rescaled_solution_equals_original(self, small_K):
        p = make_problem("tracking", small_K, 5)
        b1, b2 = assemble_tracking_rhs(p)
        hat = np.linalg.solve(dense_tracking_matrix(p, True), np.concatenate([b1.ravel(), b2.ravel()]))
        ref = np.linalg.solve(dense_tracking_matrix(p, False), np.concatenate([b1.ravel(), math.sqrt(p.gamma) * b2.ravel()]))
        x = rescale_adjoint(StackedState.from_vector(hat, p.n_steps, p.M, True), p.gamma, False)
        assert np.allclose(x.to_vector(), ref, rtol=1e-8, atol=1e-12)

    def test_control(self):
        assert reconstruct_control(np.array([1.0, -2.0]), 0.5) == pytest.approx([-2.0, 4.0])
        assert reconstruct_control(np.array([3.0]), 1.0) == pytest.approx([-3.0])
        assert not np.any(reconstruct_control(np.zeros(3), 2.0))


def test_tracking_system_is_implicit_euler():
    """Rows of the solved system reproduce the implicit-Euler state and adjoint recursions."""
    p = make_problem("tracking", small_operators()["nonsym"], 5, gamma=0.2, T=1.3, seed=7)
    b1, b2 = assemble_tracking_rhs(p)
    sol = np.linalg.solve(dense_tracking_matrix(p, False), np.concatenate([b1.ravel(), math.sqrt(p.gamma) * b2.ravel()]))
    x = StackedState.from_vector(sol, p.n_steps, p.M)
    u = reconstruct_control(x.lam, p.gamma)
    K = p.K.to_dense()
    y_prev = p.y_init
    for l in range(p.n_steps):
        assert np.allclose(x.y[l] - y_prev + p.tau * K @ x.y[l], p.tau * u[l])
        y_prev = x.y[l]
    # backward recursion with lam_L = 0 at the far end
    lam_next = np.zeros(p.M)
    for l in reversed(range(p.n_steps)):
        assert np.allclose(x.lam[l] - lam_next + p.tau * K.T @ x.lam[l], p.tau * (x.y[l] - p.y_d[l]))
        lam_next = x.lam[l]

