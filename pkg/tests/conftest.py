import numpy as np
import pytest

from paradiag.allatonce import ControlProblem
from paradiag.spatial import DenseOperator, build_laplacian_1d_isolated


def scalar_op(sigma=1.0):
    return DenseOperator(np.array([[float(sigma)]]))


# non-self-adjoint 2x2 with positive-definite symmetric part
NONSYM_2 = np.array([[2.0, 1.0], [-0.5, 1.5]])


def small_operators():
    return {
        "scalar": scalar_op(1.0),
        "lap1d": build_laplacian_1d_isolated(2),
        "nonsym": DenseOperator(NONSYM_2),
    }


def make_problem(objective, K, L, gamma=0.7, T=0.9, seed=0):
    rng = np.random.default_rng(seed)
    m = K.size
    return ControlProblem(
        objective, K, gamma, T, L, rng.standard_normal(m),
        y_d=rng.standard_normal((L - 1, m)), y_target=rng.standard_normal(m),
    )


@pytest.fixture(params=list(small_operators()))
def small_K(request):
    return small_operators()[request.param]
