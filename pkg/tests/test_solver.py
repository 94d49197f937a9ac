import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from vfvm.assembly import BoundaryCondition, apply_boundary_conditions, assemble_laplace
from vfvm.errors import NotConverged, SingularJacobian, SingularMatrix
from vfvm.mesh import random_bcd_mesh
from vfvm.mesh.generate import LEFT, RIGHT, interval
from vfvm.solver import (
    LinearSolveConfig,
    NewtonConfig,
    conjugate_gradient,
    newton_solve,
    solve_linear,
)


def gauss(a, b):
    """Dense Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        a[[k, p]], b[[k, p]] = a[[p, k]], b[[p, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k:] -= f * a[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = (b[i] - a[i, i + 1 :] @ x[i + 1 :]) / a[i, i]
    return x


class TestLinear:
    @pytest.mark.parametrize("method", ["direct", "cg", "auto"])
    def test_identity(self, method, rng):
        b = rng.random(7)
        np.testing.assert_allclose(solve_linear(sp.identity(7, format="csr"), b, LinearSolveConfig(method)), b)

    @pytest.mark.parametrize("method", ["direct", "cg"])
    def test_1d_dirichlet(self, method):
        m = interval(np.linspace(0, 1, 11))
        bcs = {LEFT: BoundaryCondition.dirichlet(1.0), RIGHT: BoundaryCondition.dirichlet(0.0)}
        a, rhs = apply_boundary_conditions(assemble_laplace(m), np.zeros(11), m, bcs)
        u = solve_linear(a, rhs, LinearSolveConfig(method))
        np.testing.assert_allclose(u, 1 - np.linspace(0, 1, 11), atol=1e-9)

    @given(st.integers(0, 1000))
    def test_spd_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((10, 10))
        a = q @ q.T + 10 * np.eye(10)
        b = rng.standard_normal(10)
        oracle = gauss(a, b)
        for method in ("direct", "cg"):
            x = solve_linear(sp.csr_matrix(a), b, LinearSolveConfig(method))
            np.testing.assert_allclose(x, oracle, rtol=1e-10, atol=1e-10)

    def test_cg_residual(self):
        m = random_bcd_mesh(60, seed=4)
        a = assemble_laplace(m) + sp.identity(m.n_vertices)
        b = np.ones(m.n_vertices)
        x, iters = conjugate_gradient(a, b, rel_tol=1e-12)
        assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)
        assert 0 < iters <= 10 * m.n_vertices

    def test_cg_with_penalty_rows_matches_direct(self):
        from vfvm.mesh import rectangle
        from vfvm.mesh.generate import BOTTOM, TOP

        m = rectangle(12, 12)
        bcs = {BOTTOM: BoundaryCondition.dirichlet(1.0), TOP: BoundaryCondition.dirichlet(0.0)}
        a, rhs = apply_boundary_conditions(assemble_laplace(m) + 0.1 * sp.identity(144), np.ones(144), m, bcs)
        direct = solve_linear(a, rhs, LinearSolveConfig("direct"))
        cg = solve_linear(a, rhs, LinearSolveConfig("cg"))
        np.testing.assert_allclose(cg, direct, atol=1e-10)
        assert np.linalg.norm(a @ cg - rhs) <= 1e-12 * np.linalg.norm(rhs)

    def test_cg_not_converged(self):
        a = sp.diags(np.linspace(1, 1e6, 200)).tocsr()
        a = a + sp.diags(np.full(199, 0.4), 1) + sp.diags(np.full(199, 0.4), -1)
        with pytest.raises(NotConverged):
            conjugate_gradient(a, np.ones(200), rel_tol=1e-14, max_iter=1)

    def test_singular_direct(self):
        a = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(SingularMatrix):
            solve_linear(a, np.ones(2), LinearSolveConfig("direct"))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            LinearSolveConfig("gmres")
        with pytest.raises(ValueError):
            LinearSolveConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            solve_linear(sp.identity(3), np.ones(4))

    def test_deterministic(self):
        m = random_bcd_mesh(40, seed=8)
        a = assemble_laplace(m) + sp.identity(m.n_vertices)
        b = np.arange(m.n_vertices, dtype=float)
        for method in ("direct", "cg"):
            cfg = LinearSolveConfig(method)
            assert np.array_equal(solve_linear(a, b, cfg), solve_linear(a, b, cfg))


class TestNewton:
    def test_scalar_quadratic(self):
        res = newton_solve(lambda x: x**2 - 4, lambda x: np.diag(2 * x), np.array([3.0]), NewtonConfig(abs_tol=1e-14))
        assert res.x[0] == pytest.approx(2.0, abs=1e-14)
        errors = [abs(x) for x in res.history]
        # residual ~ 4 * error near the root, so log-decrements double
        logs = np.log10([e for e in errors if e > 1e-13])
        steps = -np.diff(logs)
        assert steps[-1] / steps[-2] == pytest.approx(2.0, rel=0.25)

    def test_linear_one_iteration(self, rng):
        a = np.eye(4) * 3 + rng.random((4, 4))
        b = rng.random(4)
        res = newton_solve(lambda x: a @ x - b, lambda x: sp.csr_matrix(a), np.zeros(4))
        assert res.iterations == 1
        np.testing.assert_allclose(res.x, np.linalg.solve(a, b))

    def test_already_converged(self):
        res = newton_solve(lambda x: x - 1.0, lambda x: np.eye(1), np.array([1.0]))
        assert res.iterations == 0

    def test_not_converged(self):
        # no real root: undamped Newton wanders
        with pytest.raises(NotConverged):
            newton_solve(lambda x: x**2 + 1, lambda x: np.diag(2 * x), np.array([0.5]), NewtonConfig(max_iter=10))

    def test_singular(self):
        with pytest.raises(SingularJacobian):
            newton_solve(lambda x: x**2 - 1, lambda x: np.diag(2 * x), np.array([0.0]))
        with pytest.raises(SingularJacobian):
            newton_solve(lambda x: x - 1, lambda x: sp.csr_matrix((1, 1)), np.array([0.0]))

    def test_step_tol(self):
        res = newton_solve(
            lambda x: x**2 - 4, lambda x: np.diag(2 * x), np.array([3.0]), NewtonConfig(abs_tol=1e-300, step_tol=1e-8)
        )
        assert res.x[0] == pytest.approx(2.0)

    def test_history_monotone_tail(self):
        res = newton_solve(lambda x: np.exp(x) - 2, lambda x: np.diag(np.exp(x)), np.array([2.0]))
        h = res.history
        assert all(b < a for a, b in zip(h[-4:], h[-3:]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NewtonConfig(abs_tol=0)
        with pytest.raises(ValueError):
            NewtonConfig(max_iter=0)
