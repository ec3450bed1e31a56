import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mkclust.simplexqp import (
    QpProblem,
    kkt_residual,
    project_columns,
    project_simplex,
    solve_weight_qp,
    solve_y_qp,
    validate_representation,
    y_gradient,
    y_objective,
)


def random_psd(rng, m, scale=1.0):
    G = rng.standard_normal((m, m))
    return scale * (G @ G.T) / m


def random_problem(rng, m, beta):
    A = random_psd(rng, m)
    D = rng.uniform(0.0, 1.0, size=(m, m))
    np.fill_diagonal(D, 0.0)
    return QpProblem(A=A, D=D, beta=beta)


class TestProjectSimplex:
    def test_fixpoint_on_simplex(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.max(np.abs(project_simplex(v) - v)) <= 1e-15

    def test_dominant_coordinate(self):
        assert np.array_equal(project_simplex(np.array([10.0, 0.0, 0.0])),
                              np.array([1.0, 0.0, 0.0]))

    def test_mixed_sign_example(self):
        out = project_simplex(np.array([0.5, 0.2, -0.1]))
        expected = np.array([19.0 / 30.0, 1.0 / 3.0, 1.0 / 30.0])
        assert np.max(np.abs(out - expected)) <= 1e-15
        assert np.max(np.abs(out - oracles.project_simplex_bisect([0.5, 0.2, -0.1]))) <= 1e-10
        assert np.max(np.abs(out - oracles.project_simplex_active_sets([0.5, 0.2, -0.1]))) <= 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            project_simplex(np.array([np.inf, 0.0]))

    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_projection_properties(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 8))
        v = rng.normal(0.0, 2.0, size=m)
        x = project_simplex(v)
        assert np.all(x >= 0.0)
        assert abs(x.sum() - 1.0) <= 1e-12
        # Idempotence and oracle agreement.
        assert np.max(np.abs(project_simplex(x) - x)) <= 1e-12
        ref = oracles.project_simplex_active_sets(v)
        assert np.max(np.abs(x - ref)) <= 1e-10
        # No feasible point is closer to v.
        for _ in range(20):
            z = rng.dirichlet(np.ones(m))
            assert np.sum((x - v) ** 2) <= np.sum((z - v) ** 2) + 1e-12

    def test_project_columns_matches_vector_projection(self):
        rng = np.random.default_rng(12)
        Y = rng.normal(size=(5, 7))
        batched = project_columns(Y)
        for q in range(7):
            assert np.max(np.abs(batched[:, q] - project_simplex(Y[:, q]))) <= 1e-14


class TestQpProblem:
    def test_rejects_indefinite(self):
        A = np.array([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(ValueError, match="nonconvex QP rejected"):
            QpProblem(A=A)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            QpProblem(A=np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_negative_beta(self):
        with pytest.raises(ValueError, match="nonnegative"):
            QpProblem(A=np.eye(2), beta=-0.5)

    def test_rejects_wrong_d_shape(self):
        with pytest.raises(ValueError, match="D must be"):
            QpProblem(A=np.eye(2), D=np.zeros((3, 3)))

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown QP mode"):
            QpProblem(A=np.eye(2), mode="row_stochastic")


class TestYObjective:
    def test_zero_quadratic_zero_diagonal_linear(self):
        problem = QpProblem(A=np.zeros((3, 3)), D=np.abs(np.eye(3) - 1.0), beta=2.0)
        assert y_objective(np.eye(3), problem) == 0.0

    def test_uniform_identity_hand_value(self):
        problem = QpProblem(A=np.eye(2), beta=0.0)
        assert y_objective(np.full((2, 2), 0.5), problem) == 0.5

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_gradient_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 5))
        problem = random_problem(rng, m, beta=2.0 ** -8)
        Y = rng.dirichlet(np.ones(m), size=m).T
        G = y_gradient(Y, problem)
        h = 1e-6
        for p in range(m):
            for q in range(m):
                Yp, Ym = Y.copy(), Y.copy()
                Yp[p, q] += h
                Ym[p, q] -= h
                fd = (y_objective(Yp, problem) - y_objective(Ym, problem)) / (2 * h)
                assert G[p, q] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestSolveWeightQp:
    def test_diagonal_closed_form(self):
        rng = np.random.default_rng(3)
        b = rng.uniform(0.5, 4.0, size=5)
        w = solve_weight_qp(np.diag(b))
        closed = (1.0 / b) / np.sum(1.0 / b)
        assert np.max(np.abs(w - closed)) <= 1e-9

    def test_identity_gives_uniform(self):
        w = solve_weight_qp(np.eye(4))
        assert np.max(np.abs(w - 0.25)) <= 1e-9

    def test_two_kernel_example(self):
        w = solve_weight_qp(np.diag([2.0, 1.0]))
        assert np.max(np.abs(w - np.array([1.0 / 3.0, 2.0 / 3.0]))) <= 1e-9

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="nonconvex QP rejected"):
            solve_weight_qp(np.array([[0.0, 1.0], [1.0, 0.0]]))

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_kkt_conditions(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 7))
        A = random_psd(rng, m)
        w = solve_weight_qp(A)
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) <= 1e-9
        g = 2.0 * A @ w
        mu = g.min()
        assert np.max(g[w > 1e-12] - mu) <= 1e-7


class TestSolveYQp:
    def test_single_kernel(self):
        out = solve_y_qp(QpProblem(A=np.ones((1, 1))))
        assert np.array_equal(out, np.ones((1, 1)))

    def test_large_beta_concentrates_on_column_minima(self):
        rng = np.random.default_rng(6)
        m = 3
        A = random_psd(rng, m, scale=1e-3)
        D = np.array([[0.0, 3.0, 2.0], [1.0, 0.0, 4.0], [5.0, 2.0, 0.0]])
        out = solve_y_qp(QpProblem(A=A, D=D, beta=1e6))
        for q in range(m):
            assert out[np.argmin(D[:, q]), q] == pytest.approx(1.0, abs=1e-6)

    def test_matches_grid_oracle_m2(self):
        rng = np.random.default_rng(7)
        problem = random_problem(rng, 2, beta=2.0 ** -8)
        out = solve_y_qp(problem)
        f = y_objective(out, problem)
        ref = oracles.grid_min_m2(problem.A, problem.D, problem.beta)
        assert f <= ref + 1e-6

    def test_matches_grid_oracle_m3(self):
        rng = np.random.default_rng(8)
        problem = random_problem(rng, 3, beta=2.0 ** -5)
        out = solve_y_qp(problem)
        f = y_objective(out, problem)
        ref = oracles.grid_min_m3(problem.A, problem.D, problem.beta)
        assert f <= ref + 1e-5

    def test_every_iterate_feasible(self):
        rng = np.random.default_rng(9)
        problem = random_problem(rng, 4, beta=2.0 ** -10)
        iterates: list = []
        solve_y_qp(problem, record=iterates)
        assert iterates
        for Y in iterates:
            validate_representation(Y, tol=1e-9)

    def test_warm_start_accepted(self):
        rng = np.random.default_rng(10)
        problem = random_problem(rng, 3, beta=2.0 ** -8)
        cold = solve_y_qp(problem)
        warm = solve_y_qp(problem, y0=cold)
        assert y_objective(warm, problem) <= y_objective(cold, problem) + 1e-12

    def test_kkt_residual_small(self):
        rng = np.random.default_rng(11)
        problem = random_problem(rng, 5, beta=2.0 ** -8)
        out = solve_y_qp(problem)
        assert kkt_residual(out, problem) <= 1e-6

    def test_dominates_random_feasible_sample(self):
        # 10^5 random feasible points, batched per instance.
        rng = np.random.default_rng(13)
        for m in (2, 3):
            problem = random_problem(rng, m, beta=2.0 ** -8)
            f_star = y_objective(solve_y_qp(problem), problem)
            samples = rng.dirichlet(np.ones(m), size=(50_000, m))
            Ys = np.transpose(samples, (0, 2, 1))
            s = Ys.sum(axis=2)
            quad = np.einsum("bi,ij,bj->b", s, problem.A, s) / (m * m)
            lin = problem.beta * np.einsum("bij,ij->b", Ys, problem.D)
            assert f_star <= float(np.min(quad + lin)) + 1e-6

    def test_vector_mode_rejected(self):
        problem = QpProblem(A=np.eye(2), mode="vector_simplex")
        with pytest.raises(ValueError, match="column_stochastic"):
            solve_y_qp(problem)


class TestConvexity:
    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_jensen_inequality(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 5))
        problem = random_problem(rng, m, beta=float(rng.uniform(0.0, 0.1)))
        Y1 = rng.dirichlet(np.ones(m), size=m).T
        Y2 = rng.dirichlet(np.ones(m), size=m).T
        t = float(rng.uniform(0.0, 1.0))
        mix = y_objective(t * Y1 + (1 - t) * Y2, problem)
        bound = t * y_objective(Y1, problem) + (1 - t) * y_objective(Y2, problem)
        assert mix <= bound + 1e-10
