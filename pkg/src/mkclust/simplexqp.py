"""Simplex-constrained quadratic programs.

Two convex programs recur in multiple-kernel k-means weight learning:

* vector form      min_w  (1/2) w' A w            over the probability
                   simplex, which covers the classic weight steps
                   min w' B w and min (1/2) w' (2B + lambda M) w;
* matrix form      min_Y  (1/m^2) (Y 1)' A (Y 1) + beta <D, Y>  over
                   column-stochastic nonnegative Y, the correlation/
                   dissimilarity weight step.

Both are solved by projected gradient descent with an exact Euclidean
projection onto the simplex (sort-based), Armijo backtracking from an
initial step 1/L, and a final active-set refinement that solves the
KKT system restricted to the support found by the iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

Array = np.ndarray

MAX_ITERS = 10_000
REL_DECREASE_TOL = 1e-10
KKT_TOL = 1e-8
ACTIVE_TOL = 1e-12


def project_simplex(v: Array) -> Array:
    """Euclidean projection of a vector onto the probability simplex.

    Sort-based exact algorithm: with u the coordinates sorted in
    descending order, the threshold tau is (sum of the first rho
    entries - 1) / rho for the largest feasible rho, and the projection
    is max(v - tau, 0).
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite values")
    u = np.sort(v)[::-1]
    cum = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    mask = u - cum / idx > 0.0
    rho = int(np.nonzero(mask)[0][-1]) + 1
    tau = cum[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def project_columns(Y: Array) -> Array:
    """Project every column of a matrix onto the simplex (batched)."""
    Y = np.asarray(Y, dtype=np.float64)
    m, ncols = Y.shape
    u = -np.sort(-Y, axis=0)
    cum = np.cumsum(u, axis=0) - 1.0
    idx = np.arange(1, m + 1)[:, None]
    cond = u - cum / idx > 0.0
    rho = m - 1 - np.argmax(cond[::-1, :], axis=0)
    tau = cum[rho, np.arange(ncols)] / (rho + 1)
    return np.maximum(Y - tau[None, :], 0.0)


def validate_representation(Y: Array, tol: float = 1e-8) -> None:
    """Check column-stochasticity: entries >= 0, column sums = 1."""
    Y = np.asarray(Y, dtype=np.float64)
    if np.min(Y) < -1e-12:
        raise ValueError(f"representation has negative entry {float(np.min(Y)):.3e}")
    err = float(np.max(np.abs(Y.sum(axis=0) - 1.0)))
    if err > tol:
        raise ValueError(f"representation column sums deviate from 1 by {err:.3e}")


@dataclass(frozen=True)
class QpProblem:
    """Data of one simplex-constrained QP.

    A is the (PSD) quadratic coefficient matrix: B + alpha*M for the
    correlation/dissimilarity Y-step, 2B (resp. 2B + lambda*M) for the
    vector weight steps.  D and beta define the linear term of the
    matrix form and are ignored in vector mode.
    """

    A: Array
    D: Array | None = None
    beta: float = 0.0
    mode: str = "column_stochastic"

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.all(np.isfinite(A)):
            raise ValueError("A contains non-finite entries")
        if float(np.max(np.abs(A - A.T))) > 1e-10 * max(1.0, float(np.max(np.abs(A)))):
            raise ValueError("A must be symmetric")
        A = (A + A.T) / 2.0
        m = A.shape[0]
        lam_min = float(np.linalg.eigvalsh(A)[0])
        if lam_min < -1e-8 * max(float(np.trace(A)), 0.0) / m:
            raise ValueError(
                f"nonconvex QP rejected: smallest eigenvalue of A is {lam_min:.3e}"
            )
        if self.mode not in ("vector_simplex", "column_stochastic"):
            raise ValueError(f"unknown QP mode {self.mode!r}")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        D = self.D
        if D is None:
            D = np.zeros((m, m))
        D = np.asarray(D, dtype=np.float64)
        if D.shape != (m, m):
            raise ValueError(f"D must be {m} x {m}")
        if not np.all(np.isfinite(D)):
            raise ValueError("D contains non-finite entries")
        A.setflags(write=False)
        D = D.copy()
        D.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)

    @property
    def m(self) -> int:
        return self.A.shape[0]


def y_objective(Y: Array, problem: QpProblem) -> float:
    """(1/m^2) (Y 1)' A (Y 1) + beta sum(D * Y)."""
    Y = np.asarray(Y, dtype=np.float64)
    m = problem.m
    s = Y.sum(axis=1)
    return float(s @ problem.A @ s / (m * m) + problem.beta * np.sum(problem.D * Y))


def y_gradient(Y: Array, problem: QpProblem) -> Array:
    """Gradient of :func:`y_objective`: (2/m^2) (A Y 1) 1' + beta D."""
    Y = np.asarray(Y, dtype=np.float64)
    m = problem.m
    s = Y.sum(axis=1)
    return (2.0 / (m * m)) * np.outer(problem.A @ s, np.ones(m)) + problem.beta * problem.D


def _power_iteration_step_bound(problem: QpProblem) -> float:
    """Largest curvature L of the quadratic part, by power iteration on
    the operator Y -> (2/m^2) A (Y 1) 1'."""
    m = problem.m
    Y = np.outer(np.linspace(1.0, 1.25, m), np.ones(m))
    Y /= np.linalg.norm(Y)
    lam = 0.0
    for _ in range(200):
        Z = (2.0 / (m * m)) * np.outer(problem.A @ Y.sum(axis=1), np.ones(m))
        nz = np.linalg.norm(Z)
        if nz == 0.0:
            return 0.0
        lam_new = float(np.sum(Y * Z))
        Y = Z / nz
        if abs(lam_new - lam) <= 1e-13 * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return abs(lam)


def kkt_residual(Y: Array, problem: QpProblem) -> float:
    """Stationarity violation on the active set.

    At an optimum the gradient entries of every column agree on the
    support and dominate it elsewhere, so the residual is the largest
    gap between an active gradient entry and its column minimum.
    """
    Y = np.asarray(Y, dtype=np.float64)
    G = y_gradient(Y, problem)
    col_min = G.min(axis=0)
    active = Y > ACTIVE_TOL
    if not np.any(active):
        return 0.0
    return float(np.max((G - col_min[None, :])[active]))


def _exact_qp_refine(A: Array, gamma: float, C: Array, X0: Array) -> Array | None:
    """Exact active-set solve of min gamma (X1)' A (X1) + <C, X> over a
    product of column simplices, warm-started at X0.

    Null-space method: within the current support, take Newton steps on
    the affine set (column sums fixed, other entries zero); when the
    reduced system is inconsistent the objective is unbounded along a
    zero-curvature ray, so walk that ray to the nearest bound.  Blocking
    entries leave the support; entries whose gradient undercuts their
    column multiplier re-enter.  Terminates at an exact KKT point for
    this convex program (up to the stated tolerances).
    """
    m, ncols = X0.shape
    X = np.maximum(np.asarray(X0, dtype=np.float64), 0.0)
    sums = X.sum(axis=0)
    if np.any(sums <= 0.0):
        return None
    X = X / sums[None, :]
    support = [(p, q) for q in range(ncols) for p in range(m) if X[p, q] > 1e-10]
    for q in range(ncols):
        if not any(e[1] == q for e in support):
            support.append((int(np.argmax(X[:, q])), q))
    support.sort()
    mask = np.zeros((m, ncols), dtype=bool)
    for p, q in support:
        mask[p, q] = True
    X = np.where(mask, X, 0.0)
    X = X / X.sum(axis=0)[None, :]

    def objective(Xc: Array) -> float:
        s = Xc.sum(axis=1)
        return float(gamma * (s @ A @ s) + np.sum(C * Xc))

    best = X.copy()
    best_f = objective(X)
    for _ in range(200 + 4 * m * ncols):
        rows = [p for p, _ in support]
        ne = len(support)
        s = X.sum(axis=1)
        G = 2.0 * gamma * np.outer(A @ s, np.ones(ncols)) + C
        g_s = np.array([G[p, q] for p, q in support])
        # Per-column difference basis of the null space of the
        # column-sum constraints.
        cols_of = [[i for i, e in enumerate(support) if e[1] == q] for q in range(ncols)]
        zcols = []
        for q in range(ncols):
            idxs = cols_of[q]
            for i in idxs[1:]:
                z = np.zeros(ne)
                z[idxs[0]] = -1.0
                z[i] = 1.0
                zcols.append(z)
        if not zcols:
            d_s = np.zeros(ne)
        else:
            Z = np.stack(zcols, axis=1)
            Q_s = 2.0 * gamma * A[np.ix_(rows, rows)]
            Hr = Z.T @ Q_s @ Z
            gr = Z.T @ g_s
            y, *_ = np.linalg.lstsq(Hr, -gr, rcond=None)
            resid = Hr @ y + gr
            if float(np.max(np.abs(resid))) > 1e-9 * max(1.0, float(np.max(np.abs(gr)))):
                # Zero-curvature descent ray.
                d_s = Z @ (-resid)
                x_s = np.array([X[p, q] for p, q in support])
                neg = d_s < -1e-14
                if not np.any(neg):
                    break
                ratios = x_s[neg] / -d_s[neg]
                alpha = float(np.min(ratios))
                x_new = x_s + alpha * d_s
                _apply_step(X, support, x_new)
                _drop_blocked(X, support, mask)
                f = objective(X)
                if f < best_f - 1e-15:
                    best, best_f = X.copy(), f
                continue
            d_s = Z @ y
        x_s = np.array([X[p, q] for p, q in support])
        step_inf = float(np.max(np.abs(d_s))) if ne else 0.0
        if step_inf <= 1e-13 * max(1.0, float(np.max(np.abs(x_s)))):
            # Affine minimizer reached: multiplier test on excluded entries.
            mu = np.empty(ncols)
            for q in range(ncols):
                mu[q] = float(np.mean([G[p, q2] for (p, q2) in support if q2 == q]))
            gaps = G - mu[None, :]
            gaps[mask] = np.inf
            worst = float(np.min(gaps))
            if worst >= -1e-10 * max(1.0, float(np.max(np.abs(G)))):
                return best
            p, q = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
            support.append((int(p), int(q)))
            support.sort()
            mask[p, q] = True
            continue
        neg = d_s < -1e-14
        alpha = 1.0
        if np.any(neg):
            ratios = x_s[neg] / -d_s[neg]
            alpha = min(1.0, float(np.min(ratios)))
        x_new = x_s + alpha * d_s
        _apply_step(X, support, x_new)
        if alpha < 1.0:
            _drop_blocked(X, support, mask)
        f = objective(X)
        if f < best_f - 1e-15:
            best, best_f = X.copy(), f
    return best


def _apply_step(X: Array, support: list[tuple[int, int]], x_new: Array) -> None:
    for (p, q), val in zip(support, x_new):
        X[p, q] = max(val, 0.0)


def _drop_blocked(X: Array, support: list[tuple[int, int]], mask: Array) -> None:
    # Remove entries driven to (numerical) zero, keeping every column
    # populated.
    col_count: dict[int, int] = {}
    for _, q in support:
        col_count[q] = col_count.get(q, 0) + 1
    for e in sorted(support, key=lambda e: X[e[0], e[1]]):
        p, q = e
        if X[p, q] <= 1e-14 and col_count[q] >= 2:
            support.remove(e)
            mask[p, q] = False
            X[p, q] = 0.0
            col_count[q] -= 1


def _projected_gradient(
    problem: QpProblem,
    Y0: Array,
    max_iters: int,
    record: list[Array] | None,
) -> tuple[Array, bool]:
    L = _power_iteration_step_bound(problem)
    eta0 = 1.0 / max(L, 1e-12)
    Y = project_columns(Y0)
    if record is not None:
        record.append(Y.copy())
    f = y_objective(Y, problem)
    G = y_gradient(Y, problem)
    hit_cap = True
    for _ in range(max_iters):
        eta = eta0
        Y_new, f_new = Y, f
        for _ in range(60):
            cand = project_columns(Y - eta * G)
            d = cand - Y
            f_cand = y_objective(cand, problem)
            bound = f + float(np.sum(G * d)) + float(np.sum(d * d)) / (2.0 * eta)
            if f_cand <= bound + 1e-14 * max(1.0, abs(f)):
                Y_new, f_new = cand, f_cand
                break
            eta /= 2.0
        step = float(np.max(np.abs(Y_new - Y)))
        Y, f_prev, f = Y_new, f, f_new
        if record is not None:
            record.append(Y.copy())
        if not np.isfinite(f):
            raise FloatingPointError("numerical divergence in QP iteration")
        G = y_gradient(Y, problem)
        col_min = G.min(axis=0)
        active = Y > ACTIVE_TOL
        resid = float(np.max((G - col_min[None, :])[active])) if np.any(active) else 0.0
        if resid < KKT_TOL:
            hit_cap = False
            break
        if abs(f_prev - f) <= REL_DECREASE_TOL * max(1.0, abs(f_prev)) or step == 0.0:
            hit_cap = False
            break
    if hit_cap:
        warnings.warn(
            "simplex QP reached the iteration cap; returning the best iterate",
            RuntimeWarning,
        )
    return Y, hit_cap


def solve_y_qp(
    problem: QpProblem,
    y0: Array | None = None,
    max_iters: int = MAX_ITERS,
    record: list[Array] | None = None,
) -> Array:
    """Minimize the matrix-form objective over column-stochastic Y.

    y0, when given, warm-starts the iteration (it is projected first,
    so any m x m array is accepted).  Every iterate is feasible; the
    result satisfies the KKT conditions of the convex program.
    """
    if problem.mode != "column_stochastic":
        raise ValueError("solve_y_qp expects a column_stochastic problem")
    m = problem.m
    if m == 1:
        out = np.ones((1, 1))
        if record is not None:
            record.append(out.copy())
        return out
    Y0 = np.full((m, m), 1.0 / m) if y0 is None else np.asarray(y0, dtype=np.float64)
    if Y0.shape != (m, m):
        raise ValueError(f"y0 must be {m} x {m}")
    Y, _ = _projected_gradient(problem, Y0, max_iters, record)
    refined = _exact_qp_refine(problem.A, 1.0 / (m * m), problem.beta * problem.D, Y)
    if refined is not None and y_objective(refined, problem) <= y_objective(Y, problem):
        Y = refined
        if record is not None:
            record.append(Y.copy())
    validate_representation(Y)
    return Y


def solve_weight_qp(A: Array, max_iters: int = MAX_ITERS) -> Array:
    """argmin of w' A w over the probability simplex (A PSD)."""
    A = np.asarray(A, dtype=np.float64)
    m = A.shape[0]
    if m == 1:
        if A[0, 0] < 0:
            raise ValueError("nonconvex QP rejected: negative 1x1 coefficient")
        return np.ones(1)
    _check_psd(A)
    w = project_simplex(np.full(m, 1.0 / m))
    L = 2.0 * _lambda_max(A)
    eta0 = 1.0 / max(L, 1e-12)
    f = float(w @ A @ w)
    hit_cap = True
    for _ in range(max_iters):
        g = 2.0 * (A @ w)
        eta = eta0
        w_new, f_new = w, f
        for _ in range(60):
            cand = project_simplex(w - eta * g)
            d = cand - w
            f_cand = float(cand @ A @ cand)
            bound = f + float(g @ d) + float(d @ d) / (2.0 * eta)
            if f_cand <= bound + 1e-14 * max(1.0, abs(f)):
                w_new, f_new = cand, f_cand
                break
            eta /= 2.0
        w, f_prev, f = w_new, f, f_new
        if not np.isfinite(f):
            raise FloatingPointError("numerical divergence in QP iteration")
        if _weight_kkt_residual(w, A) < KKT_TOL:
            hit_cap = False
            break
        if abs(f_prev - f) <= REL_DECREASE_TOL * max(1.0, abs(f_prev)):
            hit_cap = False
            break
    if hit_cap:
        warnings.warn(
            "simplex QP reached the iteration cap; returning the best iterate",
            RuntimeWarning,
        )
    refined = _exact_qp_refine(A, 1.0, np.zeros((m, 1)), w[:, None])
    if refined is not None and float(refined[:, 0] @ A @ refined[:, 0]) <= f:
        w = refined[:, 0]
    return w


def _check_psd(A: Array) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("A contains non-finite entries")
    if float(np.max(np.abs(A - A.T))) > 1e-10 * max(1.0, float(np.max(np.abs(A)))):
        raise ValueError("A must be symmetric")
    m = A.shape[0]
    lam_min = float(np.linalg.eigvalsh(A)[0])
    if lam_min < -1e-8 * max(float(np.trace(A)), 0.0) / m:
        raise ValueError(
            f"nonconvex QP rejected: smallest eigenvalue of A is {lam_min:.3e}"
        )


def _lambda_max(A: Array) -> float:
    m = A.shape[0]
    v = np.linspace(1.0, 1.25, m)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(200):
        z = A @ v
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return 0.0
        lam_new = float(v @ z)
        v = z / nz
        if abs(lam_new - lam) <= 1e-13 * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return abs(lam)


def _weight_kkt_residual(w: Array, A: Array) -> float:
    g = 2.0 * (A @ w)
    mu = float(np.min(g))
    active = w > ACTIVE_TOL
    if not np.any(active):
        return 0.0
    return float(np.max(g[active] - mu))
