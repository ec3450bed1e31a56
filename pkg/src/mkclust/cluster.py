"""Clustering algorithms over kernel banks.

Contains plain k-means (used to discretize spectral embeddings), the
single-kernel and multiple-kernel k-means baselines, and the
correlation/dissimilarity weighted algorithm that alternates a top-k
eigenvector step with a simplex-constrained QP over the kernel-weight
representation matrix Y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import GramMatrix, KernelBank, combine
from .metrics import accuracy
from .relations import RelationMatrices
from .simplexqp import QpProblem, solve_weight_qp, solve_y_qp
from .spectral import Embedding, top_k_eigs

Array = np.ndarray

# Grid ranges used in the reference benchmarks; values outside them are
# legal but worth flagging.
ALPHA_GRID_RANGE = (0.1, 0.9)
BETA_GRID_RANGE = (2.0 ** -14, 2.0 ** -5)

KMEANS_MAX_ITERS = 300


@dataclass(frozen=True)
class Partition:
    """Cluster assignment of n samples into k clusters."""

    labels: Array
    k: int

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValueError("labels must be a vector")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if lab.size and (lab.min() < 0 or lab.max() >= self.k):
            raise ValueError("labels out of range [0, k)")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class KcdConfig:
    """Settings of the correlation/dissimilarity weighted algorithm.

    alpha scales the correlation penalty, beta the dissimilarity
    reward.  epsilon is the absolute objective-change tolerance; None
    selects 1e-6 times the first objective value's magnitude.
    """

    k: int
    alpha: float = 0.5
    beta: float = 2.0 ** -8
    epsilon: float | None = None
    max_outer_iters: int = 50
    seed: int = 0
    row_normalize: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.alpha < 0.0 or not np.isfinite(self.alpha):
            raise ValueError("alpha must be a finite nonnegative real")
        if self.beta < 0.0 or not np.isfinite(self.beta):
            raise ValueError("beta must be a finite nonnegative real")
        if self.epsilon is not None and self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if not (ALPHA_GRID_RANGE[0] <= self.alpha <= ALPHA_GRID_RANGE[1]):
            warnings.warn(
                f"alpha = {self.alpha:g} lies outside the benchmark grid "
                f"[{ALPHA_GRID_RANGE[0]}, {ALPHA_GRID_RANGE[1]}]",
                UserWarning,
            )
        if not (BETA_GRID_RANGE[0] <= self.beta <= BETA_GRID_RANGE[1]):
            warnings.warn(
                f"beta = {self.beta:g} lies outside the benchmark grid "
                f"[2^-14, 2^-5]",
                UserWarning,
            )


@dataclass(frozen=True)
class KcdResult:
    """Output of the alternating algorithms.

    Y is None for the baselines that learn only a weight vector.
    clamped_steps lists the sweeps whose B diagonal needed clamping at
    zero; orthonormality_residuals records max|H'H - I| per sweep.
    """

    weights: Array
    partition: Partition
    embedding: Embedding
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    Y: Array | None = None
    clamped_steps: tuple[int, ...] = field(default_factory=tuple)
    orthonormality_residuals: tuple[float, ...] = field(default_factory=tuple)


def _sq_distances(points: Array, centers: Array) -> Array:
    p2 = np.sum(points * points, axis=1)[:, None]
    c2 = np.sum(centers * centers, axis=1)[None, :]
    return np.maximum(p2 + c2 - 2.0 * (points @ centers.T), 0.0)


def _seed_centers(points: Array, k: int, rng: np.random.Generator) -> Array:
    """k-means++ seeding: spread initial centers by distance-weighted
    sampling."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = _sq_distances(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        d2 = np.minimum(d2, _sq_distances(points, centers[j : j + 1])[:, 0])
    return centers


def _repair_empty(labels: Array, d2: Array, k: int) -> Array:
    """Give each empty cluster the point farthest from its centroid.

    Points are only taken from clusters that keep at least one member;
    ties break at the lowest point index.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    own = d2[np.arange(labels.size), labels]
    for c in range(k):
        if counts[c] > 0:
            continue
        movable = counts[labels] >= 2
        if not np.any(movable):
            continue
        cand = np.where(movable, own, -np.inf)
        idx = int(np.argmax(cand))
        counts[labels[idx]] -= 1
        labels[idx] = c
        counts[c] += 1
        own[idx] = 0.0
    return labels


def _lloyd(points: Array, k: int, seed: int) -> tuple[Array, list[float]]:
    """Lloyd iteration to an assignment fixpoint; returns labels and the
    per-iteration within-cluster sum of squares."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k = {k} exceeds the number of samples {n}")
    rng = np.random.default_rng(seed)
    centers = _seed_centers(points, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    for _ in range(KMEANS_MAX_ITERS):
        d2 = _sq_distances(points, centers)
        new_labels = np.argmin(d2, axis=1).astype(np.int64)
        new_labels = _repair_empty(new_labels, d2, k)
        trace.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if members.shape[0] > 0:
                centers[c] = members.mean(axis=0)
    return labels, trace


def kmeans(points: Array, k: int, seed: int = 0) -> Partition:
    """Deterministic k-means (k-means++ seeding, Lloyd refinement)."""
    labels, _ = _lloyd(points, k, seed)
    return Partition(labels, k)


def _gram_values(K: GramMatrix | Array) -> Array:
    return K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=np.float64)


def discretize(
    emb: Embedding, k: int, seed: int = 0, row_normalize: bool = False
) -> Partition:
    """Turn a spectral embedding into a hard partition with seeded
    k-means.  Everything upstream of this call is deterministic, so
    repeated runs only need to redo this step."""
    H = emb.vectors
    if row_normalize:
        norms = np.linalg.norm(H, axis=1, keepdims=True)
        H = H / np.where(norms > 0.0, norms, 1.0)
    return kmeans(H, k, seed)


def kkm(
    K: GramMatrix | Array, k: int, seed: int = 0, row_normalize: bool = False
) -> Partition:
    """Kernel k-means via spectral relaxation: cluster the rows of the
    top-k eigenvector matrix."""
    emb = top_k_eigs(_gram_values(K), k)
    return discretize(emb, k, seed, row_normalize)


def average_kernel(bank: KernelBank) -> Array:
    """Uniform mean of the bank's Gram matrices."""
    mean = np.zeros((bank.n, bank.n))
    for g in bank:
        mean += g.values
    mean /= len(bank)
    return mean


def a_mkkm(
    bank: KernelBank, k: int, seed: int = 0, row_normalize: bool = False
) -> Partition:
    """Average-kernel baseline: kernel k-means on the uniform mean of
    the bank."""
    emb = top_k_eigs(average_kernel(bank), k)
    return discretize(emb, k, seed, row_normalize)


def bank_embeddings(bank: KernelBank, k: int) -> list[Embedding]:
    """Top-k eigenvector embedding of every kernel in the bank."""
    return [top_k_eigs(g.values, k) for g in bank]


def sb_kkm(
    bank: KernelBank,
    k: int,
    labels: Array,
    seed: int = 0,
    row_normalize: bool = False,
    embeddings: list[Embedding] | None = None,
) -> tuple[Partition, int]:
    """Single-best baseline: run kernel k-means on every kernel and keep
    the one with the highest clustering accuracy against the given
    labels.  Ties keep the lowest kernel index.  Pass precomputed
    embeddings to amortize the eigendecompositions over seeds."""
    truth = np.asarray(labels)
    if embeddings is None:
        embeddings = bank_embeddings(bank, k)
    if len(embeddings) != len(bank):
        raise ValueError("one embedding per kernel required")
    best: tuple[Partition, int] | None = None
    best_acc = -1.0
    for i, emb in enumerate(embeddings):
        part = discretize(emb, k, seed, row_normalize)
        acc = accuracy(part.labels, truth)
        if acc > best_acc:
            best, best_acc = (part, i), acc
    assert best is not None
    return best


def _kernel_residuals(bank: KernelBank, H: Array) -> Array:
    """B_p = trace(K_p (I - H H')): per-kernel mass not captured by H."""
    P = H @ H.T
    return np.array(
        [float(np.trace(g.values) - np.sum(g.values * P)) for g in bank]
    )


def mkkm(
    bank: KernelBank,
    k: int,
    seed: int = 0,
    epsilon: float | None = None,
    max_iters: int = 50,
) -> KcdResult:
    """Classic multiple-kernel k-means: alternate the top-k eigenvector
    step with the diagonal weight QP min w' diag(B) w."""
    return _alternate(bank, k, seed, epsilon, max_iters, _MkkmSteps(), False)


def mkkm_mr(
    bank: KernelBank,
    k: int,
    lam: float,
    seed: int = 0,
    epsilon: float | None = None,
    max_iters: int = 50,
    M: Array | None = None,
) -> KcdResult:
    """Matrix-regularized multiple-kernel k-means: weight step
    min (1/2) w' (2B + lambda M) w with M the kernel correlation
    matrix."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    if M is None:
        from .relations import correlation_matrix

        M = correlation_matrix(bank)
    return _alternate(bank, k, seed, epsilon, max_iters, _MrSteps(lam, M), False)


class _MkkmSteps:
    # 2B and B share the argmin; the 2B form keeps the lambda = 0 case
    # of the regularized variant on the exact same solver input.
    def weights(self, B_clamped: Array, m: int) -> Array:
        return solve_weight_qp(2.0 * np.diag(B_clamped))

    def objective(self, w: Array, B: Array) -> float:
        return float(np.dot(B, w * w))


class _MrSteps:
    def __init__(self, lam: float, M: Array) -> None:
        self.lam = lam
        self.M = np.asarray(M, dtype=np.float64)

    def weights(self, B_clamped: Array, m: int) -> Array:
        return solve_weight_qp(2.0 * np.diag(B_clamped) + self.lam * self.M)

    def objective(self, w: Array, B: Array) -> float:
        return float(np.dot(B, w * w) + 0.5 * self.lam * (w @ self.M @ w))


def _alternate(
    bank: KernelBank,
    k: int,
    seed: int,
    epsilon: float | None,
    max_iters: int,
    steps,
    row_normalize: bool,
) -> KcdResult:
    m = len(bank)
    w = np.full(m, 1.0 / m)
    f_prev = 0.0
    trace: list[float] = []
    clamped: list[int] = []
    ortho: list[float] = []
    emb: Embedding | None = None
    converged = False
    eps = epsilon
    for t in range(1, max_iters + 1):
        emb = top_k_eigs(combine(bank, w), k)
        H = emb.vectors
        ortho.append(float(np.max(np.abs(H.T @ H - np.eye(k)))))
        B = _kernel_residuals(bank, H)
        if float(np.min(B)) < 0.0:
            clamped.append(t)
        w = steps.weights(np.maximum(B, 0.0), m)
        f = steps.objective(w, B)
        if not np.isfinite(f):
            raise FloatingPointError("numerical divergence in objective")
        trace.append(f)
        if eps is None:
            eps = 1e-6 * abs(f)
        if abs(f - f_prev) <= eps:
            converged = True
            break
        f_prev = f
    assert emb is not None
    partition = discretize(emb, k, seed, row_normalize)
    return KcdResult(
        weights=w,
        partition=partition,
        embedding=emb,
        objective_trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
        clamped_steps=tuple(clamped),
        orthonormality_residuals=tuple(ortho),
    )


def kcd_mkkm(
    bank: KernelBank, relations: RelationMatrices, cfg: KcdConfig
) -> KcdResult:
    """Correlation/dissimilarity weighted multiple-kernel k-means.

    Alternates until the objective
    trace(K_Y (I - H H')) + alpha w' M w + beta <D, Y> stops moving:

    1. combine the bank with the current weights and take the top-k
       eigenvectors H;
    2. solve the convex QP over column-stochastic Y with quadratic
       coefficient diag(B) + alpha M and linear cost beta D, warm-started
       at the previous Y;
    3. read the weights off the row means of Y.

    The final H is discretized by seeded k-means.
    """
    m = len(bank)
    M, D = relations.correlation, relations.dissimilarity
    if relations.m != m:
        raise ValueError(
            f"relation matrices are {relations.m} x {relations.m}, bank has {m} kernels"
        )
    Y = np.full((m, m), 1.0 / m)
    w = Y.sum(axis=1) / m
    f_prev = 0.0
    trace: list[float] = []
    clamped: list[int] = []
    ortho: list[float] = []
    emb: Embedding | None = None
    converged = False
    eps = cfg.epsilon
    for t in range(1, cfg.max_outer_iters + 1):
        emb = top_k_eigs(combine(bank, w), cfg.k)
        H = emb.vectors
        ortho.append(float(np.max(np.abs(H.T @ H - np.eye(cfg.k)))))
        B = _kernel_residuals(bank, H)
        if float(np.min(B)) < 0.0:
            clamped.append(t)
        problem = QpProblem(
            A=np.diag(np.maximum(B, 0.0)) + cfg.alpha * M,
            D=D,
            beta=cfg.beta,
        )
        Y = solve_y_qp(problem, y0=Y)
        w = Y.sum(axis=1) / m
        f = float(
            np.dot(B, w * w) + cfg.alpha * (w @ M @ w) + cfg.beta * np.sum(D * Y)
        )
        if not np.isfinite(f):
            raise FloatingPointError("numerical divergence in objective")
        trace.append(f)
        if eps is None:
            eps = 1e-6 * abs(f)
        if abs(f - f_prev) <= eps:
            converged = True
            break
        f_prev = f
    assert emb is not None
    partition = discretize(emb, cfg.k, cfg.seed, cfg.row_normalize)
    return KcdResult(
        weights=w,
        partition=partition,
        embedding=emb,
        objective_trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
        Y=Y,
        clamped_steps=tuple(clamped),
        orthonormality_residuals=tuple(ortho),
    )
