"""Top-k eigendecomposition of symmetric matrices.

The relaxed partition matrix H used by every kernel k-means variant in
this package stacks the k leading eigenvectors of a (possibly
indefinite) symmetric matrix.  H maximizes trace(H' S H) over matrices
with orthonormal columns, which is the spectral relaxation of the
kernel k-means objective trace(S (I - H H')).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class Embedding:
    """n x k matrix of leading eigenvectors plus their eigenvalues."""

    vectors: Array
    eigenvalues: Array

    def __post_init__(self) -> None:
        H = np.asarray(self.vectors, dtype=np.float64)
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if H.ndim != 2 or lam.ndim != 1 or H.shape[1] != lam.shape[0]:
            raise ValueError("embedding shape mismatch")
        H.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "vectors", H)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def k(self) -> int:
        return self.vectors.shape[1]


def _fix_signs(H: Array) -> Array:
    # Deterministic sign: the entry of largest magnitude in each column
    # is made nonnegative; ties resolve to the first index.
    out = H.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0.0:
            out[:, j] = -out[:, j]
    return out


def top_k_eigs(S: Array, k: int) -> Embedding:
    """Return the k leading eigenpairs of a symmetric matrix.

    Eigenvalues are sorted descending by value (not magnitude), so the
    result is well defined for indefinite matrices.  Eigenvector signs
    follow a deterministic convention.

    Raises on asymmetric input (beyond 1e-10 relative) and on k outside
    [1, n].
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("input must be a square matrix")
    n = S.shape[0]
    scale = max(1.0, float(np.max(np.abs(S))))
    asym = float(np.max(np.abs(S - S.T)))
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix asymmetric beyond tolerance (max deviation {asym:.3e})")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix contains non-finite entries")
    if k < 1 or k > n:
        raise ValueError(f"k = {k} out of range for n = {n}")
    # Full dense symmetric eigendecomposition; ascending order from eigh.
    lam, V = np.linalg.eigh((S + S.T) / 2.0)
    order = np.argsort(lam)[::-1][:k]
    H = _fix_signs(V[:, order])
    return Embedding(H, lam[order])


def residual_trace(S: Array, H: Array) -> float:
    """trace(S (I - H H')) evaluated as trace(S) - trace(H' S H)."""
    S = np.asarray(S, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    return float(np.trace(S) - np.trace(H.T @ S @ H))
