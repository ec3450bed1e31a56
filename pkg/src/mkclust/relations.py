"""Pairwise relations between the kernels of a bank.

Two m x m matrices summarize how the kernels of a bank relate to each
other: a correlation matrix of entrywise (Frobenius) inner products and
a dissimilarity matrix of entrywise Manhattan distances.  Both are
constants of a bank; compute them once and reuse them across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelBank

Array = np.ndarray

# Row-block size for the accumulation loops: keeps the temporaries
# small at n = 10^4 while np.sum's pairwise reduction does the
# heavy lifting inside each block.
_BLOCK_ROWS = 512


def _blocked_sum(a: Array, b: Array, op: str) -> float:
    n = a.shape[0]
    parts = []
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        if op == "prod":
            parts.append(float(np.sum(a[start:stop] * b[start:stop])))
        else:
            parts.append(float(np.sum(np.abs(a[start:stop] - b[start:stop]))))
    return math.fsum(parts)


@dataclass(frozen=True)
class RelationMatrices:
    """Correlation matrix M and dissimilarity matrix D of one bank."""

    correlation: Array
    dissimilarity: Array

    def __post_init__(self) -> None:
        M = np.asarray(self.correlation, dtype=np.float64)
        D = np.asarray(self.dissimilarity, dtype=np.float64)
        if M.shape != D.shape or M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("relation matrices must be square and same-shape")
        for a in (M, D):
            a.setflags(write=False)
        object.__setattr__(self, "correlation", M)
        object.__setattr__(self, "dissimilarity", D)

    @property
    def m(self) -> int:
        return self.correlation.shape[0]


def correlation_matrix(bank: KernelBank) -> Array:
    """M(p, q) = sum_ij K_p(i,j) K_q(i,j), the Gram matrix of the bank
    under the Frobenius inner product.  Symmetric and positive
    semidefinite."""
    m = len(bank)
    M = np.zeros((m, m))
    for p in range(m):
        for q in range(p, m):
            s = _blocked_sum(bank[p].values, bank[q].values, "prod")
            M[p, q] = s
            M[q, p] = s
    return M


def dissimilarity_matrix(bank: KernelBank) -> Array:
    """D(p, q) = sum_ij |K_p(i,j) - K_q(i,j)|.

    A metric on the bank: symmetric, zero diagonal, and it satisfies
    the triangle inequality entrywise."""
    m = len(bank)
    D = np.zeros((m, m))
    for p in range(m):
        for q in range(p + 1, m):
            s = _blocked_sum(bank[p].values, bank[q].values, "absdiff")
            D[p, q] = s
            D[q, p] = s
    return D


def relation_matrices(bank: KernelBank) -> RelationMatrices:
    """Compute both relation matrices of a bank in one pass."""
    return RelationMatrices(correlation_matrix(bank), dissimilarity_matrix(bank))
