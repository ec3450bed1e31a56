"""Friedman rank test and Nemenyi critical difference.

Ranks algorithms per dataset (ties averaged), tests whether the mean
ranks could come from equivalent algorithms, and flags algorithm pairs
whose mean-rank gap exceeds the critical difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

Array = np.ndarray


@dataclass(frozen=True)
class RankTable:
    """Per-dataset algorithm ranks: rows are datasets, columns are
    algorithms, entries are tie-averaged ranks 1..k."""

    ranks: Array

    def __post_init__(self) -> None:
        r = np.asarray(self.ranks, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise ValueError("ranks must be a nonempty 2-d table")
        k = r.shape[1]
        expected = k * (k + 1) / 2.0
        sums = r.sum(axis=1)
        if np.any(np.abs(sums - expected) > 1e-9):
            bad = int(np.argmax(np.abs(sums - expected)))
            raise ValueError(
                f"row {bad} sums to {sums[bad]:.12g}, expected {expected:.12g}"
            )
        r.setflags(write=False)
        object.__setattr__(self, "ranks", r)

    @property
    def n_datasets(self) -> int:
        return self.ranks.shape[0]

    @property
    def k_algorithms(self) -> int:
        return self.ranks.shape[1]

    @property
    def mean_ranks(self) -> Array:
        return self.ranks.mean(axis=0)


def rank_row(scores, higher_is_better: bool = True) -> Array:
    """Ranks 1..k for one dataset row; tied scores share the average of
    their positions."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a nonempty vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return rankdata(-s if higher_is_better else s, method="average")


def rank_table(scores, higher_is_better: bool = True) -> RankTable:
    """Rank every row of a datasets x algorithms score table."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("scores must be a 2-d table")
    return RankTable(np.vstack([rank_row(row, higher_is_better) for row in s]))


def friedman_from_mean_ranks(
    mean_ranks, n_datasets: int
) -> tuple[float, float]:
    """Friedman chi-square and its F-form from mean ranks alone."""
    r = np.asarray(mean_ranks, dtype=np.float64)
    k = r.shape[0]
    n = n_datasets
    if n < 2 or k < 2:
        raise ValueError("need at least 2 datasets and 2 algorithms")
    sum_sq = math.fsum(float(v) ** 2 for v in r)
    tau_chi2 = (12.0 * n / (k * (k + 1))) * (sum_sq - k * (k + 1) ** 2 / 4.0)
    denom = n * (k - 1) - tau_chi2
    if abs(denom) <= 1e-12 * max(1.0, n * (k - 1)):
        raise ValueError(
            "degenerate F statistic: chi-square equals n(k-1), "
            "rankings agree perfectly"
        )
    tau_f = (n - 1) * tau_chi2 / denom
    return tau_chi2, tau_f


def friedman(table: RankTable) -> tuple[float, float]:
    """Friedman statistics of a full rank table."""
    return friedman_from_mean_ranks(table.mean_ranks, table.n_datasets)


def nemenyi_cd(k: int, n: int, q_gamma: float) -> float:
    """Critical mean-rank difference q_gamma * sqrt(k(k+1)/(6n))."""
    if k < 2:
        raise ValueError("need at least 2 algorithms")
    if n < 1:
        raise ValueError("need at least 1 dataset")
    if q_gamma < 0.0:
        raise ValueError("q_gamma must be nonnegative")
    return q_gamma * math.sqrt(k * (k + 1) / (6.0 * n))


def significant_pairs(
    mean_ranks, cd: float
) -> list[tuple[int, int, float]]:
    """Algorithm index pairs whose mean-rank gap exceeds the critical
    difference, with the gap; i < j, ordered by gap descending."""
    r = np.asarray(mean_ranks, dtype=np.float64)
    pairs = []
    for i in range(r.shape[0]):
        for j in range(i + 1, r.shape[0]):
            gap = abs(float(r[i] - r[j]))
            if gap > cd:
                pairs.append((i, j, gap))
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return pairs
