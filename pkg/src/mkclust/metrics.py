"""External clustering evaluation.

Implements the four usual partition-agreement scores (optimal-assignment
accuracy, normalized mutual information, purity, adjusted Rand index)
plus the mean/std aggregation used to summarize repeated runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

Array = np.ndarray


@dataclass(frozen=True)
class ContingencyTable:
    """Joint label counts: counts[i, j] = samples in true class i and
    predicted cluster j."""

    counts: Array

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c < 0):
            raise ValueError("counts must be a nonnegative 2-d table")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def k_true(self) -> int:
        return self.counts.shape[0]

    @property
    def k_pred(self) -> int:
        return self.counts.shape[1]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def true_sizes(self) -> Array:
        return self.counts.sum(axis=1)

    @property
    def pred_sizes(self) -> Array:
        return self.counts.sum(axis=0)


def _as_labels(p) -> Array:
    labels = getattr(p, "labels", p)
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError("labels must be a vector")
    if arr.size == 0:
        raise ValueError("labels must be nonempty")
    if not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise ValueError("labels must be integers")
        arr = as_int
    return arr


def contingency_table(pred, truth) -> ContingencyTable:
    """Cross-tabulate two labelings of the same samples.

    Label values may be arbitrary integers; each side is reindexed to
    consecutive codes first.
    """
    p = _as_labels(pred)
    t = _as_labels(truth)
    if p.shape[0] != t.shape[0]:
        raise ValueError(
            f"label length mismatch: pred has {p.shape[0]}, truth has {t.shape[0]}"
        )
    _, pi = np.unique(p, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    kt, kp = int(ti.max()) + 1, int(pi.max()) + 1
    counts = np.zeros((kt, kp), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    return ContingencyTable(counts)


def accuracy(pred, truth) -> float:
    """Fraction of samples matched under the best one-to-one relabeling
    of predicted clusters onto true classes."""
    table = contingency_table(pred, truth)
    side = max(table.k_true, table.k_pred)
    square = np.zeros((side, side), dtype=np.int64)
    square[: table.k_true, : table.k_pred] = table.counts
    rows, cols = linear_sum_assignment(square, maximize=True)
    return float(square[rows, cols].sum()) / table.n


def _entropy(sizes: Array, n: int) -> float:
    probs = sizes[sizes > 0] / n
    return float(-math.fsum(p * math.log(p) for p in probs))


def nmi(pred, truth) -> float:
    """Mutual information normalized by the geometric mean of the two
    label entropies; natural logarithm throughout."""
    table = contingency_table(pred, truth)
    n = table.n
    tsz, psz = table.true_sizes, table.pred_sizes
    terms = []
    for i in range(table.k_true):
        for j in range(table.k_pred):
            c = table.counts[i, j]
            if c > 0:
                terms.append((c / n) * math.log(c * n / (tsz[i] * psz[j])))
    mi = math.fsum(terms)
    denom = math.sqrt(_entropy(tsz, n) * _entropy(psz, n))
    if denom == 0.0:
        if mi <= 1e-12:
            return 0.0
        raise ValueError("undefined NMI: zero entropy with positive mutual information")
    return min(max(mi / denom, 0.0), 1.0)


def purity(pred, truth) -> float:
    """Each predicted cluster claims its majority true class; returns
    the claimed fraction."""
    table = contingency_table(pred, truth)
    return float(table.counts.max(axis=0).sum()) / table.n


def ari(pred, truth) -> float:
    """Adjusted Rand index from binomial pair counts, evaluated in exact
    integer arithmetic.  When the adjustment denominator vanishes (both
    partitions trivial) the partitions are identical and 1.0 is
    returned."""
    table = contingency_table(pred, truth)
    n = table.n
    if n < 2:
        raise ValueError("ARI requires at least 2 samples")
    sum_cells = sum(math.comb(int(c), 2) for c in table.counts.ravel())
    a = sum(math.comb(int(c), 2) for c in table.true_sizes)
    b = sum(math.comb(int(c), 2) for c in table.pred_sizes)
    total = math.comb(n, 2)
    numerator = 2 * total * sum_cells - 2 * a * b
    denominator = total * (a + b) - 2 * a * b
    if denominator == 0:
        return 1.0
    return numerator / denominator


STD_DIVISOR = "sample (n-1)"


@dataclass(frozen=True)
class MetricsReport:
    """Scores of one run, or mean/std summaries over repetitions."""

    acc: float
    nmi: float
    pur: float
    ari: float
    repetitions: int = 1
    acc_std: float = 0.0
    nmi_std: float = 0.0
    pur_std: float = 0.0
    ari_std: float = 0.0
    std_divisor: str = STD_DIVISOR

    def __post_init__(self) -> None:
        slack = 1e-9
        for name in ("acc", "nmi", "pur"):
            v = getattr(self, name)
            if not -slack <= v <= 1.0 + slack:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if not -1.0 - slack <= self.ari <= 1.0 + slack:
            raise ValueError(f"ari = {self.ari} outside [-1, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


def evaluate(pred, truth) -> MetricsReport:
    """All four scores of a single predicted partition."""
    return MetricsReport(
        acc=accuracy(pred, truth),
        nmi=nmi(pred, truth),
        pur=purity(pred, truth),
        ari=ari(pred, truth),
    )


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Per-metric mean and sample standard deviation over repetitions.

    A single report aggregates to itself with std 0.
    """
    if not reports:
        raise ValueError("cannot aggregate an empty report list")

    def stats(values: list[float]) -> tuple[float, float]:
        mean = math.fsum(values) / len(values)
        if len(values) == 1:
            return mean, 0.0
        var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
        return mean, math.sqrt(var)

    acc_m, acc_s = stats([r.acc for r in reports])
    nmi_m, nmi_s = stats([r.nmi for r in reports])
    pur_m, pur_s = stats([r.pur for r in reports])
    ari_m, ari_s = stats([r.ari for r in reports])
    return MetricsReport(
        acc=acc_m,
        nmi=nmi_m,
        pur=pur_m,
        ari=ari_m,
        repetitions=len(reports),
        acc_std=acc_s,
        nmi_std=nmi_s,
        pur_std=pur_s,
        ari_std=ari_s,
    )
