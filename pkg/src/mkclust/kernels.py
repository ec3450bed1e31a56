"""Kernel construction for multiple-kernel clustering.

Builds Gaussian, polynomial and cosine Gram matrices from a feature
matrix, normalizes them to unit diagonal and min-max scales them to
[0, 1].  The twelve-kernel bank assembled by :func:`standard_bank` is
the default input for every clustering algorithm in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Array = np.ndarray

# Bandwidth multipliers and polynomial parameters of the default bank,
# in bank order: 7 Gaussian, 4 polynomial, 1 cosine.
GAUSSIAN_BANDWIDTH_FACTORS = (0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0)
POLYNOMIAL_PARAMS = ((0.0, 2), (0.0, 4), (1.0, 2), (1.0, 4))


def _readonly(a: Array) -> Array:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Identifies one kernel family and its parameters.

    family is one of "gaussian" (parameter c, the bandwidth multiplier),
    "polynomial" (parameters a >= 0 and positive integer degree b) or
    "cosine" (no parameters).
    """

    family: str
    c: float | None = None
    a: float | None = None
    b: int | None = None

    def __post_init__(self) -> None:
        if self.family == "gaussian":
            if self.c is None or self.c <= 0:
                raise ValueError("gaussian kernel requires c > 0")
        elif self.family == "polynomial":
            if self.a is None or self.a < 0:
                raise ValueError("polynomial kernel requires a >= 0")
            if self.b is None or int(self.b) != self.b or self.b < 1:
                raise ValueError("polynomial kernel requires integer b >= 1")
        elif self.family == "cosine":
            if self.c is not None or self.a is not None or self.b is not None:
                raise ValueError("cosine kernel takes no parameters")
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    def label(self) -> str:
        if self.family == "gaussian":
            return f"gaussian(c={self.c:g})"
        if self.family == "polynomial":
            return f"polynomial(a={self.a:g}, b={self.b})"
        return "cosine"


@dataclass(frozen=True)
class FeatureMatrix:
    """d x n feature matrix whose columns are samples."""

    values: Array

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("feature matrix must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_rows(cls, rows: Array) -> "FeatureMatrix":
        """Build from an (n, d) array with one sample per row."""
        return cls(np.asarray(rows, dtype=np.float64).T)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric n x n kernel matrix with provenance flags."""

    values: Array
    spec: KernelSpec | str = "precomputed"
    normalized: bool = False
    scaled: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("gram matrix must be square")
        if not np.all(np.isfinite(v)):
            raise ValueError("gram matrix contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
        asym = float(np.max(np.abs(v - v.T))) if v.size else 0.0
        if asym > 1e-12 * scale:
            raise ValueError(f"gram matrix asymmetric (max deviation {asym:.3e})")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def label(self) -> str:
        return self.spec if isinstance(self.spec, str) else self.spec.label()


@dataclass(frozen=True)
class KernelBank:
    """Ordered collection of Gram matrices over one sample set."""

    grams: tuple[GramMatrix, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        grams = tuple(self.grams)
        if not grams:
            raise ValueError("kernel bank must contain at least one kernel")
        n = grams[0].n
        for i, g in enumerate(grams):
            if g.n != n:
                raise ValueError(
                    f"kernel {i} has size {g.n}, expected {n}: bank kernels "
                    "must share one sample set"
                )
        object.__setattr__(self, "grams", grams)

    @property
    def m(self) -> int:
        return len(self.grams)

    @property
    def n(self) -> int:
        return self.grams[0].n

    def __len__(self) -> int:
        return len(self.grams)

    def __getitem__(self, i: int) -> GramMatrix:
        return self.grams[i]

    def __iter__(self) -> Iterator[GramMatrix]:
        return iter(self.grams)

    def labels(self) -> list[str]:
        return [g.label() for g in self.grams]


def _as_columns(X: FeatureMatrix | Array) -> Array:
    if isinstance(X, FeatureMatrix):
        return X.values
    v = np.asarray(X, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("feature input must be 2-dimensional (d x n)")
    if not np.all(np.isfinite(v)):
        raise ValueError("feature input contains non-finite entries")
    return v


def _squared_distances(X: Array) -> Array:
    # Columns are samples; clamp tiny negatives from cancellation.
    g = X.T @ X
    sq = np.diag(g)[:, None] + np.diag(g)[None, :] - 2.0 * g
    return np.maximum(sq, 0.0)


def _symmetrize(K: Array) -> Array:
    return (K + K.T) / 2.0


def gaussian_gram(X: FeatureMatrix | Array, c: float) -> GramMatrix:
    """Gaussian kernel exp(-||xi - xj||^2 / (2 sigma^2)) with sigma = c * dmax.

    dmax is the exact maximum pairwise Euclidean distance of the sample
    set.  Raises if all samples coincide, since the bandwidth would be
    zero.
    """
    if c <= 0:
        raise ValueError("bandwidth multiplier c must be positive")
    cols = _as_columns(X)
    if cols.shape[1] < 2:
        raise ValueError("gaussian kernel requires at least two samples")
    sq = _squared_distances(cols)
    dmax_sq = float(np.max(sq))
    if dmax_sq == 0.0:
        raise ValueError("degenerate bandwidth: all samples coincide (dmax = 0)")
    sigma_sq = c * c * dmax_sq
    K = np.exp(-sq / (2.0 * sigma_sq))
    np.fill_diagonal(K, 1.0)
    return GramMatrix(_symmetrize(K), spec=KernelSpec("gaussian", c=c))


def polynomial_gram(X: FeatureMatrix | Array, a: float, b: int) -> GramMatrix:
    """Polynomial kernel (a + xi . xj)^b."""
    if a < 0:
        raise ValueError("polynomial offset a must be nonnegative")
    if int(b) != b or b < 1:
        raise ValueError("polynomial degree b must be a positive integer")
    cols = _as_columns(X)
    K = (a + cols.T @ cols) ** int(b)
    return GramMatrix(_symmetrize(K), spec=KernelSpec("polynomial", a=a, b=int(b)))


def cosine_gram(X: FeatureMatrix | Array) -> GramMatrix:
    """Cosine kernel xi . xj / (||xi|| ||xj||)."""
    cols = _as_columns(X)
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise ValueError(f"zero vector in cosine kernel (sample {bad})")
    K = (cols.T @ cols) / np.outer(norms, norms)
    K = np.clip(K, -1.0, 1.0)
    np.fill_diagonal(K, 1.0)
    return GramMatrix(_symmetrize(K), spec=KernelSpec("cosine"))


def normalize_gram(K: GramMatrix) -> GramMatrix:
    """Rescale to unit diagonal: K(i,j) / sqrt(K(i,i) K(j,j)).

    Idempotent.  Requires a strictly positive diagonal.
    """
    v = K.values
    diag = np.diag(v)
    if np.any(diag <= 0.0):
        bad = int(np.argmin(diag))
        raise ValueError(
            f"non-normalizable kernel: nonpositive diagonal entry at sample {bad}"
        )
    d = np.sqrt(diag)
    out = v / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return GramMatrix(_symmetrize(out), spec=K.spec, normalized=True, scaled=K.scaled)


def scale_gram(K: GramMatrix) -> GramMatrix:
    """Min-max scale all entries to [0, 1] using the global min and max."""
    v = K.values
    lo = float(np.min(v))
    hi = float(np.max(v))
    if hi <= lo:
        raise ValueError("degenerate scaling range: constant kernel matrix")
    out = (v - lo) / (hi - lo)
    out = np.clip(out, 0.0, 1.0)
    return GramMatrix(_symmetrize(out), spec=K.spec, normalized=K.normalized, scaled=True)


def standard_bank(
    X: FeatureMatrix | Array,
    normalize: bool = True,
    scale: bool = True,
) -> KernelBank:
    """Build the default 12-kernel bank.

    Order: 7 Gaussian kernels with bandwidth multipliers
    (0.01, 0.05, 0.1, 1, 10, 50, 100), then polynomial kernels with
    (a, b) = (0,2), (0,4), (1,2), (1,4), then the cosine kernel.  Each
    kernel is normalized to unit diagonal and min-max scaled unless
    disabled.
    """
    grams: list[GramMatrix] = []
    for c in GAUSSIAN_BANDWIDTH_FACTORS:
        grams.append(gaussian_gram(X, c))
    for a, b in POLYNOMIAL_PARAMS:
        grams.append(polynomial_gram(X, a, b))
    grams.append(cosine_gram(X))
    if normalize:
        grams = [normalize_gram(g) for g in grams]
    if scale:
        grams = [scale_gram(g) for g in grams]
    return KernelBank(tuple(grams))


def combine(bank: KernelBank | Sequence[GramMatrix], weights: Array) -> Array:
    """Combined kernel sum_p w_p^2 K_p as a plain array."""
    grams = list(bank)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != len(grams):
        raise ValueError(
            f"weight vector has length {w.shape[0]}, bank has {len(grams)} kernels"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("weights contain non-finite entries")
    out = np.zeros((grams[0].n, grams[0].n))
    for wp, g in zip(w, grams):
        out += (wp * wp) * g.values
    return out
