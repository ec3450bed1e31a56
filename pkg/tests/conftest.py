"""Shared fixtures: a well-separated 3-blob dataset and its kernel bank.

Blob separation (centers 10 apart, spread 0.3) is ~33x the within-blob
scale, so any sane clustering recovers the blobs exactly; tests that
assert perfect accuracy rely on that margin.
"""

from __future__ import annotations

import numpy as np
import pytest

from mkclust import FeatureMatrix, relation_matrices, standard_bank

BLOB_CENTERS = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
BLOB_SPREAD = 0.3
BLOB_SIZE = 50
BLOB_SEED = 7


def make_blobs(seed: int = BLOB_SEED):
    rng = np.random.default_rng(seed)
    rows = np.vstack(
        [c + BLOB_SPREAD * rng.standard_normal((BLOB_SIZE, 2)) for c in BLOB_CENTERS]
    )
    truth = np.repeat(np.arange(len(BLOB_CENTERS)), BLOB_SIZE)
    return rows, truth


@pytest.fixture(scope="session")
def blob_rows():
    rows, _ = make_blobs()
    return rows


@pytest.fixture(scope="session")
def blob_truth():
    _, truth = make_blobs()
    return truth


@pytest.fixture(scope="session")
def blob_features(blob_rows):
    return FeatureMatrix.from_rows(blob_rows)


@pytest.fixture(scope="session")
def blob_bank(blob_features):
    return standard_bank(blob_features)


@pytest.fixture(scope="session")
def blob_relations(blob_bank):
    return relation_matrices(blob_bank)
