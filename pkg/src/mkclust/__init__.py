"""Multiple-kernel k-means clustering toolkit.

Builds banks of base kernels from feature data, learns kernel weights
by alternating spectral relaxation with simplex-constrained quadratic
programs, and evaluates the resulting partitions against ground truth
with the usual external metrics and rank statistics.
"""

from .cluster import (
    KcdConfig,
    KcdResult,
    Partition,
    a_mkkm,
    average_kernel,
    bank_embeddings,
    discretize,
    kcd_mkkm,
    kkm,
    kmeans,
    mkkm,
    mkkm_mr,
    sb_kkm,
)
from .kernels import (
    FeatureMatrix,
    GramMatrix,
    KernelBank,
    KernelSpec,
    combine,
    cosine_gram,
    gaussian_gram,
    normalize_gram,
    polynomial_gram,
    scale_gram,
    standard_bank,
)
from .metrics import (
    ContingencyTable,
    MetricsReport,
    accuracy,
    aggregate,
    ari,
    contingency_table,
    evaluate,
    nmi,
    purity,
)
from .relations import (
    RelationMatrices,
    correlation_matrix,
    dissimilarity_matrix,
    relation_matrices,
)
from .simplexqp import (
    QpProblem,
    project_columns,
    project_simplex,
    solve_weight_qp,
    solve_y_qp,
    validate_representation,
    y_gradient,
    y_objective,
)
from .spectral import Embedding, residual_trace, top_k_eigs
from .stats import (
    RankTable,
    friedman,
    friedman_from_mean_ranks,
    nemenyi_cd,
    rank_row,
    rank_table,
    significant_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "KcdConfig",
    "KcdResult",
    "Partition",
    "a_mkkm",
    "average_kernel",
    "bank_embeddings",
    "discretize",
    "kcd_mkkm",
    "kkm",
    "kmeans",
    "mkkm",
    "mkkm_mr",
    "sb_kkm",
    "FeatureMatrix",
    "GramMatrix",
    "KernelBank",
    "KernelSpec",
    "combine",
    "cosine_gram",
    "gaussian_gram",
    "normalize_gram",
    "polynomial_gram",
    "scale_gram",
    "standard_bank",
    "ContingencyTable",
    "MetricsReport",
    "accuracy",
    "aggregate",
    "ari",
    "contingency_table",
    "evaluate",
    "nmi",
    "purity",
    "RelationMatrices",
    "correlation_matrix",
    "dissimilarity_matrix",
    "relation_matrices",
    "QpProblem",
    "project_columns",
    "project_simplex",
    "solve_weight_qp",
    "solve_y_qp",
    "validate_representation",
    "y_gradient",
    "y_objective",
    "Embedding",
    "residual_trace",
    "top_k_eigs",
    "RankTable",
    "friedman",
    "friedman_from_mean_ranks",
    "nemenyi_cd",
    "rank_row",
    "rank_table",
    "significant_pairs",
    "__version__",
]
