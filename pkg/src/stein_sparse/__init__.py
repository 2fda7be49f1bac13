"""Sparse coding and dictionary learning on SPD matrices with the Stein kernel."""
from .coding import (
    CodingProblem,
    SparseCode,
    batch_code,
    classify_many,
    classify_residual,
    code_matrix,
    kernel_lasso,
    lasso,
    residual_error,
)
from .containers import SpdDictionary, SpdSet
from .exceptions import (
    ConvergenceError,
    NotPositiveDefiniteError,
    SteinSparseError,
    ValidationError,
)
from .kernel import GramMatrix, KernelParams, gram, kernel_matrix, stein_kernel, validate_sigma
from .learning import energy, init_dictionary, learn, riemannian_kmeans
from .spd import (
    airm_distance,
    geodesic,
    karcher_mean,
    project_to_spd,
    stein_divergence,
    thompson_metric,
)

__version__ = "0.1.0"

__all__ = [
    "CodingProblem", "SparseCode", "batch_code", "classify_many", "classify_residual",
    "code_matrix", "kernel_lasso", "lasso", "residual_error", "SpdDictionary", "SpdSet",
    "ConvergenceError", "NotPositiveDefiniteError", "SteinSparseError", "ValidationError",
    "GramMatrix", "KernelParams", "gram", "kernel_matrix", "stein_kernel", "validate_sigma",
    "energy", "init_dictionary", "learn", "riemannian_kmeans", "airm_distance", "geodesic",
    "karcher_mean", "project_to_spd", "stein_divergence", "thompson_metric",
]
