"""Log-Euclidean sparse representation (logE-SR) baseline.

Each SPD matrix is mapped to the tangent space at the identity by the
matrix logarithm and vectorized isometrically; sparse coding is then an
ordinary Lasso in R^{d(d+1)/2}.
"""
from __future__ import annotations

import numpy as np

from .coding import (
    CodingProblem,
    SparseCode,
    _decide,
    class_residuals,
    lasso,
    objective,
)
from .exceptions import ValidationError
from .spd import spd_logm


def _weights(d):
    rows, cols = np.triu_indices(d)
    return rows, cols, np.where(rows == cols, 1.0, np.sqrt(2.0))


def log_euclidean_embed(X):
    """Upper triangle of ``logm(X)``, off-diagonals scaled by ``sqrt(2)``.

    The Euclidean norm of the result equals ``||logm(X)||_F``.
    """
    L = spd_logm(X)
    rows, cols, w = _weights(L.shape[-1])
    return L[..., rows, cols] * w


def log_euclidean_unembed(vec):
    """Inverse of the vectorization: symmetric matrix from a tangent vector."""
    vec = np.asarray(vec, dtype=float)
    n = vec.shape[-1]
    d = int(round((np.sqrt(8 * n + 1) - 1) / 2))
    if d * (d + 1) // 2 != n:
        raise ValidationError(f"length {n} is not a triangular number")
    rows, cols, w = _weights(d)
    M = np.zeros(vec.shape[:-1] + (d, d))
    M[..., rows, cols] = vec / w
    M[..., cols, rows] = vec / w
    return M


def euclidean_lasso(y, atoms, lam=None, method="feature-sign", tol=1e-8, max_iter=10000):
    """``min_v ||y - A v||^2 + lam ||v||_1`` with atoms as the columns of ``A``.

    Runs the same solver as the kernel coder with the linear kernel:
    Gram ``A^T A``, target ``A^T y`` and self-similarity ``y^T y``.
    ``lam=None`` uses ``0.01 * max_i |a_i^T y|``.
    """
    y = np.asarray(y, dtype=float)
    A = np.asarray(atoms, dtype=float)
    if A.ndim != 2 or A.shape[0] != y.shape[0]:
        raise ValidationError("atoms must be a (dim, N) matrix matching y")
    b = A.T @ y
    if lam is None:
        lam = 0.01 * float(np.max(np.abs(b)))
    problem = CodingProblem(b, A.T @ A, lam, float(y @ y))
    v, it, kkt = lasso(problem.gram, b, lam, method, tol, max_iter)
    return SparseCode(v, float(lam), float(objective(v, problem)), int(it), float(kkt))


def classify_logesr(X, train_matrices, train_labels, lam=None, method="feature-sign"):
    """Minimum class-residual classification in the log-Euclidean embedding.

    Accepts one query or a stack; returns a label or an array of labels.
    Tie-breaking and the all-zero-code fallback mirror
    :func:`stein_sparse.coding.classify_residual`, with similarity measured
    by the inner product of embeddings.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    Y = log_euclidean_embed(X[None] if single else X)
    A = log_euclidean_embed(np.asarray(train_matrices, dtype=float))
    labels = np.asarray(train_labels)
    classes = np.unique(labels)
    K = A @ A.T
    B = Y @ A.T
    lams = 0.01 * np.abs(B).max(axis=1) if lam is None else np.full(len(Y), float(lam))
    V, _, _ = lasso(K, B, lams, method)
    out = np.empty(len(Y), dtype=classes.dtype)
    for j in range(len(Y)):
        res = class_residuals(B[j], K, V[j], labels, classes, float(Y[j] @ Y[j]))
        out[j] = _decide(res, classes, V[j], B[j], labels)
    return out[0] if single else out
