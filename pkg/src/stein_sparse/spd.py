"""Geometry of the SPD cone: spectral functions, divergences and metrics.

Matrices are plain ``ndarray`` objects of shape ``(..., d, d)``; every
function broadcasts over leading axes so that a stack of matrices can be
processed in one call.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceError, NotPositiveDefiniteError, ValidationError

SYM_TOL = 1e-10


def symmetrize(A):
    """Return ``(A + A^T) / 2`` over the last two axes."""
    A = np.asarray(A, dtype=float)
    return (A + np.swapaxes(A, -1, -2)) / 2


def _check_square(X):
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {X.shape}")
    return X


def check_symmetric(X, tol=SYM_TOL):
    """Validate symmetry entrywise, relative to ``max(1, |x_ij|)``.

    Returns the input as a float array.
    """
    X = _check_square(X)
    diff = np.abs(X - np.swapaxes(X, -1, -2))
    if np.any(diff > tol * np.maximum(1.0, np.abs(X))):
        raise ValidationError(f"matrix is not symmetric (max asymmetry {diff.max():.3e})")
    return X


def check_spd(X, tol=SYM_TOL):
    """Validate that ``X`` is symmetric positive definite.

    Positive definiteness is established by a successful Cholesky
    factorization.

    Raises
    ------
    ValidationError
        If ``X`` is not square or not symmetric.
    NotPositiveDefiniteError
        If the Cholesky factorization fails.
    """
    X = check_symmetric(X, tol)
    if not np.all(np.isfinite(X)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return X


def is_spd(X, tol=SYM_TOL):
    try:
        check_spd(X, tol)
    except ValidationError:
        return False
    return True


class EigenDecomposition(NamedTuple):
    """Eigenvalues in descending order and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        Q = self.eigenvectors
        return (Q * self.eigenvalues[..., None, :]) @ np.swapaxes(Q, -1, -2)


def sym_eig(X) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    X = check_symmetric(X)
    w, Q = np.linalg.eigh(symmetrize(X))
    # stable sort keeps eigh's column order within repeated eigenvalues
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    Q = np.take_along_axis(Q, order[..., None, :], axis=-1)
    return EigenDecomposition(w, Q)


def _spectral(X, fn):
    # eigh reads only one triangle, so symmetrize first.
    w, Q = np.linalg.eigh(symmetrize(X))
    return symmetrize((Q * fn(w)[..., None, :]) @ np.swapaxes(Q, -1, -2))


def _positive_spectral(X, fn):
    X = check_symmetric(X)
    w, Q = np.linalg.eigh(symmetrize(X))
    if np.any(w <= 0):
        raise NotPositiveDefiniteError(
            f"matrix function needs a positive spectrum (min eigenvalue {w.min():.3e})")
    return symmetrize((Q * fn(w)[..., None, :]) @ np.swapaxes(Q, -1, -2))


def spd_logm(X):
    """Principal matrix logarithm of SPD matrices."""
    return _positive_spectral(X, np.log)


def spd_expm(X):
    """Matrix exponential of symmetric matrices (output is SPD)."""
    return _spectral(check_symmetric(X), np.exp)


def spd_sqrtm(X):
    """Principal square root of SPD matrices."""
    return _positive_spectral(X, np.sqrt)


def spd_invsqrtm(X):
    """Inverse principal square root of SPD matrices."""
    return _positive_spectral(X, lambda w: 1.0 / np.sqrt(w))


def spd_powm(X, p):
    """Real power ``X^p`` of SPD matrices."""
    return _positive_spectral(X, lambda w: w ** p)


def logdet(X):
    """Log-determinant via Cholesky, ``2 * sum(log(diag(L)))``.

    Raises
    ------
    NotPositiveDefiniteError
        If the factorization fails.
    """
    X = _check_square(X)
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("logdet requires a positive definite matrix") from exc
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def _pair(X, Y):
    X = _check_square(X)
    Y = _check_square(Y)
    if X.shape[-1] != Y.shape[-1]:
        raise ValidationError(f"dimension mismatch: {X.shape[-1]} vs {Y.shape[-1]}")
    return X, Y


def stein_divergence(X, Y):
    """Symmetric Stein (Jensen-Bregman log-det) divergence.

    ``S(X, Y) = logdet((X + Y) / 2) - (logdet X + logdet Y) / 2``

    Parameters
    ----------
    X, Y : ndarray, shape (..., d, d)
        SPD matrices; leading axes broadcast.

    Returns
    -------
    ndarray or float
        Nonnegative divergence values (up to rounding).
    """
    X, Y = _pair(X, Y)
    return logdet((X + Y) / 2) - 0.5 * (logdet(X) + logdet(Y))


def logdet_bregman(X, Y):
    """Bregman divergence generated by ``-logdet`` (Burg / LogDet divergence).

    ``D(X, Y) = tr(Y^{-1} X) - logdet(X) + logdet(Y) - d``
    """
    X, Y = _pair(X, Y)
    d = X.shape[-1]
    trace = np.trace(np.linalg.solve(Y, X), axis1=-2, axis2=-1)
    return trace - logdet(X) + logdet(Y) - d


def jensen_shannon_logdet(X, Y):
    """Jensen-Shannon symmetrisation of the log-det Bregman divergence."""
    M = (np.asarray(X, dtype=float) + np.asarray(Y, dtype=float)) / 2
    return 0.5 * logdet_bregman(X, M) + 0.5 * logdet_bregman(Y, M)


def _whiten(X, Y):
    """``X^{-1/2} Y X^{-1/2}`` together with ``X^{1/2}``."""
    w, Q = np.linalg.eigh(symmetrize(X))
    if np.any(w <= 0):
        raise NotPositiveDefiniteError("base point is not positive definite")
    Qt = np.swapaxes(Q, -1, -2)
    isq = (Q * (1.0 / np.sqrt(w))[..., None, :]) @ Qt
    sq = (Q * np.sqrt(w)[..., None, :]) @ Qt
    return symmetrize(isq @ Y @ isq), sq


def airm_distance(X, Y):
    """Affine-invariant Riemannian distance ``||logm(X^{-1/2} Y X^{-1/2})||_F``.

    Computed from the generalized eigenvalues of ``(Y, X)``.
    """
    lam = generalized_eigenvalues(Y, X)
    return np.sqrt(np.sum(np.log(lam) ** 2, axis=-1))


def generalized_eigenvalues(X, Y):
    """Eigenvalues ``lam`` solving ``X v = lam Y v`` for SPD ``X`` and ``Y``.

    Uses the Cholesky factor ``Y = L L^T`` and the symmetric matrix
    ``L^{-1} X L^{-T}``, so ``X Y^{-1}`` is never formed.
    """
    X, Y = _pair(X, Y)
    try:
        L = np.linalg.cholesky(Y)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("second argument is not positive definite") from exc
    A = np.linalg.solve(L, X)
    C = np.linalg.solve(L, np.swapaxes(A, -1, -2))
    lam = np.linalg.eigvalsh(symmetrize(C))
    if np.any(lam <= 0):
        raise NotPositiveDefiniteError("first argument is not positive definite")
    return lam


def thompson_metric(X, Y):
    """Thompson metric, the largest ``|log lam|`` over generalized eigenvalues."""
    return np.max(np.abs(np.log(generalized_eigenvalues(X, Y))), axis=-1)


def geodesic(X, Y, p):
    """Point at fraction ``p`` along the AIRM geodesic from ``X`` to ``Y``.

    ``gamma(p) = X^{1/2} (X^{-1/2} Y X^{-1/2})^p X^{1/2}``
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"geodesic parameter must lie in [0, 1], got {p}")
    X, Y = _pair(X, Y)
    W, sq = _whiten(X, Y)
    return symmetrize(sq @ spd_powm(W, p) @ sq)


def log_map(base, Y):
    """Riemannian logarithm at ``base``: ``X^{1/2} logm(X^{-1/2} Y X^{-1/2}) X^{1/2}``."""
    base, Y = _pair(base, Y)
    W, sq = _whiten(base, Y)
    return symmetrize(sq @ spd_logm(W) @ sq)


def exp_map(base, V):
    """Riemannian exponential at ``base``, the inverse of :func:`log_map`."""
    base, V = _pair(base, V)
    check_symmetric(V)
    W, sq = _whiten(base, V)
    return symmetrize(sq @ spd_expm(W) @ sq)


def project_to_spd(M, eps=1e-8):
    """Nearest-in-spectrum SPD repair.

    Symmetrizes, then clamps eigenvalues from below at
    ``eps * max(lambda_max, 1)``.
    """
    M = symmetrize(_check_square(M))
    w, Q = np.linalg.eigh(M)
    floor = eps * np.maximum(w[..., -1:], 1.0)
    w = np.maximum(w, floor)
    return symmetrize((Q * w[..., None, :]) @ np.swapaxes(Q, -1, -2))


def karcher_mean(points, tol=1e-8, max_iter=100, weights=None):
    """Karcher (Frechet) mean under the affine-invariant metric.

    Fixed-point iteration ``mu <- exp_mu(mean_i log_mu(X_i))`` with unit step,
    started from the arithmetic mean.

    Parameters
    ----------
    points : ndarray, shape (n, d, d)
        SPD matrices.
    tol : float
        Stop once the Frobenius norm of the (weighted) mean tangent vector
        at the current estimate is at most ``tol``.
    max_iter : int
        Iteration cap.
    weights : ndarray, shape (n,), optional
        Nonnegative weights, normalized internally.

    Returns
    -------
    ndarray, shape (d, d)

    Raises
    ------
    ConvergenceError
        Carries the last iterate and residual if ``max_iter`` is reached.
    """
    points = _check_square(points)
    if points.ndim == 2:
        points = points[None]
    if points.shape[0] == 0:
        raise ValidationError("karcher_mean needs at least one point")
    n = points.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float) / np.sum(weights)
    if n == 1:
        return points[0].copy()
    mu = project_to_spd(np.einsum("i,ijk->jk", w, points))
    residual = np.inf
    for _ in range(max_iter):
        W, sq = _whiten(mu, points)
        T = np.einsum("i,ijk->jk", w, spd_logm(W))
        residual = np.linalg.norm(sq @ T @ sq)
        if residual <= tol:
            return mu
        mu = symmetrize(sq @ spd_expm(T) @ sq)
    W, sq = _whiten(mu, points)
    residual = np.linalg.norm(sq @ np.einsum("i,ijk->jk", w, spd_logm(W)) @ sq)
    if residual <= tol:
        return mu
    raise ConvergenceError(
        f"Karcher mean did not converge in {max_iter} iterations (residual {residual:.3e})",
        last_iterate=mu, residual=residual)
