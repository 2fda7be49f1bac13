"""Stein kernel ``k(X, Y) = exp(-sigma * S(X, Y))`` and Gram matrices.

The kernel is positive definite on every finite set exactly when ``sigma``
is one of ``1/2, 1, ..., (d-1)/2`` or any real number above ``(d-1)/2``.
Cost of a Gram matrix is O(N^2 d^3): one Cholesky per pair for
``logdet(X + Y)`` plus one per matrix for the individual log-determinants.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .spd import _check_square, logdet

logger = logging.getLogger(__name__)

HALF_INTEGER_TOL = 1e-12
# Upper bound on pairwise matrices materialized at once by kernel_matrix.
_CHUNK_PAIRS = 1 << 18


def validate_sigma(sigma: float, d: int) -> bool:
    """True iff ``sigma`` makes the Stein kernel positive definite in dimension ``d``."""
    if sigma <= 0:
        return False
    if sigma > 0.5 * (d - 1):
        return True
    twice = 2.0 * sigma
    return abs(twice - round(twice)) <= HALF_INTEGER_TOL and round(twice) >= 1


def default_sigma(d: int) -> float:
    """``d / 2``, always inside the valid set."""
    return d / 2.0


def _sigma_error(sigma, d):
    top = (d - 1) / 2
    halves = [f"{k // 2}" if k % 2 == 0 else f"{k}/2" for k in range(1, d)]
    if len(halves) > 4:
        halves = halves[:2] + ["..."] + halves[-1:]
    listed = f"{{{', '.join(halves)}}} or " if halves else ""
    return ValidationError(
        f"sigma={sigma} does not give a positive definite Stein kernel for d={d}: "
        f"valid values are {listed}any sigma > {top:g}")


@dataclass(frozen=True)
class KernelParams:
    """Kernel bandwidth ``sigma`` for matrices of size ``dim``."""

    sigma: float
    dim: int
    allow_indefinite: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be positive")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if not self.allow_indefinite and not validate_sigma(self.sigma, self.dim):
            raise _sigma_error(self.sigma, self.dim)

    @classmethod
    def default(cls, dim):
        return cls(default_sigma(dim), dim)


def _resolve_sigma(sigma, d, allow_indefinite):
    if sigma is None:
        return default_sigma(d)
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    if not allow_indefinite and not validate_sigma(sigma, d):
        raise _sigma_error(sigma, d)
    return float(sigma)


def stein_kernel(X, Y, sigma=None, allow_indefinite=False):
    """Stein kernel evaluated in the log domain.

    Parameters
    ----------
    X, Y : ndarray, shape (..., d, d)
        SPD matrices; leading axes broadcast.
    sigma : float, optional
        Bandwidth; defaults to ``d / 2``.
    allow_indefinite : bool
        Accept a ``sigma`` outside the positive-definite set.

    Returns
    -------
    ndarray or float
        Values in ``(0, 1]``.
    """
    X = _check_square(X)
    Y = _check_square(Y)
    if X.shape[-1] != Y.shape[-1]:
        raise ValidationError(f"dimension mismatch: {X.shape[-1]} vs {Y.shape[-1]}")
    sigma = _resolve_sigma(sigma, X.shape[-1], allow_indefinite)
    s = logdet((X + Y) / 2) - 0.5 * (logdet(X) + logdet(Y))
    return np.exp(-sigma * np.maximum(s, 0.0))


def kernel_matrix(A, B=None, sigma=None, allow_indefinite=False):
    """Dense matrix ``[k(A_i, B_j)]``; ``B`` defaults to ``A``.

    Log-determinants of the individual matrices are computed once and the
    pairwise sums are processed in chunks to bound memory.
    """
    A = _check_square(A)
    if A.ndim == 2:
        A = A[None]
    same = B is None
    B = A if same else _check_square(B)
    if B.ndim == 2:
        B = B[None]
    d = A.shape[-1]
    if B.shape[-1] != d:
        raise ValidationError(f"dimension mismatch: {d} vs {B.shape[-1]}")
    sigma = _resolve_sigma(sigma, d, allow_indefinite)
    la = logdet(A)
    lb = la if same else logdet(B)
    n, m = A.shape[0], B.shape[0]
    out = np.empty((n, m))
    rows = max(1, _CHUNK_PAIRS // max(m, 1))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        ldsum = logdet((A[start:stop, None] + B[None]) / 2)
        s = ldsum - 0.5 * (la[start:stop, None] + lb[None, :])
        out[start:stop] = np.exp(-sigma * np.maximum(s, 0.0))
    if same:
        out = (out + out.T) / 2
        np.fill_diagonal(out, 1.0)
    return out


@dataclass
class GramMatrix:
    """Kernel matrix with a positive-definiteness diagnostic.

    ``min_eigenvalue`` is only computed for square (self) Gram matrices.
    """

    values: np.ndarray
    sigma: float
    min_eigenvalue: float | None = None
    sigma_valid: bool = True

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def psd_ok(self):
        if self.min_eigenvalue is None:
            return True
        return self.min_eigenvalue >= -1e-8 * self.size


def gram(rows, cols=None, sigma=None, allow_indefinite=False) -> GramMatrix:
    """Stein-kernel Gram matrix between two sets (or a set and itself).

    For a self Gram matrix the smallest eigenvalue is recorded and a warning
    is logged when it falls below ``-1e-8 * N`` despite a valid ``sigma``.
    """
    rows = _check_square(rows)
    d = rows.shape[-1]
    if sigma is None:
        sigma = default_sigma(d)
    values = kernel_matrix(rows, cols, sigma, allow_indefinite)
    valid = validate_sigma(sigma, d)
    out = GramMatrix(values, float(sigma), sigma_valid=valid)
    if cols is None:
        out.min_eigenvalue = float(np.linalg.eigvalsh(values)[0])
        if valid and not out.psd_ok:
            logger.warning("Gram matrix has min eigenvalue %.3e < -1e-8*N despite valid sigma",
                           out.min_eigenvalue)
    return out
