"""Kernel sparse coding and residual-error classification.

Sparse coding of a query ``X`` over a dictionary ``D_1..D_N`` in the RKHS of
the Stein kernel solves

    min_v  k(X, X) - 2 v^T a + v^T K v + lam * ||v||_1

where ``a_i = k(X, D_i)`` and ``K_ij = k(D_i, D_j)``.  The quadratic part
has gradient ``2 (K v - a)``, so the exact one-coordinate minimizer is

    v_i = soft(a_i - sum_{j != i} K_ij v_j, lam / 2) / K_ii

(threshold ``lam / 2``, not ``lam``).

Two solvers are provided.  ``feature-sign`` (default) guesses the active
set and its signs, solves the reduced quadratic exactly and repairs the
guess; it finishes in a handful of steps even when ``K`` is close to
singular.  ``cd`` is cyclic coordinate descent with the update above; it
is the fallback for rows feature-sign cannot certify.  Either way the
returned codes are checked against the KKT conditions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import SpdDictionary, SpdSet
from .exceptions import ConvergenceError, ValidationError

DEFAULT_LAMBDA_SCALE = 0.01
KKT_TOL = 1e-6
# Tie tolerance on residual errors when picking the winning class.
TIE_TOL = 1e-12


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class CodingProblem:
    """Kernel data for one query: ``a = k(X, D)``, ``K = k(D, D)`` and ``k(X, X)``."""

    kernel_vector: np.ndarray
    gram: np.ndarray
    lam: float
    self_similarity: float = 1.0

    def __post_init__(self):
        self.kernel_vector = np.asarray(self.kernel_vector, dtype=float)
        self.gram = np.asarray(self.gram, dtype=float)
        n = self.kernel_vector.shape[0]
        if self.kernel_vector.ndim != 1 or self.gram.shape != (n, n):
            raise ValidationError("kernel vector and Gram matrix sizes disagree")
        if self.lam < 0:
            raise ValidationError(f"lambda must be nonnegative, got {self.lam}")


@dataclass
class SparseCode:
    coefficients: np.ndarray
    lam: float
    objective: float
    iterations: int
    kkt_residual: float = 0.0

    @property
    def support(self):
        return np.flatnonzero(self.coefficients)


def reconstruction_error(v, problem: CodingProblem):
    """``||phi(X) - sum_i v_i phi(D_i)||^2`` expanded through the kernel."""
    v = np.asarray(v, dtype=float)
    return problem.self_similarity - 2 * v @ problem.kernel_vector + v @ problem.gram @ v


def objective(v, problem: CodingProblem):
    """Reconstruction error plus ``lam * ||v||_1``."""
    return reconstruction_error(v, problem) + problem.lam * np.abs(v).sum()


def kkt_violation(V, gram, targets, lam):
    """Largest violation of the Lasso optimality conditions, per row.

    With ``g = 2 (K v - a)``: ``|g_i + lam sign(v_i)|`` on the support and
    ``max(|g_i| - lam, 0)`` off it.
    """
    V = np.atleast_2d(V)
    targets = np.atleast_2d(targets)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (V.shape[0],))[:, None]
    g = 2 * (V @ gram - targets)
    on = np.abs(g + lam * np.sign(V))
    off = np.maximum(np.abs(g) - lam, 0.0)
    return np.where(V != 0, on, off).max(axis=1)


def _quad(K, b, lam, v):
    return v @ K @ v - 2 * b @ v + lam * np.abs(v).sum()


def _orthant_step(KA, rhs, cur):
    """Minimizer of ``x^T K x - 2 rhs^T x`` nearest ``cur``, or a descent ray.

    Returns ``(target, None)`` when the system ``K x = rhs`` is consistent and
    ``(None, ray)`` when it is not; then the objective decreases without
    bound along ``ray`` (its component in the null space of ``K``).
    """
    w, U = np.linalg.eigh(KA)
    keep = w > 1e-10 * max(w[-1], 1e-300)
    Ur = U[:, keep]
    x = Ur @ ((Ur.T @ rhs) / w[keep])
    if np.all(keep):
        return x, None
    Un = U[:, ~keep]
    ray = Un @ (Un.T @ rhs)
    if np.linalg.norm(ray) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
        return None, ray
    return x + Un @ (Un.T @ cur), None


def feature_sign(K, b, lam, v=None, max_steps=None):
    """Solve one Lasso problem by feature-sign search, starting from ``v``.

    Active-set method: guess the support and signs, minimize the resulting
    smooth problem on that support, then line-search towards the minimizer
    stopping at sign changes.  A singular Gram block with an inconsistent
    system is handled by moving along its null-space descent ray to the
    first sign change.  Every step lowers the objective.

    Returns
    -------
    (v, steps) once the KKT conditions hold, ``None`` if the step budget runs
    out or no descent step exists short of optimality.
    """
    v = np.zeros(b.size) if v is None else np.asarray(v, dtype=float).copy()
    N = v.size
    max_steps = 4 * N + 10 if max_steps is None else max_steps
    f = _quad(K, b, lam, v)
    for step_no in range(max_steps):
        g = 2 * (K @ v - b)
        zero = v == 0
        on = np.abs(g + lam * np.sign(v))
        theta = np.sign(v)
        if not np.any(on[~zero] > KKT_TOL / 10):
            off = np.where(zero, np.abs(g) - lam, -np.inf)
            i = int(np.argmax(off))
            if off[i] <= KKT_TOL / 10:
                return v, step_no
            theta[i] = -np.sign(g[i])
        A = np.flatnonzero(theta)
        cur = v[A]
        target, ray = _orthant_step(K[np.ix_(A, A)], b[A] - lam / 2 * theta[A], cur)
        if ray is not None:
            if np.any((cur == 0) & (np.sign(ray) != theta[A])):
                return None
            shrink = (cur != 0) & (np.sign(ray) == -np.sign(cur))
            if not np.any(shrink):
                return None
            t = np.min(-cur[shrink] / ray[shrink])
            target = cur + t * ray
            ts = [1.0]
        else:
            ts = [1.0]
            cross = (cur != 0) & (np.sign(target) != np.sign(cur))
            ts.extend((cur[cross] / (cur[cross] - target[cross])).tolist())
        step = target - cur
        best_f, best_v = f, None
        for t in ts:
            cand = v.copy()
            xa = cur + t * step
            # coordinates whose sign flips at or before t are snapped to zero
            xa[(cur != 0) & (np.sign(xa) != np.sign(cur))] = 0.0
            xa[np.abs(xa) <= 1e-15 * max(1.0, np.abs(cur).max())] = 0.0
            cand[A] = xa
            fc = _quad(K, b, lam, cand)
            if fc < best_f:
                best_f, best_v = fc, cand
        if best_v is None:
            if kkt_violation(v, K, b, lam)[0] <= KKT_TOL / 10:
                return v, step_no
            return None
        v, f = best_v, best_f
    return None


def lasso_cd(gram, targets, lam, tol=1e-8, max_iter=10000, kkt_tol=KKT_TOL, v0=None,
             callback=None):
    """Cyclic coordinate descent for a batch of Lasso problems sharing one Gram matrix.

    Each row ``b`` of ``targets`` defines ``min_v v^T K v - 2 b^T v + lam ||v||_1``.
    A row is finished once a full sweep changes no coefficient by more than
    ``tol`` and its KKT violation is at most ``kkt_tol``.

    Parameters
    ----------
    gram : ndarray, shape (N, N)
        Positive semidefinite matrix ``K``.
    targets : ndarray, shape (N,) or (Q, N)
    lam : float or ndarray, shape (Q,)
    tol : float
        Coefficient-change stopping threshold.
    max_iter : int
        Maximum number of sweeps.
    v0 : ndarray, optional
        Warm start, same shape as ``targets``.
    callback : callable, optional
        Called as ``callback(sweep, V)`` after every sweep.

    Returns
    -------
    V : ndarray
        Coefficients, same shape as ``targets``.
    sweeps : ndarray of int, shape (Q,)
    kkt : ndarray, shape (Q,)

    Raises
    ------
    ConvergenceError
        If any row is unfinished after ``max_iter`` sweeps; ``last_iterate``
        holds all coefficients.
    """
    K = np.asarray(gram, dtype=float)
    b = np.asarray(targets, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    Q, N = b.shape
    if K.shape != (N, N):
        raise ValidationError(f"Gram matrix shape {K.shape} does not match {N} coefficients")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (Q,)).copy()
    if np.any(lam < 0):
        raise ValidationError("lambda must be nonnegative")
    V = np.zeros((Q, N)) if v0 is None else np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    C = V @ K
    diag = np.diag(K).copy()
    half = lam / 2
    sweeps = np.zeros(Q, dtype=int)
    kkt = np.full(Q, np.inf)
    active = np.arange(Q)

    for sweep in range(1, max_iter + 1):
        Va, Ca, ba, ha = V[active], C[active], b[active], half[active]
        maxd = np.zeros(active.size)
        for i in range(N):
            if diag[i] <= 0:
                continue
            vi = Va[:, i]
            rho = ba[:, i] - Ca[:, i] + diag[i] * vi
            new = soft_threshold(rho, ha) / diag[i]
            delta = new - vi
            nz = np.flatnonzero(delta)
            if nz.size:
                Va[nz, i] = new[nz]
                Ca[nz] += delta[nz, None] * K[i]
                np.maximum(maxd, np.abs(delta), out=maxd)
        # refresh the running products so rounding does not accumulate
        Ca = Va @ K
        V[active], C[active] = Va, Ca
        sweeps[active] = sweep
        if callback is not None:
            callback(sweep, V[0] if single else V)
        small = maxd <= tol
        if np.any(small):
            rows = active[small]
            kkt[rows] = kkt_violation(V[rows], K, b[rows], lam[rows])
            done = np.zeros(active.size, dtype=bool)
            done[small] = kkt[rows] <= kkt_tol
            active = active[~done]
        if active.size == 0:
            break
    else:
        kkt[active] = kkt_violation(V[active], K, b[active], lam[active])
        bad = active[kkt[active] > kkt_tol]
        if bad.size:
            raise ConvergenceError(
                f"coordinate descent did not converge in {max_iter} sweeps "
                f"(rows {bad[:5].tolist()}, KKT residual {kkt[bad].max():.3e})",
                last_iterate=V[0] if single else V, residual=kkt[bad].max())
    if single:
        return V[0], sweeps[0], kkt[0]
    return V, sweeps, kkt


METHODS = ("feature-sign", "cd")


def lasso(gram, targets, lam, method="feature-sign", tol=1e-8, max_iter=10000):
    """Solve a batch of Lasso problems ``min v^T K v - 2 b^T v + lam ||v||_1``.

    ``method="cd"`` runs :func:`lasso_cd` only.  ``"feature-sign"`` (default)
    solves each row with :func:`feature_sign` from zero and hands any row it
    cannot certify to coordinate descent.  Both return KKT-certified
    minimizers; they differ only in speed on ill-conditioned Gram matrices.

    Returns ``(V, iterations, kkt)`` shaped like :func:`lasso_cd`.
    """
    if method == "cd":
        return lasso_cd(gram, targets, lam, tol, max_iter)
    if method != "feature-sign":
        raise ValidationError(f"unknown solver {method!r}; choose from {METHODS}")
    K = np.asarray(gram, dtype=float)
    b = np.asarray(targets, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    Q, N = b.shape
    if K.shape != (N, N):
        raise ValidationError(f"Gram matrix shape {K.shape} does not match {N} coefficients")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (Q,)).copy()
    if np.any(lam < 0):
        raise ValidationError("lambda must be nonnegative")
    V = np.zeros((Q, N))
    iters = np.zeros(Q, dtype=int)
    failed = []
    for j in range(Q):
        res = feature_sign(K, b[j], lam[j])
        if res is None:
            failed.append(j)
        else:
            V[j], iters[j] = res
    if failed:
        rows = np.array(failed)
        V[rows], iters[rows], _ = lasso_cd(K, b[rows], lam[rows], tol, max_iter)
    kkt = kkt_violation(V, K, b, lam)
    if single:
        return V[0], iters[0], kkt[0]
    return V, iters, kkt


def default_lambda(kernel_vector):
    """``0.01 * max_i k(X, D_i)``, the default penalty for one query."""
    return DEFAULT_LAMBDA_SCALE * float(np.max(kernel_vector))


def _resolve_lambdas(A, lam):
    if lam is None:
        return DEFAULT_LAMBDA_SCALE * A.max(axis=1)
    lam = float(lam)
    if lam < 0:
        raise ValidationError(f"lambda must be nonnegative, got {lam}")
    return np.full(A.shape[0], lam)


def solve(problem: CodingProblem, tol=1e-8, max_iter=10000, method="feature-sign") -> SparseCode:
    """Solve one :class:`CodingProblem`."""
    v, it, kkt = lasso(problem.gram, problem.kernel_vector, problem.lam, method, tol, max_iter)
    return SparseCode(v, problem.lam, float(objective(v, problem)), int(it), float(kkt))


def kernel_lasso(X, dictionary: SpdDictionary, lam=None, tol=1e-8, max_iter=10000,
                 method="feature-sign") -> SparseCode:
    """Sparse code of one SPD query over a dictionary.

    ``lam=None`` uses ``0.01 * max_i k(X, D_i)``.
    """
    a = dictionary.kernel_vectors(X)[0]
    lam = default_lambda(a) if lam is None else lam
    return solve(CodingProblem(a, dictionary.gram.values, lam), tol, max_iter, method)


def code_matrix(X, dictionary: SpdDictionary, lam=None, tol=1e-8, max_iter=10000,
                method="feature-sign"):
    """Codes for a stack of queries, solved jointly; returns ``(V, lambdas, sweeps, kkt)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    N = len(dictionary)
    if X.shape[0] == 0:
        return np.zeros((0, N)), np.zeros(0), np.zeros(0, int), np.zeros(0)
    A = dictionary.kernel_vectors(X)
    lams = _resolve_lambdas(A, lam)
    V, sweeps, kkt = lasso(dictionary.gram.values, A, lams, method, tol, max_iter)
    return V, lams, sweeps, kkt


def batch_code(samples, dictionary: SpdDictionary, lam=None, tol=1e-8, max_iter=10000,
               method="feature-sign"):
    """Element-wise :func:`kernel_lasso` over a set, order preserved."""
    X = samples.matrices if isinstance(samples, SpdSet) else np.asarray(samples, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.shape[0] == 0:
        return []
    A = dictionary.kernel_vectors(X)
    lams = _resolve_lambdas(A, lam)
    try:
        V, sweeps, kkt = lasso(dictionary.gram.values, A, lams, method, tol, max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"batch coding failed: {exc}", exc.last_iterate,
                               exc.residual) from exc
    K = dictionary.gram.values
    out = []
    for j in range(X.shape[0]):
        p = CodingProblem(A[j], K, lams[j])
        out.append(SparseCode(V[j], float(lams[j]), float(objective(V[j], p)),
                              int(sweeps[j]), float(kkt[j])))
    return out


def class_residuals(kernel_vector, gram, v, labels, classes=None, self_similarity=1.0):
    """Residual error of each class using only that class's coefficients."""
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    v = np.asarray(v, dtype=float)
    out = np.empty(classes.size)
    for c_idx, c in enumerate(classes):
        vc = np.where(labels == c, v, 0.0)
        out[c_idx] = self_similarity - 2 * vc @ kernel_vector + vc @ gram @ vc
    return out


def residual_error(X, dictionary: SpdDictionary, code: SparseCode, class_id: int) -> float:
    """Class-masked reconstruction error of ``X`` for ``class_id``."""
    classes = dictionary.classes
    if class_id not in classes:
        raise ValidationError(f"unknown class id {class_id}")
    a = dictionary.kernel_vectors(X)[0]
    return float(class_residuals(a, dictionary.gram.values, code.coefficients,
                                 dictionary.labels, [class_id])[0])


def _decide(residuals, classes, v, kernel_vector, labels):
    if not np.any(v):
        return classes.dtype.type(labels[int(np.argmax(kernel_vector))])
    best = residuals.min()
    # classes are sorted, so the first near-minimum is the smallest id
    return classes[np.flatnonzero(residuals <= best + TIE_TOL)[0]]


def classify_residual(X, dictionary: SpdDictionary, lam=None, tol=1e-8, max_iter=10000,
                      method="feature-sign"):
    """Label of the class with minimum residual error.

    Ties go to the smallest class id.  An all-zero code makes every residual
    equal, so the label of the most similar atom is returned instead.
    """
    return classify_many(X, dictionary, lam, tol, max_iter, method)[0]


def classify_many(X, dictionary: SpdDictionary, lam=None, tol=1e-8, max_iter=10000,
                  method="feature-sign"):
    """Vectorized :func:`classify_residual` over a stack of queries."""
    if len(dictionary) == 0:
        raise ValidationError("empty dictionary")
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    classes = dictionary.classes
    A = dictionary.kernel_vectors(X)
    lams = _resolve_lambdas(A, lam)
    K = dictionary.gram.values
    V, _, _ = lasso(K, A, lams, method, tol, max_iter)
    out = np.empty(X.shape[0], dtype=classes.dtype)
    for j in range(X.shape[0]):
        res = class_residuals(A[j], K, V[j], dictionary.labels, classes)
        out[j] = _decide(res, classes, V[j], A[j], dictionary.labels)
    return out


def similarity_scores(code, labels, mode="sum", classes=None):
    """Per-class aggregate of code coefficients (``sum`` or ``max``)."""
    v = code.coefficients if isinstance(code, SparseCode) else np.asarray(code, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    if mode == "sum":
        return np.array([v[labels == c].sum() for c in classes])
    if mode == "max":
        return np.array([v[labels == c].max() if np.any(labels == c) else 0.0 for c in classes])
    raise ValidationError(f"mode must be 'sum' or 'max', got {mode!r}")
