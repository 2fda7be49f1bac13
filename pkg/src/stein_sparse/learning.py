"""Dictionary learning over SPD matrices with the Stein kernel.

The energy of a dictionary ``D`` and codes ``V`` on samples ``X_1..X_m`` is

    J = sum_j ||phi(X_j) - sum_i v_ji phi(D_i)||^2 + lam ||v_j||_1

Learning alternates exact sparse coding (``D`` fixed) with one fixed-point
update per atom (``V`` fixed).  Atom updates are built from the two
matrices

    F(r) = sum_j 2 v_jr k(X_j, D_r) (X_j + D_r)^{-1}
    G(r) = sum_j sum_i v_jr v_ji k(D_i, D_r) (D_i + D_r)^{-1}
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coding import code_matrix
from .containers import SpdDictionary, SpdSet
from .exceptions import ConvergenceError, ValidationError
from .kernel import default_sigma, kernel_matrix
from .spd import airm_distance, geodesic, karcher_mean, project_to_spd, symmetrize

logger = logging.getLogger(__name__)

SKIP_TOL = 1e-12
NORMS = ("frobenius", "spectral", "none")
RULES = ("stationary", "literal")


def _as_matrices(samples):
    X = samples.matrices if isinstance(samples, SpdSet) else np.asarray(samples, dtype=float)
    return X[None] if X.ndim == 2 else X


@dataclass
class CodeMatrix:
    """Codes of ``m`` samples over ``N`` atoms; row ``j`` belongs to sample ``j``."""

    coefficients: np.ndarray
    lam: float

    @property
    def sparsity(self):
        """Mean number of nonzero coefficients per sample."""
        return float(np.count_nonzero(self.coefficients, axis=1).mean())


@dataclass
class LearningTrace:
    """Per-iteration record of a learning run.

    ``energies[t]`` is the energy right after the coding step of iteration
    ``t``; ``final_energy`` is measured on the returned dictionary.
    """

    energies: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)
    skips: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    final_energy: float = float("nan")
    stop_reason: str = "max_iter"

    def __len__(self):
        return len(self.energies)


def energy_from_kernels(V, k_xd, k_dd, lam):
    """Energy from the kernel caches ``k(X_j, D_i)`` and ``k(D_i, D_j)``."""
    V = np.atleast_2d(V)
    recon = 1.0 - 2 * np.einsum("ji,ji->j", V, k_xd) + np.einsum("ji,ik,jk->j", V, k_dd, V)
    return float(np.sum(recon) + lam * np.abs(V).sum())


def energy(samples, dictionary: SpdDictionary, codes: CodeMatrix) -> float:
    """Total RKHS representation energy (reconstruction plus ``lam * l1``)."""
    X = _as_matrices(samples)
    V = np.asarray(codes.coefficients, dtype=float)
    if V.shape != (X.shape[0], len(dictionary)):
        raise ValidationError(f"codes shape {V.shape} does not match "
                              f"{X.shape[0]} samples x {len(dictionary)} atoms")
    return energy_from_kernels(V, dictionary.kernel_vectors(X), dictionary.gram.values, codes.lam)


def code_samples(samples, dictionary: SpdDictionary, lam: float) -> CodeMatrix:
    V, _, _, _ = code_matrix(_as_matrices(samples), dictionary, lam)
    return CodeMatrix(V, float(lam))


# ---------------------------------------------------------------------------
# initialization


@dataclass
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    distortions: list
    iterations: int


def _kmeanspp(X, n, rng):
    m = X.shape[0]
    idx = [int(rng.integers(m))]
    d2 = airm_distance(X, X[idx[0]]) ** 2
    for _ in range(1, n):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.choice(np.setdiff1d(np.arange(m), idx)))
        else:
            pick = int(rng.choice(m, p=d2 / total))
        idx.append(pick)
        d2 = np.minimum(d2, airm_distance(X, X[pick]) ** 2)
    return X[idx].copy()


def _center(points):
    try:
        return karcher_mean(points)
    except ConvergenceError as exc:
        logger.warning("Karcher mean stopped early: %s", exc)
        return exc.last_iterate


def riemannian_kmeans(samples, n_clusters: int, seed: int = 0, max_iter: int = 50) -> KMeansResult:
    """Lloyd iterations under the affine-invariant metric with Karcher-mean centers.

    Seeding is k-means++ (squared AIRM distance sampling).  An emptied
    cluster is re-seeded with the sample farthest from its current center.
    ``distortions`` holds the sum of squared distances to assigned centers,
    one entry per assignment step.
    """
    X = _as_matrices(samples)
    m = X.shape[0]
    if not 1 <= n_clusters <= m:
        raise ValidationError(f"need 1 <= n_clusters <= {m}, got {n_clusters}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, n_clusters, rng)
    assign = None
    distortions = []
    it = 0
    for it in range(1, max_iter + 1):
        dist = airm_distance(X[:, None], centers[None])
        new = dist.argmin(axis=1)
        distortions.append(float(np.sum(dist[np.arange(m), new] ** 2)))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        own = dist[np.arange(m), assign]
        for c in range(n_clusters):
            members = X[assign == c]
            if members.shape[0] == 0:
                far = int(np.argmax(own))
                centers[c] = X[far]
                assign[far] = c
                own[far] = 0.0
            else:
                centers[c] = _center(members)
    return KMeansResult(centers, assign, distortions, it)


def init_dictionary(samples, n_atoms: int, method: str = "kmeans", seed: int = 0,
                    sigma=None) -> SpdDictionary:
    """Initial dictionary: ``n_atoms`` distinct random samples or k-means centers."""
    if n_atoms < 1:
        raise ValidationError("n_atoms must be at least 1")
    X = _as_matrices(samples)
    labels = samples.labels if isinstance(samples, SpdSet) else None
    if method == "random":
        if n_atoms > X.shape[0]:
            raise ValidationError(f"cannot draw {n_atoms} distinct atoms from {X.shape[0]} samples")
        idx = np.random.default_rng(seed).choice(X.shape[0], n_atoms, replace=False)
        return SpdDictionary(X[idx], sigma, None if labels is None else labels[idx])
    if method == "kmeans":
        return SpdDictionary(riemannian_kmeans(X, n_atoms, seed).centers, sigma)
    raise ValidationError(f"unknown init method {method!r}")


# ---------------------------------------------------------------------------
# atom update


def atom_terms(r, X, atoms, V, k_xd, k_dd):
    """``F(r)`` and ``G(r)`` for atom ``r`` from the current kernel caches.

    Only samples with ``v_jr != 0`` contribute.  ``G`` folds the sum over
    samples into ``c_i = sum_j v_jr v_ji``.
    """
    Dr = atoms[r]
    vr = V[:, r]
    used = np.flatnonzero(vr)
    d = Dr.shape[-1]
    if used.size == 0:
        return np.zeros((d, d)), np.zeros((d, d))
    inv_x = np.linalg.inv(X[used] + Dr)
    F = np.einsum("j,jab->ab", 2 * vr[used] * k_xd[used, r], inv_x)
    c = V[used].T @ vr[used]
    inv_d = np.linalg.inv(atoms + Dr)
    G = np.einsum("i,iab->ab", c * k_dd[:, r], inv_d)
    return symmetrize(F), symmetrize(G)


def literal_update(r, X, atoms, V, k_xd, k_dd):
    """Closed-form atom ``(2 / s) (F + G)^{-1}`` with
    ``s = sum_j v_jr (v_j^T k(D, D_r) - 2 k(X_j, D_r))``.

    Returns ``(matrix, s)``; the matrix is ``None`` when ``s`` vanishes or
    ``F + G`` is singular.  The result need not be positive definite.
    """
    vr = V[:, r]
    s = float(np.sum(vr * (V @ k_dd[:, r] - 2 * k_xd[:, r])))
    if abs(s) <= SKIP_TOL or not np.any(vr):
        return None, s
    F, G = atom_terms(r, X, atoms, V, k_xd, k_dd)
    try:
        return symmetrize((2.0 / s) * np.linalg.inv(F + G)), s
    except np.linalg.LinAlgError:
        logger.warning("atom %d: F + G is singular, update skipped", r)
        return None, s


def _stationary_terms(r, X, atoms, V, k_xd, k_dd):
    """``(q, F, G')`` for atom ``r``, or ``None`` when no sample uses it."""
    vr = V[:, r]
    used = np.flatnonzero(vr)
    if used.size == 0:
        return None
    Dr = atoms[r]
    others = V @ k_dd[:, r] - vr * k_dd[r, r]
    q = float(np.sum(vr * (k_xd[:, r] - others)))
    F = np.einsum("j,jab->ab", 2 * vr[used] * k_xd[used, r], np.linalg.inv(X[used] + Dr))
    c = V[used].T @ vr[used]
    c[r] = 0.0
    G = np.einsum("i,iab->ab", c * k_dd[:, r], np.linalg.inv(atoms + Dr))
    return q, F, G


def stationary_update(r, X, atoms, V, k_xd, k_dd):
    """Fixed point of the stationarity condition ``dJ/dD_r = 0``.

    Differentiating ``J`` with ``grad_D S(X, D) = (X + D)^{-1} - D^{-1} / 2``
    and freezing every kernel value and ``(. + D_r)^{-1}`` at the current
    atom gives ``D_r^{-1} q = F - 2 G'`` where ``G'`` is ``G`` without the
    ``i = r`` term (cross terms appear twice in ``v^T K v``) and
    ``q = sum_j v_jr (k(X_j, D_r) - sum_{i != r} v_ji k(D_i, D_r))``.

    Returns ``(matrix, q)``; ``None`` when ``q`` vanishes or the system is
    singular.
    """
    terms = _stationary_terms(r, X, atoms, V, k_xd, k_dd)
    if terms is None:
        return None, 0.0
    q, F, G = terms
    if abs(q) <= SKIP_TOL:
        return None, q
    try:
        return symmetrize(q * np.linalg.inv(symmetrize(F - 2 * G))), q
    except np.linalg.LinAlgError:
        logger.warning("atom %d: stationarity system is singular, update skipped", r)
        return None, q


def atom_gradient(r, X, atoms, V, k_xd, k_dd, sigma):
    """Euclidean gradient of ``J`` with respect to atom ``r`` (codes fixed).

    ``sigma * (F - 2 G' - q D_r^{-1})`` in the notation of
    :func:`stationary_update`; it vanishes exactly when ``D_r`` equals the
    stationary update evaluated at ``D_r``.
    """
    terms = _stationary_terms(r, X, atoms, V, k_xd, k_dd)
    if terms is None:
        return np.zeros(atoms.shape[1:])
    q, F, G = terms
    return symmetrize(sigma * (F - 2 * G - q * np.linalg.inv(atoms[r])))


def normalize_atom(D, norm="frobenius"):
    if norm == "frobenius":
        return D / np.linalg.norm(D)
    if norm == "spectral":
        return D / np.linalg.norm(D, 2)
    if norm == "none":
        return D
    raise ValidationError(f"norm must be one of {NORMS}")


def _atom_energy_terms(r, Dr, X, atoms, V, sigma):
    """Kernel column for atom ``r`` set to ``Dr`` against samples and atoms."""
    kx = kernel_matrix(X, Dr, sigma)[:, 0]
    kd = kernel_matrix(atoms, Dr, sigma)[:, 0]
    kd[r] = 1.0
    return kx, kd


def _partial_energy(r, kx, kd, V):
    """Terms of ``J`` that depend on atom ``r`` (codes fixed)."""
    vr = V[:, r]
    cross = V @ kd - vr * kd[r]
    return float(np.sum(-2 * vr * kx + 2 * vr * cross))


@dataclass
class UpdateResult:
    atom: np.ndarray
    skipped: bool
    rejected: bool = False


def update_atom(r, X, atoms, V, k_xd, k_dd, sigma, rule="stationary", norm="none",
                eps=1e-8, safeguard=True, backtrack=6) -> UpdateResult:
    """New value of atom ``r`` with the codes held fixed.

    The candidate from ``rule`` is repaired with :func:`project_to_spd` and
    normalized.  With ``safeguard`` the candidate is accepted only if it
    lowers the energy; otherwise it is pulled back towards the current atom
    along the AIRM geodesic (halving the step up to ``backtrack`` times)
    and, failing that, the atom is kept (``rejected``).  An atom that no
    sample uses, or a vanishing denominator, is a skip: the atom is returned
    unchanged.
    """
    update = {"stationary": stationary_update, "literal": literal_update}.get(rule)
    if update is None:
        raise ValidationError(f"rule must be one of {RULES}")
    current = atoms[r]
    raw, _ = update(r, X, atoms, V, k_xd, k_dd)
    if raw is None or not np.all(np.isfinite(raw)):
        return UpdateResult(current, skipped=True)
    candidate = normalize_atom(project_to_spd(raw, eps), norm)
    if not safeguard:
        return UpdateResult(candidate, skipped=False)
    base = _partial_energy(r, k_xd[:, r], k_dd[:, r], V)
    step = 1.0
    for _ in range(backtrack + 1):
        trial = candidate if step == 1.0 else normalize_atom(geodesic(current, candidate, step), norm)
        kx, kd = _atom_energy_terms(r, trial, X, atoms, V, sigma)
        if _partial_energy(r, kx, kd, V) < base:
            return UpdateResult(trial, skipped=False)
        step /= 2
    return UpdateResult(current, skipped=False, rejected=True)


# ---------------------------------------------------------------------------
# learning loop


def learn(samples, n_atoms: int, lam: float = 0.01, n_iter: int = 30, seed: int = 0,
          init="kmeans", sigma=None, rule="stationary", norm="none", safeguard=True,
          early_stop=True, rel_tol=1e-4, patience=3, replace_unused=False):
    """Learn a dictionary by alternating sparse coding and atom updates.

    Parameters
    ----------
    samples : SpdSet or ndarray, shape (m, d, d)
    n_atoms : int
    lam : float
        Sparsity penalty used for every sample.
    n_iter : int
        Maximum number of coding/update rounds.
    seed : int
        Seeds the initialization.
    init : {"kmeans", "random"} or SpdDictionary
    sigma : float, optional
        Kernel bandwidth (default ``d / 2``).
    rule : {"stationary", "literal"}
        Atom update, see :func:`stationary_update` and :func:`literal_update`.
    norm : {"frobenius", "spectral", "none"}
        Atom normalization applied after each update.
    safeguard : bool
        Only accept atom updates that lower the energy.
    early_stop : bool
        Stop once the relative energy decrease stays below ``rel_tol`` for
        ``patience`` consecutive iterations.
    replace_unused : bool
        Replace an atom that no sample has used for two consecutive
        iterations by the worst-represented sample.

    Returns
    -------
    dictionary : SpdDictionary
    trace : LearningTrace
    """
    if n_iter < 1:
        raise ValidationError("n_iter must be at least 1")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    X = _as_matrices(samples)
    d = X.shape[-1]
    sigma = default_sigma(d) if sigma is None else sigma
    if isinstance(init, SpdDictionary):
        dictionary = SpdDictionary(init.atoms.copy(), sigma)
    else:
        dictionary = init_dictionary(X, n_atoms, init, seed, sigma)
    atoms = dictionary.atoms.copy()
    if norm != "none":
        atoms = np.array([normalize_atom(a, norm) for a in atoms])
    trace = LearningTrace()
    quiet = 0
    idle = np.zeros(atoms.shape[0], dtype=int)
    for t in range(n_iter):
        k_xd = kernel_matrix(X, atoms, sigma)
        k_dd = kernel_matrix(atoms, sigma=sigma)
        current = SpdDictionary(atoms, sigma)
        V, _, _, _ = code_matrix(X, current, lam)
        J = energy_from_kernels(V, k_xd, k_dd, lam)
        trace.energies.append(J)
        trace.sparsity.append(float(np.count_nonzero(V, axis=1).mean()))
        skips = rejected = 0
        idle = np.where(np.any(V != 0, axis=0), 0, idle + 1)
        if replace_unused and np.any(idle >= 2):
            errors = 1 - 2 * np.einsum("ji,ji->j", V, k_xd) + np.einsum("ji,ik,jk->j", V, k_dd, V)
            for r, j in zip(np.flatnonzero(idle >= 2), np.argsort(-errors)):
                atoms[r] = normalize_atom(X[j], norm)
                idle[r] = 0
                k_xd[:, r], k_dd[:, r] = _atom_energy_terms(r, atoms[r], X, atoms, V, sigma)
                k_dd[r, :] = k_dd[:, r]
        for r in range(atoms.shape[0]):
            res = update_atom(r, X, atoms, V, k_xd, k_dd, sigma, rule, norm, safeguard=safeguard)
            skips += res.skipped
            rejected += res.rejected
            if not res.skipped and not res.rejected:
                atoms[r] = res.atom
                # later atoms in this sweep see the updated atom
                k_xd[:, r], k_dd[:, r] = _atom_energy_terms(r, atoms[r], X, atoms, V, sigma)
                k_dd[r, :] = k_dd[:, r]
        trace.skips.append(skips)
        trace.rejected.append(rejected)
        if early_stop and len(trace.energies) > 1:
            prev = trace.energies[-2]
            rel = (prev - J) / max(abs(prev), 1e-300)
            quiet = quiet + 1 if rel < rel_tol else 0
            if quiet >= patience:
                trace.stop_reason = "converged"
                break
    final = SpdDictionary(atoms, sigma)
    trace.final_energy = energy(X, final, code_samples(X, final, lam))
    return final, trace
