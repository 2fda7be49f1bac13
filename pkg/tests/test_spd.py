import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rand_spd, rand_sym
from stein_sparse.exceptions import (
    ConvergenceError,
    NotPositiveDefiniteError,
    ValidationError,
)
from stein_sparse.spd import (
    airm_distance,
    check_spd,
    check_symmetric,
    exp_map,
    generalized_eigenvalues,
    geodesic,
    is_spd,
    jensen_shannon_logdet,
    karcher_mean,
    log_map,
    logdet,
    project_to_spd,
    spd_expm,
    spd_invsqrtm,
    spd_logm,
    spd_powm,
    spd_sqrtm,
    stein_divergence,
    sym_eig,
    thompson_metric,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3, 5])


# -- validation ---------------------------------------------------------------

def test_symmetry_tolerance_is_relative():
    # asymmetry 1e-5 on entries of size 1e6 is within 1e-10 relative
    X = np.array([[1.0, 1e6], [1e6 + 1e-5, 1.0]])
    check_symmetric(X)
    Y = np.array([[1.0, 1.0], [1.0 + 1e-8, 1.0]])
    with pytest.raises(ValidationError):
        check_symmetric(Y)


def test_spd_checks():
    assert is_spd(np.eye(3))
    assert not is_spd(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefiniteError):
        check_spd(np.diag([1.0, 0.0]))
    with pytest.raises(ValidationError):
        check_spd(np.ones((2, 3)))


# -- eigen and spectral functions ---------------------------------------------

def test_sym_eig_identity_and_diagonal():
    e = sym_eig(np.eye(3))
    np.testing.assert_allclose(e.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(np.abs(e.eigenvectors), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(sym_eig(np.diag([1.0, 4.0])).eigenvalues, [4, 1])


def test_sym_eig_reconstructs(rng):
    X = rand_sym(rng, 5)
    e = sym_eig(X)
    assert np.all(np.diff(e.eigenvalues) <= 0)
    Q = e.eigenvectors
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-8)
    assert np.linalg.norm(e.reconstruct() - X) <= 1e-8 * np.linalg.norm(X)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValidationError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_spectral_closed_forms():
    np.testing.assert_allclose(spd_logm(np.eye(4)), np.zeros((4, 4)), atol=1e-15)
    np.testing.assert_allclose(spd_sqrtm(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    np.testing.assert_allclose(spd_invsqrtm(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))
    np.testing.assert_allclose(spd_powm(np.diag([8.0, 27.0]), 1 / 3), np.diag([2.0, 3.0]))
    np.testing.assert_allclose(spd_expm(np.diag([0.0, np.log(5)])), np.diag([1.0, 5.0]))


def test_expm_matches_taylor_series(rng):
    V = rand_sym(rng, 4) * 0.5
    series, term = np.eye(4), np.eye(4)
    for k in range(1, 40):
        term = term @ V / k
        series = series + term
    np.testing.assert_allclose(spd_expm(V), series, rtol=1e-12, atol=1e-12)


@given(seeds)
def test_exp_log_round_trip(seed):
    X = rand_spd(np.random.default_rng(seed), 6)
    assert np.linalg.norm(spd_expm(spd_logm(X)) - X) <= 1e-8 * np.linalg.norm(X)
    S = spd_sqrtm(X)
    np.testing.assert_allclose(S @ S, X, rtol=1e-9, atol=1e-9 * np.abs(X).max())


def test_logm_rejects_non_pd():
    with pytest.raises(NotPositiveDefiniteError):
        spd_logm(np.diag([1.0, -2.0]))
    with pytest.raises(NotPositiveDefiniteError):
        spd_sqrtm(np.diag([1.0, 0.0]))


def test_logdet():
    assert logdet(np.eye(5)) == 0.0
    assert logdet(np.diag([2.0, 2.0])) == pytest.approx(2 * np.log(2), rel=1e-15)
    X = rand_spd(np.random.default_rng(1), 6)
    assert logdet(X) == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(X))), rel=1e-9)
    with pytest.raises(NotPositiveDefiniteError):
        logdet(np.diag([1.0, -1.0]))


# -- divergences and metrics --------------------------------------------------

def test_stein_closed_form():
    assert stein_divergence(2 * np.eye(2), np.eye(2)) == pytest.approx(
        2 * (np.log(1.5) - 0.5 * np.log(2)), abs=1e-14)
    assert stein_divergence(2 * np.eye(2), np.eye(2)) == pytest.approx(0.117783, abs=1e-6)


def test_stein_matches_determinant_form(rng):
    X, Y = rand_spd(rng, 4), rand_spd(rng, 4)
    direct = np.log(np.linalg.det((X + Y) / 2) / np.sqrt(np.linalg.det(X) * np.linalg.det(Y)))
    assert stein_divergence(X, Y) == pytest.approx(direct, rel=1e-9)


@given(seeds, dims)
def test_stein_equals_jensen_shannon_logdet(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    assert stein_divergence(X, Y) == pytest.approx(jensen_shannon_logdet(X, Y), abs=1e-9)


@given(seeds, dims)
def test_stein_symmetric_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    s = stein_divergence(X, Y)
    assert s >= -1e-10
    assert s == pytest.approx(stein_divergence(Y, X), abs=1e-10)
    assert abs(stein_divergence(X, X)) <= 1e-10


def test_stein_dim_mismatch():
    with pytest.raises(ValidationError):
        stein_divergence(np.eye(2), np.eye(3))


def test_airm_closed_form_and_identity(rng):
    assert airm_distance(4 * np.eye(3), np.eye(3)) == pytest.approx(np.sqrt(3) * np.log(4))
    X = rand_spd(rng, 4)
    assert airm_distance(X, X) == pytest.approx(0.0, abs=1e-7)


@given(seeds, dims)
def test_airm_matches_whitened_logm(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    Xi = spd_invsqrtm(X)
    ref = np.linalg.norm(spd_logm((Xi @ Y @ Xi + (Xi @ Y @ Xi).T) / 2))
    assert airm_distance(X, Y) == pytest.approx(ref, rel=1e-8, abs=1e-10)
    assert airm_distance(X, Y) == pytest.approx(airm_distance(Y, X), rel=1e-8, abs=1e-10)


@given(seeds, dims)
def test_airm_congruence_invariance(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    A = rng.standard_normal((d, d)) + 2 * np.eye(d)
    assert airm_distance(A @ X @ A.T, A @ Y @ A.T) == pytest.approx(
        airm_distance(X, Y), rel=1e-6, abs=1e-8)


def test_generalized_eigenvalues_against_xy_inverse(rng):
    X, Y = rand_spd(rng, 4), rand_spd(rng, 4)
    ref = np.sort(np.linalg.eigvals(X @ np.linalg.inv(Y)).real)
    np.testing.assert_allclose(generalized_eigenvalues(X, Y), ref, rtol=1e-8)


def test_thompson(rng):
    assert thompson_metric(4 * np.eye(2), np.eye(2)) == pytest.approx(np.log(4))
    X, Y = rand_spd(rng, 5), rand_spd(rng, 5)
    assert thompson_metric(X, X) == pytest.approx(0.0, abs=1e-10)
    assert thompson_metric(X, Y) == pytest.approx(thompson_metric(Y, X), rel=1e-9)


# -- geodesic, exp and log ----------------------------------------------------

def test_geodesic_endpoints_and_scalar(rng):
    X, Y = rand_spd(rng, 3), rand_spd(rng, 3)
    np.testing.assert_allclose(geodesic(X, Y, 0.0), X, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(geodesic(X, Y, 1.0), Y, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(geodesic(np.eye(2), 4 * np.eye(2), 0.5), 2 * np.eye(2))
    with pytest.raises(ValidationError):
        geodesic(X, Y, 1.5)


@given(seeds, dims, st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
def test_geodesic_linearity_and_contraction(seed, d, p):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    G = geodesic(X, Y, p)
    check_spd(G)
    dist = airm_distance(X, Y)
    assert abs(airm_distance(X, G) - p * dist) <= 1e-7 * max(dist, 1e-12) + 1e-12
    assert stein_divergence(X, G) <= p * stein_divergence(X, Y) + 1e-9


def test_exp_log_maps(rng):
    X, Y = rand_spd(rng, 5), rand_spd(rng, 5)
    np.testing.assert_allclose(log_map(X, X), 0.0, atol=1e-10)
    V = rand_sym(rng, 5)
    np.testing.assert_allclose(exp_map(np.eye(5), V), spd_expm(V), rtol=1e-10)
    R = exp_map(X, log_map(X, Y))
    assert np.linalg.norm(R - Y) <= 1e-7 * np.linalg.norm(Y)


def test_log_map_norm_is_airm_distance(rng):
    # the Riemannian norm of log_X(Y) at X is ||X^{-1/2} log_X(Y) X^{-1/2}||_F
    X, Y = rand_spd(rng, 4), rand_spd(rng, 4)
    Xi = spd_invsqrtm(X)
    assert np.linalg.norm(Xi @ log_map(X, Y) @ Xi) == pytest.approx(airm_distance(X, Y), rel=1e-9)


def test_exp_map_rejects_non_pd_base():
    with pytest.raises(NotPositiveDefiniteError):
        exp_map(np.diag([1.0, -1.0]), np.zeros((2, 2)))


# -- sandwich inequality ------------------------------------------------------

@given(seeds, st.sampled_from([2, 3, 5, 10]))
def test_sandwich_inequality(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, d), rand_spd(rng, d)
    S = stein_divergence(X, Y)
    g2 = airm_distance(X, Y) ** 2
    assert S <= g2 / 8 + 1e-9
    assert g2 / 8 <= 0.25 * thompson_metric(X, Y) * (S + d * np.log(d)) + 1e-9


# -- projection and Karcher mean ----------------------------------------------

def test_project_to_spd():
    np.testing.assert_allclose(project_to_spd(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(project_to_spd(np.diag([1.0, -0.5])), np.diag([1.0, 1e-8]))
    # floor is relative to the largest eigenvalue when that exceeds 1
    P = project_to_spd(np.diag([100.0, -1.0]), 1e-3)
    np.testing.assert_allclose(np.diag(P), [100.0, 0.1])


@given(seeds, dims)
def test_project_to_spd_output_valid(seed, d):
    P = project_to_spd(rand_sym(np.random.default_rng(seed), d))
    check_spd(P)


def test_karcher_singleton_and_scalar_pair(rng):
    X = rand_spd(rng, 3)
    np.testing.assert_allclose(karcher_mean(X[None]), X)
    np.testing.assert_allclose(karcher_mean(np.array([2 * np.eye(3), 8 * np.eye(3)])),
                               4 * np.eye(3), rtol=1e-10)


def test_karcher_two_points_is_geodesic_midpoint(rng):
    X, Y = rand_spd(rng, 3), rand_spd(rng, 3)
    np.testing.assert_allclose(karcher_mean(np.array([X, Y])), geodesic(X, Y, 0.5),
                               rtol=1e-7, atol=1e-9)


def test_karcher_first_order_condition(rng):
    P = rand_spd(rng, 4, 12, spread=1.0)
    mu = karcher_mean(P, tol=1e-10)
    grad = sum(log_map(mu, x) for x in P) / len(P)
    assert np.linalg.norm(grad) <= 1e-10


def test_karcher_reports_non_convergence(rng):
    P = rand_spd(rng, 3, 6)
    with pytest.raises(ConvergenceError) as info:
        karcher_mean(P, tol=0.0, max_iter=2)
    assert info.value.last_iterate.shape == (3, 3)
    assert info.value.residual > 0


def test_karcher_weights_select_point(rng):
    P = rand_spd(rng, 3, 3)
    np.testing.assert_allclose(karcher_mean(P, weights=[0, 1, 0]), P[1], rtol=1e-7)


def test_broadcasting(rng):
    X, Y = rand_spd(rng, 3, 7), rand_spd(rng, 3)
    s = stein_divergence(X, Y)
    assert s.shape == (7,)
    np.testing.assert_allclose(s, [stein_divergence(x, Y) for x in X])
    np.testing.assert_allclose(airm_distance(X, Y), [airm_distance(x, Y) for x in X])
