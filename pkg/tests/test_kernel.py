import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import stein_sparse.kernel as kmod
from conftest import direct_kernel, rand_spd
from stein_sparse.exceptions import ValidationError
from stein_sparse.kernel import (
    KernelParams,
    default_sigma,
    gram,
    kernel_matrix,
    stein_kernel,
    validate_sigma,
)
from stein_sparse.spd import stein_divergence


def test_validate_sigma_set():
    assert validate_sigma(1.0, 4)
    assert not validate_sigma(1.25, 4)
    assert validate_sigma(0.5, 4) and validate_sigma(1.5, 4)
    assert validate_sigma(1.5000001, 4)
    assert not validate_sigma(0.0, 4) and not validate_sigma(-1.0, 4)
    assert not validate_sigma(0.75, 3)
    assert validate_sigma(0.5 + 1e-13, 3)
    assert not validate_sigma(0.5 + 1e-9, 3)


@given(st.integers(1, 30))
def test_default_sigma_valid(d):
    assert validate_sigma(default_sigma(d), d)
    assert default_sigma(d) == d / 2


def test_kernel_params():
    assert KernelParams.default(5).sigma == 2.5
    with pytest.raises(ValidationError):
        KernelParams(1.25, 4)
    assert KernelParams(1.25, 4, allow_indefinite=True).sigma == 1.25


def test_kernel_closed_form():
    k = stein_kernel(2 * np.eye(2), np.eye(2), sigma=1.0)
    # 2^{d sigma} sqrt(det X det Y) / det(X + Y) = 4 * 2 / 9
    assert k == pytest.approx(8 / 9, rel=1e-14)
    assert k == pytest.approx(np.exp(-0.117783), rel=1e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.5, 3.7]))
def test_kernel_matches_determinant_ratio(seed, sigma):
    rng = np.random.default_rng(seed)
    X, Y = rand_spd(rng, 5), rand_spd(rng, 5)
    assert stein_kernel(X, Y, sigma) == pytest.approx(direct_kernel(X, Y, sigma), rel=1e-9)


def test_kernel_range_identity_symmetry(rng):
    X = rand_spd(rng, 4, 10)
    K = kernel_matrix(X)
    assert np.all(K > 0) and np.all(K <= 1 + 1e-15)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    np.testing.assert_array_equal(K, K.T)
    for x in X:
        assert abs(stein_kernel(x, x) - 1.0) <= 1e-12


def test_kernel_rejects_invalid_sigma_unless_allowed(rng):
    X, Y = rand_spd(rng, 4), rand_spd(rng, 4)
    with pytest.raises(ValidationError):
        stein_kernel(X, Y, sigma=1.25)
    k = stein_kernel(X, Y, sigma=1.25, allow_indefinite=True)
    assert k == pytest.approx(np.exp(-1.25 * stein_divergence(X, Y)))


def test_kernel_monotone_in_divergence():
    scales = np.linspace(1.0, 10.0, 20)
    ks = [stein_kernel(a * np.eye(3), np.eye(3)) for a in scales]
    assert np.all(np.diff(ks) < 0)


def test_cross_gram_transpose(rng):
    A, B = rand_spd(rng, 3, 6), rand_spd(rng, 3, 4)
    np.testing.assert_allclose(kernel_matrix(A, B), kernel_matrix(B, A).T, atol=1e-12)
    np.testing.assert_allclose(kernel_matrix(A, B)[2, 1], stein_kernel(A[2], B[1]))


def test_chunked_evaluation_matches(rng, monkeypatch):
    A, B = rand_spd(rng, 3, 9), rand_spd(rng, 3, 7)
    full = kernel_matrix(A, B)
    monkeypatch.setattr(kmod, "_CHUNK_PAIRS", 5)
    np.testing.assert_allclose(kernel_matrix(A, B), full, rtol=1e-14)


def test_gram_singleton_and_psd(rng):
    g = gram(rand_spd(rng, 3)[None])
    np.testing.assert_array_equal(g.values, [[1.0]])
    g = gram(rand_spd(rng, 5, 50))
    assert g.min_eigenvalue >= -1e-8 * 50 and g.psd_ok
    assert g.sigma == 2.5 and g.size == 50


@pytest.mark.parametrize("d", [3, 5, 8])
def test_gram_psd_at_every_half_integer(d, rng):
    for sigma in [k / 2 for k in range(1, d)] + [d / 2]:
        g = gram(rand_spd(rng, d, 30), sigma=sigma)
        assert g.min_eigenvalue >= -1e-8 * 30, sigma


def test_gram_dim_mismatch(rng):
    with pytest.raises(ValidationError):
        kernel_matrix(rand_spd(rng, 3, 2), rand_spd(rng, 4, 2))


def test_gram_warns_when_psd_violated(monkeypatch, caplog):
    # force an indefinite matrix through the diagnostic path
    fake = np.array([[1.0, 2.0], [2.0, 1.0]])
    monkeypatch.setattr(kmod, "kernel_matrix", lambda *a, **k: fake)
    with caplog.at_level(logging.WARNING):
        g = gram(np.array([np.eye(2), 2 * np.eye(2)]))
    assert not g.psd_ok
    assert "min eigenvalue" in caplog.text
