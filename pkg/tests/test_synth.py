import itertools

import numpy as np
import pytest

from stein_sparse.exceptions import ValidationError
from stein_sparse.spd import check_spd, karcher_mean, airm_distance
from stein_sparse.synth import (
    SynthClassificationConfig,
    SynthDictionaryConfig,
    gen_classification,
    gen_dictionary_task,
    random_spd,
)


def test_classification_sizes_and_balance():
    train, test = gen_classification(SynthClassificationConfig())
    assert len(train) == 256 and len(test) == 256
    assert train.dim == 3
    for s in (train, test):
        np.testing.assert_array_equal(np.bincount(s.labels), [64] * 4)
        check_spd(s.matrices)


def test_classification_deterministic():
    a = gen_classification(SynthClassificationConfig(seed=4, spread="hard"))
    b = gen_classification(SynthClassificationConfig(seed=4, spread="hard"))
    np.testing.assert_array_equal(a[0].matrices, b[0].matrices)
    np.testing.assert_array_equal(a[1].matrices, b[1].matrices)
    c = gen_classification(SynthClassificationConfig(seed=5, spread="hard"))
    assert not np.array_equal(a[0].matrices, c[0].matrices)


def test_zero_spread_collapses_classes():
    train, test = gen_classification(SynthClassificationConfig(spread=0.0, samples=16))
    for c in range(4):
        members = np.concatenate([train.matrices[train.labels == c],
                                  test.matrices[test.labels == c]])
        np.testing.assert_allclose(members, np.broadcast_to(members[0], members.shape),
                                   rtol=1e-12)


def test_spread_validation():
    with pytest.raises(ValidationError):
        SynthClassificationConfig(spread="medium").std
    with pytest.raises(ValidationError):
        SynthClassificationConfig(spread=-1.0).std
    with pytest.raises(ValidationError):
        gen_classification(SynthClassificationConfig(samples=10))


def test_nearest_mean_difficulty_gap():
    # calibration target: easy near 95 %, hard near 70 % for a nearest-Karcher-mean rule
    acc = {}
    for spread in ("easy", "hard"):
        scores = []
        for seed in range(3):
            train, test = gen_classification(SynthClassificationConfig(seed=seed, spread=spread))
            mus = np.array([karcher_mean(train.matrices[train.labels == c]) for c in range(4)])
            pred = airm_distance(test.matrices[:, None], mus[None]).argmin(axis=1)
            scores.append(np.mean(pred == test.labels))
        acc[spread] = np.mean(scores)
    assert acc["easy"] > 0.9
    assert 0.55 < acc["hard"] < 0.85


def test_dictionary_task_counts_and_spd():
    samples, sources = gen_dictionary_task(SynthDictionaryConfig())
    assert samples.matrices.shape == (512, 5, 5)
    assert sources.matrices.shape == (32, 5, 5)
    np.testing.assert_array_equal(sources.labels, np.arange(32))
    check_spd(samples.matrices)
    check_spd(sources.matrices)


def test_dictionary_task_copies_sources():
    samples, sources = gen_dictionary_task(SynthDictionaryConfig(combination=1, fixed_weight=1.0,
                                                                 samples=40))
    for s in samples.matrices:
        assert np.any(np.all(sources.matrices == s, axis=(1, 2)))


def test_dictionary_task_is_positive_combination():
    # exhaustive oracle: some 4-subset of sources reproduces each sample exactly
    # with positive weights (32 sources are linearly dependent in 15 dimensions,
    # so a global least-squares fit is not unique)
    samples, sources = gen_dictionary_task(SynthDictionaryConfig(samples=3, seed=9))
    S = sources.matrices.reshape(32, -1)
    subsets = np.array(list(itertools.combinations(range(32), 4)))
    B = S[subsets]                                   # (n_sub, 4, 25)
    G = B @ np.swapaxes(B, 1, 2)
    for x in samples.matrices:
        w = np.linalg.solve(G, (B @ x.ravel())[:, :, None])[:, :, 0]
        resid = np.linalg.norm(np.einsum("nk,nkj->nj", w, B) - x.ravel(), axis=1)
        best = np.argmin(resid)
        assert resid[best] <= 1e-9 * np.linalg.norm(x)
        assert np.all(w[best] > 0)


def test_dictionary_task_deterministic_and_validated():
    a, _ = gen_dictionary_task(SynthDictionaryConfig(seed=2, samples=8))
    b, _ = gen_dictionary_task(SynthDictionaryConfig(seed=2, samples=8))
    np.testing.assert_array_equal(a.matrices, b.matrices)
    with pytest.raises(ValidationError):
        gen_dictionary_task(SynthDictionaryConfig(combination=40))


def test_random_spd_is_spd():
    check_spd(random_spd(np.random.default_rng(0), 4, 10))
