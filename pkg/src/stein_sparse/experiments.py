"""Repeated-trial experiments and their reports.

Each experiment maps a trial seed to a row of named metrics.  Trials run in
a thread pool (capped by ``STEIN_SPARSE_THREADS``) with seed
``base_seed + trial_index``; rows are reported in trial order regardless of
completion order.
"""
from __future__ import annotations

import csv
import inspect
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import classify_logesr
from .coding import classify_many, code_matrix
from .containers import SpdDictionary, SpdSet
from .descriptors import extract_random_blocks, read_pgm
from .exceptions import ValidationError
from .learning import code_samples, energy, init_dictionary, learn
from .synth import (
    SynthClassificationConfig,
    SynthDictionaryConfig,
    gen_classification,
    gen_dictionary_task,
)

THREADS_ENV = "STEIN_SPARSE_THREADS"


def max_workers(requested=None):
    """Thread count: ``requested``, else ``$STEIN_SPARSE_THREADS``, else CPU count."""
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ValidationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            requested = os.cpu_count() or 1
    if requested < 1:
        raise ValidationError("thread count must be at least 1")
    return requested


@dataclass
class ExperimentReport:
    """Per-trial metrics plus summary statistics.

    ``std`` is the sample standard deviation (``ddof=1``; 0 for one trial).
    """

    name: str
    columns: list
    rows: list
    seconds: list
    config: dict = field(default_factory=dict)

    def values(self, column):
        return np.array([r[column] for r in self.rows], dtype=float)

    def mean(self, column):
        return float(self.values(column).mean())

    def std(self, column):
        v = self.values(column)
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    @property
    def total_seconds(self):
        return float(sum(self.seconds))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial"] + self.columns + ["seconds"])
        for i, (row, sec) in enumerate(zip(self.rows, self.seconds)):
            w.writerow([i] + [repr(float(row[c])) for c in self.columns] + [f"{sec:.3f}"])
        w.writerow(["mean"] + [repr(self.mean(c)) for c in self.columns]
                   + [f"{np.mean(self.seconds):.3f}"])
        w.writerow(["std"] + [repr(self.std(c)) for c in self.columns]
                   + [f"{np.std(self.seconds, ddof=1) if len(self.seconds) > 1 else 0.0:.3f}"])
        return buf.getvalue()

    def summary(self) -> str:
        parts = [f"{c} {self.mean(c):.4g} +- {self.std(c):.2g}" for c in self.columns]
        return f"{self.name} ({len(self.rows)} trials): " + ", ".join(parts)


def run_trials(name, trial_fn, trials, seed=0, threads=None, config=None) -> ExperimentReport:
    """Run ``trial_fn(seed + i)`` for ``i < trials`` and collect an :class:`ExperimentReport`."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")

    def timed(i):
        t0 = time.perf_counter()
        row = trial_fn(seed + i)
        return row, time.perf_counter() - t0

    workers = min(trials, max_workers(threads))
    if workers == 1:
        results = [timed(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(timed, range(trials)))
    rows = [r for r, _ in results]
    return ExperimentReport(name, list(rows[0]), rows, [s for _, s in results], config or {})


def _config(cls, **kwargs):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad {cls.__name__} field: {exc}") from None


def _accuracy(pred, labels):
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def synth_classify(trials=20, seed=0, spread="easy", lam=None, threads=None, **overrides):
    """Stein-kernel residual classification (``rsr``) against log-Euclidean (``loge``)."""
    base = _config(SynthClassificationConfig, spread=spread, **overrides)

    def trial(s):
        cfg = SynthClassificationConfig(**{**base.to_dict(), "seed": s})
        train, test = gen_classification(cfg)
        rsr = classify_many(test.matrices, SpdDictionary.from_set(train), lam)
        loge = classify_logesr(test.matrices, train.matrices, train.labels, lam)
        return {"rsr": _accuracy(rsr, test.labels), "loge": _accuracy(loge, test.labels)}

    config = {**base.to_dict(), "lambda": lam, "seed": seed}
    return run_trials("synth-classify", trial, trials, seed, threads, config)


def synth_dict(trials=5, seed=0, atoms=32, lam=0.01, iters=30, threads=None, **overrides):
    """Energy of the learned dictionary against its Riemannian k-means start.

    Columns: ``kmeans`` (k-means dictionary, freshly coded), ``learned``
    (final energy after learning from that start) and ``initial`` (first
    trace entry).
    """
    base = _config(SynthDictionaryConfig, **overrides)

    def trial(s):
        samples, _ = gen_dictionary_task(SynthDictionaryConfig(**{**base.to_dict(), "seed": s}))
        km = init_dictionary(samples, atoms, "kmeans", s)
        j_km = energy(samples, km, code_samples(samples, km, lam))
        _, trace = learn(samples, atoms, lam, iters, s, init=km)
        return {"kmeans": j_km, "learned": trace.final_energy, "initial": trace.energies[0],
                "iterations": len(trace)}

    config = {**base.to_dict(), "atoms": atoms, "lambda": lam, "iters": iters, "seed": seed}
    return run_trials("synth-dict", trial, trials, seed, threads, config)


def _nn_predict(train_codes, train_labels, test_codes):
    d2 = ((test_codes[:, None, :] - train_codes[None, :, :]) ** 2).sum(-1)
    return np.asarray(train_labels)[d2.argmin(axis=1)]


def compare_dictionaries(train: SpdSet, test: SpdSet, atoms, lam, iters, seed):
    """Nearest-neighbour accuracy on sparse codes for learned, k-means and random dictionaries.

    All three dictionaries are built from the pooled, unlabeled training
    set; the learned one starts from the k-means dictionary.
    """
    rand = init_dictionary(train.matrices, atoms, "random", seed)
    km = init_dictionary(train.matrices, atoms, "kmeans", seed)
    learned, _ = learn(train.matrices, atoms, lam, iters, seed, init=km)
    out = {}
    for name, D in (("learned", learned), ("kmeans", km), ("random", rand)):
        Vtr = code_matrix(train.matrices, D, lam)[0]
        Vte = code_matrix(test.matrices, D, lam)[0]
        out[name] = _accuracy(_nn_predict(Vtr, train.labels, Vte), test.labels)
    return out


def dict_classify(trials=10, seed=0, atoms=16, lam=0.01, iters=30, threads=None, classes=8,
                  samples=256, dim=5, spread="hard", **overrides):
    """Dictionary-quality comparison on synthetic multi-class covariance data."""
    base = _config(SynthClassificationConfig, classes=classes, samples=samples, dim=dim,
                   spread=spread, **overrides)

    def trial(s):
        train, test = gen_classification(SynthClassificationConfig(**{**base.to_dict(), "seed": s}))
        return compare_dictionaries(train, test, atoms, lam, iters, s)

    config = {**base.to_dict(), "atoms": atoms, "lambda": lam, "iters": iters, "seed": seed}
    return run_trials("dict-classify", trial, trials, seed, threads, config)


def texture(images, labels=None, trials=10, seed=0, blocks=50, block=32, train_fraction=0.5,
            atoms=None, lam=0.01, iters=30, threads=None):
    """Texture classification from region covariances of random image blocks.

    ``images`` are graymap paths (or arrays), one texture class each unless
    ``labels`` says otherwise.  Each trial draws ``blocks`` random blocks
    per image, splits each class into train/test and compares dictionaries
    as in :func:`compare_dictionaries`.  ``atoms`` defaults to the number of
    classes.
    """
    imgs = [read_pgm(p) if isinstance(p, (str, os.PathLike)) else np.asarray(p, float)
            for p in images]
    if not imgs:
        raise ValidationError("texture experiment needs at least one image")
    labels = list(range(len(imgs))) if labels is None else [int(l) for l in labels]
    if len(labels) != len(imgs):
        raise ValidationError("one label per image required")
    n_atoms = len(set(labels)) if atoms is None else atoms
    n_train = int(round(blocks * train_fraction))
    if not 0 < n_train < blocks:
        raise ValidationError("train_fraction must leave blocks on both sides of the split")

    def trial(s):
        tr, te, ytr, yte = [], [], [], []
        for k, (img, lab) in enumerate(zip(imgs, labels)):
            sset = extract_random_blocks(img, blocks, block, seed=s * 7919 + k)
            tr.append(sset.matrices[:n_train])
            te.append(sset.matrices[n_train:])
            ytr += [lab] * n_train
            yte += [lab] * (blocks - n_train)
        train = SpdSet(np.concatenate(tr), np.array(ytr))
        test = SpdSet(np.concatenate(te), np.array(yte))
        return compare_dictionaries(train, test, n_atoms, lam, iters, s)

    config = {"images": [str(p) for p in images] if all(isinstance(p, (str, os.PathLike))
                                                         for p in images) else len(imgs),
              "labels": labels, "blocks": blocks, "block": block, "atoms": n_atoms,
              "lambda": lam, "iters": iters, "seed": seed}
    return run_trials("texture", trial, trials, seed, threads, config)


EXPERIMENTS = {
    "synth-classify": synth_classify,
    "synth-dict": synth_dict,
    "dict-classify": dict_classify,
    "texture": texture,
}


def run_experiment(name, **params) -> ExperimentReport:
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ValidationError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    try:
        inspect.signature(fn).bind(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name}: {exc}") from None
    return fn(**params)
