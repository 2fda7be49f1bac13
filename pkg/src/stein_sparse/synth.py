"""Seeded synthetic data: the 4-class tangent-space task and the 32-source mixture task."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .containers import SpdSet
from .exceptions import ValidationError
from .spd import spd_expm, spd_sqrtm, symmetrize

SPREADS = {"easy": 0.15, "hard": 0.45}


@dataclass
class SynthClassificationConfig:
    """Each class has its own random pole, scattered around a random base
    point by ``pole_scale``.  A sample is the exponential map at its class
    pole of a Gaussian tangent vector (whitened pole coordinates) with a
    fixed class mean of size ``mean_scale`` and standard deviation set by
    ``spread`` (``"easy"``, ``"hard"`` or a number).
    """

    classes: int = 4
    samples: int = 512
    dim: int = 3
    spread: str | float = "easy"
    seed: int = 0
    mean_scale: float = 0.25
    pole_scale: float = 0.25
    base_jitter: float = 0.1

    @property
    def std(self) -> float:
        if isinstance(self.spread, str):
            try:
                return SPREADS[self.spread]
            except KeyError:
                raise ValidationError(f"spread must be one of {sorted(SPREADS)} or a number")
        if self.spread < 0:
            raise ValidationError("spread must be nonnegative")
        return float(self.spread)

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthDictionaryConfig:
    """Samples are positive combinations of ``combination`` randomly chosen sources.

    Each source is the sample covariance of ``draws`` Gaussian vectors with a
    per-source mean in ``mean_range`` and per-coordinate standard deviation
    in ``std_range``.  ``fixed_weight`` replaces the ``|N(0, 1)|`` weights.
    """

    sources: int = 32
    samples: int = 512
    dim: int = 5
    combination: int = 4
    seed: int = 0
    draws: int = 100
    mean_range: tuple = (-1.0, 1.0)
    std_range: tuple = (0.5, 2.0)
    fixed_weight: float | None = None

    def to_dict(self):
        return asdict(self)


def random_spd(rng, d, n=None, jitter=0.1):
    """Sample covariance of ``2d`` standard normal vectors plus ``jitter * I``."""
    shape = (2 * d, d) if n is None else (n, 2 * d, d)
    G = rng.standard_normal(shape)
    G = G - G.mean(axis=-2, keepdims=True)
    C = np.swapaxes(G, -1, -2) @ G / (2 * d - 1)
    return symmetrize(C) + jitter * np.eye(d)


def random_symmetric(rng, d, n=None):
    """Symmetric matrices with iid N(0, 1) entries on and above the diagonal."""
    shape = (d, d) if n is None else (n, d, d)
    Z = rng.standard_normal(shape)
    upper = np.triu(Z)
    return upper + np.swapaxes(np.triu(Z, 1), -1, -2)


def gen_classification(config: SynthClassificationConfig):
    """Return ``(train, test)`` :class:`SpdSet` objects, half of each class in each.

    A class with spread 0 collapses onto its mean point
    ``P^{1/2} expm(M) P^{1/2}``.
    """
    if config.classes < 1 or config.dim < 1:
        raise ValidationError("classes and dim must be positive")
    if config.samples % (2 * config.classes):
        raise ValidationError("samples must split evenly into train/test halves per class")
    rng = np.random.default_rng(config.seed)
    d = config.dim
    per_class = config.samples // config.classes
    std = config.std
    base_sqrt = spd_sqrtm(random_spd(rng, d, jitter=config.base_jitter))
    train, test, ytr, yte = [], [], [], []
    for c in range(config.classes):
        pole = base_sqrt @ spd_expm(config.pole_scale * random_symmetric(rng, d)) @ base_sqrt
        pole_sqrt = spd_sqrtm(symmetrize(pole))
        mean = config.mean_scale * random_symmetric(rng, d)
        W = mean + std * random_symmetric(rng, d, per_class)
        X = symmetrize(pole_sqrt @ spd_expm(W) @ pole_sqrt)
        half = per_class // 2
        train.append(X[:half])
        test.append(X[half:])
        ytr += [c] * half
        yte += [c] * (per_class - half)
    return (SpdSet(np.concatenate(train), np.array(ytr)),
            SpdSet(np.concatenate(test), np.array(yte)))


def gen_sources(rng, config: SynthDictionaryConfig):
    d = config.dim
    lo, hi = config.mean_range
    slo, shi = config.std_range
    means = rng.uniform(lo, hi, (config.sources, 1, d))
    stds = rng.uniform(slo, shi, (config.sources, 1, d))
    draws = means + stds * rng.standard_normal((config.sources, config.draws, d))
    centered = draws - draws.mean(axis=1, keepdims=True)
    return symmetrize(np.swapaxes(centered, 1, 2) @ centered / (config.draws - 1))


def gen_dictionary_task(config: SynthDictionaryConfig):
    """Return ``(samples, sources)``; source ``i`` carries label ``i``."""
    if config.combination > config.sources:
        raise ValidationError("combination size exceeds the number of sources")
    rng = np.random.default_rng(config.seed)
    sources = gen_sources(rng, config)
    out = np.empty((config.samples, config.dim, config.dim))
    for j in range(config.samples):
        idx = rng.choice(config.sources, config.combination, replace=False)
        if config.fixed_weight is None:
            w = np.abs(rng.standard_normal(config.combination))
        else:
            w = np.full(config.combination, float(config.fixed_weight))
        out[j] = np.einsum("k,kij->ij", w, sources[idx])
    return SpdSet(symmetrize(out)), SpdSet(sources, np.arange(config.sources))
