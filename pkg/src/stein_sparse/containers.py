"""Labeled SPD sets and Stein-kernel dictionaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .kernel import GramMatrix, default_sigma, gram, kernel_matrix
from .spd import check_spd


@dataclass
class SpdSet:
    """A stack of SPD matrices with optional integer class labels."""

    matrices: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        M = np.asarray(self.matrices, dtype=float)
        if M.ndim == 2:
            M = M[None]
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise ValidationError(f"expected shape (n, d, d), got {M.shape}")
        self.matrices = M
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (M.shape[0],):
                raise ValidationError("one label per matrix required")
            self.labels = labels.astype(int)

    def __len__(self):
        return self.matrices.shape[0]

    @property
    def dim(self):
        return self.matrices.shape[-1]

    def subset(self, idx):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return SpdSet(self.matrices[idx], labels)

    def validate(self):
        check_spd(self.matrices)
        return self


@dataclass
class SpdDictionary:
    """Ordered SPD atoms with their kernel bandwidth and cached Gram matrix.

    ``labels`` carries the class of each atom when the dictionary is made of
    training samples (residual-error classification needs it).
    """

    atoms: np.ndarray
    sigma: float | None = None
    labels: np.ndarray | None = None
    allow_indefinite: bool = False
    gram: GramMatrix = field(init=False, repr=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 2:
            atoms = atoms[None]
        if atoms.ndim != 3 or atoms.shape[0] < 1:
            raise ValidationError("a dictionary needs at least one d x d atom")
        check_spd(atoms)
        self.atoms = atoms
        if self.sigma is None:
            self.sigma = default_sigma(atoms.shape[-1])
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(int)
            if labels.shape != (atoms.shape[0],):
                raise ValidationError("one label per atom required")
            self.labels = labels
        self.gram = gram(atoms, sigma=self.sigma, allow_indefinite=self.allow_indefinite)

    @classmethod
    def from_set(cls, spd_set: SpdSet, sigma=None, **kwargs):
        return cls(spd_set.matrices, sigma=sigma, labels=spd_set.labels, **kwargs)

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[-1]

    @property
    def classes(self):
        if self.labels is None:
            raise ValidationError("dictionary atoms are not labeled")
        return np.unique(self.labels)

    def kernel_vectors(self, X):
        """``k(X_j, D_i)`` for each query, shape ``(m, N)``."""
        return kernel_matrix(X, self.atoms, self.sigma, self.allow_indefinite)
