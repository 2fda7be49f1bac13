"""Text file formats: matrix sets, Gram matrices, code tables and traces.

Floats are written with ``repr`` so every file round-trips bit-exactly.

Matrix set::

    stein-sparse matrix-set 1
    dim 3
    count 2
    labels 0 1          (or "labels none")
    sigma 1.5           (optional)
    <d*d row-major entries of matrix 1>
    <d*d row-major entries of matrix 2>
"""
from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .containers import SpdDictionary, SpdSet
from .exceptions import ValidationError
from .kernel import GramMatrix
from .spd import check_spd

MATRIX_MAGIC = "stein-sparse matrix-set 1"
GRAM_MAGIC = "stein-sparse gram 1"


def _fmt(x):
    return repr(float(x))


def _row(values):
    return " ".join(_fmt(v) for v in values)


def format_matrix_set(matrices, labels=None, sigma=None) -> str:
    M = np.asarray(matrices, dtype=float)
    if M.ndim == 2:
        M = M[None]
    if M.ndim != 3 or M.shape[1] != M.shape[2]:
        raise ValidationError(f"expected (n, d, d) matrices, got shape {M.shape}")
    n, d = M.shape[0], M.shape[-1]
    lines = [MATRIX_MAGIC, f"dim {d}", f"count {n}"]
    lines.append("labels none" if labels is None else
                 "labels " + " ".join(str(int(l)) for l in np.asarray(labels)).rstrip())
    if sigma is not None:
        lines.append(f"sigma {_fmt(sigma)}")
    lines += [_row(m.ravel()) for m in M]
    return "\n".join(lines) + "\n"


def _header_value(line, key):
    parts = line.split(None, 1)
    if not parts or parts[0] != key:
        raise ValidationError(f"expected '{key}' header line, got {line!r}")
    return parts[1] if len(parts) > 1 else ""


def parse_matrix_set(text: str, validate: bool = True):
    """Parse a matrix-set document; returns ``(SpdSet, sigma or None)``.

    ``validate=False`` skips the positive-definiteness check (tangent data);
    the result is then a plain ``(matrices, labels, sigma)`` tuple.
    """
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].strip() != MATRIX_MAGIC:
        raise ValidationError("not a stein-sparse matrix-set file")
    try:
        d = int(_header_value(lines[1], "dim"))
        n = int(_header_value(lines[2], "count"))
    except (IndexError, ValueError):
        raise ValidationError("malformed matrix-set header") from None
    if d < 0 or n < 0:
        raise ValidationError("dim and count must be nonnegative")
    lab = _header_value(lines[3], "labels").split() if len(lines) > 3 else None
    if lab is None:
        raise ValidationError("missing labels header line")
    labels = None if lab == ["none"] else np.array([int(x) for x in lab])
    body = lines[4:]
    sigma = None
    if body and body[0].startswith("sigma"):
        sigma = float(_header_value(body[0], "sigma"))
        body = body[1:]
    if len(body) != n:
        raise ValidationError(f"header announces {n} matrices, found {len(body)}")
    if labels is not None and labels.size != n:
        raise ValidationError(f"{labels.size} labels for {n} matrices")
    M = np.empty((n, d, d))
    for i, line in enumerate(body):
        try:
            vals = np.array([float(x) for x in line.split()])
        except ValueError:
            raise ValidationError(f"non-numeric entry in matrix {i}") from None
        if vals.size != d * d:
            raise ValidationError(f"matrix {i} has {vals.size} entries, expected {d * d}")
        M[i] = vals.reshape(d, d)
    if not validate:
        return M, labels, sigma
    if n:
        check_spd(M)
    return SpdSet(M, labels), sigma


def write_matrix_set(path, matrices, labels=None, sigma=None):
    Path(path).write_text(format_matrix_set(matrices, labels, sigma))


def read_matrix_set(path, validate: bool = True):
    return parse_matrix_set(Path(path).read_text(), validate)


def write_dictionary(path, dictionary: SpdDictionary):
    write_matrix_set(path, dictionary.atoms, dictionary.labels, dictionary.sigma)


def read_dictionary(path, sigma=None, allow_indefinite=False) -> SpdDictionary:
    """Load a dictionary; an explicit ``sigma`` overrides the stored one."""
    spd_set, stored = read_matrix_set(path)
    if len(spd_set) == 0:
        raise ValidationError("dictionary file contains no atoms")
    return SpdDictionary(spd_set.matrices, stored if sigma is None else sigma,
                         spd_set.labels, allow_indefinite)


def format_gram(g: GramMatrix) -> str:
    lines = [GRAM_MAGIC, f"size {g.size}", f"sigma {_fmt(g.sigma)}",
             f"min_eigenvalue {'none' if g.min_eigenvalue is None else _fmt(g.min_eigenvalue)}"]
    lines += [_row(r) for r in g.values]
    return "\n".join(lines) + "\n"


def parse_gram(text: str) -> GramMatrix:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].strip() != GRAM_MAGIC:
        raise ValidationError("not a stein-sparse gram file")
    n = int(_header_value(lines[1], "size"))
    sigma = float(_header_value(lines[2], "sigma"))
    me = _header_value(lines[3], "min_eigenvalue")
    rows = lines[4:]
    if len(rows) != n:
        raise ValidationError(f"gram file announces {n} rows, found {len(rows)}")
    values = np.array([[float(x) for x in r.split()] for r in rows]).reshape(n, n)
    return GramMatrix(values, sigma, None if me == "none" else float(me))


def write_gram(path, g: GramMatrix):
    Path(path).write_text(format_gram(g))


def read_gram(path) -> GramMatrix:
    return parse_gram(Path(path).read_text())


def format_codes(V, lams, kkt) -> str:
    """CSV with columns ``lambda, kkt, v0 .. v{N-1}``, one row per query."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "kkt"] + [f"v{i}" for i in range(V.shape[1])])
    for v, lam, r in zip(V, lams, kkt):
        w.writerow([_fmt(lam), _fmt(r)] + [_fmt(x) for x in v])
    return buf.getvalue()


def parse_codes(text: str):
    """Returns ``(V, lambdas, kkt)``."""
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0][:2] != ["lambda", "kkt"]:
        raise ValidationError("not a codes file")
    n = len(rows[0]) - 2
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, n + 2)
    return data[:, 2:], data[:, 0], data[:, 1]


def format_trace(trace) -> str:
    """Two-column ``iteration,energy`` series; the stop reason rides in a comment."""
    lines = [f"# stop_reason {trace.stop_reason}", f"# final_energy {_fmt(trace.final_energy)}",
             "iteration,energy"]
    lines += [f"{t + 1},{_fmt(J)}" for t, J in enumerate(trace.energies)]
    return "\n".join(lines) + "\n"


def parse_trace(text: str):
    """Returns ``(energies, stop_reason, final_energy)``."""
    reason, final, energies = None, float("nan"), []
    for line in text.splitlines():
        if line.startswith("# stop_reason"):
            reason = line.split()[-1]
        elif line.startswith("# final_energy"):
            final = float(line.split()[-1])
        elif line and line[0].isdigit():
            energies.append(float(line.split(",")[1]))
    return energies, reason, final
