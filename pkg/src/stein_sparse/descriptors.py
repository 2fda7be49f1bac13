"""Region covariance descriptors of grayscale images.

Every pixel carries the feature vector

    F(x, y) = [I, |dI/dx|, |dI/dy|, |d2I/dx2|, |d2I/dy2|]

and a region is described by the 5 x 5 sample covariance of its features.
Derivatives are central differences on an edge-replicated image; ``x`` runs
along columns and ``y`` along rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .containers import SpdSet
from .exceptions import ValidationError

N_FEATURES = 5
MIN_SIZE = 5
DEFAULT_EPS = 1e-6


def _as_image(image):
    I = np.asarray(image, dtype=float)
    if I.ndim != 2:
        raise ValidationError(f"expected a 2-D grayscale image, got shape {I.shape}")
    if min(I.shape) < MIN_SIZE:
        raise ValidationError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {I.shape}")
    if not np.all(np.isfinite(I)):
        raise ValidationError("image contains non-finite values")
    return I


def compute_features(image):
    """Per-pixel feature stack of shape ``(H, W, 5)``.

    ``image`` should already be scaled to [0, 1] (see :func:`read_pgm`).
    """
    I = _as_image(image)
    P = np.pad(I, 1, mode="edge")
    dx = (P[1:-1, 2:] - P[1:-1, :-2]) / 2
    dy = (P[2:, 1:-1] - P[:-2, 1:-1]) / 2
    dxx = P[1:-1, 2:] - 2 * I + P[1:-1, :-2]
    dyy = P[2:, 1:-1] - 2 * I + P[:-2, 1:-1]
    return np.stack([I, np.abs(dx), np.abs(dy), np.abs(dxx), np.abs(dyy)], axis=-1)


@dataclass(frozen=True)
class Region:
    """Half-open pixel rectangle ``[top, top + height) x [left, left + width)``."""

    top: int
    left: int
    height: int
    width: int


def region_covariance(stack, region: Region | None = None, eps: float = DEFAULT_EPS):
    """Sample covariance of the features inside ``region`` (whole stack if None).

    A ridge ``eps * max(tr(C) / d, 1) * I`` keeps the result positive
    definite even for constant regions.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3:
        raise ValidationError("feature stack must have shape (H, W, channels)")
    H, W, c = stack.shape
    if region is None:
        region = Region(0, 0, H, W)
    t, l, h, w = region.top, region.left, region.height, region.width
    if t < 0 or l < 0 or h < 1 or w < 1 or t + h > H or l + w > W:
        raise ValidationError(f"region {region} outside a {H}x{W} stack")
    if h * w < 2:
        raise ValidationError("a region needs at least 2 pixels")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    F = stack[t:t + h, l:l + w].reshape(-1, c)
    Z = F - F.mean(axis=0)
    C = Z.T @ Z / (F.shape[0] - 1)
    C = (C + C.T) / 2
    return C + eps * max(np.trace(C) / c, 1.0) * np.eye(c)


@dataclass(frozen=True)
class RegionSpec:
    """A ``rows x cols`` grid of non-overlapping ``block x block`` tiles."""

    rows: int
    cols: int
    block: int

    def regions(self):
        return [Region(i * self.block, j * self.block, self.block, self.block)
                for i in range(self.rows) for j in range(self.cols)]

    @classmethod
    def tiling(cls, shape, block):
        H, W = shape
        if block < 1 or H % block or W % block:
            raise ValidationError(f"{block}-pixel blocks do not tile a {H}x{W} image")
        return cls(H // block, W // block, block)


def extract_grid(image, spec: RegionSpec | int, eps: float = DEFAULT_EPS, label=None) -> SpdSet:
    """One descriptor per grid block in row-major order.

    ``spec`` may be a block size, in which case the grid must tile the image
    exactly.
    """
    I = _as_image(image)
    if not isinstance(spec, RegionSpec):
        spec = RegionSpec.tiling(I.shape, int(spec))
    if spec.rows * spec.block != I.shape[0] or spec.cols * spec.block != I.shape[1]:
        raise ValidationError(f"grid {spec} does not tile a {I.shape[0]}x{I.shape[1]} image")
    stack = compute_features(I)
    mats = np.array([region_covariance(stack, r, eps) for r in spec.regions()])
    labels = None if label is None else np.full(len(mats), int(label))
    return SpdSet(mats, labels)


def extract_random_blocks(image, n_blocks: int, block: int = 32, seed: int = 0,
                          eps: float = DEFAULT_EPS, label=None) -> SpdSet:
    """Descriptors of ``n_blocks`` uniformly placed (possibly overlapping) blocks."""
    I = _as_image(image)
    H, W = I.shape
    if block > min(H, W) or block < 2:
        raise ValidationError(f"block size {block} does not fit a {H}x{W} image")
    rng = np.random.default_rng(seed)
    tops = rng.integers(0, H - block + 1, n_blocks)
    lefts = rng.integers(0, W - block + 1, n_blocks)
    stack = compute_features(I)
    mats = np.array([region_covariance(stack, Region(int(t), int(l), block, block), eps)
                     for t, l in zip(tops, lefts)]).reshape(n_blocks, N_FEATURES, N_FEATURES)
    labels = None if label is None else np.full(n_blocks, int(label))
    return SpdSet(mats, labels)


def box_downsample(image, factor: int):
    """Average non-overlapping ``factor x factor`` cells (trailing rows/cols dropped)."""
    I = np.asarray(image, dtype=float)
    if factor < 1:
        raise ValidationError("factor must be positive")
    H, W = (I.shape[0] // factor) * factor, (I.shape[1] // factor) * factor
    return I[:H, :W].reshape(H // factor, factor, W // factor, factor).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# portable graymap


def _pgm_tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValidationError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes):
    """Decode P2 (ASCII) or P5 (binary) graymap bytes to floats in [0, 1]."""
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ValidationError("malformed PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ValidationError(f"invalid PGM geometry {w}x{h} maxval {maxval}")
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + w * h * dtype.itemsize]
        if len(raw) != w * h * dtype.itemsize:
            raise ValidationError("truncated PGM raster")
        pixels = np.frombuffer(raw, dtype=dtype).astype(float)
    elif magic == b"P2":
        body = b" ".join(line.split(b"#")[0] for line in data[pos:].splitlines())
        try:
            pixels = np.array(body.split(), dtype=float)
        except ValueError:
            raise ValidationError("non-numeric PGM raster") from None
        if pixels.size != w * h:
            raise ValidationError(f"expected {w * h} pixels, found {pixels.size}")
    else:
        raise ValidationError(f"unsupported graymap magic {magic!r}")
    if pixels.max(initial=0) > maxval:
        raise ValidationError("pixel exceeds maxval")
    return pixels.reshape(h, w) / maxval


def read_pgm(path):
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path, image, maxval: int = 255, binary: bool = True):
    """Write an image with values in [0, 1] as a P5 or P2 graymap."""
    I = np.asarray(image, dtype=float)
    if I.ndim != 2:
        raise ValidationError("expected a 2-D image")
    if not 0 < maxval < 65536:
        raise ValidationError("maxval must be in 1..65535")
    q = np.rint(np.clip(I, 0, 1) * maxval).astype(int)
    h, w = q.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        data = f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()
    else:
        rows = "\n".join(" ".join(map(str, r)) for r in q)
        data = f"P2\n{w} {h}\n{maxval}\n{rows}\n".encode()
    Path(path).write_bytes(data)
