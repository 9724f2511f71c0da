"""Datasets: IDX ingestion, balanced digit subsets, label randomization, synthetics.

Real MNIST is read from the standard IDX files (``load_mnist_dir``); nothing is
downloaded.  When no MNIST directory is available, :func:`synthetic_mnist`
generates a deterministic stand-in corpus of rendered digit images (stroke
templates + random affine distortion + pixel noise) with the same shape
conventions, so every experiment in this package runs self-contained.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .numkit import RngStream

__all__ = [
    "Dataset",
    "SplitPair",
    "IdxFormatError",
    "IdxLengthError",
    "CapacityError",
    "parse_idx",
    "serialize_idx",
    "load_mnist_dir",
    "synthetic_mnist",
    "build_binary_mnist",
    "build_small_mnist10",
    "randomize_labels",
    "synthetic_logreg_problem",
]

IDX_MAGIC_IMAGES = 2051
IDX_MAGIC_LABELS = 2049


class IdxFormatError(ValueError):
    """Unrecognized IDX magic number."""


class IdxLengthError(ValueError):
    """IDX payload shorter or longer than the header promises."""


class CapacityError(ValueError):
    """Source pool has too few images to build the requested subset."""


@dataclass(frozen=True)
class Dataset:
    """Immutable classification dataset: inputs (N x d, values in [0,1]),
    integer labels in [0, n_classes)."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        if labels.shape != (inputs.shape[0],):
            raise ValueError("labels must be a vector of length N")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("labels out of range")
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class SplitPair:
    """A train/test pair over the same input space and label set."""

    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.train.d != self.test.d:
            raise ValueError("train/test dimension mismatch")
        if self.train.n_classes != self.test.n_classes:
            raise ValueError("train/test class-count mismatch")


# ---------------------------------------------------------------------------
# IDX binary format
# ---------------------------------------------------------------------------

_NDIMS_FOR_MAGIC = {IDX_MAGIC_IMAGES: 3, IDX_MAGIC_LABELS: 1}


def parse_idx(buf: bytes) -> np.ndarray:
    """Parse an IDX byte string into a uint8 tensor.

    The header is big-endian: a 32-bit magic (2051 for image tensors, 2049
    for label vectors), one 32-bit size per axis, then the unsigned-byte
    payload in row-major order.
    """
    if len(buf) < 4:
        raise IdxLengthError("buffer too short for an IDX header")
    (magic,) = struct.unpack(">i", buf[:4])
    if magic not in _NDIMS_FOR_MAGIC:
        raise IdxFormatError(f"unrecognized IDX magic {magic}")
    ndims = _NDIMS_FOR_MAGIC[magic]
    header_len = 4 + 4 * ndims
    if len(buf) < header_len:
        raise IdxLengthError("buffer too short for the dimension header")
    dims = struct.unpack(f">{ndims}i", buf[4:header_len])
    if any(d < 0 for d in dims):
        raise IdxFormatError(f"negative dimension in header: {dims}")
    expected = int(np.prod(dims, dtype=np.int64)) if dims else 0
    payload = buf[header_len:]
    if len(payload) != expected:
        raise IdxLengthError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def serialize_idx(tensor: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx`: uint8 tensor -> IDX bytes (bit-exact)."""
    t = np.ascontiguousarray(tensor, dtype=np.uint8)
    by_ndim = {v: k for k, v in _NDIMS_FOR_MAGIC.items()}
    if t.ndim not in by_ndim:
        raise ValueError(f"IDX here covers 1-D labels or 3-D images, got ndim={t.ndim}")
    magic = by_ndim[t.ndim]
    header = struct.pack(f">i{t.ndim}i", magic, *t.shape)
    return header + t.tobytes()


def _read_maybe_gz(path: Path) -> bytes:
    gz = path.with_name(path.name + ".gz")
    if path.exists():
        return path.read_bytes()
    if gz.exists():
        return gzip.decompress(gz.read_bytes())
    raise FileNotFoundError(f"{path} (or {gz.name}) not found")


def load_mnist_dir(directory) -> SplitPair:
    """Load the four standard MNIST IDX files (optionally gzipped) from a
    directory; pixel values are scaled to [0,1] by dividing by 255."""
    directory = Path(directory)
    names = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
    raw = {k: parse_idx(_read_maybe_gz(directory / v)) for k, v in names.items()}

    def as_dataset(images, labels):
        x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
        return Dataset(x, labels.astype(np.int64), 10)

    return SplitPair(
        as_dataset(raw["train_images"], raw["train_labels"]),
        as_dataset(raw["test_images"], raw["test_labels"]),
    )


# ---------------------------------------------------------------------------
# Synthetic digit corpus (stand-in source when no MNIST files are present)
# ---------------------------------------------------------------------------


def _line(p0, p1, k=60):
    t = np.linspace(0.0, 1.0, k)[:, None]
    return (1 - t) * np.asarray(p0) + t * np.asarray(p1)


def _arc(cx, cy, rx, ry, a0_deg, a1_deg, k=90):
    # y axis points down; angle 0 = right, 90 deg = down.
    t = np.radians(np.linspace(a0_deg, a1_deg, k))
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def _digit_strokes() -> dict[int, list[np.ndarray]]:
    return {
        0: [_arc(0.50, 0.50, 0.26, 0.36, 0, 360)],
        1: [_line((0.36, 0.26), (0.54, 0.12)), _line((0.54, 0.12), (0.54, 0.88))],
        2: [
            _arc(0.50, 0.32, 0.25, 0.20, 165, 372),
            _line((0.74, 0.38), (0.26, 0.85)),
            _line((0.26, 0.85), (0.78, 0.85)),
        ],
        3: [
            _arc(0.46, 0.31, 0.24, 0.19, 205, 475),
            _arc(0.46, 0.69, 0.26, 0.21, 245, 515),
        ],
        4: [
            _line((0.62, 0.12), (0.22, 0.60)),
            _line((0.22, 0.60), (0.82, 0.60)),
            _line((0.62, 0.12), (0.62, 0.88)),
        ],
        5: [
            _line((0.74, 0.14), (0.32, 0.14)),
            _line((0.32, 0.14), (0.29, 0.48)),
            _arc(0.47, 0.66, 0.26, 0.22, 250, 520),
        ],
        6: [
            _arc(0.58, 0.40, 0.28, 0.34, 250, 178),
            _arc(0.50, 0.66, 0.22, 0.20, 0, 360),
        ],
        7: [_line((0.24, 0.14), (0.78, 0.14)), _line((0.78, 0.14), (0.42, 0.88))],
        8: [
            _arc(0.50, 0.31, 0.20, 0.17, 0, 360),
            _arc(0.50, 0.68, 0.24, 0.20, 0, 360),
        ],
        9: [
            _arc(0.50, 0.34, 0.22, 0.20, 0, 360),
            _line((0.72, 0.36), (0.60, 0.88)),
        ],
    }


@lru_cache(maxsize=8)
def _digit_templates(hi_side: int) -> np.ndarray:
    """Clean stroke renderings of the ten digits on a hi_side x hi_side canvas."""
    coords = (np.arange(hi_side) + 0.5) / hi_side
    xx, yy = np.meshgrid(coords, coords)  # (y, x) grids
    sigma = 0.040
    out = np.zeros((10, hi_side, hi_side))
    for digit, strokes in _digit_strokes().items():
        pts = np.concatenate(strokes, axis=0)  # (K, 2) as (x, y)
        d2 = (xx[..., None] - pts[:, 0]) ** 2 + (yy[..., None] - pts[:, 1]) ** 2
        intensity = np.exp(-d2.min(axis=-1) / (2 * sigma**2))
        out[digit] = np.clip(1.35 * intensity, 0.0, 1.0)
    return out


def _distort(template: np.ndarray, rng: RngStream, strength: float) -> np.ndarray:
    """Random affine distortion (rotate/scale/shear/shift) of one template."""
    hi = template.shape[0]
    theta = rng.uniform(-0.20, 0.20) * strength
    sx, sy = 1.0 + (rng.uniform(0.85, 1.15, size=2) - 1.0) * strength
    shear = rng.uniform(-0.18, 0.18) * strength
    shift = rng.uniform(-0.09, 0.09, size=2) * hi * strength  # (dy, dx) px
    c, s = np.cos(theta), np.sin(theta)
    # Forward map on (y, x) coordinates: rotation @ shear @ scale.
    fwd = (
        np.array([[c, -s], [s, c]])
        @ np.array([[1.0, shear], [0.0, 1.0]])
        @ np.diag([sy, sx])
    )
    inv = np.linalg.inv(fwd)
    center = np.array([(hi - 1) / 2.0, (hi - 1) / 2.0])
    offset = center - inv @ (center + shift)
    return ndimage.affine_transform(template, inv, offset=offset, order=1, mode="constant")


def _render_batch(
    labels: np.ndarray, side: int, rng: RngStream, noise: float, distortion: float
) -> np.ndarray:
    hi = 2 * side
    templates = _digit_templates(hi)
    n = labels.size
    out = np.empty((n, side * side))
    for i in range(n):
        img = _distort(templates[labels[i]], rng, distortion)
        img = img.reshape(side, 2, side, 2).mean(axis=(1, 3))  # 2x2 box downsample
        img *= rng.uniform(0.72, 1.0)
        img += noise * rng.normal((side, side))
        out[i] = np.clip(img, 0.0, 1.0).ravel()
    return out


def synthetic_mnist(
    train_n: int,
    test_n: int,
    side: int = 28,
    seed: int = 0,
    noise: float = 0.07,
    distortion: float = 1.0,
) -> SplitPair:
    """Deterministic ten-class digit-image corpus with MNIST conventions.

    Class counts are balanced (as evenly as ``train_n``/``test_n`` allow) and
    the example order is shuffled.  ``side`` controls the image resolution
    (d = side**2); 28 matches MNIST, 14 is the cheap desk scale.  ``noise``
    and ``distortion`` set the pixel-noise level and the strength of the
    random affine warps, i.e. how hard the task is.
    """
    root = RngStream(seed).split(91)

    def make(count, stream_id):
        r = root.split(stream_id)
        labels = np.arange(count) % 10
        labels = labels[r.permutation(count)].astype(np.int64)
        inputs = _render_batch(labels, side, r.split(1), noise, distortion)
        return Dataset(inputs, labels, 10)

    return SplitPair(make(train_n, 0), make(test_n, 1))


# ---------------------------------------------------------------------------
# Subset builders
# ---------------------------------------------------------------------------


def _take(ds: Dataset, idx: np.ndarray, n_classes: int, labels=None) -> Dataset:
    labels = ds.labels[idx] if labels is None else labels
    return Dataset(ds.inputs[idx], labels, n_classes)


def build_binary_mnist(
    source: SplitPair, train_n: int, seed: int, test_per_class: int = 5000
) -> SplitPair:
    """Balanced two-class (digits 0 and 1) train/test pair.

    The train set holds exactly ``train_n/2`` zeros and ``train_n/2`` ones
    sampled without replacement; the test set is the balanced pool of up to
    ``test_per_class`` held-out images per class, truncated evenly when the
    source has fewer.
    """
    if train_n % 2:
        raise ValueError("train_n must be even for a balanced two-class set")
    rng = RngStream(seed).split(17)
    per_class = train_n // 2
    train_idx = []
    for cls in (0, 1):
        pool = np.flatnonzero(source.train.labels == cls)
        if pool.size < per_class:
            raise CapacityError(
                f"need {per_class} train images of class {cls}, have {pool.size}"
            )
        pick = rng.choice(pool.size, size=per_class, replace=False)
        train_idx.append(pool[pick])
    train_idx = np.concatenate(train_idx)
    train_idx = train_idx[rng.permutation(train_idx.size)]

    pools = [np.flatnonzero(source.test.labels == cls) for cls in (0, 1)]
    per_test = min(test_per_class, pools[0].size, pools[1].size)
    if per_test == 0:
        raise CapacityError("source test pool has no images of class 0 or 1")
    test_idx = np.concatenate([p[:per_test] for p in pools])

    return SplitPair(
        _take(source.train, train_idx, 2),
        _take(source.test, test_idx, 2),
    )


def build_small_mnist10(source: SplitPair, train_n: int, seed: int) -> SplitPair:
    """Uniform random train subset of ``train_n`` images (all ten classes);
    the test set is the full source test set."""
    if train_n > source.train.n:
        raise CapacityError(f"asked for {train_n} of {source.train.n} train images")
    rng = RngStream(seed).split(23)
    idx = rng.choice(source.train.n, size=train_n, replace=False)
    return SplitPair(_take(source.train, idx, 10), source.test)


def randomize_labels(ds: Dataset, seed: int) -> Dataset:
    """Replace every label by an independent uniform draw from [0, n);
    inputs are shared bit-identically."""
    if ds.n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = RngStream(seed).split(29)
    labels = rng.integers(0, ds.n_classes, size=ds.n).astype(np.int64)
    return Dataset(ds.inputs, labels, ds.n_classes)


def synthetic_logreg_problem(N: int, d: int, separation: float, seed: int) -> Dataset:
    """Two spherical Gaussian clouds with mean gap ``separation``; labels are
    the generating class.  Used as a small, fully controlled oracle problem."""
    if N < 2 or d < 1:
        raise ValueError("need N >= 2 and d >= 1")
    rng = RngStream(seed).split(31)
    n1 = N // 2
    n0 = N - n1
    direction = np.zeros(d)
    direction[0] = 1.0
    x0 = rng.normal((n0, d)) - 0.5 * separation * direction
    x1 = rng.normal((n1, d)) + 0.5 * separation * direction
    inputs = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(N)
    return Dataset(inputs[perm], labels[perm], 2)
