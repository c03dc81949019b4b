"""Input acquisition: synthetic batches, CIFAR-10 binaries, raw dumps.

Batches come from three sources: white Gaussian noise, spatially
smoothed Gaussian noise (so instance statistics vary between samples),
or a directory of CIFAR-10 binary batch files. Per-sample
standardization (mean 0, power 1 over positions and channels) is
applied on request so downstream nets see inputs with no first-power
term.

The raw dump format for tensors is: 3 magic bytes b"PNT", one version
byte, the four dims as little-endian uint32, then the entries as
little-endian float64 in C order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import ActivationTensor, Rng

MAGIC = b"PNT"
DUMP_VERSION = 1
_HEADER = struct.Struct("<3sB4I")

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 channel planes of 32*32
_CIFAR_SIDE = 32


class FormatError(ValueError):
    """Bytes that do not match the advertised binary layout."""


class DegenerateInputError(ValueError):
    """A sample whose standardization would divide by zero."""


def _check_dims(h, w, c):
    if h < 2 or w < 2:
        raise ValueError("spatial dims must be >= 2")
    if c < 1:
        raise ValueError("need at least one channel")


@dataclass(frozen=True)
class SyntheticGaussian:
    h: int
    w: int
    c: int

    def __post_init__(self):
        _check_dims(self.h, self.w, self.c)


@dataclass(frozen=True)
class SyntheticStructured:
    """Gaussian noise smoothed along each spatial axis with periodic
    Gaussian weights of the given correlation length."""

    h: int
    w: int
    c: int
    correlation_length: float = 2.0

    def __post_init__(self):
        _check_dims(self.h, self.w, self.c)
        if not np.isfinite(self.correlation_length) or self.correlation_length <= 0:
            raise ValueError("correlation_length must be positive")


@dataclass(frozen=True)
class Cifar10Dir:
    path: str
    subsample_stride: int = 1

    def __post_init__(self):
        if self.subsample_stride not in (1, 2, 4, 8, 16):
            raise ValueError(
                "subsample_stride must divide 32 and keep spatial dims >= 2"
            )


InputSource = SyntheticGaussian | SyntheticStructured | Cifar10Dir


def parse_cifar_records(buf):
    """(labels, images) decoded from CIFAR-10 binary bytes.

    A record is one label byte then 3072 pixel bytes, channel-major
    (red plane, green plane, blue plane), each plane row-major 32x32.
    Pixel values scale to [0, 1].
    """
    if len(buf) == 0 or len(buf) % CIFAR_RECORD_BYTES:
        raise FormatError(
            f"{len(buf)} bytes is not a whole number of "
            f"{CIFAR_RECORD_BYTES}-byte records"
        )
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].copy()
    planes = raw[:, 1:].reshape(-1, 3, _CIFAR_SIDE, _CIFAR_SIDE)
    images = np.moveaxis(planes, 1, 3).astype(np.float64) / 255.0
    return labels, images


def read_cifar_dir(path):
    """(labels, images) concatenated over every *.bin file, sorted by name."""
    files = sorted(Path(path).glob("*.bin"))
    if not files:
        raise FileNotFoundError(f"no .bin files under {path}")
    labels, images = [], []
    for f in files:
        lab, img = parse_cifar_records(f.read_bytes())
        labels.append(lab)
        images.append(img)
    return np.concatenate(labels), np.concatenate(images)


def _choose_without_replacement(m, n, rng):
    """n distinct indices from range(m): partial Fisher-Yates driven by
    the package uniform stream."""
    idx = np.arange(m)
    u = rng.uniform(n)
    for j in range(n):
        k = j + int(u[j] * (m - j))
        idx[j], idx[k] = idx[k], idx[j]
    return idx[:n]


def _smooth_periodic(data, length):
    n, h, w, c = data.shape
    out = data
    for axis, dim in ((1, h), (2, w)):
        offsets = np.arange(dim)
        dist = np.minimum(offsets, dim - offsets)
        weights = np.exp(-0.5 * (dist / length) ** 2)
        weights /= weights.sum()
        mat = np.empty((dim, dim))
        for i in range(dim):
            mat[i] = np.roll(weights, i)
        out = np.moveaxis(np.tensordot(out, mat, axes=([axis], [1])), -1, axis)
    return np.ascontiguousarray(out)


def _standardize(data):
    mu = data.mean(axis=(1, 2, 3), keepdims=True)
    sd = data.std(axis=(1, 2, 3), keepdims=True)
    if (sd == 0.0).any():
        bad = int(np.flatnonzero(sd.ravel() == 0.0)[0])
        raise DegenerateInputError(
            f"sample {bad} is constant and cannot be standardized"
        )
    return (data - mu) / sd


def load_batch(src, n, rng: Rng, standardize_per_sample=True) -> ActivationTensor:
    """An (n, h, w, c) batch from the source.

    Synthetic sources draw from the given stream; a CIFAR directory
    contributes n records chosen without replacement by the same
    stream. With standardize_per_sample, each sample is shifted and
    scaled to mean 0, power 1 over its positions and channels.
    """
    n = int(n)
    if n < 2:
        raise ValueError("a batch needs at least two samples")
    if isinstance(src, SyntheticGaussian):
        data = rng.standard_normal(n * src.h * src.w * src.c)
        data = data.reshape(n, src.h, src.w, src.c)
    elif isinstance(src, SyntheticStructured):
        white = rng.standard_normal(n * src.h * src.w * src.c)
        data = _smooth_periodic(
            white.reshape(n, src.h, src.w, src.c), src.correlation_length
        )
    elif isinstance(src, Cifar10Dir):
        _, images = read_cifar_dir(src.path)
        if n > images.shape[0]:
            raise ValueError(
                f"asked for {n} samples but the directory holds {images.shape[0]}"
            )
        picked = _choose_without_replacement(images.shape[0], n, rng)
        s = src.subsample_stride
        data = np.ascontiguousarray(images[picked, ::s, ::s, :])
    else:
        raise TypeError(f"unknown input source {src!r}")
    if standardize_per_sample:
        data = _standardize(data)
    return ActivationTensor(data)


def dump_tensor(t: ActivationTensor, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DUMP_VERSION, *t.shape))
        fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_tensor(path) -> ActivationTensor:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError("file shorter than the dump header")
    magic, version, n, h, w, c = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise FormatError(f"unsupported dump version {version}")
    want = _HEADER.size + 8 * n * h * w * c
    if len(buf) != want:
        raise FormatError(f"expected {want} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    return ActivationTensor(data.reshape(n, h, w, c).copy())
