"""Dense float64 tensor helpers, nonlinearities and a reproducible PRNG.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Every function here returns a fresh array and never writes to its
arguments.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Sequence

import numpy as np

from .errors import DataError, ShapeError

TENSOR_MAGIC = b"MFT1"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def as_tensor(x) -> np.ndarray:
    return np.array(x, dtype=np.float64, order="C", copy=True)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # exp of a non-positive argument only, so nothing overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def concat(a: np.ndarray, b: np.ndarray, axis: int = 0) -> np.ndarray:
    """Join ``a`` and ``b`` along ``axis``; ``a``'s entries come first.

    A one-dimensional empty tensor acts as the identity element.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1 and b.size == 0:
        return a.copy()
    if a.ndim == 1 and a.size == 0:
        return b.copy()
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    ax = axis % a.ndim
    for k in range(a.ndim):
        if k != ax and a.shape[k] != b.shape[k]:
            raise ShapeError(f"concat: off-axis dims differ {a.shape} vs {b.shape} (axis {axis})")
    return np.concatenate([a, b], axis=ax)


class Rng:
    """SplitMix64 generator, evaluated in counter mode.

    Draw ``n`` (1-based) is ``mix(seed + n * 0x9E3779B97F4A7C15)``, which is the
    sequence produced by the reference SplitMix64, so any language with 64-bit
    integers can reproduce it. Instances are single-owner.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def fork(self, tag: int) -> "Rng":
        """Independent child stream keyed by ``tag``; does not advance ``self``."""
        child = Rng(0)
        child.seed = int(_splitmix(np.array([self.seed ^ (int(tag) & _MASK64)], dtype=np.uint64), 1)[0])
        return child

    def next_u64(self, n: int) -> np.ndarray:
        out = _splitmix(np.array([self.seed], dtype=np.uint64), n, start=self.counter + 1)
        self.counter += n
        return out

    def random(self, shape=()) -> np.ndarray:
        """Uniform doubles in [0, 1) with 53 random bits each."""
        n = int(np.prod(shape, dtype=np.int64))
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) * (1.0 / (1 << 53))).reshape(shape)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws via Box-Muller (two uniforms per draw)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = self.random((2, n))
        return (np.sqrt(-2.0 * np.log1p(-u[0])) * np.cos(2.0 * np.pi * u[1])).reshape(shape)

    def integers(self, high: int, shape=()) -> np.ndarray:
        return np.floor(self.random(shape) * high).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def bernoulli(self, keep: float, shape) -> np.ndarray:
        return (self.random(shape) < keep).astype(np.float64)


def _splitmix(seed: np.ndarray, n: int, start: int = 1) -> np.ndarray:
    with np.errstate(over="ignore"):
        counters = np.arange(start, start + n, dtype=np.uint64)
        z = seed[0] + counters * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def init_uniform(rng: Rng, shape: Sequence[int], scale: float) -> np.ndarray:
    if not scale > 0:
        raise ValueError(f"init_uniform: scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, tuple(shape))


def write_tensor(fh: BinaryIO, t: np.ndarray) -> None:
    t = np.ascontiguousarray(t, dtype="<f8")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<I", t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(t.tobytes(order="C"))


def tensor_bytes(t: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    write_tensor(buf, t)
    return buf.getvalue()


def read_tensor(fh: BinaryIO) -> np.ndarray:
    if fh.read(4) != TENSOR_MAGIC:
        raise DataError("tensor payload: bad magic")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    count = int(np.prod(shape, dtype=np.int64))
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise DataError("tensor payload: truncated data")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
