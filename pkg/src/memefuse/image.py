"""Image feature extractors: a from-scratch CNN over pixels and a dense
projection over precomputed feature vectors.

Images are (H, W, C) with values in [0, 1]; batches are (B, H, W, C).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, ShapeError, UsageError
from .layers import Dense, Dropout, Module, fan_in_scale
from .tensor import Rng, init_uniform


def conv_params(rng: Rng, filters: int, length: int, c_in: int) -> dict[str, np.ndarray]:
    if length % 2 == 0:
        raise ConfigError(f"filter length must be odd, got {length}")
    s = fan_in_scale(length * length * c_in)
    return {
        "kernels": init_uniform(rng, (filters, length, length, c_in), s),
        "bias": init_uniform(rng, (filters,), s),
    }


def _im2col(x: np.ndarray, length: int) -> np.ndarray:
    B, H, W, C = x.shape
    pad = length // 2
    if H + 2 * pad < length or W + 2 * pad < length:
        raise ShapeError(f"conv2d: kernel {length}x{length} larger than padded input {x.shape[1:3]}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (length, length), axis=(1, 2))  # B,H,W,C,l,l
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(B * H * W, length * length * C)


class Conv2D(Module):
    """Same-padded stride-1 cross-correlation followed by ReLU."""

    def __init__(self, c_in: int, filters: int, length: int, rng: Rng):
        super().__init__()
        for name, value in conv_params(rng, filters, length, c_in).items():
            self.add_param(name, value)
        self.c_in, self.filters, self.length = c_in, filters, length
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, H, W, C = x.shape
        if C != self.c_in:
            raise ShapeError(f"conv2d: expected {self.c_in} input channels, got {C}")
        cols = _im2col(x, self.length)
        K = self.params["kernels"].reshape(self.filters, -1)
        pre = (cols @ K.T + self.params["bias"]).reshape(B, H, W, self.filters)
        self._cache = (x.shape, cols, pre)
        return np.maximum(pre, 0.0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("conv2d: backward called before forward")
        (B, H, W, C), cols, pre = self._cache
        l, pad = self.length, self.length // 2
        dpre = (dout * (pre > 0)).reshape(B * H * W, self.filters)
        K = self.params["kernels"].reshape(self.filters, -1)
        self.grads["kernels"] += (dpre.T @ cols).reshape(self.params["kernels"].shape)
        self.grads["bias"] += dpre.sum(axis=0)
        dcols = (dpre @ K).reshape(B, H, W, l, l, C)
        dxp = np.zeros((B, H + 2 * pad, W + 2 * pad, C))
        for a in range(l):
            for b in range(l):
                dxp[:, a:a + H, b:b + W, :] += dcols[:, :, :, a, b, :]
        return dxp[:, pad:pad + H, pad:pad + W, :]


def conv2d(p, image) -> np.ndarray:
    """Single-image convenience wrapper: (H, W, C_in) -> (H, W, m)."""
    x = np.asarray(image, dtype=np.float64)
    kernels = np.asarray(p["kernels"], dtype=np.float64)
    if kernels.shape[1] % 2 == 0 or kernels.shape[1] != kernels.shape[2]:
        raise ConfigError(f"kernels must be square with odd length, got {kernels.shape}")
    if x.ndim != 3 or x.shape[2] != kernels.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernels {kernels.shape}")
    m, l = kernels.shape[0], kernels.shape[1]
    cols = _im2col(x[None], l)
    pre = cols @ kernels.reshape(m, -1).T + p["bias"]
    return np.maximum(pre, 0.0).reshape(x.shape[0], x.shape[1], m)


class MaxPool2:
    """2x2 stride-2 max pooling; ragged edges pool over what is there.

    Ties send the gradient to the first maximum in row-major window order.
    """

    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, H, W, C = x.shape
        Ho, Wo = -(-H // 2), -(-W // 2)
        xp = np.full((B, 2 * Ho, 2 * Wo, C), -np.inf)
        xp[:, :H, :W] = x
        win = xp.reshape(B, Ho, 2, Wo, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, Ho, Wo, C, 4)
        arg = np.argmax(win, axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("maxpool2: backward called before forward")
        (B, H, W, C), arg = self._cache
        Ho, Wo = dout.shape[1], dout.shape[2]
        dwin = np.zeros((B, Ho, Wo, C, 4))
        np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
        dxp = dwin.reshape(B, Ho, Wo, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, 2 * Ho, 2 * Wo, C)
        return dxp[:, :H, :W]


def maxpool2(image) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    return MaxPool2().forward(x[None])[0]


def pooled_size(size: int, pools: int) -> int:
    for _ in range(pools):
        size = -(-size // 2)
    return size


class CNNExtractor(Module):
    """``c`` conv layers of ``m`` filters (length ``l``), a max pool after every
    second conv, flatten, then dropout ``p`` on the flattened feature."""

    def __init__(self, rng: Rng, *, size: int, channels: int, c: int, m: int, l: int, p: float):
        super().__init__()
        if c < 1:
            raise ConfigError(f"CNN needs at least one conv layer, got c={c}")
        if m < 1 or l < 1 or l % 2 == 0:
            raise ConfigError(f"CNN needs m >= 1 and an odd filter length, got m={m}, l={l}")
        self.size, self.channels = size, channels
        self.convs = []
        c_in = channels
        for k in range(c):
            self.convs.append(self.add_child(f"conv{k + 1}", Conv2D(c_in, m, l, rng)))
            c_in = m
        self.pools = [MaxPool2() if k % 2 == 1 else None for k in range(c)]
        side = pooled_size(size, c // 2)
        self.out_shape = (side, side, m)
        self.out_dim = side * side * m
        self.drop = Dropout(p)

    def forward(self, images: np.ndarray, rng: Rng | None = None) -> np.ndarray:
        if images.shape[1:] != (self.size, self.size, self.channels):
            raise ShapeError(f"CNN expects images of shape {(self.size, self.size, self.channels)}, got {images.shape[1:]}")
        x = images
        for conv, pool in zip(self.convs, self.pools):
            x = conv.forward(x)
            if pool is not None:
                x = pool.forward(x)
        return self.drop.forward(x.reshape(x.shape[0], -1), rng)

    def backward(self, dfeat: np.ndarray) -> np.ndarray:
        dx = self.drop.backward(dfeat).reshape((dfeat.shape[0],) + self.out_shape)
        for conv, pool in zip(reversed(self.convs), reversed(self.pools)):
            if pool is not None:
                dx = pool.backward(dx)
            dx = conv.backward(dx)
        return dx


class ProjectionExtractor(Module):
    """Trainable ReLU projection of a precomputed image feature vector."""

    def __init__(self, d_pre: int, d_out: int, rng: Rng):
        super().__init__()
        self.d_pre, self.out_dim = d_pre, d_out
        self.dense = self.add_child("dense", Dense(d_pre, d_out, rng, activation="relu"))

    def forward(self, vecs: np.ndarray, rng: Rng | None = None) -> np.ndarray:
        if vecs.shape[-1] != self.d_pre:
            raise DataError(f"image feature vectors have dim {vecs.shape[-1]}, model expects {self.d_pre}")
        return self.dense.forward(vecs)

    def backward(self, dfeat: np.ndarray) -> np.ndarray:
        return self.dense.backward(dfeat)


def projected_feature(dense: Dense, vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape[-1] != dense.d_in:
        raise DataError(f"feature vector dim {v.shape[-1]} does not match projection input {dense.d_in}")
    return dense.forward(v[None])[0]


def cnn_extract(cnn: CNNExtractor, image) -> np.ndarray:
    return cnn.forward(np.asarray(image, dtype=np.float64)[None])[0]


def _ppm_tokens(data: bytes, count: int, path) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def load_ppm(path: str | Path) -> np.ndarray:
    """Read a binary PPM (P6) or PGM (P5) with maxval < 256 into [0, 1]."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    head, pos = _ppm_tokens(data, 4, path)
    magic = head[0]
    if magic not in (b"P6", b"P5"):
        raise DataError(f"{path}: unsupported image format {magic!r}, expected P6")
    try:
        w, h, maxval = (int(t) for t in head[1:])
    except ValueError as exc:
        raise DataError(f"{path}: bad PPM header") from exc
    if not 0 < maxval < 256 or w < 1 or h < 1:
        raise DataError(f"{path}: only 8-bit images are supported")
    ch = 3 if magic == b"P6" else 1
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * ch, offset=pos) if len(data) - pos >= w * h * ch else None
    if raw is None:
        raise DataError(f"{path}: truncated pixel data")
    return np.clip(raw.reshape(h, w, ch).astype(np.float64) / maxval, 0.0, 1.0)


def save_ppm(path: str | Path, image: np.ndarray) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    h, w, ch = img.shape
    magic = b"P6" if ch == 3 else b"P5"
    body = np.round(img * 255).astype(np.uint8).tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + body)


def resize_nearest(image: np.ndarray, size: int) -> np.ndarray:
    h, w = image.shape[:2]
    rows = np.minimum((np.arange(size) * h) // size, h - 1)
    cols = np.minimum((np.arange(size) * w) // size, w - 1)
    return image[rows][:, cols]


def to_channels(image: np.ndarray, channels: int) -> np.ndarray:
    if image.shape[2] == channels:
        return image
    if channels == 3:
        return np.repeat(image, 3, axis=2)
    return image.mean(axis=2, keepdims=True)
