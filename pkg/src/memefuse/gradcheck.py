"""Central finite-difference checks of every hand-written backward pass."""

from __future__ import annotations

import zlib
from typing import Callable, Mapping

import numpy as np

from .fusion import FusionHead, Member, MemberSpec, cross_entropy
from .config import Config
from .image import Conv2D, MaxPool2
from .layers import Dense
from .tensor import Rng
from .text import Attention, Recurrent, TextExtractor

STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / (||a|| + ||n||)``, zero when both vanish."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if denom == 0 else float(np.linalg.norm(analytic - numeric) / denom)


def numeric_gradient(loss: Callable[[], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of ``loss`` with respect to ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = loss()
        flat[k] = orig - step
        down = loss()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * step)
    return grad


def gradient_check(loss: Callable[[], float], tensors: Mapping[str, np.ndarray],
                   analytic: Mapping[str, np.ndarray], step: float = STEP) -> dict[str, float]:
    """Relative error of each analytic gradient against central differences."""
    return {name: relative_error(analytic[name], numeric_gradient(loss, tensors[name], step)) for name in tensors}


def _module_check(module, run: Callable[[], np.ndarray], back: Callable[[np.ndarray], np.ndarray],
                  inputs: np.ndarray, rng: Rng) -> dict[str, float]:
    out = run()
    proj = rng.normal(out.shape)
    module.zero_grad()
    dx = back(proj)
    analytic = {name: g.copy() for name, _, g in module.named_parameters()}
    analytic["input"] = dx
    tensors = {name: p for name, p, _ in module.named_parameters()}
    tensors["input"] = inputs
    return gradient_check(lambda: float(np.sum(run() * proj)), tensors, analytic)


def check_dense(rng: Rng) -> dict[str, float]:
    layer = Dense(6, 4, rng)
    x = rng.normal((3, 6))
    return _module_check(layer, lambda: layer.forward(x), layer.backward, x, rng)


def _sequence(rng: Rng, B: int = 2, T: int = 4, d: int = 3):
    x = rng.normal((B, T, d))
    mask = np.ones((B, T))
    mask[1, T - 1:] = 0.0
    return x, mask


def check_lstm(rng: Rng) -> dict[str, float]:
    layer = Recurrent("lstm", 3, 4, rng)
    x, mask = _sequence(rng)
    errs = _module_check(layer, lambda: layer.forward(x, mask), layer.backward, x, rng)
    errs.update({f"rev.{k}": v for k, v in
                 _module_check(layer, lambda: layer.forward(x, mask, reverse=True), layer.backward, x, rng).items()})
    return errs


def check_gru(rng: Rng) -> dict[str, float]:
    layer = Recurrent("gru", 3, 4, rng)
    x, mask = _sequence(rng)
    errs = _module_check(layer, lambda: layer.forward(x, mask), layer.backward, x, rng)
    errs.update({f"rev.{k}": v for k, v in
                 _module_check(layer, lambda: layer.forward(x, mask, reverse=True), layer.backward, x, rng).items()})
    return errs


def check_attention(rng: Rng) -> dict[str, float]:
    layer = Attention(6, 5, rng)
    x, mask = _sequence(rng, d=6)
    return _module_check(layer, lambda: layer.forward(x, mask), layer.backward, x, rng)


def check_conv2d(rng: Rng) -> dict[str, float]:
    layer = Conv2D(2, 3, 3, rng)
    x = rng.normal((2, 5, 4, 2))
    return _module_check(layer, lambda: layer.forward(x), layer.backward, x, rng)


def check_maxpool2(rng: Rng) -> dict[str, float]:
    pool = MaxPool2()
    x = rng.normal((2, 5, 3, 2))
    out = pool.forward(x)
    proj = rng.normal(out.shape)
    dx = pool.backward(proj)
    return gradient_check(lambda: float(np.sum(pool.forward(x) * proj)), {"input": x}, {"input": dx})


def check_fusion_head(rng: Rng) -> dict[str, float]:
    head = FusionHead(7, 5, 3, rng)
    x = rng.normal((4, 7))
    labels = rng.integers(3, (4,))
    loss = lambda: cross_entropy(head.forward(x), labels)[0]
    head.zero_grad()
    _, dlogits = cross_entropy(head.forward(x), labels)
    dx = head.backward(dlogits)
    analytic = {name: g.copy() for name, _, g in head.named_parameters()}
    analytic["input"] = dx
    tensors = {name: p for name, p, _ in head.named_parameters()}
    tensors["input"] = x
    return gradient_check(loss, tensors, analytic)


def check_text_extractor(rng: Rng) -> dict[str, float]:
    ext = TextExtractor(3, 3, rng, h12=2, h3=3, dropout=0.0, dense_size=4)
    x, mask = _sequence(rng)
    return _module_check(ext, lambda: ext.forward(x, mask), ext.backward, x, rng)


def check_member(rng: Rng) -> dict[str, float]:
    """End-to-end member: BiGRU text path, CNN image path, fusion head, cross-entropy."""
    cfg = Config()
    cfg.text.h12, cfg.text.h3, cfg.text.dropout = 2, 2, 0.0
    cfg.image.c, cfg.image.m, cfg.image.size, cfg.image.p = 2, 2, 4, 0.0
    member = Member(MemberSpec(2, 1, 4, 3), cfg, rng, text_dim=3)
    x, mask = _sequence(rng)
    batch = {"tokens": x, "mask": mask, "pixels": rng.random((2, 4, 4, 3))}
    labels = rng.integers(3, (2,))
    member.zero_grad()
    _, dlogits = cross_entropy(member.forward(batch), labels)
    member.backward(dlogits)
    analytic = {name: g.copy() for name, _, g in member.named_parameters()}
    tensors = {name: p for name, p, _ in member.named_parameters()}
    return gradient_check(lambda: cross_entropy(member.forward(batch), labels)[0], tensors, analytic)


LAYER_CHECKS: dict[str, Callable[[Rng], dict[str, float]]] = {
    "dense": check_dense,
    "lstm": check_lstm,
    "gru": check_gru,
    "attention": check_attention,
    "conv2d": check_conv2d,
    "maxpool2": check_maxpool2,
    "fusion_head": check_fusion_head,
    "text_extractor": check_text_extractor,
    "member": check_member,
}


def run_gradient_suite(seeds=range(10), layers=None) -> dict[str, float]:
    """Worst relative error per layer type across ``seeds``."""
    worst = {}
    for name in layers or LAYER_CHECKS:
        worst[name] = max(max(LAYER_CHECKS[name](Rng(seed).fork(hash_name(name))).values()) for seed in seeds)
    return worst


def hash_name(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))
