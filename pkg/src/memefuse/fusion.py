"""Per-member fusion heads and soft voting across ensemble members.

A member pairs text extractor ``i`` with image extractor ``j``, concatenates
the two features and classifies them with a small dense head. The ensemble
averages member probability vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import Config
from .errors import ConfigError, ShapeError, UsageError
from .image import CNNExtractor, ProjectionExtractor
from .layers import Dense, Module
from .tensor import Rng, relu, softmax
from .text import TextExtractor


@dataclass(frozen=True)
class MemberSpec:
    text_extractor: int
    image_extractor: int
    dense_size: int
    class_count: int

    def __post_init__(self):
        if self.text_extractor not in (1, 2, 3, 4) or self.image_extractor not in (1, 2):
            raise ConfigError(f"invalid member ({self.text_extractor}, {self.image_extractor})")
        if self.dense_size < 0 or self.class_count < 2:
            raise ConfigError("member needs dense_size >= 0 and class_count >= 2")

    @property
    def name(self) -> str:
        return f"m{self.text_extractor}{self.image_extractor}"


class FusionHead(Module):
    """``dense2(ReLU(dense1(x)))`` producing logits; ``d == 0`` drops the hidden layer."""

    def __init__(self, d_in: int, d: int, classes: int, rng: Rng):
        super().__init__()
        self.d_in = d_in
        self.hidden = self.add_child("dense1", Dense(d_in, d, rng, activation="relu")) if d > 0 else None
        self.out = self.add_child("dense2", Dense(d if d > 0 else d_in, classes, rng))

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"fusion head expects {self.d_in} input features, got {x.shape[-1]}")
        if self.hidden is not None:
            x = self.hidden.forward(x)
        return self.out.forward(x)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dx = self.out.backward(dlogits)
        return self.hidden.backward(dx) if self.hidden is not None else dx


def member_forward(head: Mapping[str, np.ndarray], text_feat, image_feat) -> np.ndarray:
    """Class probabilities for one record from a head's parameters.

    ``head`` holds ``dense1.W``/``dense1.b`` (optional) and ``dense2.W``/``dense2.b``.
    """
    x = np.concatenate([np.asarray(text_feat, float).reshape(-1), np.asarray(image_feat, float).reshape(-1)])
    if "dense1.W" in head:
        if head["dense1.W"].shape[1] != x.shape[0]:
            raise ShapeError(f"head expects {head['dense1.W'].shape[1]} features, got {x.shape[0]}")
        x = relu(head["dense1.W"] @ x + head["dense1.b"])
    if head["dense2.W"].shape[1] != x.shape[0]:
        raise ShapeError(f"output layer expects {head['dense2.W'].shape[1]} features, got {x.shape[0]}")
    return softmax(head["dense2.W"] @ x + head["dense2.b"])


class Member(Module):
    """One (text extractor, image extractor, fusion head) ensemble member."""

    def __init__(self, spec: MemberSpec, cfg: Config, rng: Rng, *, text_dim: int, sentence_dim: int | None = None,
                 image_dim: int | None = None):
        super().__init__()
        self.spec = spec
        t, im = cfg.text, cfg.image
        i, j = spec.text_extractor, spec.image_extractor
        if i == 4:
            if sentence_dim is None:
                raise ConfigError("member with text extractor 4 needs sentence vectors")
            self.text = TextExtractor(4, sentence_dim, rng.fork(1), h12=t.h12, h3=t.h3, dropout=t.dropout,
                                      dense_size=spec.dense_size or 2 * t.h3)
        else:
            self.text = TextExtractor(i, text_dim, rng.fork(1), h12=t.h12, h3=t.h3, dropout=t.dropout,
                                      dense_size=spec.dense_size, attn_dim=t.attn or None)
        if j == 1:
            self.image = CNNExtractor(rng.fork(2), size=im.size, channels=im.channels, c=im.c, m=im.m, l=im.l, p=im.p)
        else:
            if image_dim is None:
                raise ConfigError("member with image extractor 2 needs precomputed image features")
            self.image = ProjectionExtractor(image_dim, im.proj, rng.fork(2))
        self.add_child("text", self.text)
        self.add_child("image", self.image)
        self.head = self.add_child("head", FusionHead(self.text.out_dim + self.image.out_dim, spec.dense_size,
                                                      spec.class_count, rng.fork(3)))

    def forward(self, batch: Mapping[str, np.ndarray], rng: Rng | None = None) -> np.ndarray:
        """Logits (B, K). Passing ``rng`` switches dropout on (training mode)."""
        if self.spec.text_extractor == 4:
            tf = self.text.forward(batch["sentence"], rng=rng)
        else:
            tf = self.text.forward(batch["tokens"], batch["mask"], rng=rng)
        if self.spec.image_extractor == 1:
            imf = self.image.forward(batch["pixels"], rng=rng)
        else:
            imf = self.image.forward(batch["image_vec"], rng=rng)
        self._split = tf.shape[1]
        return self.head.forward(np.concatenate([tf, imf], axis=1))

    def backward(self, dlogits: np.ndarray) -> None:
        dx = self.head.backward(dlogits)
        self.text.backward(dx[:, :self._split])
        self.image.backward(dx[:, self._split:])

    def predict_proba(self, batch: Mapping[str, np.ndarray]) -> np.ndarray:
        return softmax(self.forward(batch), axis=1)


def cross_entropy(logits: np.ndarray, labels: np.ndarray, class_weights=None) -> tuple[float, np.ndarray]:
    """Mean (optionally class-weighted) negative log-likelihood and its logit gradient."""
    B = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    w = np.ones(B) if class_weights is None or len(class_weights) == 0 else np.asarray(class_weights, float)[labels]
    total = w.sum()
    if total == 0:
        return 0.0, np.zeros_like(logits)
    loss = -np.sum(w * logp[np.arange(B), labels]) / total
    grad = np.exp(logp)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad * (w / total)[:, None]


def soft_vote(preds: Sequence[np.ndarray], weights: Sequence[float] | None = None) -> np.ndarray:
    """Weighted mean of member probability vectors (or (N, K) arrays)."""
    if len(preds) == 0:
        raise UsageError("soft_vote: no member predictions")
    arrs = [np.asarray(p, dtype=np.float64) for p in preds]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ShapeError(f"soft_vote: members disagree on shape {[a.shape for a in arrs]}")
    if weights is None:
        w = np.full(len(arrs), 1.0 / len(arrs))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(arrs),) or np.any(w < 0) or w.sum() == 0:
            raise UsageError("soft_vote: need one nonnegative weight per member, not all zero")
        if w.sum() != 1.0:
            w = w / w.sum()
    return np.tensordot(w, np.stack(arrs), axes=1)


def predict_label(probs) -> int | np.ndarray:
    """Argmax with ties going to the lowest class index; works row-wise on 2-D input."""
    p = np.asarray(probs)
    out = np.argmax(p, axis=-1)
    return int(out) if p.ndim == 1 else out
