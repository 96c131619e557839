"""Training loop, optimizers, train/dev split and the ensemble wrapper."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import Config
from .data import Inputs
from .errors import DivergenceError, UsageError
from .fusion import Member, MemberSpec, cross_entropy, predict_label, soft_vote
from .layers import Module
from .metrics import macro_f1_score
from .tensor import Rng

log = logging.getLogger(__name__)


class SGD:
    def __init__(self, module: Module, lr: float):
        self.module, self.lr = module, lr

    def step(self) -> None:
        for name, param, grad in self.module.named_parameters():
            _check_finite(name, grad)
            param -= self.lr * grad


class Adam:
    """Bias-corrected Adam with beta1 0.9, beta2 0.999, eps 1e-8."""

    def __init__(self, module: Module, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.module, self.lr, self.beta1, self.beta2, self.eps = module, lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p, _ in module.named_parameters()}
        self.v = {name: np.zeros_like(p) for name, p, _ in module.named_parameters()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, param, grad in self.module.named_parameters():
            _check_finite(name, grad)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite gradient for parameter {name!r}")


def make_optimizer(kind: str, module: Module, lr: float):
    return Adam(module, lr) if kind == "adam" else SGD(module, lr)


def split_train_dev(n_or_data, fraction: float, seed: int):
    """Seeded shuffle then split off ``round(fraction * n)`` records as dev.

    Accepts a record count (returns index arrays), an ``Inputs`` or a sequence.
    """
    if not 0 < fraction < 1:
        raise UsageError(f"dev fraction must lie in (0, 1), got {fraction}")
    n = n_or_data if isinstance(n_or_data, int) else len(n_or_data)
    if n < 2:
        raise UsageError(f"need at least 2 records to split, got {n}")
    n_dev = min(max(int(round(fraction * n)), 1), n - 1)
    perm = Rng(seed).fork(0x5B17).permutation(n)
    train_idx, dev_idx = np.sort(perm[n_dev:]), np.sort(perm[:n_dev])
    if isinstance(n_or_data, int):
        return train_idx, dev_idx
    if isinstance(n_or_data, Inputs):
        return n_or_data.subset(train_idx), n_or_data.subset(dev_idx)
    return [n_or_data[k] for k in train_idx], [n_or_data[k] for k in dev_idx]


def member_specs(cfg: Config) -> list[MemberSpec]:
    return [MemberSpec(i, j, cfg.fusion.d, cfg.model.classes) for i, j in cfg.ensemble.members]


def build_member(spec: MemberSpec, cfg: Config, inputs: Inputs) -> Member:
    text_dim = inputs.tokens[0].shape[1] if inputs.tokens else 0
    sentence_dim = None if inputs.sentence is None else inputs.sentence.shape[1]
    image_dim = None if inputs.image_vec is None else inputs.image_vec.shape[1]
    rng = Rng(cfg.train.seed).fork(10 * spec.text_extractor + spec.image_extractor)
    return Member(spec, cfg, rng, text_dim=text_dim, sentence_dim=sentence_dim, image_dim=image_dim)


def predict_member(member: Member, inputs: Inputs, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(inputs), batch_size):
        idx = np.arange(start, min(start + batch_size, len(inputs)))
        out.append(member.predict_proba(inputs.batch(idx)))
    return np.concatenate(out) if out else np.zeros((0, member.spec.class_count))


@dataclass
class TrainResult:
    """Per-epoch history of one member's training run."""

    losses: list[float] = field(default_factory=list)
    dev_macro_f1: list[float] = field(default_factory=list)
    dev_probs: list[np.ndarray] = field(default_factory=list)


def train_member(member: Member, train: Inputs, cfg: Config, dev: Inputs | None = None,
                 on_epoch: Callable[[int, float, float | None], None] | None = None) -> TrainResult:
    """Mini-batch training on mean cross-entropy with seeded shuffling and dropout."""
    if len(train) == 0:
        raise UsageError("cannot train on an empty dataset")
    tc = cfg.train
    tag = 10 * member.spec.text_extractor + member.spec.image_extractor
    shuffle_rng = Rng(tc.seed).fork(1000 + tag)
    drop_rng = Rng(tc.seed).fork(2000 + tag)
    opt = make_optimizer(tc.optimizer, member, tc.lr)
    result = TrainResult()
    weights = tc.class_weights or None
    for epoch in range(1, tc.epochs + 1):
        perm = shuffle_rng.permutation(len(train))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(train), tc.batch), 1):
            idx = perm[start:start + tc.batch]
            batch = train.batch(idx)
            member.zero_grad()
            logits = member.forward(batch, rng=drop_rng)
            loss, dlogits = cross_entropy(logits, batch["labels"], weights)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            member.backward(dlogits)
            try:
                opt.step()
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}, batch {b}") from None
            total += loss * len(idx)
            count += len(idx)
        result.losses.append(total / count)
        f1 = None
        if dev is not None and len(dev):
            probs = predict_member(member, dev)
            f1 = macro_f1_score(dev.labels, predict_label(probs), member.spec.class_count)
            result.dev_probs.append(probs)
            result.dev_macro_f1.append(f1)
        if on_epoch is not None:
            on_epoch(epoch, result.losses[-1], f1)
    return result


class Ensemble:
    def __init__(self, members: Sequence[Member], weights: Sequence[float] | None = None):
        self.members = list(members)
        self.weights = list(weights) if weights else None

    def member_probs(self, inputs: Inputs) -> list[np.ndarray]:
        return [predict_member(m, inputs) for m in self.members]

    def predict_proba(self, inputs: Inputs) -> np.ndarray:
        return soft_vote(self.member_probs(inputs), self.weights)


@dataclass
class EnsembleHistory:
    members: dict[str, TrainResult]
    ensemble_dev_macro_f1: list[float]

    def rows(self) -> list[dict]:
        """One row per epoch: member losses, member dev F1 and ensemble dev F1."""
        rows = []
        epochs = max((len(r.losses) for r in self.members.values()), default=0)
        for e in range(epochs):
            row = {"epoch": e + 1}
            for name, r in self.members.items():
                row[f"{name}_loss"] = r.losses[e]
                if r.dev_macro_f1:
                    row[f"{name}_dev_macro_f1"] = r.dev_macro_f1[e]
            if self.ensemble_dev_macro_f1:
                row["ensemble_dev_macro_f1"] = self.ensemble_dev_macro_f1[e]
            rows.append(row)
        return rows


def train_ensemble(cfg: Config, train: Inputs, dev: Inputs | None = None,
                   progress: Callable[[str], None] | None = None) -> tuple[Ensemble, EnsembleHistory]:
    """Train each configured member independently, then soft-vote them."""
    members, results = [], {}
    for spec in member_specs(cfg):
        member = build_member(spec, cfg, train)
        hook = None
        if progress is not None:
            hook = lambda e, loss, f1, s=spec: progress(
                f"{s.name} epoch {e}: loss {loss:.4f}" + ("" if f1 is None else f", dev macro-F1 {f1:.4f}"))
        results[spec.name] = train_member(member, train, cfg, dev, on_epoch=hook)
        members.append(member)
    weights = cfg.ensemble.weights or None
    ens_f1 = []
    if dev is not None and len(dev) and cfg.train.epochs:
        for e in range(cfg.train.epochs):
            probs = soft_vote([results[s.name].dev_probs[e] for s in member_specs(cfg)], weights)
            ens_f1.append(macro_f1_score(dev.labels, predict_label(probs), cfg.model.classes))
    return Ensemble(members, weights), EnsembleHistory(results, ens_f1)
