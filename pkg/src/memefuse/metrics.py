"""Confusion matrix, per-class precision/recall/F1 and macro-F1."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError


def confusion(y_true: Sequence[int], y_pred: Sequence[int], classes: int) -> np.ndarray:
    """K x K counts, rows indexed by true class and columns by predicted class."""
    if len(y_true) != len(y_pred):
        raise DataError(f"confusion: {len(y_true)} true labels vs {len(y_pred)} predictions")
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    for name, arr in (("true", t), ("predicted", p)):
        bad = np.flatnonzero((arr < 0) | (arr >= classes))
        if bad.size:
            raise DataError(f"confusion: {name} label {arr[bad[0]]} at position {bad[0]} outside [0, {classes})")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass
class MetricsReport:
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    confusion: list[list[int]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'class':>5} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>7}"]
        for k, (p, r, f, s) in enumerate(zip(self.precision, self.recall, self.f1, self.support)):
            lines.append(f"{k:>5} {p:>9.4f} {r:>9.4f} {f:>9.4f} {s:>7d}")
        lines.append(f"{'macro':>5} {'':>9} {'':>9} {self.macro_f1:>9.4f} {sum(self.support):>7d}")
        return "\n".join(lines)


def macro_f1(cm, include_empty: bool = True) -> MetricsReport:
    """Per-class P, R and F1 = 2PR/(P+R) from a confusion matrix, plus their macro mean.

    Any 0/0 is taken as 0. With ``include_empty`` False, classes with no support
    and no predictions are left out of the macro mean.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise UsageError(f"macro_f1: need a non-empty square matrix, got shape {cm.shape}")
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    true = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    keep = np.ones(len(tp), dtype=bool) if include_empty else (true + pred) > 0
    macro = float(f1[keep].mean()) if keep.any() else 0.0
    total = cm.sum()
    micro = float(tp.sum() / total) if total else 0.0
    weighted = float((f1 * true).sum() / total) if total else 0.0
    return MetricsReport(
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        support=true.astype(int).tolist(),
        macro_f1=macro,
        micro_f1=micro,
        weighted_f1=weighted,
        confusion=cm.tolist(),
    )


def macro_f1_score(y_true, y_pred, classes: int) -> float:
    return macro_f1(confusion(y_true, y_pred, classes)).macro_f1
