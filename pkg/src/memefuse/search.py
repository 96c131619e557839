"""Exhaustive grid search over the tuned hyperparameters."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .config import Config
from .data import Inputs
from .errors import ConfigError, DataError
from .train import train_ensemble

GRID_KEYS = {
    "h12": "text.h12",
    "h3": "text.h3",
    "r": "text.dropout",
    "d": "fusion.d",
    "c": "image.c",
    "m": "image.m",
    "l": "image.l",
    "p": "image.p",
}


@dataclass
class GridResult:
    names: list[str]
    rows: list[dict]
    best: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names + ["dev_macro_f1", "epoch_of_best"])
        for row in self.rows:
            writer.writerow([row[n] for n in self.names] + [repr(row["dev_macro_f1"]), row["epoch_of_best"]])
        return buf.getvalue()


def validate_grid(grid: Mapping[str, Sequence]) -> None:
    if not grid:
        raise ConfigError("grid is empty")
    for name, values in grid.items():
        if name not in GRID_KEYS:
            raise ConfigError(f"unknown grid parameter {name!r}; expected one of {sorted(GRID_KEYS)}")
        if len(values) == 0:
            raise ConfigError(f"grid parameter {name!r} has no values")


def parse_grid(text: str, source: str = "<grid>") -> dict[str, list]:
    """``name=v1,v2,...`` lines; values parse as int when possible, else float."""
    grid: dict[str, list] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected name=v1,v2,...")
        name, values = (s.strip() for s in line.split("=", 1))
        try:
            grid[name] = [_number(v.strip()) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    validate_grid(grid)
    return grid


def load_grid(path: str | Path) -> dict[str, list]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from exc
    return parse_grid(text, str(path))


def _number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


Evaluator = Callable[[Config], tuple[float, int]]


def ensemble_evaluator(train: Inputs, dev: Inputs) -> Evaluator:
    """Best ensemble dev macro-F1 over epochs, and the first epoch reaching it."""

    def evaluate(cfg: Config) -> tuple[float, int]:
        _, history = train_ensemble(cfg, train, dev)
        scores = history.ensemble_dev_macro_f1
        if not scores:
            raise DataError("grid search needs a non-empty dev split and at least one epoch")
        best = max(scores)
        return best, scores.index(best) + 1

    return evaluate


def grid_search(grid: Mapping[str, Sequence], base: Config, evaluate: Evaluator) -> GridResult:
    """Train every combination in grid order; keep the best dev macro-F1.

    Every cell reuses ``base``'s seed. Ties go to the lexicographically
    smallest tuple of parameter values (in grid order).
    """
    validate_grid(grid)
    names = list(grid)
    rows = []
    for combo in itertools.product(*(grid[n] for n in names)):
        cfg = base.copy()
        for name, value in zip(names, combo):
            cfg.set(GRID_KEYS[name], value)
        cfg.validate()
        score, epoch = evaluate(cfg)
        rows.append({**dict(zip(names, combo)), "dev_macro_f1": score, "epoch_of_best": epoch})
    top = max(r["dev_macro_f1"] for r in rows)
    best = min((r for r in rows if r["dev_macro_f1"] == top), key=lambda r: tuple(r[n] for n in names))
    return GridResult(names, rows, best)
