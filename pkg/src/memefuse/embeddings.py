"""Frozen word-level and sentence-level embedding stores.

Word files are GloVe-style text (``token f1 ... fdim``, single spaces). Sentence
and precomputed image-feature files are JSON Lines of ``{"id", "vec"}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyInputError
from .preprocess import UNK


@dataclass
class EmbeddingTable:
    dim: int
    vocab: dict[str, int]
    matrix: np.ndarray
    unk_index: int

    def __post_init__(self):
        if self.matrix.shape != (len(self.vocab), self.dim):
            raise DataError(f"embedding matrix shape {self.matrix.shape} does not match vocab/dim")

    @classmethod
    def from_rows(cls, rows: dict[str, Sequence[float]]) -> "EmbeddingTable":
        """Build a table from an in-memory mapping; adds a zero ``<unk>`` row if absent."""
        tokens = list(rows)
        if not tokens:
            raise DataError("embedding table needs at least one row")
        dim = len(rows[tokens[0]])
        mat = [list(map(float, rows[t])) for t in tokens]
        if any(len(r) != dim for r in mat):
            raise DataError("embedding rows have inconsistent dimensions")
        if UNK not in rows:
            tokens.append(UNK)
            mat.append([0.0] * dim)
        vocab = {t: k for k, t in enumerate(tokens)}
        return cls(dim, vocab, np.array(mat, dtype=np.float64).reshape(len(tokens), dim), vocab[UNK])


def load_embeddings(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read embeddings {path}: {exc}") from exc
    vocab: dict[str, int] = {}
    rows: list[list[float]] = []
    dim = None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(" ")
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise DataError(f"{path}:{lineno}: row has no vector values")
            elif len(values) != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} floats, found {len(values)}")
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed float ({exc})") from exc
            if not all(math.isfinite(v) for v in vec):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if token in vocab:
                raise DataError(f"{path}:{lineno}: duplicate token {token!r}")
            vocab[token] = len(rows)
            rows.append(vec)
    if dim is None:
        raise DataError(f"{path}: no embedding rows")
    if UNK not in vocab:
        vocab[UNK] = len(rows)
        rows.append([0.0] * dim)
    return EmbeddingTable(dim, vocab, np.array(rows, dtype=np.float64), vocab[UNK])


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    # repr(float) round-trips exactly
    with Path(path).open("w", encoding="utf-8") as fh:
        for token, idx in sorted(table.vocab.items(), key=lambda kv: kv[1]):
            fh.write(token + " " + " ".join(repr(float(v)) for v in table.matrix[idx]) + "\n")


def lookup(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray:
    if len(tokens) == 0:
        raise EmptyInputError("lookup: empty token sequence")
    idx = [table.vocab.get(t, table.unk_index) for t in tokens]
    return table.matrix[idx].copy()


@dataclass
class VectorStore:
    """Record id -> fixed-size vector; used for sentence and image feature files."""

    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int | None:
        for v in self.vectors.values():
            return int(v.shape[0])
        return None

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def add(self, key: str, vec) -> None:
        vec = np.array(vec, dtype=np.float64).reshape(-1)
        if self.dim is not None and vec.shape[0] != self.dim:
            raise DataError(f"vector for {key!r} has dim {vec.shape[0]}, store has {self.dim}")
        self.vectors[key] = vec

    def get(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key].copy()
        except KeyError:
            raise KeyError(f"no vector stored for id {key!r}") from None


SentenceVectorStore = VectorStore


def sentence_vector(store: VectorStore, key: str) -> np.ndarray:
    return store.get(key)


def load_vectors(path: str | Path) -> VectorStore:
    path = Path(path)
    store = VectorStore()
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read vector file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key, vec = str(obj["id"]), obj["vec"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: expected {{\"id\", \"vec\"}} object ({exc})") from exc
            if key in store:
                raise DataError(f"{path}:{lineno}: duplicate id {key!r}")
            try:
                store.add(key, vec)
            except (DataError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return store
