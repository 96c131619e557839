"""Dataset records and the feature tensors each member consumes.

A dataset file is JSON Lines with ``{"id", "text", "image", "label"}``.
``image`` is either a PPM path (relative paths resolve against the dataset
file's directory) or a key into the precomputed image-feature file; records
whose ``image`` is not a key there are looked up by ``id`` instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingTable, VectorStore, lookup
from .errors import DataError
from .image import load_ppm, resize_nearest, to_channels
from .preprocess import UNK, preprocess


@dataclass
class DatasetRecord:
    id: str
    text: str
    image: str | None = None
    label: int | None = None


def load_dataset(path: str | Path, classes: int | None = None) -> list[DatasetRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    records, seen = [], set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rid = str(obj["id"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: expected a JSON object with an 'id' ({exc})") from exc
        if rid in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        label = obj.get("label")
        if label is not None:
            if not isinstance(label, int) or isinstance(label, bool) or label < 0 or (classes is not None and label >= classes):
                raise DataError(f"{path}:{lineno}: label {label!r} outside [0, {classes})")
        image = obj.get("image")
        if image is not None and not Path(image).is_absolute() and str(image).lower().endswith((".ppm", ".pgm")):
            image = str((path.parent / image))
        records.append(DatasetRecord(rid, str(obj.get("text") or ""), None if image is None else str(image), label))
    return records


@dataclass
class Inputs:
    """Per-record model inputs; modality fields are None when not prepared."""

    ids: list[str]
    tokens: list[np.ndarray] | None = None
    sentence: np.ndarray | None = None
    pixels: np.ndarray | None = None
    image_vec: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx: Sequence[int]) -> "Inputs":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return Inputs(
            ids=[self.ids[k] for k in idx],
            tokens=None if self.tokens is None else [self.tokens[k] for k in idx],
            sentence=pick(self.sentence),
            pixels=pick(self.pixels),
            image_vec=pick(self.image_vec),
            labels=pick(self.labels),
        )

    def batch(self, idx: Sequence[int] | None = None) -> dict[str, np.ndarray]:
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=np.int64)
        out: dict[str, np.ndarray] = {}
        if self.tokens is not None:
            seqs = [self.tokens[k] for k in idx]
            T = max(s.shape[0] for s in seqs)
            dim = seqs[0].shape[1]
            toks = np.zeros((len(seqs), T, dim))
            mask = np.zeros((len(seqs), T))
            for b, s in enumerate(seqs):
                toks[b, : s.shape[0]] = s
                mask[b, : s.shape[0]] = 1.0
            out["tokens"], out["mask"] = toks, mask
        for name in ("sentence", "pixels", "image_vec", "labels"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value[idx]
        return out


def prepare_inputs(
    records: Sequence[DatasetRecord],
    lexicon: Mapping[str, str],
    *,
    table: EmbeddingTable | None = None,
    sentences: VectorStore | None = None,
    image_features: VectorStore | None = None,
    image_size: int | None = None,
    channels: int = 3,
    need_labels: bool = True,
) -> Inputs:
    """Turn records into the tensors requested by the non-None arguments.

    Captions that preprocess to no tokens are fed as a single ``<unk>``.
    """
    ids = [r.id for r in records]
    inputs = Inputs(ids=ids)
    if table is not None:
        inputs.tokens = [lookup(table, preprocess(r.text, lexicon) or [UNK]) for r in records]
    if sentences is not None:
        rows = []
        for r in records:
            if r.id not in sentences:
                raise DataError(f"no sentence vector for record {r.id!r}")
            rows.append(sentences.get(r.id))
        inputs.sentence = np.stack(rows)
    if image_size is not None:
        imgs = []
        for r in records:
            if r.image is None or not r.image.lower().endswith((".ppm", ".pgm")):
                raise DataError(f"record {r.id!r} has no PPM image for the CNN extractor")
            img = load_ppm(r.image)
            imgs.append(to_channels(resize_nearest(img, image_size), channels))
        inputs.pixels = np.stack(imgs)
    if image_features is not None:
        rows = []
        for r in records:
            key = r.image if r.image is not None and r.image in image_features else r.id
            if key not in image_features:
                raise DataError(f"no image feature vector for record {r.id!r}")
            rows.append(image_features.get(key))
        inputs.image_vec = np.stack(rows)
    if need_labels:
        missing = [r.id for r in records if r.label is None]
        if missing:
            raise DataError(f"record {missing[0]!r} has no label")
        inputs.labels = np.array([r.label for r in records], dtype=np.int64)
    return inputs
