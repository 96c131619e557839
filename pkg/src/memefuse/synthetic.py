"""Synthetic memes with class-correlated text and image signals.

Used by the test suite and for smoke-testing the CLI. Every draw comes from
the package's SplitMix64 generator, so a seed reproduces the same files on any
platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetRecord, Inputs, prepare_inputs
from .embeddings import EmbeddingTable, VectorStore, save_embeddings
from .image import save_ppm
from .tensor import Rng


@dataclass
class SyntheticSet:
    records: list[DatasetRecord]
    table: EmbeddingTable
    sentences: VectorStore
    image_features: VectorStore
    images: dict[str, np.ndarray]


def make_synthetic(n: int = 200, classes: int = 3, *, dim: int = 8, image_size: int = 16, feature_dim: int = 8,
                   words_per_class: int = 6, neutral_words: int = 12, signal: float = 0.6, seed: int = 0) -> SyntheticSet:
    """Build ``n`` labelled memes.

    Captions mix class words (probability ``signal``), words of a random class
    and neutral words. The sentence vector, the precomputed image vector and
    the pixel pattern each encode a cue that matches the label with
    probability ``signal + 0.2`` (otherwise a random class), drawn
    independently per view.
    """
    rng = Rng(seed)
    vocab = [f"c{k}w{w}" for k in range(classes) for w in range(words_per_class)]
    vocab += [f"n{w}" for w in range(neutral_words)]
    rows = {tok: rng.normal((dim,)) for tok in vocab}
    table = EmbeddingTable.from_rows(rows)
    sent_centers = rng.normal((classes, dim))
    feat_centers = rng.normal((classes, feature_dim)) * 1.5
    records, sentences, feats, images = [], VectorStore(), VectorStore(), {}
    labels = np.arange(n) % classes
    labels = labels[rng.permutation(n)]

    def view_cue(y: int) -> int:
        # each view is corrupted independently of the others
        return y if float(rng.random()) < signal + 0.2 else int(rng.integers(classes))

    for k in range(n):
        y = int(labels[k])
        rid = f"s{k:04d}"
        length = 3 + int(rng.integers(6))
        toks = []
        for _ in range(length):
            u = float(rng.random())
            if u < signal:
                toks.append(f"c{y}w{int(rng.integers(words_per_class))}")
            elif u < signal + 0.15:
                other = int(rng.integers(classes))
                toks.append(f"c{other}w{int(rng.integers(words_per_class))}")
            else:
                toks.append(f"n{int(rng.integers(neutral_words))}")
        text = " ".join(toks)
        sentences.add(rid, sent_centers[view_cue(y)] + 0.8 * rng.normal((dim,)))
        feats.add(rid, feat_centers[view_cue(y)] + rng.normal((feature_dim,)))
        cue = view_cue(y)
        img = 0.3 * rng.random((image_size, image_size, 3))
        q = image_size // 2
        r0, c0 = (cue // 2) % 2 * q, cue % 2 * q
        img[r0:r0 + q, c0:c0 + q, cue % 3] += 0.4 + 0.3 * float(rng.random())
        images[rid] = np.clip(img, 0.0, 1.0)
        records.append(DatasetRecord(rid, text, f"{rid}.ppm", y))
    return SyntheticSet(records, table, sentences, feats, images)


def write_synthetic(ds: SyntheticSet, directory: str | Path) -> dict[str, Path]:
    """Write dataset, embeddings, sentence vectors, image features and PPMs."""
    d = Path(directory)
    (d / "images").mkdir(parents=True, exist_ok=True)
    paths = {
        "data": d / "data.jsonl",
        "embeddings": d / "embeddings.txt",
        "sentences": d / "sentences.jsonl",
        "image_features": d / "image_features.jsonl",
    }
    with paths["data"].open("w", encoding="utf-8") as fh:
        for r in ds.records:
            fh.write(json.dumps({"id": r.id, "text": r.text, "image": f"images/{r.image}", "label": r.label}) + "\n")
    for rid, img in ds.images.items():
        save_ppm(d / "images" / f"{rid}.ppm", img)
    save_embeddings(ds.table, paths["embeddings"])
    for key, store in (("sentences", ds.sentences), ("image_features", ds.image_features)):
        with paths[key].open("w", encoding="utf-8") as fh:
            for rid, vec in store.vectors.items():
                fh.write(json.dumps({"id": rid, "vec": [float(v) for v in vec]}) + "\n")
    return paths


def as_inputs(ds: SyntheticSet, lexicon=None) -> Inputs:
    """In-memory model inputs for every modality, skipping the file round trip."""
    lexicon = {} if lexicon is None else lexicon
    inputs = prepare_inputs(ds.records, lexicon, table=ds.table, sentences=ds.sentences,
                            image_features=ds.image_features)
    inputs.pixels = np.stack([ds.images[r.id] for r in ds.records])
    return inputs
