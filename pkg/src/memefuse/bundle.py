"""Single-file model bundle.

Layout: the magic ``MEMEFUSE1``, a little-endian u32 header length, a UTF-8
JSON header (sorted keys) holding metadata and a tensor table of
``(name, shape, offset)``, then the tensors back to back in the ``MFT1``
format. Offsets count from the first byte after the header.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, parse_config
from .data import Inputs
from .embeddings import EmbeddingTable
from .errors import DataError
from .fusion import Member
from .preprocess import lexicon_hash
from .tensor import Rng, read_tensor, tensor_bytes
from .train import Ensemble, member_specs

MAGIC = b"MEMEFUSE1"
FORMAT_VERSION = 1
INIT_SCHEME = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), SplitMix64"


@dataclass
class ModelBundle:
    config: Config
    ensemble: Ensemble
    table: EmbeddingTable | None
    lexicon: dict[str, str]
    sentence_dim: int | None = None
    image_dim: int | None = None


def _dims(inputs: Inputs):
    return (
        None if inputs.sentence is None else int(inputs.sentence.shape[1]),
        None if inputs.image_vec is None else int(inputs.image_vec.shape[1]),
    )


def bundle_from_training(cfg: Config, ensemble: Ensemble, table, lexicon, train: Inputs) -> ModelBundle:
    sentence_dim, image_dim = _dims(train)
    return ModelBundle(cfg, ensemble, table, dict(lexicon), sentence_dim, image_dim)


def to_bytes(bundle: ModelBundle) -> bytes:
    tensors: list[tuple[str, np.ndarray]] = []
    if bundle.table is not None:
        tensors.append(("embeddings.matrix", bundle.table.matrix))
    for member in bundle.ensemble.members:
        for name, value, _ in member.named_parameters(f"{member.spec.name}."):
            tensors.append((name, value))
    table, payload, offset = [], [], 0
    for name, value in tensors:
        raw = tensor_bytes(value)
        table.append({"name": name, "shape": list(value.shape), "offset": offset})
        payload.append(raw)
        offset += len(raw)
    vocab = None
    if bundle.table is not None:
        vocab = [tok for tok, _ in sorted(bundle.table.vocab.items(), key=lambda kv: kv[1])]
    header = {
        "format_version": FORMAT_VERSION,
        "config": bundle.config.to_text(),
        "init": INIT_SCHEME,
        "lexicon": bundle.lexicon,
        "lexicon_hash": lexicon_hash(bundle.lexicon),
        "embedding_dim": None if bundle.table is None else bundle.table.dim,
        "vocab": vocab,
        "sentence_dim": bundle.sentence_dim,
        "image_dim": bundle.image_dim,
        "tensors": table,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(payload)


def from_bytes(raw: bytes) -> ModelBundle:
    if not raw.startswith(MAGIC):
        raise DataError("not a model bundle (bad magic)")
    pos = len(MAGIC)
    (hlen,) = struct.unpack("<I", raw[pos:pos + 4])
    header = json.loads(raw[pos + 4:pos + 4 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported bundle version {header.get('format_version')}")
    if header["lexicon_hash"] != lexicon_hash(header["lexicon"]):
        raise DataError("bundle lexicon does not match its recorded hash")
    base = pos + 4 + hlen
    state = {}
    for entry in header["tensors"]:
        t = read_tensor(io.BytesIO(raw[base + entry["offset"]:]))
        if list(t.shape) != entry["shape"]:
            raise DataError(f"bundle tensor {entry['name']!r} has shape {t.shape}, table says {entry['shape']}")
        state[entry["name"]] = t
    cfg = parse_config(header["config"])
    table = None
    if header["vocab"] is not None:
        vocab = {tok: k for k, tok in enumerate(header["vocab"])}
        table = EmbeddingTable(header["embedding_dim"], vocab, state["embeddings.matrix"], vocab["<unk>"])
    members = []
    for spec in member_specs(cfg):
        member = Member(spec, cfg, Rng(0), text_dim=header["embedding_dim"] or 0,
                        sentence_dim=header["sentence_dim"], image_dim=header["image_dim"])
        prefix = spec.name + "."
        member.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})
        members.append(member)
    ensemble = Ensemble(members, cfg.ensemble.weights or None)
    return ModelBundle(cfg, ensemble, table, header["lexicon"], header["sentence_dim"], header["image_dim"])


def atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    atomic_write(path, to_bytes(bundle))


def load_bundle(path: str | Path) -> ModelBundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return from_bytes(raw)
