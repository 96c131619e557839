"""Caption cleaning, netspeak restoration and tokenization.

The pipeline is ``clean`` -> ``restore`` -> ``tokenize``. Tokenization is a
deterministic whitespace split with a per-token alphabet rule; any token with a
character outside ``[a-z0-9']`` is replaced wholesale by ``<unk>``.
"""

from __future__ import annotations

import hashlib
import re
import string
import unicodedata
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import DataError

UNK = "<unk>"
MAX_TOKENS = 128

_URL_RE = re.compile(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*")
_EMAIL_RE = re.compile(r"\S*@[^\s@]*\.\S*")
_TOKEN_RE = re.compile(r"[a-z0-9']+")
_ASCII_PUNCT = frozenset(string.punctuation) - {"'"}
_APOSTROPHES = {"’": "'", "‘": "'", "ʼ": "'"}


def _is_punct(ch: str) -> bool:
    if ch == "'":
        return False
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def clean(text: str) -> str:
    """Lowercase, drop URLs and e-mail addresses, then strip punctuation.

    Apostrophes survive only inside a word; whitespace runs collapse to one
    space and the result carries no leading or trailing space.
    """
    text = text.lower()
    for src, dst in _APOSTROPHES.items():
        text = text.replace(src, dst)
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = "".join(ch for ch in text if not _is_punct(ch))
    words = (w.strip("'") for w in text.split())
    return " ".join(w for w in words if w)


def restore(text: str, lexicon: Mapping[str, str]) -> str:
    return " ".join(lexicon.get(w, w) for w in text.split())


def tokenize(text: str) -> list[str]:
    return [w if _TOKEN_RE.fullmatch(w) else UNK for w in text.split()][:MAX_TOKENS]


def preprocess(text: str, lexicon: Mapping[str, str]) -> list[str]:
    return tokenize(restore(clean(text), lexicon))


def parse_lexicon(content: str, source: str = "<lexicon>") -> dict[str, str]:
    lex: dict[str, str] = {}
    for lineno, line in enumerate(content.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise DataError(f"{source}:{lineno}: expected 'nonstandard<TAB>standard'")
        key, value = parts[0].strip(), parts[1].strip()
        if key != key.lower():
            raise DataError(f"{source}:{lineno}: lexicon key {key!r} must be lowercase")
        if key == value:
            raise DataError(f"{source}:{lineno}: lexicon key {key!r} maps to itself")
        lex[key] = value
    return lex


def load_lexicon(path: str | Path | None = None) -> dict[str, str]:
    """Read a lexicon file, or the bundled default when ``path`` is None."""
    if path is None:
        content = resources.files("memefuse.resources").joinpath("lexicon.tsv").read_text(encoding="utf-8")
        return parse_lexicon(content, "lexicon.tsv")
    path = Path(path)
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read lexicon {path}: {exc}") from exc
    return parse_lexicon(content, str(path))


def lexicon_hash(lexicon: Mapping[str, str]) -> str:
    canonical = "\n".join(f"{k}\t{lexicon[k]}" for k in sorted(lexicon))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
