import json
import re
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memefuse.errors import DataError
from memefuse.preprocess import (
    MAX_TOKENS,
    UNK,
    clean,
    lexicon_hash,
    load_lexicon,
    parse_lexicon,
    preprocess,
    restore,
    tokenize,
)

GOLDEN = Path(__file__).parent / "data" / "preprocess_golden.json"
TOKEN = re.compile(r"[a-z0-9']+")


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Visit http://a.com now!!!", "visit now"),
        ("", ""),
        ("mail me@x.com today", "mail today"),
        ("see www.site.org, then", "see then"),
        ("Don't STOP", "don't stop"),
        ("'quoted'", "quoted"),
    ],
)
def test_clean(raw, expected):
    assert clean(raw) == expected


def test_restore():
    lex = {"plz": "please"}
    assert restore("plz reply", lex) == "please reply"
    assert restore("nothing here", lex) == "nothing here"
    assert restore("plz plz", lex) == "please please"


def test_restore_is_single_pass():
    assert restore("a b", {"a": "b", "b": "c"}) == "b c"


def test_tokenize():
    assert tokenize("héllo 你好 world") == [UNK, UNK, "world"]
    assert tokenize("good day") == ["good", "day"]
    words = " ".join(f"w{k}" for k in range(200))
    assert tokenize(words) == [f"w{k}" for k in range(128)]


def test_default_lexicon():
    lex = load_lexicon()
    assert len(lex) == 50
    assert lex["plz"] == "please"
    assert all(k == k.lower() and k != v for k, v in lex.items())


def test_lexicon_file(tmp_path):
    p = tmp_path / "lex.tsv"
    p.write_text("# comment\nplz\tplease\n\nthx\tthanks\n", encoding="utf-8")
    assert load_lexicon(p) == {"plz": "please", "thx": "thanks"}
    with pytest.raises(DataError, match=":2"):
        parse_lexicon("ok\tfine\nbroken line\n")
    with pytest.raises(DataError):
        parse_lexicon("same\tsame\n")
    with pytest.raises(DataError):
        parse_lexicon("Upper\tlower\n")


def test_lexicon_hash_is_order_free():
    assert lexicon_hash({"a": "b", "c": "d"}) == lexicon_hash({"c": "d", "a": "b"})
    assert lexicon_hash({"a": "b"}) != lexicon_hash({"a": "c"})


def test_golden_file():
    lex = load_lexicon()
    cases = json.loads(GOLDEN.read_text(encoding="utf-8"))
    assert len(cases) == 25
    for case in cases:
        got = preprocess(case["input"], lex)
        assert json.dumps(got, ensure_ascii=False) == json.dumps(case["tokens"], ensure_ascii=False), case["input"]


text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=300)
texty = st.lists(
    st.sampled_from(["plz", "http://x.io/a", "www.b.com", "me@x.com", "Hi!", "don't", "é", "...", "'", "a'b", "42"]),
    max_size=160,
).map(" ".join)


@given(st.one_of(text, texty))
@settings(max_examples=300)
def test_clean_idempotent(s):
    assert clean(clean(s)) == clean(s)


@given(st.one_of(text, texty))
@settings(max_examples=300)
def test_token_alphabet_and_length(s):
    toks = preprocess(s, load_lexicon())
    assert len(toks) <= MAX_TOKENS
    assert all(t == UNK or TOKEN.fullmatch(t) for t in toks)
    assert tokenize(" ".join(toks)) == toks
