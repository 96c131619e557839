import json

import numpy as np
import pytest

from memefuse.embeddings import (
    EmbeddingTable,
    load_embeddings,
    load_vectors,
    lookup,
    save_embeddings,
    sentence_vector,
    VectorStore,
)
from memefuse.errors import DataError, EmptyInputError
from memefuse.preprocess import UNK


def write(path, lines):
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def test_load_adds_unk_row(tmp_path):
    p = write(tmp_path / "e.txt", ["cat 1 2 3 4", "dog 5 6 7 8", "fish 0.5 0.25 -1 2"])
    t = load_embeddings(p)
    assert t.dim == 4 and t.matrix.shape == (4, 4)
    np.testing.assert_array_equal(t.matrix[t.unk_index], np.zeros(4))


def test_explicit_unk_not_duplicated(tmp_path):
    p = write(tmp_path / "e.txt", ["cat 1 2", "<unk> 9 9"])
    t = load_embeddings(p)
    assert t.matrix.shape == (2, 2)
    np.testing.assert_array_equal(lookup(t, [UNK]), [[9.0, 9.0]])


def test_768_columns_and_bad_line(tmp_path):
    good = " ".join(["0.1"] * 768)
    p = write(tmp_path / "e.txt", ["a " + good, "b " + good])
    assert load_embeddings(p).dim == 768
    p = write(tmp_path / "e.txt", ["a " + good, "b " + good, "c " + " ".join(["0.1"] * 767)])
    with pytest.raises(DataError, match=r"e\.txt:3"):
        load_embeddings(p)


def test_malformed_float(tmp_path):
    with pytest.raises(DataError, match=":2"):
        load_embeddings(write(tmp_path / "e.txt", ["a 1 2", "b 1 x"]))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.txt"):
        load_embeddings(tmp_path / "nope.txt")


def test_lookup_rows(tmp_path):
    p = write(tmp_path / "e.txt", ["cat 1 2", "dog 3 4"])
    t = load_embeddings(p)
    np.testing.assert_array_equal(lookup(t, ["dog"]), [[3.0, 4.0]])
    out = lookup(t, ["cat", "zebra", "dog", "cat"])
    np.testing.assert_array_equal(out, [[1, 2], [0, 0], [3, 4], [1, 2]])
    np.testing.assert_array_equal(lookup(t, [UNK]), np.zeros((1, 2)))
    with pytest.raises(EmptyInputError):
        lookup(t, [])


def test_row_order_does_not_matter(tmp_path):
    a = load_embeddings(write(tmp_path / "a.txt", ["x 1 1", "y 2 2", "z 3 3"]))
    b = load_embeddings(write(tmp_path / "b.txt", ["z 3 3", "x 1 1", "y 2 2"]))
    seq = ["y", "x", "q", "z"]
    np.testing.assert_array_equal(lookup(a, seq), lookup(b, seq))


def test_save_reload_bitwise(tmp_path, rng):
    t = EmbeddingTable.from_rows({f"w{k}": rng.normal((5,)) for k in range(7)})
    save_embeddings(t, tmp_path / "t.txt")
    back = load_embeddings(tmp_path / "t.txt")
    seq = [f"w{k}" for k in range(7)] + ["oov", UNK]
    assert lookup(back, seq).tobytes() == lookup(t, seq).tobytes()


def test_sentence_store_roundtrip(tmp_path, rng):
    vecs = {f"id{k}": rng.normal((6,)) for k in range(10)}
    p = tmp_path / "s.jsonl"
    p.write_text("".join(json.dumps({"id": k, "vec": v.tolist()}) + "\n" for k, v in vecs.items()))
    store = load_vectors(p)
    assert len(store) == 10
    for k, v in vecs.items():
        assert sentence_vector(store, k).tobytes() == v.tobytes()
    with pytest.raises(KeyError, match="missing"):
        sentence_vector(store, "missing")


def test_sentence_store_rejects_mixed_dims(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"id": "a", "vec": [1, 2]}\n{"id": "b", "vec": [1, 2, 3]}\n')
    with pytest.raises(DataError, match=":2"):
        load_vectors(p)
    store = VectorStore()
    store.add("a", [1.0])
    with pytest.raises(DataError):
        store.add("b", [1.0, 2.0])
