import json

import numpy as np
import pytest

from memefuse.data import load_dataset, prepare_inputs
from memefuse.embeddings import EmbeddingTable
from memefuse.errors import DataError
from memefuse.image import save_ppm


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_duplicate_id_names_line(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "text": "x"}, {"id": "b", "text": "y"}, {"id": "a", "text": "z"}])
    with pytest.raises(DataError, match=r"d\.jsonl:3: duplicate id 'a'"):
        load_dataset(p)


@pytest.mark.parametrize("label", [3, -1, "1", True, 1.0])
def test_bad_labels(tmp_path, label):
    p = write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "text": "x", "label": label}])
    with pytest.raises(DataError, match=":1:"):
        load_dataset(p, classes=3)


def test_malformed_line_and_missing_file(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"id": "a"}\n{oops\n', encoding="utf-8")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(p)
    with pytest.raises(DataError, match="nope.jsonl"):
        load_dataset(tmp_path / "nope.jsonl")


def test_relative_images_and_preparation(tmp_path):
    img = np.zeros((4, 6, 3))
    img[0, 0] = 1.0
    save_ppm(tmp_path / "pic.ppm", img)
    p = write_jsonl(tmp_path / "d.jsonl", [
        {"id": "a", "text": "U r great!!", "image": "pic.ppm", "label": 2},
        {"id": "b", "text": "...", "image": "pic.ppm", "label": 0},
    ])
    recs = load_dataset(p, classes=3)
    assert recs[0].image == str(tmp_path / "pic.ppm")
    table = EmbeddingTable.from_rows({"you": [1.0, 0.0], "great": [0.0, 1.0]})
    inp = prepare_inputs(recs, {"u": "you"}, table=table, image_size=8)
    assert inp.tokens[0].shape == (3, 2)
    np.testing.assert_array_equal(inp.tokens[0][0], [1.0, 0.0])
    assert inp.tokens[1].shape == (1, 2) and not inp.tokens[1].any()
    assert inp.pixels.shape == (2, 8, 8, 3)
    np.testing.assert_array_equal(inp.labels, [2, 0])
    b = inp.batch([1, 0])
    assert b["tokens"].shape == (2, 3, 2)
    np.testing.assert_array_equal(b["mask"], [[1, 0, 0], [1, 1, 1]])


def test_unlabelled_records(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "text": "hi"}])
    table = EmbeddingTable.from_rows({"hi": [1.0]})
    with pytest.raises(DataError, match="no label"):
        prepare_inputs(load_dataset(p), {}, table=table)
    assert prepare_inputs(load_dataset(p), {}, table=table, need_labels=False).labels is None
