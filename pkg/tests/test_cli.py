import json
import subprocess
import sys

import pytest

from memefuse.cli import main
from memefuse.synthetic import make_synthetic, write_synthetic

TINY = """\
text.h12=4
text.h3=4
text.dropout=0.2
fusion.d=8
image.c=2
image.m=3
image.size=16
image.proj=6
train.batch=20
train.epochs=2
train.lr=0.01
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    paths = write_synthetic(make_synthetic(n=40, seed=9), d)
    (d / "tiny.cfg").write_text(TINY, encoding="utf-8")
    paths["config"] = d / "tiny.cfg"
    paths["dir"] = d
    return paths


def train_args(ws, out, *extra):
    return ["--quiet", "train", "--data", str(ws["data"]), "--embeddings", str(ws["embeddings"]),
            "--sentences", str(ws["sentences"]), "--image-features", str(ws["image_features"]),
            "--config", str(ws["config"]), "--out", str(out), *extra]


@pytest.fixture(scope="module")
def model(workspace):
    out = workspace["dir"] / "model.bin"
    assert main(train_args(workspace, out)) == 0
    return out


def test_train_outputs(model, capsys):
    assert model.exists()
    hist = model.parent / "model.bin.history.csv"
    lines = hist.read_text().splitlines()
    assert len(lines) == 3 and "ensemble_dev_macro_f1" in lines[0]


def test_training_is_bitwise_reproducible(workspace, model, tmp_path):
    again = tmp_path / "again.bin"
    assert main(train_args(workspace, again)) == 0
    assert again.read_bytes() == model.read_bytes()


def test_seed_precedence(workspace, model, tmp_path, monkeypatch):
    monkeypatch.setenv("MEMEFUSE_SEED", "5")
    env_model = tmp_path / "env.bin"
    assert main(train_args(workspace, env_model)) == 0
    assert env_model.read_bytes() != model.read_bytes()
    flag_model = tmp_path / "flag.bin"
    assert main(train_args(workspace, flag_model, "--seed", "0")) == 0
    assert flag_model.read_bytes() == model.read_bytes()
    monkeypatch.setenv("MEMEFUSE_SEED", "x")
    assert main(train_args(workspace, tmp_path / "bad.bin")) == 2


def test_predict_and_eval(workspace, model, tmp_path, capsys):
    out = tmp_path / "pred.jsonl"
    common = ["--model", str(model), "--data", str(workspace["data"]),
              "--sentences", str(workspace["sentences"]), "--image-features", str(workspace["image_features"])]
    assert main(["--quiet", "predict", *common, "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 40
    assert all(abs(sum(r["probs"]) - 1.0) < 1e-12 for r in rows)
    capsys.readouterr()
    assert main(["--quiet", "eval", *common]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0.0 <= report["macro_f1"] <= 1.0


def test_eval_perfect_fixture(workspace, model, tmp_path, capsys):
    common = ["--model", str(model), "--sentences", str(workspace["sentences"]),
              "--image-features", str(workspace["image_features"])]
    pred = tmp_path / "pred.jsonl"
    assert main(["--quiet", "predict", *common, "--data", str(workspace["data"]), "--out", str(pred)]) == 0
    # relabel the data with the model's own predictions
    labels = {json.loads(l)["id"]: json.loads(l)["label"] for l in pred.read_text().splitlines()}
    rows = [json.loads(l) for l in workspace["data"].read_text().splitlines()]
    fixture = workspace["dir"] / "perfect.jsonl"
    fixture.write_text("".join(json.dumps({**r, "label": labels[r["id"]]}) + "\n" for r in rows))
    capsys.readouterr()
    assert main(["--quiet", "eval", *common, "--data", str(fixture)]) == 0
    report = json.loads(capsys.readouterr().out)
    present = {labels[k] for k in labels}
    assert all(report["f1"][k] == 1.0 for k in present)


def test_missing_embeddings_exit_3(workspace, tmp_path, capsys):
    ws = dict(workspace, embeddings=tmp_path / "missing.txt")
    assert main(train_args(ws, tmp_path / "m.bin")) == 3
    assert "missing.txt" in capsys.readouterr().err


def test_schema_mismatch_exit_2(workspace, model, tmp_path, capsys):
    rows = [json.loads(l) for l in workspace["data"].read_text().splitlines()]
    rows[3]["label"] = 7
    bad = tmp_path / "bad.jsonl"
    bad.write_text("".join(json.dumps(r) + "\n" for r in rows))
    code = main(["--quiet", "eval", "--model", str(model), "--data", str(bad),
                 "--sentences", str(workspace["sentences"]), "--image-features", str(workspace["image_features"])])
    assert code == 2
    assert "label 7" in capsys.readouterr().err


def test_duplicate_ids_rejected(workspace, tmp_path, capsys):
    lines = workspace["data"].read_text().splitlines()
    dup = tmp_path / "dup.jsonl"
    dup.write_text("\n".join(lines[:5] + [lines[1]]) + "\n")
    ws = dict(workspace, data=dup)
    assert main(train_args(ws, tmp_path / "m.bin")) == 3
    assert "dup.jsonl:6" in capsys.readouterr().err


def test_gridsearch_csv(workspace, tmp_path):
    grid = tmp_path / "grid.txt"
    grid.write_text("h3=4,6\nd=8,16\n")
    out = tmp_path / "grid.csv"
    args = ["--quiet", "gridsearch", "--grid", str(grid), "--data", str(workspace["data"]),
            "--embeddings", str(workspace["embeddings"]), "--sentences", str(workspace["sentences"]),
            "--image-features", str(workspace["image_features"]), "--config", str(workspace["config"]),
            "--out", str(out)]
    cfg = workspace["dir"] / "one.cfg"
    cfg.write_text(TINY + "ensemble.members=1:2,4:1\n")
    args[args.index(str(workspace["config"]))] = str(cfg)
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "h3,d,dev_macro_f1,epoch_of_best" and len(lines) == 5


def test_gradcheck_command():
    assert main(["--quiet", "gradcheck", "--seeds", "2", "--layers", "dense", "gru", "maxpool2"]) == 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "memefuse", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "predict", "eval", "gridsearch", "gradcheck"):
        assert name in proc.stdout
