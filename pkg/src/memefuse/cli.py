"""Command-line entry point: ``memefuse {train,predict,eval,gridsearch,gradcheck}``.

Exit codes: 0 success, 1 gradient check failure, 2 configuration or schema
error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bundle import atomic_write, bundle_from_training, load_bundle, save_bundle
from .config import Config, load_config
from .data import load_dataset, prepare_inputs
from .embeddings import load_embeddings, load_vectors
from .errors import ConfigError, MemefuseError
from .fusion import predict_label
from .gradcheck import LAYER_CHECKS, run_gradient_suite
from .metrics import confusion, macro_f1
from .preprocess import load_lexicon
from .search import ensemble_evaluator, grid_search, load_grid
from .train import split_train_dev, train_ensemble

log = logging.getLogger("memefuse")

GRADCHECK_TOLERANCE = 1e-4


def _config(args) -> Config:
    cfg = load_config(getattr(args, "config", None))
    env = os.environ.get("MEMEFUSE_SEED")
    if env is not None:
        try:
            cfg.train.seed = int(env)
        except ValueError:
            raise ConfigError(f"MEMEFUSE_SEED must be an integer, got {env!r}") from None
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    return cfg.validate()


def _needs(cfg: Config) -> tuple[bool, bool, bool, bool]:
    members = cfg.ensemble.members
    return (
        any(i in (1, 2, 3) for i, _ in members),
        any(i == 4 for i, _ in members),
        any(j == 1 for _, j in members),
        any(j == 2 for _, j in members),
    )


def _inputs(records, cfg: Config, lexicon, table, args, need_labels: bool):
    tokens, sentence, pixels, image_vec = _needs(cfg)
    if sentence and not args.sentences:
        raise ConfigError("members with text extractor 4 need --sentences")
    if image_vec and not args.image_features:
        raise ConfigError("members with image extractor 2 need --image-features")
    return prepare_inputs(
        records,
        lexicon,
        table=table if tokens else None,
        sentences=load_vectors(args.sentences) if sentence else None,
        image_features=load_vectors(args.image_features) if image_vec else None,
        image_size=cfg.image.size if pixels else None,
        channels=cfg.image.channels,
        need_labels=need_labels,
    )


def _write_csv(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    atomic_write(path, buf.getvalue().encode("utf-8"))


def cmd_train(args) -> int:
    cfg = _config(args)
    lexicon = load_lexicon(args.lexicon)
    table = load_embeddings(args.embeddings)
    records = load_dataset(args.data, cfg.model.classes)
    inputs = _inputs(records, cfg, lexicon, table, args, need_labels=True)
    train, dev = split_train_dev(inputs, cfg.train.dev_fraction, cfg.train.seed)
    log.info("training %d members on %d records, %d held out", len(cfg.ensemble.members), len(train), len(dev))
    ensemble, history = train_ensemble(cfg, train, dev, progress=log.info)
    save_bundle(bundle_from_training(cfg, ensemble, table, lexicon, train), args.out)
    hist_path = Path(args.history) if args.history else Path(str(args.out) + ".history.csv")
    _write_csv(hist_path, history.rows())
    report = macro_f1(confusion(dev.labels, predict_label(ensemble.predict_proba(dev)), cfg.model.classes))
    print(json.dumps({"model": str(args.out), "history": str(hist_path), "dev": json.loads(report.to_json())},
                     sort_keys=True))
    return 0


def _bundle_inputs(args, need_labels: bool):
    bundle = load_bundle(args.model)
    cfg = bundle.config
    records = load_dataset(args.data)
    for r in records:
        if r.label is not None and r.label >= cfg.model.classes:
            raise ConfigError(f"record {r.id!r} has label {r.label}, model has {cfg.model.classes} classes")
    inputs = _inputs(records, cfg, bundle.lexicon, bundle.table, args, need_labels=need_labels)
    for name, have, want in (
        ("sentence", inputs.sentence, bundle.sentence_dim),
        ("image feature", inputs.image_vec, bundle.image_dim),
    ):
        if have is not None and have.shape[1] != want:
            raise ConfigError(f"{name} vectors have dim {have.shape[1]}, model expects {want}")
    return bundle, inputs


def cmd_predict(args) -> int:
    bundle, inputs = _bundle_inputs(args, need_labels=False)
    probs = bundle.ensemble.predict_proba(inputs) if len(inputs) else np.zeros((0, bundle.config.model.classes))
    lines = [
        json.dumps({"id": rid, "probs": [float(v) for v in p], "label": int(predict_label(p))})
        for rid, p in zip(inputs.ids, probs)
    ]
    atomic_write(args.out, "".join(l + "\n" for l in lines).encode("utf-8"))
    log.info("wrote %d predictions to %s", len(lines), args.out)
    return 0


def cmd_eval(args) -> int:
    bundle, inputs = _bundle_inputs(args, need_labels=True)
    pred = predict_label(bundle.ensemble.predict_proba(inputs))
    report = macro_f1(confusion(inputs.labels, pred, bundle.config.model.classes))
    log.info("\n%s", report.to_table())
    print(report.to_json())
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _config(args)
    grid = load_grid(args.grid)
    lexicon = load_lexicon(args.lexicon)
    table = load_embeddings(args.embeddings)
    records = load_dataset(args.data, cfg.model.classes)
    inputs = _inputs(records, cfg, lexicon, table, args, need_labels=True)
    train, dev = split_train_dev(inputs, cfg.train.dev_fraction, cfg.train.seed)
    result = grid_search(grid, cfg, ensemble_evaluator(train, dev))
    atomic_write(args.out, result.to_csv().encode("utf-8"))
    print(json.dumps({"best": result.best, "runs": len(result.rows), "table": str(args.out)}, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    seeds = range(args.seed or 0, (args.seed or 0) + args.seeds)
    worst = run_gradient_suite(seeds, args.layers)
    failed = False
    for name, err in worst.items():
        ok = err <= GRADCHECK_TOLERANCE
        failed |= not ok
        print(f"{name:<16} max_rel_error={err:.3e}  {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memefuse", description="Parallel-channel meme sentiment ensemble")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs_opts(p, with_embeddings: bool):
        p.add_argument("--data", required=True, help="dataset JSON Lines")
        if with_embeddings:
            p.add_argument("--embeddings", required=True, help="word vector text file")
            p.add_argument("--lexicon", help="replacement lexicon (default: bundled list)")
        p.add_argument("--sentences", help="sentence vector JSON Lines")
        p.add_argument("--image-features", help="precomputed image feature JSON Lines")

    p = sub.add_parser("train", help="train the ensemble and write a model bundle")
    inputs_opts(p, True)
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--out", required=True, help="model bundle path")
    p.add_argument("--history", help="per-epoch history CSV (default: <out>.history.csv)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    for name, func, doc in (("predict", cmd_predict, "write per-record predictions"),
                            ("eval", cmd_eval, "print macro-F1 report")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--model", required=True)
        inputs_opts(p, False)
        if name == "predict":
            p.add_argument("--out", required=True, help="predictions JSON Lines")
        p.set_defaults(func=func)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search")
    p.add_argument("--grid", required=True, help="name=v1,v2 lines over h12,h3,r,d,c,m,l,p")
    inputs_opts(p, True)
    p.add_argument("--config", help="base configuration")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, help="first seed (default 0)")
    p.add_argument("--layers", nargs="*", choices=sorted(LAYER_CHECKS))
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except MemefuseError as exc:
        print(f"memefuse: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
