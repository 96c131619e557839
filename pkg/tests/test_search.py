import pytest

from memefuse.config import Config
from memefuse.errors import ConfigError
from memefuse.search import ensemble_evaluator, grid_search, parse_grid
from memefuse.synthetic import as_inputs, make_synthetic
from memefuse.train import split_train_dev

from helpers import tiny_config


def table_evaluator(scores):
    seen = []

    def evaluate(cfg):
        key = (cfg.text.h12, cfg.fusion.d)
        seen.append(key)
        return scores[key], 1

    return evaluate, seen


def test_runs_every_cell_in_order():
    scores = {(4, 8): 0.5, (4, 16): 0.7, (6, 8): 0.6, (6, 16): 0.4}
    evaluate, seen = table_evaluator(scores)
    result = grid_search({"h12": [4, 6], "d": [8, 16]}, Config(), evaluate)
    assert seen == [(4, 8), (4, 16), (6, 8), (6, 16)]
    assert len(result.rows) == 4
    assert result.best["dev_macro_f1"] == max(r["dev_macro_f1"] for r in result.rows) == 0.7
    assert (result.best["h12"], result.best["d"]) == (4, 16)
    lines = result.to_csv().splitlines()
    assert lines[0] == "h12,d,dev_macro_f1,epoch_of_best" and len(lines) == 5


def test_tie_break_is_lexicographic():
    scores = {(6, 8): 0.9, (4, 16): 0.9, (4, 8): 0.1, (6, 16): 0.9}
    evaluate, _ = table_evaluator(scores)
    result = grid_search({"h12": [6, 4], "d": [16, 8]}, Config(), evaluate)
    assert (result.best["h12"], result.best["d"]) == (4, 16)


def test_singleton_grid_equals_plain_run():
    data = as_inputs(make_synthetic(n=40, seed=1))
    tr, dev = split_train_dev(data, 0.25, 0)
    cfg = tiny_config(ensemble__members="4:2", train__epochs=3)
    evaluate = ensemble_evaluator(tr, dev)
    direct = evaluate(cfg.copy())
    result = grid_search({"d": [cfg.fusion.d]}, cfg, evaluate)
    assert len(result.rows) == 1
    assert (result.best["dev_macro_f1"], result.best["epoch_of_best"]) == direct


@pytest.mark.parametrize("grid", [{"zz": [1]}, {"h12": []}, {}])
def test_bad_grids(grid):
    with pytest.raises(ConfigError):
        grid_search(grid, Config(), lambda cfg: (0.0, 1))


def test_parse_grid():
    assert parse_grid("# c\nh12=4, 6\nr=0.2\n") == {"h12": [4, 6], "r": [0.2]}
    with pytest.raises(ConfigError, match=":2:"):
        parse_grid("h12=4\nnonsense\n")
    with pytest.raises(ConfigError, match="'q'"):
        parse_grid("q=1\n")
