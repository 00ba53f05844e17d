import csv
import json
import shutil
from pathlib import Path

import pytest

from leanppm.cli import main
from leanppm.eventlog import write_csv
from leanppm.synthetic import deterministic_log

GOLDEN = Path(__file__).parent / "golden"
FAST = ["--model-type", "lstm_light", "--max-epochs", "2", "--patience", "2"]


@pytest.fixture(scope="module")
def log_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "mini.csv"
    write_csv(deterministic_log(40, seed=3), path)
    return path


def test_validate_prints_statistics(log_csv, capsys):
    assert main(["validate", "--data", str(log_csv)]) == 0
    out = capsys.readouterr().out
    assert "traces: 40" in out and "events: 280" in out
    assert "activities: 6" in out and "roles: 4" in out
    assert "split: 28/4/8" in out


def test_exit_codes(log_csv, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("case_id,activity\nc,a\n")
    assert main(["validate", "--data", str(bad)]) == 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert main(["validate", "--config", str(cfg), "--data", str(log_csv)]) == 2
    assert main(["train", "--data", str(log_csv), "--out", str(tmp_path / "x"),
                 "--model-type", "lstm", "--hidden-size", "7"]) == 2
    assert "error:" in capsys.readouterr().err


def test_train_twice_is_byte_identical(log_csv, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": str(log_csv), "model_type": "lstm_light",
                               "hidden_size": 10, "max_epochs": 2, "batch_size": 16}))
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "config.json").read_bytes() == cfg.read_bytes()
    for name in ("seed.txt", "vocab.json", "normalizer.json", "describe.tsv", "history.csv"):
        assert (a / name).exists()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_grid_limit_rows_are_prefix_of_longer_run(log_csv, tmp_path):
    common = ["gridsearch", "--data", str(log_csv), *FAST]
    assert main([*common, "--grid-limit", "3", "--out", str(tmp_path / "g3")]) == 0
    assert main([*common, "--grid-limit", "5", "--out", str(tmp_path / "g5")]) == 0
    short, longer = _rows(tmp_path / "g3" / "results.csv"), _rows(tmp_path / "g5" / "results.csv")
    assert len(short) == 4 and len(longer) == 6
    assert short == longer[:4]
    for i in range(3):
        name = f"checkpoints/cand_{i:04d}.ckpt"
        assert (tmp_path / "g3" / name).read_bytes() == (tmp_path / "g5" / name).read_bytes()


def test_select_and_standalone_evaluate(log_csv, tmp_path):
    grid = tmp_path / "grid"
    assert main(["gridsearch", "--data", str(log_csv), *FAST, "--grid-limit", "3",
                 "--out", str(grid)]) == 0
    assert main(["select", "--grid-dir", str(grid)]) == 0
    scores = _rows(grid / "scores.csv")
    assert sum(int(r[-1]) for r in scores[1:]) == 1
    assert min(float(r[5]) for r in scores[1:]) <= 1.0
    best = grid / "best"
    assert main(["evaluate", "--run-dir", str(best)]) == 0
    moved = tmp_path / "elsewhere"
    shutil.copytree(best, moved)
    (moved / "metrics.json").unlink()
    (moved / "predictions.csv").unlink()
    assert main(["evaluate", "--run-dir", str(moved)]) == 0
    assert (moved / "metrics.json").read_bytes() == (best / "metrics.json").read_bytes()
    assert (moved / "predictions.csv").read_bytes() == (best / "predictions.csv").read_bytes()


def test_preprocess_writes_caches(log_csv, tmp_path):
    out = tmp_path / "pre"
    assert main(["preprocess", "--data", str(log_csv), "--out", str(out)]) == 0
    for part in ("train", "validation", "test"):
        assert (out / f"prefix_{part}.npz").exists()
        assert (out / f"ngram5_{part}.npz").exists()
    assert json.loads((out / "normalizer.json").read_text())["std"]


def _fake_run(root, model, params, metrics, history=None):
    d = root / model
    d.mkdir()
    keys = ("nap_f1", "nrp_f1", "nwtp_mae", "ndp_mae", "rtp_mae")
    (d / "metrics.json").write_text(json.dumps(
        {"log": "mini", "model_type": model, "params": params,
         "metrics": dict(zip(keys, metrics))}))
    if history:
        (d / "history.csv").write_text(history)
    return d


def test_report_matches_golden(tmp_path):
    hist = ("epoch,train_loss,val_loss,val_activity,val_role,val_time,seconds\n"
            "1,3.0,2.5,1.0,1.0,0.5,0.12\n2,2.0,2.25,0.75,1.0,0.5,0.11\n")
    runs = [
        _fake_run(tmp_path, "lstm_light", 2000, (0.775, 0.88, 4.5, 1.25, 25.75)),
        _fake_run(tmp_path, "mtlformer", 10000, (0.84, 0.93, 3.32, 1.0, 24.41), hist),
        _fake_run(tmp_path, "lstm", 8000, (0.8, 0.91, 4.0, 1.25, 25.0)),
        _fake_run(tmp_path, "mtlformer_light", 1500, (0.8125, 0.9, 3.5, 1.0, 24.5)),
    ]
    out = tmp_path / "report"
    assert main(["report", "--runs", *map(str, runs), "--out", str(out)]) == 0
    assert (out / "results_table.csv").read_text() == (GOLDEN / "results_table.csv").read_text()
    assert (out / "param_reduction.csv").read_text() == (GOLDEN / "param_reduction.csv").read_text()
    assert ((out / "loss_curves" / "mini__mtlformer.csv").read_text()
            == (GOLDEN / "loss_curve_mtlformer.csv").read_text())
    assert (out / "figures" / "mini_val_loss.png").stat().st_size > 0
    assert (out / "figures" / "mini_params.png").stat().st_size > 0


def test_report_without_figures(tmp_path):
    run = _fake_run(tmp_path, "lstm", 10, (1, 1, 0, 0, 0))
    assert main(["report", "--runs", str(run), "--out", str(tmp_path / "r"), "--no-figures"]) == 0
    assert not (tmp_path / "r" / "figures").exists()


def test_reference_page_lists_every_subcommand(capsys):
    assert main(["reference"]) == 0
    out = capsys.readouterr().out
    for cmd in ("validate", "preprocess", "train", "gridsearch", "select", "evaluate", "report"):
        assert f"## `leanppm {cmd}`" in out
