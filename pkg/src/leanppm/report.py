"""Merge evaluated runs into Tables-2/3-style CSVs, loss curves and figures."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .models import MODEL_TYPES
from .training import TrainHistory

TABLE_COLUMNS = ("log", "model", "NAP", "NRP", "NWTP", "NDP", "RTP", "Parameters")
REDUCTION_PAIRS = (("mtlformer", "mtlformer_light"), ("mtlformer", "transformer_simple"),
                   ("lstm", "lstm_light"))


def load_run(run_dir):
    run_dir = Path(run_dir)
    metrics = json.loads((run_dir / "metrics.json").read_text())
    hist_path = run_dir / "history.csv"
    history = TrainHistory.from_csv(hist_path.read_text()) if hist_path.exists() else TrainHistory()
    return {**metrics, "history": history, "dir": str(run_dir)}


def _order(run):
    mt = run["model_type"]
    return (run["log"], MODEL_TYPES.index(mt) if mt in MODEL_TYPES else len(MODEL_TYPES), mt)


def table_rows(runs):
    rows = []
    for r in sorted(runs, key=_order):
        m = r["metrics"]
        rows.append([r["log"], r["model_type"], f"{m['nap_f1']:.4f}", f"{m['nrp_f1']:.4f}",
                     f"{m['nwtp_mae']:.4f}", f"{m['ndp_mae']:.4f}", f"{m['rtp_mae']:.4f}",
                     str(r["params"])])
    return rows


def reduction_rows(runs):
    by_key = {(r["log"], r["model_type"]): r for r in runs}
    rows = []
    for log_name in sorted({r["log"] for r in runs}):
        for full, small in REDUCTION_PAIRS:
            if (log_name, full) in by_key and (log_name, small) in by_key:
                pf, ps = by_key[log_name, full]["params"], by_key[log_name, small]["params"]
                rows.append([log_name, full, small, str(pf), str(ps), f"{100.0 * (1 - ps / pf):.1f}"])
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report(run_dirs, out_dir, figures=True):
    """Write results_table.csv, param_reduction.csv, loss_curves/*.csv and figures/*.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [load_run(d) for d in run_dirs]
    _write_csv(out / "results_table.csv", TABLE_COLUMNS, table_rows(runs))
    _write_csv(out / "param_reduction.csv",
               ("log", "full_model", "reduced_model", "full_params", "reduced_params",
                "reduction_pct"), reduction_rows(runs))
    curves = out / "loss_curves"
    curves.mkdir(exist_ok=True)
    for r in runs:
        h = r["history"]
        _write_csv(curves / f"{r['log']}__{r['model_type']}.csv",
                   ("epoch", "train_loss", "val_loss", "val_activity", "val_role", "val_time"),
                   [[e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.val_activity),
                     repr(e.val_role), repr(e.val_time)] for e in h.epochs])
    if figures:
        from .plotting import plot_loss_curves, plot_param_counts

        figdir = out / "figures"
        figdir.mkdir(exist_ok=True)
        for log_name in sorted({r["log"] for r in runs}):
            mine = sorted((r for r in runs if r["log"] == log_name), key=_order)
            plot_loss_curves({r["model_type"]: r["history"] for r in mine},
                             figdir / f"{log_name}_val_loss.png", title=log_name)
            plot_param_counts([(r["model_type"], r["model_type"], r["params"]) for r in mine],
                              figdir / f"{log_name}_params.png", title=log_name)
    return runs
