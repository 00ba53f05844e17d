"""leanppm: lightweight multi-task next-event and time prediction.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 training error,
5 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import models as M
from .errors import ConfigError, PPMError
from .eventlog import Vocab, parse_csv, split_chronological
from .evaluation import (DEFAULT_LAMBDA, metrics_from_arrays, prediction_arrays, select_model,
                         write_prediction_dump)
from .features import (Normalizer, add_boundaries, build_ngram_samples, build_prefix_samples,
                       prepare, save_samples, vocab_hash)
from .models import MODEL_TYPES, ModelConfig
from .training import TrainConfig, grid_search, run_candidate

log = logging.getLogger("leanppm")

CHECKPOINT = "model.ckpt"


@dataclass
class RunConfig:
    """Everything a run needs; serialised as a flat JSON document."""
    data: str = ""
    case_id_col: str = "case_id"
    activity_col: str = "activity"
    role_col: str = "role"
    start_col: str = "start_timestamp"
    end_col: str = "end_timestamp"
    log_name: str = ""
    model_type: str = "transformer_simple"
    seed: int = 42
    out: str = ""
    lambda_: float = DEFAULT_LAMBDA
    grid_limit: int | None = None
    jobs: int = 1
    f1_mode: str = "weighted"
    selection_loss: str = "auto"
    # explicit model / training config for `train`
    embed_dim: int = 16
    heads: int = 1
    ff_dim: int = 32
    encoder_layers: int = 1
    dropout: float = 0.1
    hidden_size: int = 50
    ngram: int = 5
    learning_rate: float = 6e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    extra: dict = field(default_factory=dict)

    def column_map(self):
        return {"case_id": self.case_id_col, "activity": self.activity_col, "role": self.role_col,
                "start_timestamp": self.start_col, "end_timestamp": self.end_col}

    def model_config(self):
        return ModelConfig(self.model_type, self.embed_dim, self.heads, self.ff_dim,
                           self.encoder_layers, self.dropout, self.hidden_size, self.ngram)

    def train_config(self):
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs, self.patience,
                           self.seed)

    def name(self):
        return self.log_name or (Path(self.data).stem if self.data else "log")

    def to_json(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        d["lambda"] = d.pop("lambda_")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_mapping(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"extra"}


def resolve_config(args):
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a flat JSON object")
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            base["lambda" if key == "lambda_" else key] = val
    rc = RunConfig.from_mapping(base)
    if rc.model_type not in MODEL_TYPES:
        raise ConfigError(f"model_type must be one of {MODEL_TYPES}")
    return rc


def _prepare_out(rc, args):
    if not rc.out:
        raise ConfigError("--out is required")
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    if getattr(args, "config", None):
        shutil.copyfile(args.config, out / "config.json")
    (out / "run_config.json").write_text(rc.to_json())
    (out / "seed.txt").write_text(f"{rc.seed}\n")
    return out


def _load(rc):
    if not rc.data:
        raise ConfigError("--data is required")
    elog = parse_csv(rc.data, rc.column_map())
    return elog, prepare(split_chronological(elog))


def _write_common(out, prepared):
    vocab = {"activity": prepared.split.train.activity_vocab.to_list(),
             "role": prepared.split.train.role_vocab.to_list()}
    (out / "vocab.json").write_text(json.dumps(vocab, indent=1, ensure_ascii=False) + "\n")
    (out / "normalizer.json").write_text(json.dumps(prepared.normalizer.to_dict(), indent=1,
                                                    sort_keys=True) + "\n")


# ----------------------------------------------------------------- commands

def cmd_validate(args):
    rc = resolve_config(args)
    elog = parse_csv(rc.data, rc.column_map())
    rep = elog.report
    split = split_chronological(elog) if len(elog) >= 3 else None
    lines = [f"log: {rc.name()}", f"traces: {rep.traces}", f"events: {rep.events}",
             f"activities: {rep.activities}", f"roles: {rep.roles}", f"rows: {rep.rows}",
             f"dropped_negative_duration: {rep.dropped_negative_duration}",
             f"activity_vocab_size: {len(elog.activity_vocab)}",
             f"role_vocab_size: {len(elog.role_vocab)}"]
    if split:
        lines.append(f"split: {len(split.train)}/{len(split.validation)}/{len(split.test)}")
    print("\n".join(lines))
    return 0


def cmd_preprocess(args):
    rc = resolve_config(args)
    out = _prepare_out(rc, args)
    _, prepared = _load(rc)
    _write_common(out, prepared)
    acts, roles = prepared.split.train.activity_vocab, prepared.split.train.role_vocab
    base_meta = {"normalizer": prepared.normalizer.to_dict(), "activity_vocab": vocab_hash(acts),
                 "role_vocab": vocab_hash(roles)}
    for part in ("train", "validation", "test"):
        part_log = getattr(prepared.split, part)
        save_samples(out / f"prefix_{part}.npz",
                     build_prefix_samples(part_log, prepared.normalizer, prepared.max_len),
                     {**base_meta, "encoding": "prefix", "width": prepared.max_len})
        for g in M.LSTM_GRID["ngram"]:
            save_samples(out / f"ngram{g}_{part}.npz",
                         build_ngram_samples(part_log, prepared.normalizer, g),
                         {**base_meta, "encoding": "ngram", "width": g})
    print(f"max_len: {prepared.max_len}")
    print(f"wrote samples to {out}")
    return 0


def _write_result(out, res, history_name="history.csv", ckpt_name=CHECKPOINT):
    if res.history is not None:
        (out / history_name).write_text(res.history.to_csv())
    if res.state is not None:
        (out / ckpt_name).write_bytes(res.state)


def cmd_train(args):
    rc = resolve_config(args)
    out = _prepare_out(rc, args)
    _, prepared = _load(rc)
    _write_common(out, prepared)
    mc, tc = rc.model_config(), rc.train_config()
    mc.validate()
    res = run_candidate(0, mc, tc, prepared, rc.seed)
    if res.status != "ok":
        from .errors import TrainingError
        raise TrainingError(res.error)
    _write_result(out, res)
    model, _ = M.load_model(out / CHECKPOINT)
    (out / "describe.tsv").write_text(M.describe_text(model) + "\n")
    print(f"params: {res.param_count}")
    print(f"best_epoch: {res.history.best_epoch}")
    print(f"best_val_loss: {res.history.best_validation_loss!r}")
    return 0


RESULT_COLUMNS = ("index", "model_type", "embed_dim", "heads", "ff_dim", "encoder_layers",
                  "dropout", "hidden_size", "ngram", "learning_rate", "batch_size", "seed",
                  "param_count", "best_epoch", "best_val_loss", "best_val_raw", "status", "error")


def _result_row(r):
    mc, tc = r.model_config, r.train_config
    best_epoch = r.history.best_epoch if r.history else -1
    return [r.index, mc.model_type, mc.embed_dim, mc.heads, mc.ff_dim, mc.encoder_layers,
            mc.dropout, mc.hidden_size, mc.ngram, tc.learning_rate, tc.batch_size, r.seed,
            r.param_count, best_epoch, repr(r.best_val_loss), repr(r.best_val_raw), r.status,
            r.error]


def cmd_gridsearch(args):
    rc = resolve_config(args)
    out = _prepare_out(rc, args)
    _, prepared = _load(rc)
    _write_common(out, prepared)
    (out / "histories").mkdir(exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    base = TrainConfig(max_epochs=rc.max_epochs, patience=rc.patience, seed=rc.seed)

    def progress(r):
        log.info("candidate %d: %s params=%d best=%s", r.index, r.status, r.param_count,
                 r.best_val_loss)
        _write_result(out, r, f"histories/cand_{r.index:04d}.csv",
                      f"checkpoints/cand_{r.index:04d}.ckpt")

    results = grid_search(rc.model_type, prepared, grid_limit=rc.grid_limit,
                          global_seed=rc.seed, base=base, jobs=rc.jobs, progress=progress)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow(_result_row(r))
    ok = sum(r.status == "ok" for r in results)
    print(f"candidates: {len(results)} ok: {ok} failed: {len(results) - ok}")
    return 0


@dataclass
class _Row:
    """A results.csv row viewed through the GridResult attributes select_model needs."""
    index: int
    param_count: int
    best_val_loss: float
    best_val_raw: float
    status: str


def cmd_select(args):
    grid = Path(args.grid_dir)
    rc = RunConfig.from_mapping(json.loads((grid / "run_config.json").read_text()))
    lam = args.lambda_ if args.lambda_ is not None else rc.lambda_
    with open(grid / "results.csv", newline="") as fh:
        rows = [_Row(int(r["index"]), int(r["param_count"]), float(r["best_val_loss"]),
                     float(r["best_val_raw"]), r["status"]) for r in csv.DictReader(fh)]
    sel = select_model(rows, lam, loss=args.selection_loss or rc.selection_loss)
    with open(grid / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "params", "val_loss", "p_M", "l_M", "S_M", "selected"))
        for cand, s in zip(sel.candidates, sel.scores):
            w.writerow((cand.index, s.params, repr(s.val_loss), repr(s.p), repr(s.ell),
                        repr(s.score), int(cand is sel.chosen)))
    best = grid / "best"
    best.mkdir(exist_ok=True)
    idx = sel.chosen.index
    shutil.copyfile(grid / "checkpoints" / f"cand_{idx:04d}.ckpt", best / CHECKPOINT)
    shutil.copyfile(grid / "histories" / f"cand_{idx:04d}.csv", best / "history.csv")
    for name in ("run_config.json", "vocab.json", "normalizer.json", "seed.txt"):
        if (grid / name).exists():
            shutil.copyfile(grid / name, best / name)
    print(f"selected: {idx} (loss={sel.loss_kind}, lambda={lam})")
    return 0


def cmd_evaluate(args):
    run = Path(args.run_dir)
    rc = RunConfig.from_mapping(json.loads((run / "run_config.json").read_text()))
    if args.data:
        rc.data = args.data
    f1_mode = args.f1_mode or rc.f1_mode
    model, meta = M.load_model(run / CHECKPOINT)
    norm = Normalizer.from_dict(meta["normalizer"])
    acts, roles = Vocab.from_list(meta["activity_vocab"]), Vocab.from_list(meta["role_vocab"])
    elog = parse_csv(rc.data, rc.column_map())
    split = split_chronological(elog)
    part = add_boundaries(getattr(split, args.part))
    builder = build_prefix_samples if M.family(model.config.model_type) == "transformer" \
        else build_ngram_samples
    samples = builder(part, norm, model.width, acts, roles)
    if not samples:
        from .errors import EmptyTestSet
        raise EmptyTestSet()
    arr = prediction_arrays(model, samples, norm)
    metrics = metrics_from_arrays(arr, model.n_activities, model.n_roles, f1_mode)
    write_prediction_dump(run / "predictions.csv", samples, arr)
    payload = {"log": rc.name(), "model_type": model.config.model_type,
               "params": model.count_params(), "part": args.part, "f1_mode": f1_mode,
               "metrics": metrics.to_dict()}
    (run / "metrics.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    for k, v in metrics.to_dict().items():
        print(f"{k}: {v}")
    return 0


def cmd_report(args):
    from .report import write_report

    runs = write_report(args.runs, args.out, figures=not args.no_figures)
    print(f"merged {len(runs)} runs into {args.out}")
    return 0


def cmd_synth(args):
    from .eventlog import write_csv
    from .synthetic import deterministic_log

    write_csv(deterministic_log(args.traces, seed=args.seed if args.seed is not None else 0),
              args.path)
    print(f"wrote {args.path}")
    return 0


def cmd_reference(args):
    parser = build_parser()
    print("# leanppm command reference\n")
    print("Config files are flat JSON objects whose keys are the long flag names with")
    print("dashes replaced by underscores (`--grid-limit` -> `grid_limit`, `--lambda` ->")
    print("`lambda`). Explicit flags override config-file values.\n")
    for name, sub in parser._subparsers._group_actions[0].choices.items():
        print(f"## `leanppm {name}`\n\n```\n{sub.format_help().rstrip()}\n```\n")
    return 0


# ----------------------------------------------------------------- parser

def _data_flags(p):
    p.add_argument("--config", help="flat JSON config file; copied verbatim into --out")
    p.add_argument("--data", help="event-log CSV")
    p.add_argument("--log-name", dest="log_name", help="label used in reports (default: file stem)")
    p.add_argument("--case-col", dest="case_id_col")
    p.add_argument("--activity-col", dest="activity_col")
    p.add_argument("--role-col", dest="role_col")
    p.add_argument("--start-col", dest="start_col")
    p.add_argument("--end-col", dest="end_col")
    p.add_argument("--seed", type=int, help="global seed (default 42)")


def _train_flags(p):
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="leanppm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a log and print dataset statistics")
    _data_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("preprocess", help="split, normalise and cache encoded samples")
    _data_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one explicit configuration")
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--out")
    p.add_argument("--model-type", dest="model_type", choices=MODEL_TYPES)
    for flag, typ in (("embed-dim", int), ("heads", int), ("ff-dim", int),
                      ("encoder-layers", int), ("dropout", float), ("hidden-size", int),
                      ("ngram", int), ("learning-rate", float), ("batch-size", int)):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="train every grid candidate of a model type")
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--out")
    p.add_argument("--model-type", dest="model_type", choices=MODEL_TYPES)
    p.add_argument("--grid-limit", dest="grid_limit", type=int,
                   help="train only the first N candidates")
    p.add_argument("--jobs", type=int, help="candidates trained concurrently (default 1)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="stored for `select`")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("select", help="score grid candidates and export the chosen model")
    p.add_argument("--grid-dir", dest="grid_dir", required=True)
    p.add_argument("--lambda", dest="lambda_", type=float, help="loss weight (default 2)")
    p.add_argument("--selection-loss", dest="selection_loss",
                   choices=("auto", "combined", "raw"))
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="task metrics and per-sample dump for a run directory")
    p.add_argument("--run-dir", dest="run_dir", required=True)
    p.add_argument("--data", help="override the dataset recorded in the run")
    p.add_argument("--part", choices=("train", "validation", "test"), default="test")
    p.add_argument("--f1-mode", dest="f1_mode", choices=("weighted", "macro"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge evaluated runs into tables, curves and figures")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write the deterministic synthetic log as CSV")
    p.add_argument("path")
    p.add_argument("--traces", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reference", help="print this command reference as markdown")
    p.set_defaults(func=cmd_reference)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PPMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if isinstance(exc, OSError) else 5
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
