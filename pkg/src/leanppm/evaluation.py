"""Task metrics, the composite parameter/loss score, and per-type model selection."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import (AllCandidatesFailed, EmptyCandidateSet, EmptyTestSet, IndexOutOfRange,
                     LengthMismatch, NonPositiveLoss)
from .features import TARGET_FEATURES, Batch, collate
from .models import predict_arrays

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
DEFAULT_LAMBDA = 2.0


@dataclass(frozen=True)
class TaskMetrics:
    nap_f1: float
    nrp_f1: float
    nwtp_mae: float
    ndp_mae: float
    rtp_mae: float
    n_samples: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CandidateScore:
    index: int
    params: int
    val_loss: float
    p: float
    ell: float
    score: float


def f1_score(predictions, targets, classes, mode="weighted"):
    """F1 averaged over classes.

    ``weighted``: per-class F1 weighted by target support (classes absent from
    the targets get weight 0). ``macro``: unweighted mean over classes seen in
    either predictions or targets.
    """
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(targets, dtype=np.int64)
    if p.shape != t.shape:
        raise LengthMismatch(len(p), len(t))
    if p.size == 0:
        return 0.0
    hi = max(p.max(), t.max())
    if hi >= classes or min(p.min(), t.min()) < 0:
        raise IndexOutOfRange(int(hi), classes)
    tp = np.bincount(t[p == t], minlength=classes)
    pred_n = np.bincount(p, minlength=classes)
    true_n = np.bincount(t, minlength=classes)
    # exact rational arithmetic, rounded once, so the score does not depend on summation order
    f1 = [Fraction(2 * int(a), int(b + c)) if b + c else Fraction(0)
          for a, b, c in zip(tp, pred_n, true_n)]
    if mode == "weighted":
        return float(sum(f * int(n) for f, n in zip(f1, true_n)) / int(true_n.sum()))
    if mode == "macro":
        seen = [f for f, b, c in zip(f1, pred_n, true_n) if b + c]
        return float(sum(seen) / len(seen))
    raise ValueError(f"unknown f1 mode {mode!r}")


def mae_days(preds_normalized, targets_normalized, norm, feature):
    """Mean |invert(pred) - invert(target)| in days for one time feature."""
    p = np.asarray(preds_normalized, dtype=float)
    t = np.asarray(targets_normalized, dtype=float)
    if p.shape != t.shape:
        raise LengthMismatch(len(p), len(t))
    return float(np.abs(norm.invert(p, feature) - norm.invert(t, feature)).mean() / SECONDS_PER_DAY)


def _best_index(params, losses):
    """argmin loss; ties -> fewer params -> lower index."""
    return min(range(len(losses)), key=lambda i: (losses[i], params[i], i))


def composite_scores(candidates, lam=DEFAULT_LAMBDA):
    """Score (params, val_loss) pairs against the lowest-loss candidate M*.

    p = params / params(M*), ell = (loss - loss(M*)) / loss(M*),
    score = p + lam * ell.
    """
    if not candidates:
        raise EmptyCandidateSet()
    params = [int(c[0]) for c in candidates]
    losses = [float(c[1]) for c in candidates]
    for i, v in enumerate(losses):
        if not v > 0:
            raise NonPositiveLoss(i, v)
    star = _best_index(params, losses)
    out = []
    for i, (n, v) in enumerate(zip(params, losses)):
        p = n / params[star]
        ell = (v - losses[star]) / losses[star]
        out.append(CandidateScore(i, n, v, p, ell, p + lam * ell))
    return out


def argmin_score(scores):
    """Lowest score; ties -> fewer params -> lower index."""
    return min(scores, key=lambda s: (s.score, s.params, s.index))


@dataclass
class Selection:
    chosen: object
    scores: list
    loss_kind: str
    candidates: list


def select_model(grid_results, lam=DEFAULT_LAMBDA, loss="auto"):
    """Pick argmin composite score among the successful candidates of one model type.

    `loss` chooses the validation objective: ``combined`` (uncertainty-weighted,
    as used in training), ``raw`` (unweighted sum of the three head losses), or
    ``auto``: combined unless some candidate's combined loss is non-positive,
    which the ratio in the score cannot handle, in which case raw is used for
    the whole set.
    """
    ok = [r for r in grid_results if r.status == "ok" and math.isfinite(r.best_val_loss)]
    if not ok:
        raise AllCandidatesFailed()
    kind = loss
    if loss == "auto":
        kind = "combined" if all(r.best_val_loss > 0 for r in ok) else "raw"
        if kind == "raw":
            log.warning("non-positive combined validation loss; scoring on raw head losses")
    values = [r.best_val_loss if kind == "combined" else r.best_val_raw for r in ok]
    scores = composite_scores([(r.param_count, v) for r, v in zip(ok, values)], lam)
    best = argmin_score(scores)
    return Selection(ok[best.index], scores, kind, ok)


def prediction_arrays(model, samples, norm):
    """Predicted and true indices plus (waiting, duration, remaining) in days."""
    batch = samples if isinstance(samples, Batch) else collate(samples)
    act, role, times = predict_arrays(model, batch)
    pred_days = norm.invert_many(times, TARGET_FEATURES) / SECONDS_PER_DAY
    true_days = norm.invert_many(batch.target_times, TARGET_FEATURES) / SECONDS_PER_DAY
    return {
        "pred_activity": act.argmax(axis=1), "true_activity": batch.target_activity,
        "pred_role": role.argmax(axis=1), "true_role": batch.target_role,
        "pred_days": pred_days, "true_days": true_days,
    }


def metrics_from_arrays(arr, n_activities, n_roles, f1_mode="weighted"):
    err = np.abs(arr["pred_days"] - arr["true_days"]).mean(axis=0)
    return TaskMetrics(
        nap_f1=f1_score(arr["pred_activity"], arr["true_activity"], n_activities, f1_mode),
        nrp_f1=f1_score(arr["pred_role"], arr["true_role"], n_roles, f1_mode),
        nwtp_mae=float(err[0]), ndp_mae=float(err[1]), rtp_mae=float(err[2]),
        n_samples=len(arr["true_activity"]),
    )


def evaluate(model, test_samples, norm, f1_mode="weighted"):
    if len(test_samples) == 0:
        raise EmptyTestSet()
    arr = prediction_arrays(model, test_samples, norm)
    return metrics_from_arrays(arr, model.n_activities, model.n_roles, f1_mode)


DUMP_COLUMNS = ("case_id", "k", "pred_activity", "true_activity", "pred_role", "true_role",
                "pred_waiting_days", "true_waiting_days", "pred_duration_days",
                "true_duration_days", "pred_remaining_days", "true_remaining_days")


def write_prediction_dump(path, samples, arr):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DUMP_COLUMNS)
        for i, s in enumerate(samples):
            pd_, td = arr["pred_days"][i], arr["true_days"][i]
            w.writerow([s.case_id, s.k, int(arr["pred_activity"][i]), int(arr["true_activity"][i]),
                        int(arr["pred_role"][i]), int(arr["true_role"][i]),
                        repr(float(pd_[0])), repr(float(td[0])), repr(float(pd_[1])),
                        repr(float(td[1])), repr(float(pd_[2])), repr(float(td[2]))])


def read_prediction_dump(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = lambda c: np.array([int(r[c]) for r in rows], dtype=np.int64)  # noqa: E731
    days = lambda kind: np.array([[float(r[f"{kind}_{f}_days"]) for f in TARGET_FEATURES]  # noqa: E731
                                  for r in rows])
    return {"pred_activity": ints("pred_activity"), "true_activity": ints("true_activity"),
            "pred_role": ints("pred_role"), "true_role": ints("true_role"),
            "pred_days": days("pred"), "true_days": days("true")}
