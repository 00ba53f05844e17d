"""From traces to model-ready samples.

Both pipelines (padded prefixes for the Transformer family, n-gram windows for
the LSTM family) share the boundary events, the time features and one
z-score normaliser fitted on the training split.

Per-position input channels are (duration, waiting, elapsed), where elapsed is
the time from case start to the event's end. The remaining time of prefix
events is deliberately *not* an input: it equals the remaining-time target of
the last prefix event and would leak the answer.

Targets are (waiting, duration) of the next event and the remaining time after
the current one, in that order.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyLog
from .eventlog import (END, END_IDX, PAD_IDX, START, START_IDX, Event, EventLog, SplitLog, Trace)

FEATURES = ("duration", "waiting", "remaining", "elapsed")
INPUT_FEATURES = ("duration", "waiting", "elapsed")
TARGET_FEATURES = ("waiting", "duration", "remaining")


@dataclass(frozen=True)
class TimeFeatures:
    duration: float
    waiting: float
    remaining: float
    elapsed: float
    clamped: bool = False


def add_boundary_events(trace):
    """Wrap a trace in zero-length «start»/«end» events glued to its first start and last end."""
    first, last = trace.events[0], trace.events[-1]
    start = Event(trace.case_id, START, START, first.start, first.start)
    end = Event(trace.case_id, END, END, last.end, last.end)
    return Trace(trace.case_id, (start,) + tuple(trace.events) + (end,))


def add_boundaries(log_):
    return log_.subset(add_boundary_events(t) for t in log_.traces)


def compute_time_features(trace):
    evs = trace.events
    t_end = evs[-1].end
    t0 = evs[0].start
    out = []
    for i, e in enumerate(evs):
        wait = 0.0 if i == 0 else e.start - evs[i - 1].end
        clamped = wait < 0
        out.append(TimeFeatures(duration=e.end - e.start, waiting=max(wait, 0.0),
                                remaining=t_end - e.end, elapsed=e.end - t0, clamped=clamped))
    return out


@dataclass(frozen=True)
class Normalizer:
    mean: dict
    std: dict

    def apply(self, x, feature):
        return (np.asarray(x, dtype=float) - self.mean[feature]) / self.std[feature]

    def invert(self, z, feature):
        return np.asarray(z, dtype=float) * self.std[feature] + self.mean[feature]

    def apply_many(self, arr, features):
        """Normalise the last axis of `arr`, whose columns are `features`."""
        mu = np.array([self.mean[f] for f in features])
        sd = np.array([self.std[f] for f in features])
        return (np.asarray(arr, dtype=float) - mu) / sd

    def invert_many(self, arr, features):
        mu = np.array([self.mean[f] for f in features])
        sd = np.array([self.std[f] for f in features])
        return np.asarray(arr, dtype=float) * sd + mu

    def to_dict(self):
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["mean"]), dict(d["std"]))


def fit_normalizer(train):
    """Population mean/std per feature over every event of `train` (std < 1e-12 -> 1)."""
    rows = [[getattr(tf, f) for f in FEATURES]
            for tr in train.traces for tf in compute_time_features(tr)]
    if not rows:
        raise EmptyLog("cannot fit a normalizer on an empty log")
    arr = np.array(rows)
    mu = arr.mean(axis=0)
    sd = arr.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return Normalizer({f: float(m) for f, m in zip(FEATURES, mu)},
                      {f: float(s) for f, s in zip(FEATURES, sd)})


@dataclass(frozen=True)
class Sample:
    activity_prefix: np.ndarray
    role_prefix: np.ndarray
    time_prefix: np.ndarray
    length: int
    target_activity: int
    target_role: int
    target_times: np.ndarray
    target_raw: np.ndarray
    case_id: str = ""
    k: int = 0


def _encode_trace(trace, norm, acts, roles):
    tfs = compute_time_features(trace)
    a = np.array([acts.index(e.activity) for e in trace.events], dtype=np.int64)
    r = np.array([roles.index(e.role) for e in trace.events], dtype=np.int64)
    raw_in = np.array([[getattr(tf, f) for f in INPUT_FEATURES] for tf in tfs])
    raw_tf = np.array([[tf.waiting, tf.duration, tf.remaining] for tf in tfs])
    return a, r, norm.apply_many(raw_in, INPUT_FEATURES), raw_tf


def _build(log_, norm, width, acts, roles, stats):
    acts = acts or log_.activity_vocab
    roles = roles or log_.role_vocab
    samples = []
    truncated = 0
    for trace in log_.traces:
        a, r, x, raw_tf = _encode_trace(trace, norm, acts, roles)
        n = len(a)
        for k in range(1, n):
            lo = max(0, k - width)
            if lo:
                truncated += 1
            m = k - lo
            ap = np.full(width, PAD_IDX, dtype=np.int64)
            rp = np.full(width, PAD_IDX, dtype=np.int64)
            tp = np.zeros((width, 3))
            ap[width - m:] = a[lo:k]
            rp[width - m:] = r[lo:k]
            tp[width - m:] = x[lo:k]
            # next event's (waiting, duration), remaining after the current event
            raw = np.array([raw_tf[k, 0], raw_tf[k, 1], raw_tf[k - 1, 2]])
            samples.append(Sample(ap, rp, tp, m, int(a[k]), int(r[k]),
                                  norm.apply_many(raw, TARGET_FEATURES), raw, trace.case_id, k))
    if stats is not None:
        stats["truncated"] = stats.get("truncated", 0) + truncated
    return samples


def build_prefix_samples(log_, norm, max_len, activity_vocab=None, role_vocab=None, stats=None):
    """All prefixes k = 1..n'-1 of every (boundary-augmented) trace, left-padded to max_len.

    Prefixes longer than max_len keep their most recent max_len events; the
    number of such truncations is added to ``stats["truncated"]``.
    """
    return _build(log_, norm, max_len, activity_vocab, role_vocab, stats)


def build_ngram_samples(log_, norm, g, activity_vocab=None, role_vocab=None, stats=None):
    """Same prefixes and targets as build_prefix_samples; input is the last min(k, g) events."""
    return _build(log_, norm, g, activity_vocab, role_vocab, stats)


def prefix_width(train):
    """max_len for the Transformer pipeline: longest augmented training trace minus one."""
    return max(len(t) for t in train.traces) - 1


@dataclass
class Batch:
    activities: np.ndarray
    roles: np.ndarray
    times: np.ndarray
    mask: np.ndarray
    target_activity: np.ndarray
    target_role: np.ndarray
    target_times: np.ndarray
    target_raw: np.ndarray

    def __len__(self):
        return len(self.activities)

    def take(self, idx):
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    @property
    def width(self):
        return self.activities.shape[1]


def collate(samples):
    if not samples:
        raise EmptyLog("no samples to collate")
    width = len(samples[0].activity_prefix)
    lengths = np.array([s.length for s in samples])
    mask = np.arange(width)[None, :] >= (width - lengths)[:, None]
    return Batch(
        activities=np.stack([s.activity_prefix for s in samples]),
        roles=np.stack([s.role_prefix for s in samples]),
        times=np.stack([s.time_prefix for s in samples]),
        mask=mask,
        target_activity=np.array([s.target_activity for s in samples], dtype=np.int64),
        target_role=np.array([s.target_role for s in samples], dtype=np.int64),
        target_times=np.stack([s.target_times for s in samples]),
        target_raw=np.stack([s.target_raw for s in samples]),
    )


@dataclass(frozen=True)
class PreparedSplit:
    """Boundary-augmented split plus the normaliser fitted on its training part."""
    split: SplitLog
    normalizer: Normalizer
    max_len: int


def prepare(split):
    aug = SplitLog(add_boundaries(split.train), add_boundaries(split.validation),
                   add_boundaries(split.test))
    return PreparedSplit(aug, fit_normalizer(aug.train), prefix_width(aug.train))


def vocab_hash(vocab):
    return hashlib.sha256("\x1f".join(vocab.labels).encode("utf-8")).hexdigest()[:16]


def save_samples(path, samples, meta):
    """Columnar cache (.npz). `meta` (width, normaliser, vocab hashes, ...) is stored
    as JSON so stale caches can be detected by comparing it on load."""
    b = collate(samples)
    np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)),
             case_id=np.array([s.case_id for s in samples]),
             k=np.array([s.k for s in samples], dtype=np.int64),
             length=np.array([s.length for s in samples], dtype=np.int64),
             **{f: getattr(b, f) for f in b.__dataclass_fields__ if f != "mask"})


def load_samples(path, expect_meta=None):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if expect_meta is not None and meta != json.loads(json.dumps(expect_meta, sort_keys=True)):
            raise ValueError(f"stale sample cache {path}")
        n = len(z["k"])
        samples = [Sample(z["activities"][i], z["roles"][i], z["times"][i], int(z["length"][i]),
                          int(z["target_activity"][i]), int(z["target_role"][i]),
                          z["target_times"][i], z["target_raw"][i], str(z["case_id"][i]),
                          int(z["k"][i])) for i in range(n)]
    return samples, meta


__all__ = [
    "Batch", "END_IDX", "FEATURES", "Normalizer", "PreparedSplit", "Sample", "START_IDX",
    "TARGET_FEATURES", "TimeFeatures", "add_boundaries", "add_boundary_events", "build_ngram_samples",
    "build_prefix_samples", "collate", "compute_time_features", "fit_normalizer", "load_samples",
    "prefix_width", "prepare", "save_samples", "EventLog",
]
