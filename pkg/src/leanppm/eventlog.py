"""Event-log parsing, validation and the chronological case split."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction

from .errors import (DataError, EmptyLog, MissingColumn, NegativeDuration, ReservedLabel,
                     TooFewTraces, UnparseableTimestamp)

log = logging.getLogger(__name__)

PAD, UNK, START, END = "«pad»", "«unk»", "«start»", "«end»"
RESERVED = (PAD, UNK, START, END)
PAD_IDX, UNK_IDX, START_IDX, END_IDX = range(4)

COLUMNS = ("case_id", "activity", "role", "start_timestamp", "end_timestamp")

_FALLBACK_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M:%S.%f",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M:%S.%f",
    "%Y-%m-%d %H:%M:%S%z",
    "%Y-%m-%d %H:%M:%S.%f%z",
    "%Y-%m-%dT%H:%M:%S%z",
    "%Y-%m-%dT%H:%M:%S.%f%z",
)


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    role: str
    start: float
    end: float


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple

    def __len__(self):
        return len(self.events)


class Vocab:
    """Label <-> index bijection; the four reserved labels always occupy 0..3."""

    def __init__(self, labels=()):
        self.labels = list(RESERVED)
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        for lab in labels:
            self.add(lab)

    def add(self, label):
        if label not in self._index:
            self._index[label] = len(self.labels)
            self.labels.append(label)
        return self._index[label]

    def index(self, label):
        return self._index.get(label, UNK_IDX)

    def label(self, idx):
        return self.labels[idx]

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.labels == other.labels

    def __repr__(self):
        return f"Vocab({len(self)} labels)"

    @property
    def n_domain(self):
        """Number of non-reserved labels."""
        return len(self.labels) - len(RESERVED)

    def to_list(self):
        return list(self.labels)

    @classmethod
    def from_list(cls, labels):
        if tuple(labels[:4]) != RESERVED:
            raise DataError("vocabulary does not start with the reserved labels")
        return cls(labels[4:])


@dataclass(frozen=True)
class ParseReport:
    rows: int
    events: int
    traces: int
    activities: int
    roles: int
    dropped_negative_duration: int = 0

    def as_text(self):
        return "\n".join(f"{k}: {v}" for k, v in vars(self).items())


@dataclass(frozen=True)
class EventLog:
    traces: tuple
    activity_vocab: Vocab
    role_vocab: Vocab
    report: ParseReport | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.traces)

    @property
    def n_events(self):
        return sum(len(t) for t in self.traces)

    def subset(self, traces):
        return EventLog(tuple(traces), self.activity_vocab, self.role_vocab)

    def stats(self):
        return {
            "traces": len(self.traces),
            "events": self.n_events,
            "activities": self.activity_vocab.n_domain,
            "roles": self.role_vocab.n_domain,
        }


@dataclass(frozen=True)
class SplitLog:
    train: EventLog
    validation: EventLog
    test: EventLog


def parse_timestamp(value):
    """Seconds since the epoch; naive timestamps are taken as UTC."""
    s = value.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        for fmt in _FALLBACK_FORMATS:
            try:
                dt = datetime.strptime(s, fmt)
                break
            except ValueError:
                continue
        else:
            raise ValueError(value) from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(seconds):
    return datetime.fromtimestamp(seconds, timezone.utc).isoformat(timespec="microseconds")


def build_log(events, report=None):
    """Group events into traces (first-appearance order of case ids) and build vocabularies.

    Events inside a trace are sorted by (start, end); the sort is stable so ties
    keep input order. Vocabulary indices follow the first appearance of each label
    when walking traces in order, which makes serialising and re-parsing a log
    reproduce it exactly.
    """
    groups = {}
    for ev in events:
        groups.setdefault(ev.case_id, []).append(ev)
    if not groups:
        raise EmptyLog()
    traces = []
    acts, roles = Vocab(), Vocab()
    for cid, evs in groups.items():
        evs = sorted(evs, key=lambda e: (e.start, e.end))
        for e in evs:
            acts.add(e.activity)
            roles.add(e.role)
        traces.append(Trace(cid, tuple(evs)))
    return EventLog(tuple(traces), acts, roles, report)


def parse_csv(path, column_map=None, strict=False):
    """Read an event log from a CSV file with a header row.

    `column_map` maps logical names (case_id, activity, role, start_timestamp,
    end_timestamp) to the file's column names; missing keys map to themselves.
    Rows whose end precedes their start are dropped and counted unless
    `strict`, in which case NegativeDuration is raised.
    """
    cmap = {c: c for c in COLUMNS}
    cmap.update(column_map or {})
    events, dropped, rows = [], 0, 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for logical in COLUMNS:
            if cmap[logical] not in header:
                raise MissingColumn(cmap[logical])
        for rownum, row in enumerate(reader, start=2):
            rows += 1
            act, role = row[cmap["activity"]], row[cmap["role"]]
            for lab in (act, role):
                if lab in RESERVED:
                    raise ReservedLabel(rownum, lab)
                if not lab:
                    raise DataError(f"row {rownum}: empty activity or role label")
            times = []
            for col in ("start_timestamp", "end_timestamp"):
                raw = row[cmap[col]]
                try:
                    times.append(parse_timestamp(raw))
                except (ValueError, TypeError, AttributeError):
                    raise UnparseableTimestamp(rownum, raw) from None
            start, end = times
            if end < start:
                if strict:
                    raise NegativeDuration(rownum)
                dropped += 1
                continue
            events.append(Event(row[cmap["case_id"]], act, role, start, end))
    if dropped:
        log.warning("dropped %d rows with end < start", dropped)
    if not events:
        raise EmptyLog()
    elog = build_log(events)
    report = ParseReport(rows=rows, events=len(events), traces=len(elog.traces),
                         activities=elog.activity_vocab.n_domain,
                         roles=elog.role_vocab.n_domain, dropped_negative_duration=dropped)
    return EventLog(elog.traces, elog.activity_vocab, elog.role_vocab, report)


def write_csv(log_, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for tr in log_.traces:
            for e in tr.events:
                w.writerow([e.case_id, e.activity, e.role,
                            format_timestamp(e.start), format_timestamp(e.end)])


def _floor_fraction(frac, n):
    return math.floor(Fraction(str(frac)) * n)


def split_chronological(log_, fractions=(0.7, 0.1, 0.2)):
    """Partition cases by the start of their first event: floor for train and
    validation sizes, remainder to test. Ties keep the log's trace order."""
    n = len(log_.traces)
    if n < 3:
        raise TooFewTraces(n)
    order = sorted(range(n), key=lambda i: log_.traces[i].events[0].start)
    ordered = [log_.traces[i] for i in order]
    n_train = _floor_fraction(fractions[0], n)
    n_val = _floor_fraction(fractions[1], n)
    return SplitLog(
        train=log_.subset(ordered[:n_train]),
        validation=log_.subset(ordered[n_train:n_train + n_val]),
        test=log_.subset(ordered[n_train + n_val:]),
    )
