"""Synthetic event logs for tests, demos and the learnability check."""
from __future__ import annotations

import numpy as np

from .eventlog import Event, build_log

# register -> review -> check -> review -> approve -> ship -> invoice
# "review" occurs twice, so the next activity after it depends on history.
DETERMINISTIC_PATH = ("register", "review", "check", "review", "approve", "ship", "invoice")
DETERMINISTIC_ROLES = {"register": "clerk", "review": "manager", "check": "analyst",
                       "approve": "manager", "ship": "warehouse", "invoice": "clerk"}
_MEAN_DURATION_H = {"register": 0.5, "review": 2.0, "check": 4.0, "approve": 1.0,
                    "ship": 24.0, "invoice": 0.5}

EPOCH_2020 = 1577836800.0


def deterministic_log(n_traces=200, seed=0, start=EPOCH_2020):
    """Six activities, fixed control flow, one role per activity, random timing."""
    rng = np.random.default_rng(seed)
    events = []
    t = start
    for c in range(n_traces):
        t += rng.exponential(6 * 3600.0)
        now = t
        for act in DETERMINISTIC_PATH:
            now += rng.exponential(1800.0)
            dur = rng.exponential(_MEAN_DURATION_H[act] * 3600.0)
            events.append(Event(f"case{c:04d}", act, DETERMINISTIC_ROLES[act],
                                round(now), round(now + dur)))
            now += dur
    return build_log(events)


def random_log(rng, n_traces, n_activities=5, n_roles=3, max_len=8, start=EPOCH_2020):
    """Unstructured log: random lengths, labels and (possibly overlapping) intervals."""
    events = []
    for c in range(n_traces):
        t = start + rng.integers(0, 30 * 86400)
        for _ in range(int(rng.integers(1, max_len + 1))):
            t += int(rng.integers(-600, 7200))
            dur = int(rng.integers(0, 7200))
            events.append(Event(f"c{c}", f"a{rng.integers(n_activities)}", f"r{rng.integers(n_roles)}",
                                float(t), float(t + dur)))
            t += dur
    return build_log(events)
