"""Running-window heuristic RW_M for root-source guessing.

RW_M scores event i by the normalized source counts of the M most recent
events strictly before i (the whole history for M = inf).  An event with an
empty window gets a one-hot row at its own source: a thread-opening comment
credits its own author, while RW_1 credits the immediate predecessor.
`include_self=True` counts event i itself as part of its window instead.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .model import EventSequence
from .rootprob import RootProbMatrix

__all__ = ["running_window"]


def running_window(events: EventSequence, M, S: int,
                   include_self: bool = False) -> RootProbMatrix:
    """Normalized source counts over each event's trailing window of size M."""
    if S < 1:
        raise ValidationError("S must be at least 1")
    if not (M == math.inf or (float(M).is_integer() and M >= 1)):
        raise ValidationError("M must be a positive integer or infinity")
    n = len(events)
    sources = events.sources
    if np.any(sources >= S):
        raise ValidationError("source labels out of range for the given S")

    onehot = np.zeros((n + 1, S))
    onehot[np.arange(1, n + 1), sources] = 1.0
    cum = np.cumsum(onehot, axis=0)  # cum[k] = counts over events 0..k-1

    idx = np.arange(n)
    if include_self:
        hi = idx + 1
    else:
        hi = idx
    lo = hi - int(min(M, n)) if M != math.inf else np.zeros(n, dtype=np.int64)
    lo = np.maximum(lo, 0)
    counts = cum[hi] - cum[lo]
    width = (hi - lo).astype(np.float64)
    empty = width == 0
    r = np.zeros((n, S))
    nonempty = ~empty
    r[nonempty] = counts[nonempty] / width[nonempty, None]
    r[empty, sources[empty]] = 1.0
    return RootProbMatrix(r, "running_window")
