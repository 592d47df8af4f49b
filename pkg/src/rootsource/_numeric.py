"""Segment reductions over ragged rows stored in flat arrays.

Rows are delimited by an indptr-style `row_start` array of length n+1;
row k owns the flat slice row_start[k]:row_start[k+1].  Empty rows are
legal and must not borrow neighbouring elements, which rules out naive
ufunc.reduceat calls.
"""

from __future__ import annotations

import numpy as np


def segment_sum(values: np.ndarray, row_start: np.ndarray) -> np.ndarray:
    counts = np.diff(row_start)
    out = np.zeros(counts.size, dtype=np.float64)
    nz = counts > 0
    if values.size and nz.any():
        out[nz] = np.add.reduceat(values, row_start[:-1][nz])
    return out


def segment_max(values: np.ndarray, row_start: np.ndarray,
                empty: float = -np.inf) -> np.ndarray:
    counts = np.diff(row_start)
    out = np.full(counts.size, empty, dtype=np.float64)
    nz = counts > 0
    if values.size and nz.any():
        out[nz] = np.maximum.reduceat(values, row_start[:-1][nz])
    return out


def ragged_arange(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenation of arange(starts[k], stops[k]) for all k."""
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    counts = np.maximum(stops - starts, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total) - offsets + np.repeat(starts, counts)
