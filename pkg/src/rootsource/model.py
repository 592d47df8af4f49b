"""Core types, intensities, and mark densities for marked multivariate Hawkes processes.

Each event carries a timestamp t, a source label s (0-based, out of S), and a
sparse bag-of-tokens mark x over a vocabulary of size V.  The conditional
intensity of source s at time t given the history is

    lambda_s(t | H) = rho[s] * mu_bar_s(t) + sum_{t_j < t} A[s, s_j] * beta(x_j) * kappa(t_j, t)

with the normalized exponential kernel kappa(t, t') = exp(-(t' - t) / nu) / nu,
so that the kernel integrates to 1 over (t, inf).

Marks: an immigrant event draws each of its L tokens from theta[s]; an
offspring of parent j draws each token from the mixture
(1 - gamma) * theta[s] + gamma * x_tilde_j, where x_tilde_j is the parent's
normalized token-count vector.  All mark densities here drop the multinomial
coefficient L!/prod(x_v!): it is constant across the immigrant and all
offspring hypotheses for a fixed event, so it cancels in every normalized
quantity and only shifts log-likelihoods by a data-dependent constant.

All densities are computed in log space; -inf is the sentinel for a
zero-probability mark and propagates through downstream normalizations as an
exact zero weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "ConstantShape",
    "unit_mark_impact",
    "KernelConfig",
    "Event",
    "EventSequence",
    "ModelParams",
    "base_intensity",
    "excited_intensity",
    "total_intensity",
    "log_mark_density_immigrant",
    "log_mark_density_offspring",
    "compensator",
]


class ConstantShape:
    """Base-rate shape mu_bar_s(t) = c, the default (c = 1)."""

    def __init__(self, c: float = 1.0):
        if c <= 0:
            raise ValidationError("constant shape must be positive")
        self.c = float(c)

    def value(self, s: int, t: float) -> float:
        return self.c

    def integral(self, s: int, t0: float, t1: float) -> float:
        return self.c * (t1 - t0)

    def max_value(self, s: int, t0: float, t1: float) -> float:
        # Upper bound used for thinning when sampling inhomogeneous immigrants.
        return self.c

    def __eq__(self, other):
        return isinstance(other, ConstantShape) and other.c == self.c


def unit_mark_impact(tokens: np.ndarray, counts: np.ndarray) -> float:
    """Default mark impact beta(x) = 1."""
    return 1.0


@dataclass(frozen=True)
class KernelConfig:
    """Normalized decay kernel; only the exponential family is supported."""

    kind: str = "exponential"
    nu: float = 1.0

    def __post_init__(self):
        if self.kind != "exponential":
            raise ValidationError(f"unsupported kernel kind: {self.kind!r}")
        if self.nu <= 0:
            raise ValidationError("kernel bandwidth nu must be positive")

    def value(self, lag: float) -> float:
        """kappa at the given nonnegative lag t' - t."""
        if lag < 0:
            raise ValidationError("kernel lag must be nonnegative")
        return np.exp(-lag / self.nu) / self.nu

    def integral(self, lag: float) -> float:
        """Integral of kappa from lag 0 to the given lag."""
        if lag < 0:
            raise ValidationError("kernel lag must be nonnegative")
        return 1.0 - np.exp(-lag / self.nu)


def _canonical_mark(x) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a mark given as dict/pairs into sorted (tokens, counts) arrays.

    Zero counts are dropped; duplicate token entries are summed.
    """
    if x is None:
        return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.float64)
    if isinstance(x, dict):
        items = sorted(x.items())
        tokens = np.array([v for v, _ in items], dtype=np.int32)
        counts = np.array([c for _, c in items], dtype=np.float64)
    else:
        tokens = np.asarray(x[0], dtype=np.int32)
        counts = np.asarray(x[1], dtype=np.float64)
        order = np.argsort(tokens, kind="stable")
        tokens, counts = tokens[order], counts[order]
        if tokens.size and np.any(tokens[1:] == tokens[:-1]):
            uniq, inv = np.unique(tokens, return_inverse=True)
            counts = np.bincount(inv, weights=counts, minlength=uniq.size)
            tokens = uniq.astype(np.int32)
    keep = counts > 0
    return tokens[keep], counts[keep]


@dataclass
class Event:
    """One event: 1-based ordinal index, timestamp, source, sparse token counts."""

    index: int
    t: float
    s: int
    tokens: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int32))
    counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    @classmethod
    def make(cls, index: int, t: float, s: int, x=None) -> "Event":
        tokens, counts = _canonical_mark(x)
        return cls(index=index, t=float(t), s=int(s), tokens=tokens, counts=counts)

    @property
    def L(self) -> float:
        return float(self.counts.sum())

    def mark_dict(self) -> dict:
        return {int(v): float(c) for v, c in zip(self.tokens, self.counts)}

    def normalized_counts(self) -> np.ndarray:
        L = self.counts.sum()
        return self.counts / L if L > 0 else self.counts

    def counts_at(self, tokens: np.ndarray) -> np.ndarray:
        """Counts of this event's mark at the given (sorted) token indices; 0 elsewhere."""
        out = np.zeros(len(tokens), dtype=np.float64)
        if self.tokens.size == 0 or len(tokens) == 0:
            return out
        pos = np.searchsorted(self.tokens, tokens)
        pos = np.clip(pos, 0, self.tokens.size - 1)
        hit = self.tokens[pos] == tokens
        out[hit] = self.counts[pos[hit]]
        return out


class EventSequence:
    """Time-ordered events over [0, T] in columnar form.

    Times are strictly increasing in (0, T]; sources are 0-based labels in
    [0, S); marks are stored CSR-style (tok_indptr/tok_index/tok_count) with
    token indices sorted within each row.
    """

    def __init__(self, times, sources, tok_indptr, tok_index, tok_count, T, S, V,
                 validate: bool = True):
        self.times = np.asarray(times, dtype=np.float64)
        self.sources = np.asarray(sources, dtype=np.int64)
        self.tok_indptr = np.asarray(tok_indptr, dtype=np.int64)
        self.tok_index = np.asarray(tok_index, dtype=np.int32)
        self.tok_count = np.asarray(tok_count, dtype=np.float64)
        self.T = float(T)
        self.S = int(S)
        self.V = int(V)
        self._postings = None
        if validate:
            self._validate()

    def _validate(self):
        n = len(self.times)
        if len(self.sources) != n or len(self.tok_indptr) != n + 1:
            raise ValidationError("inconsistent array lengths in event sequence")
        if self.T <= 0 or self.S < 1 or self.V < 0:
            raise ValidationError("T must be positive, S >= 1, V >= 0")
        if n == 0:
            return
        if np.any(self.times <= 0) or np.any(self.times > self.T):
            raise ValidationError("event timestamps must lie in (0, T]")
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            k = int(np.argmax(dt <= 0))
            raise ValidationError(
                f"timestamps must be strictly increasing; tie or inversion at events "
                f"{k + 1} and {k + 2}")
        if np.any(self.sources < 0) or np.any(self.sources >= self.S):
            raise ValidationError("source labels out of range")
        if self.tok_index.size:
            if np.any(self.tok_index < 0) or np.any(self.tok_index >= self.V):
                raise ValidationError("token indices out of range")
            if np.any(self.tok_count <= 0):
                raise ValidationError("stored token counts must be positive")
            if np.any(self.tok_count != np.floor(self.tok_count)):
                raise ValidationError("token counts must be integers")
        if self.tok_index.size > 1:
            d = np.diff(self.tok_index.astype(np.int64))
            row_break = np.zeros(d.size, dtype=bool)
            starts = self.tok_indptr[1:-1]
            starts = starts[(starts > 0) & (starts < self.tok_index.size)]
            row_break[starts - 1] = True
            if np.any((d <= 0) & ~row_break):
                raise ValidationError("token indices not sorted/unique within an event")

    @classmethod
    def from_events(cls, events, T, S=None, V=None) -> "EventSequence":
        events = list(events)
        times = np.array([e.t for e in events], dtype=np.float64)
        sources = np.array([e.s for e in events], dtype=np.int64)
        if S is None:
            S = int(sources.max()) + 1 if events else 1
        sizes = np.array([e.tokens.size for e in events], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(sizes)])
        tok_index = (np.concatenate([e.tokens for e in events])
                     if events else np.empty(0, dtype=np.int32))
        tok_count = (np.concatenate([e.counts for e in events])
                     if events else np.empty(0, dtype=np.float64))
        if V is None:
            V = int(tok_index.max()) + 1 if tok_index.size else 0
        return cls(times, sources, indptr, tok_index, tok_count, T, S, V)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, k: int) -> Event:
        if not 0 <= k < len(self):
            raise IndexError(k)
        lo, hi = self.tok_indptr[k], self.tok_indptr[k + 1]
        return Event(index=k + 1, t=float(self.times[k]), s=int(self.sources[k]),
                     tokens=self.tok_index[lo:hi], counts=self.tok_count[lo:hi])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def lengths(self) -> np.ndarray:
        """Per-event total token counts L_i."""
        if not hasattr(self, "_lengths"):
            rows = np.repeat(np.arange(len(self)), np.diff(self.tok_indptr))
            self._lengths = np.bincount(rows, weights=self.tok_count, minlength=len(self))
        return self._lengths

    def token_postings(self):
        """Column-oriented view of the marks: per token, which events use it.

        Returns (indptr, event_ids, counts, normalized_counts): for token v,
        the slice indptr[v]:indptr[v+1] lists the events containing v (sorted
        ascending), their raw counts, and their counts normalized by the
        event's length.
        """
        if self._postings is None:
            from scipy import sparse

            n = len(self)
            mat = sparse.csr_matrix(
                (self.tok_count, self.tok_index, self.tok_indptr), shape=(n, self.V))
            csc = mat.tocsc()
            csc.sort_indices()
            ev = csc.indices.astype(np.int64)
            cnt = csc.data.astype(np.float64)
            with np.errstate(invalid="ignore"):
                norm = cnt / self.lengths[ev]
            self._postings = (csc.indptr.astype(np.int64), ev, cnt, norm)
        return self._postings

    def token_counts_by_source(self) -> np.ndarray:
        """Dense (S, V) matrix of total token counts per source."""
        out = np.zeros((self.S, self.V))
        if self.tok_index.size:
            rows = np.repeat(self.sources, np.diff(self.tok_indptr))
            np.add.at(out, (rows, self.tok_index), self.tok_count)
        return out


@dataclass
class ModelParams:
    """Full parameter set Theta = (rho, A, theta, gamma) plus kernel/hook settings.

    rho : (S,) positive base-rate multipliers.
    A : (S, S) nonnegative excitation matrix; A[s, s'] is the strength with
        which source s' excites source s (row = excited, column = exciting).
    theta : (S, V) row-stochastic token distributions.
    gamma : token inheritance rate in [0, 1] (fitting keeps it interior).
    nu : kernel bandwidth.
    base_shape / mark_impact : pluggable mu_bar and beta hooks, constant 1 by default.
    """

    rho: np.ndarray
    A: np.ndarray
    theta: np.ndarray
    gamma: float
    nu: float
    base_shape: object = field(default_factory=ConstantShape)
    mark_impact: object = field(default=unit_mark_impact)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.gamma = float(self.gamma)
        self.nu = float(self.nu)
        self.validate()

    def validate(self):
        S = self.rho.shape[0]
        if self.rho.ndim != 1 or np.any(self.rho < 0):
            raise ValidationError("rho must be a nonnegative vector")
        if self.A.shape != (S, S) or np.any(self.A < 0):
            raise ValidationError("A must be a nonnegative S x S matrix")
        if self.theta.ndim != 2 or self.theta.shape[0] != S:
            raise ValidationError("theta must have one row per source")
        if np.any(self.theta < 0):
            raise ValidationError("theta entries must be nonnegative")
        if self.theta.shape[1] > 0:
            rowsums = self.theta.sum(axis=1)
            if np.any(np.abs(rowsums - 1.0) > 1e-9):
                raise ValidationError("theta rows must sum to 1 within 1e-9")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if self.nu <= 0:
            raise ValidationError("nu must be positive")

    @property
    def S(self) -> int:
        return self.rho.shape[0]

    @property
    def V(self) -> int:
        return self.theta.shape[1]

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(kind="exponential", nu=self.nu)

    def beta(self, event: Event) -> float:
        return float(self.mark_impact(event.tokens, event.counts))


def base_intensity(params: ModelParams, s: int, t: float) -> float:
    """mu_s(t) = rho[s] * mu_bar_s(t)."""
    if not 0 <= s < params.S:
        raise ValidationError(f"source index {s} out of range [0, {params.S})")
    return float(params.rho[s] * params.base_shape.value(s, t))


def excited_intensity(params: ModelParams, s: int, parent: Event, t: float) -> float:
    """lambda_parent_s(t) = A[s, parent.s] * beta(parent.x) * kappa(parent.t, t)."""
    if not 0 <= s < params.S:
        raise ValidationError(f"source index {s} out of range [0, {params.S})")
    if t <= parent.t:
        raise ValidationError("excited intensity requires t > parent.t")
    return float(params.A[s, parent.s] * params.beta(parent)
                 * params.kernel.value(t - parent.t))


def total_intensity(params: ModelParams, s: int, t: float, history) -> float:
    """Conditional intensity of source s at t: base plus all excitation terms."""
    total = base_intensity(params, s, t)
    for e in history:
        total += excited_intensity(params, s, e, t)
    return total


def log_mark_density_immigrant(params: ModelParams, e: Event) -> float:
    """log f(x | t, s) = sum_v x_v log theta[s, v]; 0 for an empty mark."""
    if not 0 <= e.s < params.S:
        raise ValidationError(f"source index {e.s} out of range [0, {params.S})")
    if e.tokens.size == 0:
        return 0.0
    th = params.theta[e.s, e.tokens]
    with np.errstate(divide="ignore"):
        logs = np.log(th)
    return float(np.dot(e.counts, logs))


def log_mark_density_offspring(params: ModelParams, e: Event, parent: Event) -> float:
    """log f(x | t, s, e_parent) under the inherited-vocabulary mixture.

    Each child token mixes theta[e.s] with the parent's normalized bag:
    sum_v x_v log[(1 - gamma) theta[s, v] + gamma xt_parent_v].  A parent with
    an empty mark has no bag to inherit, so the immigrant density is used.
    """
    if parent.t >= e.t:
        raise ValidationError("offspring density requires parent.t < e.t")
    if parent.counts.sum() == 0:
        return log_mark_density_immigrant(params, e)
    if e.tokens.size == 0:
        return 0.0
    g = params.gamma
    parent_norm = parent.counts_at(e.tokens) / parent.counts.sum()
    mix = (1.0 - g) * params.theta[e.s, e.tokens] + g * parent_norm
    with np.errstate(divide="ignore"):
        logs = np.log(mix)
    return float(np.dot(e.counts, logs))


def compensator(params: ModelParams, events: EventSequence) -> float:
    """Integral over [0, T] of the total intensity summed across sources.

    For the exponential kernel this is
    sum_s rho[s] * int_0^T mu_bar_s + sum_i colsum(A)[s_i] * beta(x_i) * (1 - exp(-(T - t_i)/nu)).
    """
    total = sum(params.rho[s] * params.base_shape.integral(s, 0.0, events.T)
                for s in range(params.S))
    if len(events):
        kint = 1.0 - np.exp(-(events.T - events.times) / params.nu)
        beta = _event_betas(params.mark_impact, events)
        col = params.A.sum(axis=0)
        total += float(np.dot(col[events.sources], beta * kint))
    return float(total)


def _event_betas(mark_impact, events: EventSequence) -> np.ndarray:
    """beta(x_i) for every event; fast path for the constant-1 default."""
    if mark_impact is unit_mark_impact:
        return np.ones(len(events))
    return np.array([float(mark_impact(e.tokens, e.counts)) for e in events])
