"""Root-source probabilities: forward DP recursion and the enumeration oracle.

The s-root probability of event i is the posterior probability, over latent
branching structures, that the tree containing event i was started by source
s.  Because parent assignments are conditionally independent given the
observed events, the probabilities satisfy the forward recursion

    r_i^(s)  oc  delta(s_i = s) mu^(s_i)(t_i) f(x_i | t_i, s_i)
               + sum_{j<i} r_j^(s) lambda_j^(s_i)(t_i) f(x_i | t_i, s_i, e_j)

normalized per event.  Each row is normalized immediately — the recursion is
stated up to proportionality and r_j enters linearly, so per-row constants
are absorbed into the following rows' normalizers; this keeps the dynamic
range bounded.  Unnormalized terms are computed as exp(log-weight - m_i)
with a per-event max shift m_i.

The temporal-only variant keeps just the intensity factors, the mark-only
variant keeps just the densities.  `enumerate_oracle` recomputes r by brute
force over all joint parent assignments (product over events of their
candidate sets) and is the ground truth the DP is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import (ConstantShape, EventSequence, ModelParams, _event_betas,
                    compensator, excited_intensity, log_mark_density_immigrant,
                    log_mark_density_offspring)

__all__ = [
    "RootProbMatrix",
    "root_probabilities",
    "root_probabilities_temporal",
    "root_probabilities_mark",
    "enumerate_oracle",
]

MODES = ("full", "temporal_only", "mark_only", "running_window")


@dataclass
class RootProbMatrix:
    """n x S row-stochastic matrix; r[i, s] = probability that source s roots event i.

    mode records which weights produced it: "full", "temporal_only",
    "mark_only", or "running_window" for the heuristic baseline.
    """

    r: np.ndarray
    mode: str = "full"

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.r.ndim != 2:
            raise ValidationError("r must be a 2-d matrix")
        if self.r.size:
            if np.any(self.r < 0) or np.any(self.r > 1):
                raise ValidationError("root probabilities must lie in [0, 1]")
            if np.any(np.abs(self.r.sum(axis=1) - 1.0) > 1e-9):
                raise ValidationError("root probability rows must sum to 1")

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @property
    def S(self) -> int:
        return self.r.shape[1]

    def argmax_sources(self) -> np.ndarray:
        """Most probable root source per event (0-based; ties -> lowest index)."""
        return self.r.argmax(axis=1)


def _mark_fast_ok(params: ModelParams) -> bool:
    if not 0.0 <= params.gamma < 1.0:
        return False
    if params.V and params.theta.min() <= 0.0:
        return False
    return True


def _immigrant_log_densities(events: EventSequence, params: ModelParams) -> np.ndarray:
    if _mark_fast_ok(params) and events.tok_index.size:
        with np.errstate(divide="ignore"):
            log_theta = np.log(params.theta).ravel()
        rows = np.repeat(np.arange(len(events)), np.diff(events.tok_indptr))
        key = events.sources[rows] * events.V + events.tok_index
        return np.bincount(rows, weights=events.tok_count * log_theta[key],
                           minlength=len(events))
    return np.array([log_mark_density_immigrant(params, e) for e in events])


def _root_dp(events: EventSequence, params: ModelParams, use_time: bool,
             use_marks: bool, mode: str, window: float | None) -> RootProbMatrix:
    params.validate()
    n, S = len(events), events.S
    if n == 0:
        return RootProbMatrix(np.zeros((0, S)), mode)
    times = events.times
    sources = events.sources
    if window is not None:
        if window <= 0:
            raise ValidationError("truncation window must be positive")
        lo = np.searchsorted(times, times - window * params.nu, side="left")
    else:
        lo = np.zeros(n, dtype=np.int64)

    with np.errstate(divide="ignore"):
        log_rho = np.log(params.rho)
        log_A = np.log(params.A)
        log_beta = np.log(_event_betas(params.mark_impact, events))
    if isinstance(params.base_shape, ConstantShape):
        mu_log = np.full(n, math.log(params.base_shape.c))
    else:
        with np.errstate(divide="ignore"):
            mu_log = np.log(np.array([params.base_shape.value(int(sources[k]),
                                                              float(times[k]))
                                      for k in range(n)]))

    g = params.gamma
    mark_fast = _mark_fast_ok(params)
    lengths = events.lengths
    if use_marks:
        log_f_imm = _immigrant_log_densities(events, params)
        if mark_fast and g > 0:
            indptr, post_ev, post_cnt, post_norm = events.token_postings()
    ev = list(events) if use_marks and not mark_fast else None

    r = np.zeros((n, S))
    for i in range(n):
        e_lo = int(lo[i])
        cand = np.arange(e_lo, i)
        log_off = np.zeros(i - e_lo)
        imm_log = 0.0
        if use_time:
            imm_log += log_rho[sources[i]] + mu_log[i]
            log_off += (log_A[sources[i], sources[cand]] + log_beta[cand]
                        - (times[i] - times[cand]) / params.nu - math.log(params.nu))
        if use_marks:
            if mark_fast:
                imm_log += log_f_imm[i]
                log_off += log_f_imm[i]
                if g > 0 and lengths[i] > 0:
                    log_off += np.where(lengths[cand] > 0,
                                        lengths[i] * math.log1p(-g), 0.0)
                    a, b = events.tok_indptr[i], events.tok_indptr[i + 1]
                    for v, x_iv in zip(events.tok_index[a:b], events.tok_count[a:b]):
                        pa, pb = indptr[v], indptr[v + 1]
                        jl = pa + np.searchsorted(post_ev[pa:pb], e_lo, side="left")
                        jr = pa + np.searchsorted(post_ev[pa:pb], i, side="left")
                        if jl == jr:
                            continue
                        ratio = (g * post_norm[jl:jr]) \
                            / ((1.0 - g) * params.theta[sources[i], v])
                        log_off[post_ev[jl:jr] - e_lo] += x_iv * np.log1p(ratio)
            else:
                imm_log += log_mark_density_immigrant(params, ev[i])
                for c, j in enumerate(cand):
                    log_off[c] += log_mark_density_offspring(params, ev[i], ev[int(j)])

        m = max(imm_log, log_off.max()) if log_off.size else imm_log
        if not np.isfinite(m):
            raise NumericalError(
                f"all root hypotheses for event {i + 1} have zero probability")
        row = np.exp(log_off - m) @ r[e_lo:i]
        row[sources[i]] += math.exp(imm_log - m)
        tot = row.sum()
        if not np.isfinite(tot) or tot <= 0:
            raise NumericalError(
                f"degenerate root-probability row at event {i + 1}")
        # division can round a lone dominant entry to 1 + ulp
        r[i] = np.clip(row / tot, 0.0, 1.0)
    return RootProbMatrix(r, mode)


def root_probabilities(events: EventSequence, params: ModelParams,
                       window: float | None = None) -> RootProbMatrix:
    """Full-model root probabilities (intensity and mark factors)."""
    return _root_dp(events, params, True, True, "full", window)


def root_probabilities_temporal(events: EventSequence, params: ModelParams,
                                window: float | None = None) -> RootProbMatrix:
    """Sub-model variant using intensity factors only."""
    return _root_dp(events, params, True, False, "temporal_only", window)


def root_probabilities_mark(events: EventSequence, params: ModelParams,
                            window: float | None = None) -> RootProbMatrix:
    """Sub-model variant using mark densities only."""
    return _root_dp(events, params, False, True, "mark_only", window)


ORACLE_CAP = 12


def _choice_log_weights(events: EventSequence, params: ModelParams) -> np.ndarray:
    """(n, n+1) matrix: column 0 the immigrant log weight, column j+1 parent j."""
    ev = list(events)
    n = len(ev)
    W = np.full((n, n + 1), -np.inf)
    for k, e in enumerate(ev):
        mu = params.rho[e.s] * params.base_shape.value(e.s, e.t)
        W[k, 0] = ((math.log(mu) if mu > 0 else -np.inf)
                   + log_mark_density_immigrant(params, e))
        for j in range(k):
            lam = excited_intensity(params, e.s, ev[j], e.t)
            W[k, j + 1] = ((math.log(lam) if lam > 0 else -np.inf)
                           + log_mark_density_offspring(params, e, ev[j]))
    return W


def enumerate_posteriors(events: EventSequence, params: ModelParams):
    """Brute force over all joint parent assignments.

    Returns (r, eta, log_marginal): the root matrix, the exact per-event
    parent posteriors as an (n, n+1) matrix (column 0 immigrant, column j+1
    parent j), and the coefficient-free log marginal likelihood of the
    sequence (compensator included, multinomial coefficients excluded, so it
    is directly comparable to the variational objective).
    """
    params.validate()
    n, S = len(events), events.S
    if n > ORACLE_CAP:
        raise ValidationError(f"enumeration oracle capped at {ORACLE_CAP} events, got {n}")
    if n == 0:
        return np.zeros((0, S)), np.zeros((0, 1)), -compensator(params, events)
    W = _choice_log_weights(events, params)
    row_max = np.array([W[k, :k + 1].max() for k in range(n)])
    if not np.all(np.isfinite(row_max)):
        k = int(np.argmax(~np.isfinite(row_max)))
        raise NumericalError(
            f"all parent hypotheses for event {k + 1} have zero probability")
    shift = row_max.sum()

    sources = events.sources
    radices = tuple(k + 1 for k in range(n))
    total_assignments = math.prod(radices)
    r_acc = np.zeros((n, S))
    eta_acc = np.zeros((n, n + 1))
    total = 0.0
    chunk = 1 << 20
    rows = np.arange(n)[:, None]
    for start in range(0, total_assignments, chunk):
        ids = np.arange(start, min(start + chunk, total_assignments))
        choice = np.stack(np.unravel_index(ids, radices))
        w = np.exp(W[rows, choice].sum(axis=0) - shift)
        cols = np.arange(ids.size)
        roots = np.empty((n, ids.size), dtype=np.int64)
        for k in range(n):
            c = choice[k]
            parent_root = roots[np.maximum(c, 1) - 1, cols]
            roots[k] = np.where(c == 0, k, parent_root)
        for k in range(n):
            r_acc[k] += np.bincount(sources[roots[k]], weights=w, minlength=S)
            eta_acc[k, :k + 1] += np.bincount(choice[k], weights=w, minlength=k + 1)
        total += w.sum()
    if total <= 0:
        raise NumericalError("all branching structures have zero probability")
    log_marginal = math.log(total) + shift - compensator(params, events)
    # division can round a lone dominant entry to 1 + ulp
    return (np.clip(r_acc / total, 0.0, 1.0), np.clip(eta_acc / total, 0.0, 1.0),
            log_marginal)


def enumerate_oracle(events: EventSequence, params: ModelParams) -> RootProbMatrix:
    """Root probabilities by explicit enumeration; reference for the DP (n <= 12)."""
    r, _, _ = enumerate_posteriors(events, params)
    return RootProbMatrix(r, "full")
