"""Shared helpers for building small random test instances."""

import numpy as np

import rootsource as rs


def random_events(rng, n, S, V, T=10.0, max_len=5):
    """Random event sequence with mark bags of size 0..max_len-1."""
    times = np.sort(rng.uniform(0.05, T - 0.05, n))
    evs = []
    for k in range(n):
        L = int(rng.integers(0, max_len))
        counts = {}
        for t in rng.integers(0, V, L):
            counts[int(t)] = counts.get(int(t), 0) + 1
        evs.append(rs.Event.make(k + 1, float(times[k]), int(rng.integers(0, S)), counts))
    return rs.EventSequence.from_events(evs, T=T, S=S, V=V)


def random_params(rng, S, V, gamma=None, nu=None):
    return rs.ModelParams(
        rho=rng.uniform(0.05, 0.5, S),
        A=rng.uniform(0.0, 0.3, (S, S)),
        theta=rng.dirichlet(np.ones(V), size=S),
        gamma=float(rng.uniform(0.0, 0.95)) if gamma is None else gamma,
        nu=float(rng.uniform(0.5, 5.0)) if nu is None else nu,
    )


def random_instance(rng, n_max=9, S_max=5, V_max=21):
    """(events, params) pair small enough for the enumeration oracle."""
    n = int(rng.integers(2, n_max))
    S = int(rng.integers(1, S_max))
    V = int(rng.integers(2, V_max))
    events = random_events(rng, n, S, V)
    return events, random_params(rng, S, V)


def dense_eta(state):
    """Materialize variational responsibilities as an (n, n+1) array."""
    n = len(state.structure.events)
    out = np.zeros((n, n + 1))
    for k in range(n):
        out[k, : k + 1] = state.eta_vector(k)
    return out
