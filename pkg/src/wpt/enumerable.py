"""Exact transition matrices of the tempering moves on finite state spaces.

The move rules match the samplers: a uniform +-1 temperature proposal with
off-ladder proposals rejected, a uniformly chosen adjacent swap, and
Metropolis steps with a symmetric +-1 neighbour proposal (off-grid rejected).
"""
from __future__ import annotations

import numpy as np


def _accept(la: float) -> float:
    return float(np.exp(min(la, 0.0)))


def rwm_matrix(log_p) -> np.ndarray:
    """Metropolis kernel on grid points 0..n-1 proposing i-1 or i+1 with probability 1/2."""
    lp = np.asarray(log_p, dtype=float)
    n = lp.size
    P = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                P[i, j] = 0.5 * _accept(lp[j] - lp[i])
        P[i, i] = 1.0 - P[i].sum()
    return P


def temperature_matrix(log_pi_levels, log_k) -> np.ndarray:
    """ST temperature move on states (level, i) flattened as level * n + i.

    ``log_pi_levels[l, i]`` is the tempered log density at level l.
    """
    lpl = np.asarray(log_pi_levels, dtype=float)
    lk = np.asarray(log_k, dtype=float)
    L, n = lpl.shape
    P = np.zeros((L * n, L * n))
    for t in range(L):
        for i in range(n):
            s = t * n + i
            for tp in (t - 1, t + 1):
                if 0 <= tp < L:
                    P[s, tp * n + i] = 0.5 * _accept(lk[tp] + lpl[tp, i] - lk[t] - lpl[t, i])
            P[s, s] = 1.0 - P[s].sum()
    return P


def st_sweep_matrix(log_pi_levels, log_k, m: int) -> np.ndarray:
    """One ST sweep: temperature move followed by ``m`` kernel steps at the new level."""
    lpl = np.asarray(log_pi_levels, dtype=float)
    L, n = lpl.shape
    K = np.zeros((L * n, L * n))
    for t in range(L):
        K[t * n:(t + 1) * n, t * n:(t + 1) * n] = np.linalg.matrix_power(rwm_matrix(lpl[t]), m)
    return temperature_matrix(lpl, log_k) @ K


def pt_sweep_matrix(log_pi_levels, m: int) -> np.ndarray:
    """One PT sweep on L copies of an n-point grid, state index in row-major (i_0, ..., i_{L-1})."""
    lpl = np.asarray(log_pi_levels, dtype=float)
    L, n = lpl.shape
    N = n ** L
    states = np.array(np.unravel_index(np.arange(N), (n,) * L)).T
    S = np.zeros((N, N))
    for s, st in enumerate(states):
        if L == 1:
            S[s, s] = 1.0
            continue
        for k in range(L - 1):
            i, j = st[k], st[k + 1]
            la = lpl[k, j] + lpl[k + 1, i] - lpl[k, i] - lpl[k + 1, j]
            nxt = st.copy()
            nxt[k], nxt[k + 1] = j, i
            a = _accept(la) / (L - 1)
            S[s, np.ravel_multi_index(nxt, (n,) * L)] += a
            S[s, s] += 1.0 / (L - 1) - a
    K = np.ones((1, 1))
    for t in range(L):
        K = np.kron(K, np.linalg.matrix_power(rwm_matrix(lpl[t]), m))
    return S @ K


def stationary(P) -> np.ndarray:
    """Stationary row vector of a stochastic matrix by a direct linear solve."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi
