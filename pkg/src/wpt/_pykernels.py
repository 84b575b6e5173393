"""Pure-Python chain kernels.

These are the reference loops; ``_kernels.pyx`` mirrors them statement for
statement. All randomness is supplied as pre-drawn arrays so that both
backends consume identical streams.
"""
from __future__ import annotations

import math

import numpy as np

from .samplers import modal_independence_core, rwm_core

RWM = 0
MODAL = 1


def _kernel_move(lp_fn, gs, kernel_kind, exact, x, lp_x, beta, log_scale, z, u):
    if kernel_kind == RWM:
        return rwm_core(lp_fn, x, lp_x, math.exp(log_scale), z, u)
    return modal_independence_core(lp_fn, gs, x, lp_x, beta, z, u, exact)


def _gauss(target, kernel_kind):
    return target.gaussian_set() if kernel_kind == MODAL else None


def st_chain(target, betas, log_k, x0, level0, m, kernel_kind, exact, log_scales,
             adapt_counts, n_adapt, target_acc, u_temp, z, u_mv):
    betas = np.asarray(betas, dtype=float)
    L = betas.size
    C, d = z.shape[0], z.shape[2]
    gs = _gauss(target, kernel_kind)
    rows = C * (m + 1)
    levels = np.empty(rows, dtype=np.int64)
    xs = np.empty((rows, d))
    acc = np.zeros(rows, dtype=np.int8)
    pair_prop = np.zeros(max(L - 1, 0), dtype=np.int64)
    pair_acc = np.zeros_like(pair_prop)
    pair_accprob = np.zeros(max(L - 1, 0))
    kern_prop = np.zeros(L, dtype=np.int64)
    kern_acc = np.zeros(L, dtype=np.int64)
    off_ladder = 0

    x = np.array(x0, dtype=float)
    T = int(level0)
    lp = float(target.logpdf(betas[T], x))
    r = 0
    for c in range(C):
        Tp = T - 1 if u_temp[c, 0] < 0.5 else T + 1
        moved = 0
        if 0 <= Tp < L:
            lp_new = float(target.logpdf(betas[Tp], x))
            la = log_k[Tp] + lp_new - log_k[T] - lp
            pk = min(T, Tp)
            pair_prop[pk] += 1
            pair_accprob[pk] += min(1.0, math.exp(min(la, 0.0)))
            if math.log(u_temp[c, 1]) < la:
                T, lp, moved = Tp, lp_new, 1
                pair_acc[pk] += 1
        else:
            off_ladder += 1
        levels[r] = T
        xs[r] = x
        acc[r] = moved
        r += 1
        beta = betas[T]
        lp_fn = lambda v, b=beta: target.logpdf(b, v)  # noqa: E731
        for j in range(m):
            x, lp, a, _ = _kernel_move(lp_fn, gs, kernel_kind, exact, x, lp, beta,
                                       log_scales[T], z[c, j], u_mv[c, j])
            kern_prop[T] += 1
            kern_acc[T] += a
            if kernel_kind == RWM and c < n_adapt:
                adapt_counts[T] += 1
                log_scales[T] += adapt_counts[T] ** -0.6 * (float(a) - target_acc)
            levels[r] = T
            xs[r] = x
            acc[r] = a
            r += 1
    return dict(levels=levels, xs=xs, acc=acc, x=x, level=T, pair_prop=pair_prop,
                pair_acc=pair_acc, pair_accprob=pair_accprob, off_ladder=off_ladder,
                kern_prop=kern_prop, kern_acc=kern_acc)


def pt_chain(target, betas, xs0, m, kernel_kind, exact, log_scales, adapt_counts, n_adapt,
             target_acc, u_swap, z, u_mv, record_all=False):
    betas = np.asarray(betas, dtype=float)
    L = betas.size
    C, d = z.shape[0], z.shape[3]
    gs = _gauss(target, kernel_kind)
    rows = C * (m + 1)
    cold = np.empty((rows, d))
    acc = np.zeros(rows, dtype=np.int8)
    swap_k = np.full(C, -1, dtype=np.int64)
    swap_acc = np.zeros(C, dtype=np.int8)
    pair_prop = np.zeros(max(L - 1, 0), dtype=np.int64)
    pair_acc = np.zeros_like(pair_prop)
    pair_accprob = np.zeros(max(L - 1, 0))
    kern_prop = np.zeros(L, dtype=np.int64)
    kern_acc = np.zeros(L, dtype=np.int64)
    snap = np.empty((C, L, d)) if record_all else None

    X = np.array(xs0, dtype=float).reshape(L, d)
    lp = np.array([float(target.logpdf(betas[l], X[l])) for l in range(L)])
    r = 0
    for c in range(C):
        swapped0 = 0
        if L > 1:
            k = min(int(u_swap[c, 0] * (L - 1)), L - 2)
            lp_a = float(target.logpdf(betas[k + 1], X[k]))
            lp_b = float(target.logpdf(betas[k], X[k + 1]))
            la = lp_a + lp_b - lp[k] - lp[k + 1]
            swap_k[c] = k
            pair_prop[k] += 1
            pair_accprob[k] += min(1.0, math.exp(min(la, 0.0)))
            if math.log(u_swap[c, 1]) < la:
                X[[k, k + 1]] = X[[k + 1, k]]
                lp[k], lp[k + 1] = lp_b, lp_a
                pair_acc[k] += 1
                swap_acc[c] = 1
                swapped0 = 1 if k == 0 else 0
        cold[r] = X[0]
        acc[r] = swapped0
        r += 1
        for l in range(L):
            beta = betas[l]
            lp_fn = lambda v, b=beta: target.logpdf(b, v)  # noqa: E731
            x, lpl = X[l], lp[l]
            for j in range(m):
                x, lpl, a, _ = _kernel_move(lp_fn, gs, kernel_kind, exact, x, lpl, beta,
                                            log_scales[l], z[c, l, j], u_mv[c, l, j])
                kern_prop[l] += 1
                kern_acc[l] += a
                if kernel_kind == RWM and c < n_adapt:
                    adapt_counts[l] += 1
                    log_scales[l] += adapt_counts[l] ** -0.6 * (float(a) - target_acc)
                if l == 0:
                    cold[r + j] = x
                    acc[r + j] = a
            X[l] = x
            lp[l] = lpl
        r += m
        if record_all:
            snap[c] = X
    return dict(cold=cold, acc=acc, swap_k=swap_k, swap_acc=swap_acc, xs=X, pair_prop=pair_prop,
                pair_acc=pair_acc, pair_accprob=pair_accprob, kern_prop=kern_prop,
                kern_acc=kern_acc, snapshots=snap)


def logpdf_batch(target, beta, X):
    return np.asarray(target.logpdf(beta, np.asarray(X, dtype=float)), dtype=float)


def simplified_chain(betas, d, r1, r2, p, level0, mode0, g1, g2, u, stop_at_bottom=False):
    """Idealised weight-preserving ST on the ladder (see diffusion_limit)."""
    betas = np.asarray(betas, dtype=float)
    n = betas.size - 1
    N = u.shape[0]
    levels = np.empty(N + 1, dtype=np.int64)
    modes = np.empty(N + 1, dtype=np.int8)
    prop = np.zeros((max(n, 1), 2), dtype=np.int64)
    accs = np.zeros((max(n, 1), 2), dtype=np.int64)
    accprob = np.zeros((max(n, 1), 2))
    rs = (r1, r2)
    T, I = int(level0), int(mode0)
    levels[0], modes[0] = T, I
    done = N
    for t in range(N):
        if T == n:
            I = 1 if u[t, 2] < p else 2
        S = g1[t] if I == 1 else g2[t]
        Tp = T - 1 if u[t, 0] < 0.5 else T + 1
        if 0 <= Tp <= n:
            b, bp = betas[T], betas[Tp]
            la = -(bp - b) * (S / b) + (d / rs[I - 1]) * math.log(bp / b)
            pk = min(T, Tp)
            prop[pk, I - 1] += 1
            accprob[pk, I - 1] += min(1.0, math.exp(min(la, 0.0)))
            if math.log(u[t, 1]) < la:
                T = Tp
                accs[pk, I - 1] += 1
        levels[t + 1], modes[t + 1] = T, I
        if stop_at_bottom and T == n:
            done = t + 1
            break
    return dict(levels=levels[:done + 1], modes=modes[:done + 1], n_done=done, prop=prop,
                acc=accs, accprob=accprob, level=T, mode=I)


def skew_walk(k0, kmin, kmax, alpha, u, record=False):
    occ = np.zeros(kmax - kmin + 1, dtype=np.int64)
    path = np.empty(u.size, dtype=np.int64) if record else None
    k = int(k0)
    for t in range(u.size):
        if k == 0:
            k = 1 if u[t] < alpha else -1
        elif u[t] < 0.5:
            if k > kmin:
                k -= 1
        elif k < kmax:
            k += 1
        occ[k - kmin] += 1
        if record:
            path[t] = k
    return dict(occupancy=occ, k=k, path=path)


def walsh_walk(arm0, k0, lengths, cum_p, u, record=False):
    lengths = np.asarray(lengths, dtype=np.int64)
    n_arms = lengths.size
    occ = np.zeros((n_arms, int(lengths.max()) + 1), dtype=np.int64)
    origin = 0
    arms = np.empty(u.size, dtype=np.int64) if record else None
    pos = np.empty(u.size, dtype=np.int64) if record else None
    arm, k = int(arm0), int(k0)
    for t in range(u.size):
        if k == 0:
            arm = 0
            while arm < n_arms - 1 and u[t] >= cum_p[arm]:
                arm += 1
            k = 1
        elif u[t] < 0.5:
            k -= 1
        elif k < lengths[arm]:
            k += 1
        if k == 0:
            origin += 1
        else:
            occ[arm, k] += 1
        if record:
            arms[t] = arm if k > 0 else -1
            pos[t] = k
    return dict(occupancy=occ, origin=origin, arm=arm, k=k, arms=arms, pos=pos)
