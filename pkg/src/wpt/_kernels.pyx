# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chain kernels. Loop-for-loop mirror of ``_pykernels``."""
import numpy as np

from libc.math cimport exp, log, log1p, expm1, sqrt, fabs, pow, INFINITY
from scipy.special.cython_special cimport log_ndtr

cdef double LOG2PI = 1.8378770664093453
cdef double LOG2 = 0.6931471805599453

cdef enum:
    K_POWER = 0
    K_WSGM = 1
    K_MODEH = 2
    K_BHAT = 3
    K_HAT = 4

cdef enum:
    C_FULL = 0
    C_IIDGAUSS = 1
    C_SKEW = 2
    C_EXPPOW = 3


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline double _min0(double a) noexcept nogil:
    return a if a < 0.0 else 0.0


cdef class CTarget:
    cdef public int d, J, K, kind, robust
    cdef long long[::1] comp_kind
    cdef double[::1] comp_logw, comp_lognorm, g_logdet, g_logw, g_logpi
    cdef double[:, ::1] comp_par, comp_mean, g_mean
    cdef double[:, :, ::1] comp_prec, g_prec, g_chol
    cdef double[::1] q, sc, lh, diff

    def __init__(self, dict p):
        self.d = p["d"]
        self.J = p["J"]
        self.K = p["K"]
        self.kind = p["kind"]
        self.robust = p["robust"]
        self.comp_kind = p["comp_kind"]
        self.comp_logw = p["comp_logw"]
        self.comp_lognorm = p["comp_lognorm"]
        self.comp_par = p["comp_par"]
        self.comp_mean = p["comp_mean"]
        self.comp_prec = p["comp_prec"]
        self.g_mean = p["g_mean"]
        self.g_prec = p["g_prec"]
        self.g_chol = p["g_chol"]
        self.g_logdet = p["g_logdet"]
        self.g_logw = p["g_logw"]
        self.g_logpi = p["g_logpi"]
        self.q = np.zeros(max(self.K, 1))
        self.sc = np.zeros(max(self.K, 1))
        self.lh = np.zeros(self.J)
        self.diff = np.zeros(self.d)

    cdef double _quadform(self, const double* x, const double[:, ::1] mean, int k,
                          const double[:, :, ::1] prec) noexcept nogil:
        cdef int i, l, d = self.d
        cdef double s = 0.0, row
        for i in range(d):
            self.diff[i] = x[i] - mean[k, i]
        for i in range(d):
            row = 0.0
            for l in range(d):
                row = row + prec[k, i, l] * self.diff[l]
            s = s + self.diff[i] * row
        return s

    cdef double comp_logpdf(self, int j, const double* x) noexcept nogil:
        cdef int i, d = self.d
        cdef double s = 0.0, z, mu, a, b
        cdef long long ck = self.comp_kind[j]
        if ck == C_FULL:
            return self.comp_lognorm[j] - 0.5 * self._quadform(x, self.comp_mean, j, self.comp_prec)
        mu = self.comp_par[j, 0]
        a = self.comp_par[j, 1]
        b = self.comp_par[j, 2]
        if ck == C_IIDGAUSS:
            for i in range(d):
                z = (x[i] - mu) / a
                s = s - 0.5 * z * z
        elif ck == C_SKEW:
            for i in range(d):
                z = (x[i] - mu) / a
                s = s - 0.5 * z * z + log_ndtr(b * z)
        else:
            for i in range(d):
                s = s - a * pow(fabs(x[i] - mu), b)
        return self.comp_lognorm[j] + s

    cdef double log_pi(self, const double* x) noexcept nogil:
        cdef int j
        cdef double mx = -INFINITY, s = 0.0
        for j in range(self.J):
            self.lh[j] = self.comp_logw[j] + self.comp_logpdf(j, x)
            if self.lh[j] > mx:
                mx = self.lh[j]
        if mx == -INFINITY:
            return mx
        for j in range(self.J):
            s = s + exp(self.lh[j] - mx)
        return mx + log(s)

    cdef void _quads(self, const double* x) noexcept nogil:
        cdef int k
        for k in range(self.K):
            self.q[k] = self._quadform(x, self.g_mean, k, self.g_prec)

    cdef inline double _score(self, int k, double beta) noexcept nogil:
        return self.g_logw[k] - 0.5 * (self.d * LOG2PI + self.g_logdet[k]
                                       - self.d * log(beta) + beta * self.q[k])

    cdef int _argmax_score(self, double beta) noexcept nogil:
        cdef int k, best = 0
        cdef double v, bv = -INFINITY
        for k in range(self.K):
            v = self._score(k, beta)
            if v > bv:
                bv = v
                best = k
        return best

    cdef double logpdf(self, double beta, const double* x) noexcept nogil:
        cdef int k, a_hot, a_cold
        cdef double mx, s, lpi, bhat, lp_hot, lp_cold, den, l1mf, lf
        if self.kind == K_POWER:
            return beta * self.log_pi(x)
        self._quads(x)
        if self.kind == K_WSGM:
            mx = -INFINITY
            for k in range(self.K):
                self.sc[k] = self._score(k, beta)
                if self.sc[k] > mx:
                    mx = self.sc[k]
            s = 0.0
            for k in range(self.K):
                s = s + exp(self.sc[k] - mx)
            return mx + log(s)
        if self.kind == K_MODEH:
            a_hot = 0
            for k in range(1, self.K):
                if self.q[k] < self.q[a_hot]:
                    a_hot = k
            return (beta * (self.comp_logw[a_hot] + self.comp_logpdf(a_hot, x))
                    + (1.0 - beta) * self.g_logpi[a_hot])
        a_hot = self._argmax_score(beta)
        lpi = self.log_pi(x)
        bhat = beta * lpi + (1.0 - beta) * self.g_logpi[a_hot]
        if self.kind == K_BHAT:
            return bhat
        a_cold = self._argmax_score(1.0)
        if a_hot == a_cold:
            return bhat
        if not self.robust:
            return self.g_logpi[a_hot] - 0.5 * beta * self.q[a_hot]
        lp_hot = self._score(a_hot, beta)
        lp_cold = self._score(a_cold, beta)
        den = _logaddexp(lp_hot, lp_cold)
        l1mf = LOG2 + lp_cold - den
        lf = lp_hot + log(-expm1(_min0(lp_cold - lp_hot))) - den
        return _logaddexp(l1mf + lpi, lf + bhat)

    def logpdf_batch(self, double beta, X):
        cdef double[:, ::1] xv = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        cdef Py_ssize_t i, n = xv.shape[0]
        out = np.empty(n)
        cdef double[::1] ov = out
        for i in range(n):
            ov[i] = self.logpdf(beta, &xv[i, 0])
        return out

    # -- kernels ----------------------------------------------------------

    cdef double _gauss_t(self, const double* v, int k, double beta) noexcept nogil:
        cdef double qf = self._quadform(v, self.g_mean, k, self.g_prec)
        return -0.5 * (self.d * LOG2PI + self.g_logdet[k] - self.d * log(beta) + beta * qf)

    cdef int _move(self, int kernel_kind, bint exact, double beta, double* x, double* lp,
                   double* y, double log_scale, const double* z, double u) noexcept nogil:
        """One kernel step in place. Returns 1 on acceptance."""
        cdef int i, l, a, b, d = self.d
        cdef double s, lp_y, la, m = 0.0, rb
        if kernel_kind == 0:
            s = exp(log_scale)
            for i in range(d):
                y[i] = x[i] + s * z[i]
            lp_y = self.logpdf(beta, y)
            la = lp_y - lp[0]
        else:
            for i in range(d):
                m = m + x[i]
            a = 0 if m / d < 0 else 1
            rb = sqrt(beta)
            for i in range(d):
                s = 0.0
                for l in range(d):
                    s = s + self.g_chol[a, i, l] * z[l]
                y[i] = self.g_mean[a, i] + s / rb
            lp_y = self.logpdf(beta, y)
            if exact:
                la = INFINITY
            else:
                m = 0.0
                for i in range(d):
                    m = m + y[i]
                b = 0 if m / d < 0 else 1
                la = (lp_y - lp[0] + self._gauss_t(x, b, beta) - self._gauss_t(y, a, beta))
        if log(u) < la:
            for i in range(d):
                x[i] = y[i]
            lp[0] = lp_y
            return 1
        return 0


def logpdf_batch(CTarget t, double beta, X):
    return t.logpdf_batch(beta, X)


def st_chain(CTarget t, betas_in, log_k_in, x0, int level0, int m, int kernel_kind, bint exact,
             double[::1] log_scales, long long[::1] adapt_counts, int n_adapt, double target_acc,
             double[:, ::1] u_temp, double[:, :, ::1] z, double[:, ::1] u_mv):
    cdef double[::1] betas = np.array(betas_in, dtype=float)
    cdef double[::1] log_k = np.array(log_k_in, dtype=float)
    cdef int L = betas.shape[0], d = t.d
    cdef Py_ssize_t C = z.shape[0], rows = C * (m + 1)
    levels_a = np.empty(rows, dtype=np.int64)
    xs_a = np.empty((rows, d))
    acc_a = np.zeros(rows, dtype=np.int8)
    pp_a = np.zeros(max(L - 1, 0), dtype=np.int64)
    pa_a = np.zeros(max(L - 1, 0), dtype=np.int64)
    pq_a = np.zeros(max(L - 1, 0))
    kp_a = np.zeros(L, dtype=np.int64)
    ka_a = np.zeros(L, dtype=np.int64)
    x_a = np.array(x0, dtype=float)
    y_a = np.empty(d)
    cdef long long[::1] levels = levels_a
    cdef double[:, ::1] xs = xs_a
    cdef signed char[::1] acc = acc_a
    cdef long long[::1] pair_prop = pp_a, pair_acc = pa_a, kern_prop = kp_a, kern_acc = ka_a
    cdef double[::1] pair_accprob = pq_a, x = x_a, y = y_a
    cdef long long off_ladder = 0
    cdef Py_ssize_t c, r = 0
    cdef int j, i, T = level0, Tp, pk, a, moved
    cdef double lp, lp_new, la, beta
    lp = t.logpdf(betas[T], &x[0])
    with nogil:
        for c in range(C):
            Tp = T - 1 if u_temp[c, 0] < 0.5 else T + 1
            moved = 0
            if Tp >= 0 and Tp < L:
                lp_new = t.logpdf(betas[Tp], &x[0])
                la = log_k[Tp] + lp_new - log_k[T] - lp
                pk = T if T < Tp else Tp
                pair_prop[pk] += 1
                pair_accprob[pk] += exp(_min0(la))
                if log(u_temp[c, 1]) < la:
                    T = Tp
                    lp = lp_new
                    moved = 1
                    pair_acc[pk] += 1
            else:
                off_ladder += 1
            levels[r] = T
            for i in range(d):
                xs[r, i] = x[i]
            acc[r] = moved
            r += 1
            beta = betas[T]
            for j in range(m):
                a = t._move(kernel_kind, exact, beta, &x[0], &lp, &y[0], log_scales[T],
                            &z[c, j, 0], u_mv[c, j])
                kern_prop[T] += 1
                kern_acc[T] += a
                if kernel_kind == 0 and c < n_adapt:
                    adapt_counts[T] += 1
                    log_scales[T] += pow(<double>adapt_counts[T], -0.6) * (a - target_acc)
                levels[r] = T
                for i in range(d):
                    xs[r, i] = x[i]
                acc[r] = a
                r += 1
    return dict(levels=levels_a, xs=xs_a, acc=acc_a, x=x_a, level=T, pair_prop=pp_a,
                pair_acc=pa_a, pair_accprob=pq_a, off_ladder=off_ladder,
                kern_prop=kp_a, kern_acc=ka_a)


def pt_chain(CTarget t, betas_in, xs0, int m, int kernel_kind, bint exact,
             double[::1] log_scales, long long[::1] adapt_counts, int n_adapt, double target_acc,
             double[:, ::1] u_swap, double[:, :, :, ::1] z, double[:, :, ::1] u_mv,
             bint record_all=False):
    cdef double[::1] betas = np.array(betas_in, dtype=float)
    cdef int L = betas.shape[0], d = t.d
    cdef Py_ssize_t C = z.shape[0], rows = C * (m + 1)
    cold_a = np.empty((rows, d))
    acc_a = np.zeros(rows, dtype=np.int8)
    sk_a = np.full(C, -1, dtype=np.int64)
    sa_a = np.zeros(C, dtype=np.int8)
    pp_a = np.zeros(max(L - 1, 0), dtype=np.int64)
    pa_a = np.zeros(max(L - 1, 0), dtype=np.int64)
    pq_a = np.zeros(max(L - 1, 0))
    kp_a = np.zeros(L, dtype=np.int64)
    ka_a = np.zeros(L, dtype=np.int64)
    X_a = np.array(xs0, dtype=float).reshape(L, d)
    snap_a = np.empty((C if record_all else 0, L, d))
    lp_a = np.empty(L)
    y_a = np.empty(d)
    tmp_a = np.empty(d)
    cdef double[:, ::1] cold = cold_a, X = X_a
    cdef double[:, :, ::1] snap = snap_a
    cdef signed char[::1] acc = acc_a, swap_acc = sa_a
    cdef long long[::1] swap_k = sk_a, pair_prop = pp_a, pair_acc = pa_a
    cdef long long[::1] kern_prop = kp_a, kern_acc = ka_a
    cdef double[::1] pair_accprob = pq_a, lp = lp_a, y = y_a, tmp = tmp_a
    cdef Py_ssize_t c, r = 0
    cdef int j, i, l, k, a, swapped0
    cdef double la, lpa, lpb, beta
    for l in range(L):
        lp[l] = t.logpdf(betas[l], &X[l, 0])
    with nogil:
        for c in range(C):
            swapped0 = 0
            if L > 1:
                k = <int>(u_swap[c, 0] * (L - 1))
                if k > L - 2:
                    k = L - 2
                lpa = t.logpdf(betas[k + 1], &X[k, 0])
                lpb = t.logpdf(betas[k], &X[k + 1, 0])
                la = lpa + lpb - lp[k] - lp[k + 1]
                swap_k[c] = k
                pair_prop[k] += 1
                pair_accprob[k] += exp(_min0(la))
                if log(u_swap[c, 1]) < la:
                    for i in range(d):
                        tmp[i] = X[k, i]
                        X[k, i] = X[k + 1, i]
                        X[k + 1, i] = tmp[i]
                    lp[k] = lpb
                    lp[k + 1] = lpa
                    pair_acc[k] += 1
                    swap_acc[c] = 1
                    swapped0 = 1 if k == 0 else 0
            for i in range(d):
                cold[r, i] = X[0, i]
            acc[r] = swapped0
            r += 1
            for l in range(L):
                beta = betas[l]
                for j in range(m):
                    a = t._move(kernel_kind, exact, beta, &X[l, 0], &lp[l], &y[0], log_scales[l],
                                &z[c, l, j, 0], u_mv[c, l, j])
                    kern_prop[l] += 1
                    kern_acc[l] += a
                    if kernel_kind == 0 and c < n_adapt:
                        adapt_counts[l] += 1
                        log_scales[l] += pow(<double>adapt_counts[l], -0.6) * (a - target_acc)
                    if l == 0:
                        for i in range(d):
                            cold[r + j, i] = X[0, i]
                        acc[r + j] = a
            r += m
            if record_all:
                for l in range(L):
                    for i in range(d):
                        snap[c, l, i] = X[l, i]
    return dict(cold=cold_a, acc=acc_a, swap_k=sk_a, swap_acc=sa_a, xs=X_a, pair_prop=pp_a,
                pair_acc=pa_a, pair_accprob=pq_a, kern_prop=kp_a, kern_acc=ka_a,
                snapshots=snap_a if record_all else None)


def simplified_chain(betas_in, double d, double r1, double r2, double p, int level0, int mode0,
                     double[::1] g1, double[::1] g2, double[:, ::1] u, bint stop_at_bottom=False):
    cdef double[::1] betas = np.array(betas_in, dtype=float)
    cdef int n = betas.shape[0] - 1, nn = n if n > 1 else 1
    cdef Py_ssize_t N = u.shape[0], t, done = N
    levels_a = np.empty(N + 1, dtype=np.int64)
    modes_a = np.empty(N + 1, dtype=np.int8)
    prop_a = np.zeros((nn, 2), dtype=np.int64)
    acc_a = np.zeros((nn, 2), dtype=np.int64)
    aprob_a = np.zeros((nn, 2))
    cdef long long[::1] levels = levels_a
    cdef signed char[::1] modes = modes_a
    cdef long long[:, ::1] prop = prop_a, accs = acc_a
    cdef double[:, ::1] accprob = aprob_a
    cdef int T = level0, I = mode0, Tp, pk
    cdef double S, b, bp, la, r
    levels[0] = T
    modes[0] = I
    with nogil:
        for t in range(N):
            if T == n:
                I = 1 if u[t, 2] < p else 2
            S = g1[t] if I == 1 else g2[t]
            r = r1 if I == 1 else r2
            Tp = T - 1 if u[t, 0] < 0.5 else T + 1
            if Tp >= 0 and Tp <= n:
                b = betas[T]
                bp = betas[Tp]
                la = -(bp - b) * (S / b) + (d / r) * log(bp / b)
                pk = T if T < Tp else Tp
                prop[pk, I - 1] += 1
                accprob[pk, I - 1] += exp(_min0(la))
                if log(u[t, 1]) < la:
                    T = Tp
                    accs[pk, I - 1] += 1
            levels[t + 1] = T
            modes[t + 1] = I
            if stop_at_bottom and T == n:
                done = t + 1
                break
    return dict(levels=levels_a[:done + 1], modes=modes_a[:done + 1], n_done=done, prop=prop_a,
                acc=acc_a, accprob=aprob_a, level=T, mode=I)


def skew_walk(long long k0, long long kmin, long long kmax, double alpha, double[::1] u,
              bint record=False):
    occ_a = np.zeros(kmax - kmin + 1, dtype=np.int64)
    path_a = np.empty(u.shape[0] if record else 0, dtype=np.int64)
    cdef long long[::1] occ = occ_a, path = path_a
    cdef long long k = k0
    cdef Py_ssize_t t
    with nogil:
        for t in range(u.shape[0]):
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
    return dict(occupancy=occ_a, k=k, path=path_a if record else None)


def walsh_walk(int arm0, long long k0, lengths_in, double[::1] cum_p, double[::1] u,
               bint record=False):
    cdef long long[::1] lengths = np.array(lengths_in, dtype=np.int64)
    cdef int n_arms = lengths.shape[0], arm = arm0
    occ_a = np.zeros((n_arms, int(np.max(lengths_in)) + 1), dtype=np.int64)
    arms_a = np.empty(u.shape[0] if record else 0, dtype=np.int64)
    pos_a = np.empty(u.shape[0] if record else 0, dtype=np.int64)
    cdef long long[:, ::1] occ = occ_a
    cdef long long[::1] arms = arms_a, pos = pos_a
    cdef long long k = k0, origin = 0
    cdef Py_ssize_t t
    with nogil:
        for t in range(u.shape[0]):
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
    return dict(occupancy=occ_a, origin=origin, arm=arm, k=k,
                arms=arms_a if record else None, pos=pos_a if record else None)
