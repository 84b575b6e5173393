"""Flatten a TemperedTarget into the arrays the compiled kernels read."""
from __future__ import annotations

import numpy as np

from .mixture_targets import (
    LOG_2PI,
    ExponentialPower,
    FullGaussian,
    Gaussian,
    MixtureTarget,
    SkewNormal,
    UnsupportedKindError,
)
from .tempered_targets import GVariant, TemperedTarget, TemperKind, _component_log_at_modes

KIND_CODES = {TemperKind.POWER: 0, TemperKind.WSGM: 1, TemperKind.MODE_HEIGHT: 2,
              TemperKind.BHAT: 3, TemperKind.HAT: 4}

C_FULL, C_IIDGAUSS, C_SKEW, C_EXPPOW = 0, 1, 2, 3


def packable(t: TemperedTarget) -> bool:
    return isinstance(t.base, MixtureTarget) and t.kind in KIND_CODES


def pack(t: TemperedTarget) -> dict:
    if not packable(t):
        raise UnsupportedKindError(f"cannot compile {t.kind.value} on this base density")
    base: MixtureTarget = t.base
    d, J = base.dim, len(base.components)
    comp_kind = np.zeros(J, dtype=np.int64)
    comp_logw = np.log(base.weights)
    comp_lognorm = np.zeros(J)
    comp_par = np.zeros((J, 3))
    comp_mean = np.zeros((J, d))
    comp_prec = np.zeros((J, d, d))
    for j, c in enumerate(base.components):
        s = c.shape
        if isinstance(s, FullGaussian):
            comp_kind[j] = C_FULL
            comp_mean[j] = s.mu
            comp_prec[j] = s._prec
            comp_lognorm[j] = -0.5 * (d * LOG_2PI + s._logdet)
            continue
        f = s.family
        if isinstance(f, Gaussian):
            comp_kind[j] = C_IIDGAUSS
            comp_par[j] = (f.mu, f.sigma, 0.0)
            comp_lognorm[j] = d * (-0.5 * LOG_2PI - np.log(f.sigma))
        elif isinstance(f, SkewNormal):
            comp_kind[j] = C_SKEW
            comp_par[j] = (f.mu, f.sigma, f.alpha)
            comp_lognorm[j] = d * (np.log(2.0) - np.log(f.sigma) - 0.5 * LOG_2PI)
        elif isinstance(f, ExponentialPower):
            comp_kind[j] = C_EXPPOW
            comp_par[j] = (f.mu, f.lam, f.r)
            comp_lognorm[j] = d * f.log_norm
        else:
            raise UnsupportedKindError(f"unknown family {type(f).__name__}")

    try:
        gs = t.gaussian_set()
    except UnsupportedKindError:
        gs = None
    if gs is None:
        K = 0
        g = dict(g_mean=np.zeros((0, d)), g_prec=np.zeros((0, d, d)), g_chol=np.zeros((0, d, d)),
                 g_logdet=np.zeros(0), g_logw=np.zeros(0))
    else:
        K = gs.means.shape[0]
        g = dict(g_mean=gs.means, g_prec=gs.precs, g_chol=gs.chol, g_logdet=gs.logdets,
                 g_logw=gs.logw)
    g_logpi = np.zeros(K)
    if t.kind is TemperKind.MODE_HEIGHT:
        g_logpi = _component_log_at_modes(t)
    elif t.kind in (TemperKind.BHAT, TemperKind.HAT):
        g_logpi = t.ctx.log_pi_modes
    out = dict(d=d, J=J, K=K, kind=KIND_CODES[t.kind],
               robust=int(t.g_variant is GVariant.ROBUST),
               comp_kind=comp_kind, comp_logw=comp_logw, comp_lognorm=comp_lognorm,
               comp_par=comp_par, comp_mean=comp_mean, comp_prec=comp_prec, g_logpi=g_logpi)
    out.update(g)
    return {k: (np.ascontiguousarray(v, dtype=np.int64 if k == "comp_kind" else float)
                if isinstance(v, np.ndarray) else v) for k, v in out.items()}
