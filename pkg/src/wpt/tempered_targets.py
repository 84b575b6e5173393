"""Tempered versions of a mixture target.

Each kind maps an inverse temperature ``beta`` and a point ``x`` to an
unnormalised log-density:

* ``POWER``      beta * log pi(x)
* ``WSGM``       Gaussian mixture with covariances widened by 1/beta, weights kept
* ``GRADIENT``  per-component gradient/Hessian correction (verification only)
* ``MODE_HEIGHT``  h_j(x)^beta h_j(mu_j)^(1-beta) on the assigned component
* ``BHAT``       pi(x)^beta pi(mu_A(x,beta))^(1-beta)
* ``HAT``        BHAT where the hot and cold mode assignments agree, G elsewhere
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .mixture_targets import (
    LOG_2PI,
    HatContext,
    MixtureTarget,
    UnsupportedKindError,
    grad_log_density,
    hessian_log_density,
    logdet_spd,
)


class TemperKind(enum.Enum):
    POWER = "power"
    WSGM = "wsgm"
    GRADIENT = "gradient"
    MODE_HEIGHT = "mode_height"
    BHAT = "bhat"
    HAT = "hat"

    @classmethod
    def parse(cls, s: "str | TemperKind") -> "TemperKind":
        if isinstance(s, cls):
            return s
        key = str(s).lower()
        key = _KIND_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown temper_kind {s!r}; choose from {[k.value for k in cls]}") from None


# alternative config tokens
_KIND_ALIASES = {"theoremb": "gradient", "theorem_b": "gradient",
                 "theoremc": "mode_height", "theorem_c": "mode_height"}


class GVariant(enum.Enum):
    CANONICAL = "canonical"
    ROBUST = "robust"

    @classmethod
    def parse(cls, s: "str | GVariant") -> "GVariant":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).lower())
        except ValueError:
            raise ValueError(f"unknown g_variant {s!r}") from None


class ExplosionRiskError(ValueError):
    """The gradient correction was asked for where the log-Hessian is not negative definite."""


class EstimationFailedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Gaussian sets: the (weights, means, covariances) a kind works with
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _GaussSet:
    logw: np.ndarray
    means: np.ndarray
    precs: np.ndarray
    logdets: np.ndarray
    chol: np.ndarray

    @classmethod
    def build(cls, weights, means, covs):
        covs = np.asarray(covs, dtype=float)
        chol = np.stack([np.linalg.cholesky(S) for S in covs])
        return cls(np.log(np.asarray(weights, dtype=float)), np.asarray(means, dtype=float),
                   np.stack([np.linalg.inv(S) for S in covs]),
                   2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(1), chol)

    def quad(self, x) -> np.ndarray:
        """Mahalanobis forms (..., K)."""
        diff = np.asarray(x, dtype=float)[..., None, :] - self.means
        return np.einsum("...ki,kij,...kj->...k", diff, self.precs, diff)

    def tempered_scores(self, q, beta) -> np.ndarray:
        """log w_k + log N(x; mu_k, Sigma_k / beta) given the forms q."""
        d = self.means.shape[1]
        return self.logw - 0.5 * (d * LOG_2PI + self.logdets - d * np.log(beta) + beta * q)


def _ctx_set(ctx: HatContext) -> _GaussSet:
    return _GaussSet(np.log(ctx.weights), ctx.modes, ctx.precs, ctx.logdets, ctx.chol)


def _mixture_set(target: MixtureTarget, ctx: HatContext | None) -> _GaussSet:
    if target.all_gaussian:
        params = [c.gaussian_params() for c in target.components]
        return _GaussSet.build(target.weights, [p[0] for p in params], [p[1] for p in params])
    if ctx is None or ctx.K != len(target.components):
        raise UnsupportedKindError(
            "non-Gaussian components need a HatContext surrogate with one mode per component")
    return _GaussSet(np.log(target.weights), ctx.modes, ctx.precs, ctx.logdets, ctx.chol)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


# ---------------------------------------------------------------------------
# Tempered target object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemperedTarget:
    base: MixtureTarget | Callable
    kind: TemperKind = TemperKind.POWER
    ctx: HatContext | None = None
    g_variant: GVariant = GVariant.CANONICAL

    def __post_init__(self):
        object.__setattr__(self, "kind", TemperKind.parse(self.kind))
        object.__setattr__(self, "g_variant", GVariant.parse(self.g_variant))
        k = self.kind
        if k in (TemperKind.WSGM, TemperKind.GRADIENT, TemperKind.MODE_HEIGHT):
            if not isinstance(self.base, MixtureTarget):
                raise UnsupportedKindError(f"{k.value} needs a MixtureTarget with known components")
            object.__setattr__(self, "_gset", _mixture_set(self.base, self.ctx))
        if k in (TemperKind.BHAT, TemperKind.HAT) and self.ctx is None:
            raise UnsupportedKindError(f"{k.value} needs a HatContext")

    @property
    def dim(self) -> int:
        if isinstance(self.base, MixtureTarget):
            return self.base.dim
        if self.ctx is None:
            raise UnsupportedKindError("dimension unknown for an opaque density without a HatContext")
        return self.ctx.dim

    def log_pi(self, x):
        return self.base(x)

    def logpdf(self, beta: float, x):
        k = self.kind
        if k is TemperKind.POWER:
            return power_logpdf(self, beta, x)
        if k is TemperKind.WSGM:
            return wsgm_logpdf(self, beta, x)
        if k is TemperKind.GRADIENT:
            return gradient_corrected_logpdf(self, beta, x)
        if k is TemperKind.MODE_HEIGHT:
            return mode_height_logpdf(self, beta, x)
        if k is TemperKind.BHAT:
            return bhat_logpdf(self.base, self.ctx, x, beta)
        return hat_logpdf(self.base, self.ctx, x, beta, self.g_variant)

    def log_pseudo_prior(self, beta: float) -> float:
        return log_pseudo_prior(self, beta)

    def gaussian_set(self) -> _GaussSet:
        """The Gaussian description used for assignment and modal proposals."""
        if self.ctx is not None and self.kind in (TemperKind.BHAT, TemperKind.HAT):
            return _ctx_set(self.ctx)
        if hasattr(self, "_gset"):
            return self._gset
        if isinstance(self.base, MixtureTarget):
            return _mixture_set(self.base, self.ctx)
        if self.ctx is not None:
            return _ctx_set(self.ctx)
        raise UnsupportedKindError("no Gaussian description available")


# ---------------------------------------------------------------------------
# Kinds
# ---------------------------------------------------------------------------

def power_logpdf(t: TemperedTarget, beta: float, x):
    if not beta > 0:
        raise ValueError("beta must be positive")
    return _scalar(beta * np.asarray(t.base(x)))


def wsgm_logpdf(t: TemperedTarget, beta: float, x):
    """log sum_j w_j N(x; mu_j, Sigma_j / beta); a normalised density."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    gs = t._gset if hasattr(t, "_gset") else t.gaussian_set()
    return _scalar(special.logsumexp(gs.tempered_scores(gs.quad(x), beta), axis=-1))


def theoretical_power_weight(w: Sequence[float], Sigma: Sequence, beta: float) -> np.ndarray:
    """Mode weights of the power-tempered mixture: w_j^beta |Sigma_j|^((1-beta)/2), normalised."""
    lw = beta * np.log(np.asarray(w, dtype=float)) + 0.5 * (1.0 - beta) * np.array(
        [logdet_spd(np.atleast_2d(S)) for S in Sigma])
    return np.exp(lw - special.logsumexp(lw))


def nearest_component(gs: _GaussSet, x) -> np.ndarray:
    """Index of the component with the smallest Mahalanobis distance (lowest index on ties)."""
    return np.argmin(gs.quad(x), axis=-1)


def gradient_corrected_logpdf(t: TemperedTarget, beta: float, x, global_=False):
    """log h_j(x) - ((1-beta)/2) grad_j^T [hess_j]^-1 grad_j on the assigned component.

    With ``global_=True`` the gradient and Hessian of log pi itself are used,
    which is improper wherever that Hessian is not negative definite.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim > 1:
        return np.array([gradient_corrected_logpdf(t, beta, xi, global_) for xi in x])
    if global_:
        g = grad_log_density(t.base, x)
        H = hessian_log_density(t.base, x)
        try:
            np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            raise ExplosionRiskError(f"log-Hessian not negative definite at {x}") from None
        return float(t.base(x) - 0.5 * (1.0 - beta) * g @ np.linalg.solve(H, g))
    gs = t._gset
    j = int(nearest_component(gs, x))
    return gradient_corrected_component_log(t.base.components[j], x, beta)


def gradient_corrected_component_log(comp, x, beta: float) -> float:
    """log h_j(x) - ((1-beta)/2) grad^T hess^-1 grad for one weighted component."""
    x = np.asarray(x, dtype=float)
    lh = np.log(comp.weight) + float(comp.logpdf(x))
    if comp.is_gaussian:
        mu, S = comp.gaussian_params()
        P = np.linalg.inv(S)
        g = -P @ (x - mu)
        quad = -g @ np.linalg.solve(P, g)           # g^T H^-1 g with H = -P
    else:
        single = MixtureTarget((type(comp)(1.0, comp.shape),))
        g = grad_log_density(single, x)
        H = hessian_log_density(single, x)
        quad = g @ np.linalg.solve(H, g)
    return float(lh - 0.5 * (1.0 - beta) * quad)


def mode_height_logpdf(t: TemperedTarget, beta: float, x):
    """beta log h_j(x) + (1-beta) log h_j(mu_j) for the nearest component j."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    gs = t._gset
    x = np.asarray(x, dtype=float)
    j = nearest_component(gs, x)
    lh = t.base.component_log_densities(x)
    lh_x = np.take_along_axis(lh, np.asarray(j)[..., None], axis=-1)[..., 0]
    lh_mode = _component_log_at_modes(t)
    return _scalar(beta * lh_x + (1.0 - beta) * lh_mode[j])


def _component_log_at_modes(t: TemperedTarget) -> np.ndarray:
    comps = t.base.components
    return np.array([np.log(c.weight) + float(c.logpdf(c.mode())) for c in comps])


def mode_assign(ctx: HatContext, x, beta: float):
    """argmax_j log w_hat_j + log N(x; mu_j, Sigma_j / beta); lowest index on ties."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    gs = _ctx_set(ctx)
    out = np.argmax(gs.tempered_scores(gs.quad(x), beta), axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def bhat_logpdf(pi_logdensity: Callable, ctx: HatContext, x, beta: float):
    a = mode_assign(ctx, x, beta)
    return _scalar(beta * np.asarray(pi_logdensity(x)) + (1.0 - beta) * ctx.log_pi_modes[a])


def canonical_g_raw(ctx: HatContext, x, beta: float, a) -> np.ndarray:
    """log of pi(mu_a) ((2 pi)^d |Sigma_a|)^(1/2) N(x | mu_a, Sigma_a/beta) / beta^(d/2), unsimplified."""
    d = ctx.dim
    x = np.asarray(x, dtype=float)
    a = np.asarray(a)
    diff = x - ctx.modes[a]
    q = np.einsum("...i,...ij,...j->...", diff, ctx.precs[a], diff)
    log_phi = -0.5 * (d * LOG_2PI + ctx.logdets[a] - d * np.log(beta) + beta * q)
    return (ctx.log_pi_modes[a] + 0.5 * (d * LOG_2PI + ctx.logdets[a]) + log_phi
            - 0.5 * d * np.log(beta))


def hat_logpdf(pi_logdensity: Callable, ctx: HatContext, x, beta: float,
               variant: GVariant | str = GVariant.CANONICAL):
    if not beta > 0:
        raise ValueError("beta must be positive")
    variant = GVariant.parse(variant)
    gs = _ctx_set(ctx)
    x = np.asarray(x, dtype=float)
    q = gs.quad(x)
    scores = gs.tempered_scores(q, beta)
    a_hot = np.argmax(scores, axis=-1)
    a_cold = np.argmax(gs.tempered_scores(q, 1.0), axis=-1)
    lpi = np.asarray(pi_logdensity(x), dtype=float)
    bhat = beta * lpi + (1.0 - beta) * ctx.log_pi_modes[a_hot]
    q_hot = np.take_along_axis(q, np.asarray(a_hot)[..., None], axis=-1)[..., 0]
    if variant is GVariant.CANONICAL:
        g = ctx.log_pi_modes[a_hot] - 0.5 * beta * q_hot
    else:
        lp_hot = np.take_along_axis(scores, np.asarray(a_hot)[..., None], axis=-1)[..., 0]
        lp_cold = np.take_along_axis(scores, np.asarray(a_cold)[..., None], axis=-1)[..., 0]
        g = _robust_g(lpi, bhat, lp_hot, lp_cold)
    return _scalar(np.where(a_hot == a_cold, bhat, g))


def _robust_g(lpi, bhat, lp_hot, lp_cold):
    """log[(1-f) pi(x) + f pi(x,beta,A)] with f = (P_hot - P_cold)/(P_hot + P_cold)."""
    lp_hot, lp_cold = np.broadcast_arrays(lp_hot, lp_cold)
    den = np.logaddexp(lp_hot, lp_cold)
    log_one_minus_f = np.log(2.0) + lp_cold - den
    with np.errstate(divide="ignore"):
        log_f = lp_hot + np.log(-np.expm1(np.minimum(lp_cold - lp_hot, 0.0))) - den
    return np.logaddexp(log_one_minus_f + lpi, log_f + bhat)


# ---------------------------------------------------------------------------
# Pseudo-prior K(beta)
# ---------------------------------------------------------------------------

def log_pseudo_prior(t: TemperedTarget, beta: float) -> float:
    """log K(beta) = -log integral of the tempered target (separated-modes approximation)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    k = t.kind
    d = t.dim
    if k is TemperKind.WSGM:
        return 0.0
    if k in (TemperKind.GRADIENT, TemperKind.MODE_HEIGHT):
        # each component integrates to w_j beta^(-d/2)
        return 0.5 * d * np.log(beta)
    if k in (TemperKind.BHAT, TemperKind.HAT):
        c = t.ctx
        return float(-special.logsumexp(c.log_pi_modes + 0.5 * c.logdets)
                     - 0.5 * d * LOG_2PI + 0.5 * d * np.log(beta))
    # power
    if isinstance(t.base, MixtureTarget) and t.base.all_gaussian:
        gs = _mixture_set(t.base, None)
        terms = beta * gs.logw + 0.5 * (1.0 - beta) * (d * LOG_2PI + gs.logdets)
        return float(-special.logsumexp(terms) + 0.5 * d * np.log(beta))
    if t.ctx is not None:
        c = t.ctx
        terms = beta * c.log_pi_modes + 0.5 * c.logdets + 0.5 * d * LOG_2PI
        return float(-special.logsumexp(terms) + 0.5 * d * np.log(beta))
    raise UnsupportedKindError(
        "no analytic pseudo-prior for this target; use estimate_pseudo_prior on a pilot run")


def estimate_pseudo_prior(occupancy, log_k=None) -> np.ndarray:
    """One occupancy correction: log K_i <- log K_i - log(n_i / mean n).

    `occupancy` is either per-level visit counts or a trace with a ``level``
    array. Returned values are shifted so that level 0 has log K = 0.
    """
    levels = getattr(occupancy, "levels", None)
    if levels is not None:
        n_levels = getattr(occupancy, "n_levels", int(np.max(levels)) + 1)
        counts = np.bincount(np.asarray(levels), minlength=n_levels).astype(float)
    else:
        counts = np.asarray(occupancy, dtype=float)
    if counts.size == 1:
        return np.zeros(1)
    if np.any(counts <= 0):
        missing = np.flatnonzero(counts <= 0).tolist()
        raise EstimationFailedError(f"levels never visited: {missing}")
    lk = np.zeros(counts.size) if log_k is None else np.asarray(log_k, dtype=float).copy()
    lk -= np.log(counts / counts.mean())
    return lk - lk[0]


def make_tempered(target: MixtureTarget, kind, ctx: HatContext | None = None,
                  g_variant="canonical") -> TemperedTarget:
    return TemperedTarget(target, TemperKind.parse(kind), ctx, GVariant.parse(g_variant))
