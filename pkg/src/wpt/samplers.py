"""Within-temperature Markov kernels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mixture_targets import LOG_2PI, UnsupportedKindError


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "rwm"                 # "rwm" | "modal_independence"
    scale: float | None = None        # None: start from 2.38 sigma_hat / sqrt(d beta)
    adapt: bool = True
    target_accept: float | None = None
    exact_resample: bool = False

    def __post_init__(self):
        if self.kind not in ("rwm", "modal_independence"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.target_accept is not None and not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    def accept_target(self, d: int) -> float:
        if self.target_accept is not None:
            return self.target_accept
        return default_target_accept(d)

    @classmethod
    def from_dict(cls, spec: dict | None) -> "KernelConfig":
        spec = dict(spec or {})
        return cls(kind=spec.get("kind", "rwm"), scale=spec.get("scale"),
                   adapt=bool(spec.get("adapt", True)), target_accept=spec.get("target_accept"),
                   exact_resample=bool(spec.get("exact_resample", False)))


def default_target_accept(d: int) -> float:
    return 0.44 if d == 1 else 0.234


def initial_scales(betas, d: int, sigma_hat: float = 1.0) -> np.ndarray:
    return 2.38 * sigma_hat / np.sqrt(d * np.asarray(betas, dtype=float))


def rwm_core(logpdf: Callable, x: np.ndarray, lp_x: float, scale: float,
             z: np.ndarray, u: float):
    """One Metropolis step with the given standard-normal vector and uniform."""
    y = x + scale * z
    lp_y = float(logpdf(y))
    log_alpha = lp_y - lp_x
    if np.log(u) < log_alpha:
        return y, lp_y, True, log_alpha
    return x, lp_x, False, log_alpha


def rwm_step(logpdf: Callable, x, scale: float, rng: np.random.Generator):
    """Random-walk Metropolis step. Returns (x_new, accepted, log_alpha)."""
    x = np.asarray(x, dtype=float)
    lp_x = float(logpdf(x))
    if not np.isfinite(lp_x):
        raise InvalidStateError("current state has non-finite log-density")
    z = rng.standard_normal(x.shape)
    u = rng.random()
    x_new, _, acc, log_alpha = rwm_core(logpdf, x, lp_x, scale, z, u)
    return x_new, acc, min(0.0, log_alpha)


def adapt_scale(scale: float, accepted: bool, iteration: int, target_accept: float = 0.234) -> float:
    """Robbins-Monro update of the log proposal scale with gain iteration^-0.6."""
    gamma = float(iteration) ** -0.6
    return float(scale * np.exp(gamma * (float(accepted) - target_accept)))


def _tempered_gauss_logpdf(y, mean, prec, logdet, beta):
    d = mean.size
    diff = y - mean
    return -0.5 * (d * LOG_2PI + logdet - d * np.log(beta) + beta * diff @ prec @ diff)


def half_space_mode(x) -> int:
    """Mode rule used for the two-mode reproduction: 0 if mean(x) < 0 else 1."""
    return 0 if float(np.mean(x)) < 0 else 1


def modal_independence_core(logpdf: Callable, gs, x, lp_x: float, beta: float,
                            z: np.ndarray, u: float, exact: bool = False):
    """Independence proposal N(mu_a, Sigma_a / beta) with a = half_space_mode(x).

    `gs` carries ``means``, ``precs``, ``logdets`` and ``chol`` for two modes.
    """
    a = half_space_mode(x)
    y = gs.means[a] + (gs.chol[a] @ z) / np.sqrt(beta)
    lp_y = float(logpdf(y))
    if exact:
        return y, lp_y, True, 0.0
    b = half_space_mode(y)
    log_q_xy = _tempered_gauss_logpdf(y, gs.means[a], gs.precs[a], gs.logdets[a], beta)
    log_q_yx = _tempered_gauss_logpdf(x, gs.means[b], gs.precs[b], gs.logdets[b], beta)
    log_alpha = lp_y - lp_x + log_q_yx - log_q_xy
    if np.log(u) < log_alpha:
        return y, lp_y, True, log_alpha
    return x, lp_x, False, log_alpha


def modal_independence_step(target, ctx, x, beta: float, rng: np.random.Generator,
                            exact: bool = False):
    """Modal independence sampler step. Returns (x_new, accepted).

    `target` is a TemperedTarget (or any object with ``logpdf(beta, x)``);
    `ctx` supplies the two Gaussian modes (a HatContext or a Gaussian set).
    """
    gs = _as_gauss(ctx)
    if gs.means.shape[0] != 2:
        raise UnsupportedKindError("modal independence sampler needs exactly two modes")
    x = np.asarray(x, dtype=float)
    lp = lambda v: target.logpdf(beta, v)  # noqa: E731
    z = rng.standard_normal(x.shape)
    u = rng.random()
    x_new, _, acc, _ = modal_independence_core(lp, gs, x, float(lp(x)), beta, z, u, exact)
    return x_new, acc


def _as_gauss(ctx):
    if hasattr(ctx, "modes"):
        from .tempered_targets import _ctx_set
        return _ctx_set(ctx)
    return ctx
