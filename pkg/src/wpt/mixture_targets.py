"""Mixture target densities.

A target is a weighted mixture of components, each either a full-covariance
Gaussian or an iid product of a univariate family (Gaussian, skew-normal,
exponential-power). All density work is done in log space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special

LOG_2PI = float(np.log(2.0 * np.pi))
_EPS = np.finfo(float).eps


class NotARegularModeError(ValueError):
    """Raised when the log-density Hessian at a mode point is not negative definite."""


class UnsupportedKindError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Univariate families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * LOG_2PI - np.log(self.sigma) - 0.5 * z * z

    def mode(self) -> float:
        return float(self.mu)

    def scale(self) -> float:
        return float(self.sigma)


@dataclass(frozen=True)
class SkewNormal:
    """Skew-normal density 2/sigma * phi(z) * Phi(alpha z), z = (x - mu)/sigma."""
    mu: float = 0.0
    sigma: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return (np.log(2.0) - np.log(self.sigma) - 0.5 * LOG_2PI - 0.5 * z * z
                + special.log_ndtr(self.alpha * z))

    def mode(self) -> float:
        # golden-section on a bracket located by a coarse grid
        grid = self.mu + self.sigma * np.linspace(-4.0, 4.0, 81)
        i = int(np.argmax(self.logpdf(grid)))
        i = min(max(i, 1), len(grid) - 2)
        res = optimize.minimize_scalar(
            lambda t: -float(self.logpdf(t)),
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden", tol=1e-10,
        )
        return float(res.x)

    def scale(self) -> float:
        return float(self.sigma)


@dataclass(frozen=True)
class ExponentialPower:
    """Density proportional to exp(-lam |x - mu|^r)."""
    lam: float = 1.0
    r: float = 2.0
    mu: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.r > 0):
            raise ValueError("lam and r must be positive")

    @property
    def log_norm(self) -> float:
        r = self.r
        return float(np.log(r) + np.log(self.lam) / r - np.log(2.0) - special.gammaln(1.0 / r))

    def logpdf(self, x):
        a = np.abs(np.asarray(x, dtype=float) - self.mu)
        return self.log_norm - self.lam * a ** self.r

    def mode(self) -> float:
        return float(self.mu)

    def scale(self) -> float:
        # standard deviation
        r = self.r
        return float(np.sqrt(np.exp(special.gammaln(3.0 / r) - special.gammaln(1.0 / r)))
                     * self.lam ** (-1.0 / r))

    def sample(self, beta: float, size, rng: np.random.Generator):
        """Exact draws from the density proportional to f(x)^beta (Gamma transform)."""
        g = rng.standard_gamma(1.0 / self.r, size=size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return self.mu + sign * (g / (self.lam * beta)) ** (1.0 / self.r)


UnivariateFamily = Gaussian | SkewNormal | ExponentialPower


# ---------------------------------------------------------------------------
# Components and mixtures
# ---------------------------------------------------------------------------

def _chol(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not symmetric positive definite") from exc


def logdet_spd(S: np.ndarray) -> float:
    L = _chol(np.asarray(S, dtype=float))
    return float(2.0 * np.sum(np.log(np.diag(L))))


def gaussian_logpdf(x, mean, cov=None, *, prec=None, logdet=None):
    """Log N(x; mean, cov) for x of shape (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if prec is None:
        prec = np.linalg.inv(cov)
    if logdet is None:
        logdet = logdet_spd(cov)
    diff = x - mean
    q = np.einsum("...i,ij,...j->...", diff, prec, diff)
    return -0.5 * (mean.shape[-1] * LOG_2PI + logdet + q)


@dataclass(frozen=True)
class FullGaussian:
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if S.shape != (mu.size, mu.size):
            raise ValueError("Sigma shape does not match mean")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("Sigma must be symmetric")
        L = _chol(S)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "_chol", L)
        object.__setattr__(self, "_prec", np.linalg.inv(S))
        object.__setattr__(self, "_logdet", float(2.0 * np.sum(np.log(np.diag(L)))))

    @property
    def dim(self) -> int:
        return self.mu.size

    def logpdf(self, x):
        return gaussian_logpdf(x, self.mu, prec=self._prec, logdet=self._logdet)


@dataclass(frozen=True)
class IIDProduct:
    family: UnivariateFamily
    d: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError("d must be a positive integer")

    @property
    def dim(self) -> int:
        return int(self.d)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.family.logpdf(x), axis=-1)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    shape: FullGaussian | IIDProduct

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def is_gaussian(self) -> bool:
        return isinstance(self.shape, FullGaussian) or isinstance(self.shape.family, Gaussian)

    def gaussian_params(self) -> tuple[np.ndarray, np.ndarray]:
        """(mean, covariance) of a Gaussian component."""
        if isinstance(self.shape, FullGaussian):
            return self.shape.mu, self.shape.Sigma
        if isinstance(self.shape.family, Gaussian):
            f = self.shape.family
            return np.full(self.dim, f.mu), f.sigma ** 2 * np.eye(self.dim)
        raise UnsupportedKindError("component is not Gaussian")

    def mode(self) -> np.ndarray:
        """Mode of the component density (per-coordinate for iid products)."""
        if isinstance(self.shape, FullGaussian):
            return self.shape.mu.copy()
        return np.full(self.dim, self.shape.family.mode())

    def logpdf(self, x):
        return self.shape.logpdf(x)


@dataclass(frozen=True)
class MixtureTarget:
    components: tuple[MixtureComponent, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) == 0:
            raise ValueError("a mixture needs at least one component")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ValueError("all components must share the same dimension")
        w = np.array([c.weight for c in comps], dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be positive and sum to 1 (got sum {w.sum()!r})")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "dim", d)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def all_gaussian(self) -> bool:
        return all(c.is_gaussian for c in self.components)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    def component_log_densities(self, x) -> np.ndarray:
        """log h_j(x) = log w_j + log g_j(x), stacked on the last axis."""
        x = self._check(x)
        return np.stack([np.log(c.weight) + c.logpdf(x) for c in self.components], axis=-1)

    def log_density(self, x):
        lh = self.component_log_densities(x)
        out = special.logsumexp(lh, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = log_density


def log_density(target: MixtureTarget, x):
    return target.log_density(x)


def _fd_steps(x: np.ndarray, power: float) -> np.ndarray:
    return _EPS ** power * np.maximum(1.0, np.abs(x))


def grad_log_density(target: MixtureTarget, x) -> np.ndarray:
    """Gradient of log pi; analytic for all-Gaussian mixtures, central differences otherwise."""
    x = target._check(x).astype(float)
    if x.ndim != 1:
        raise ValueError("grad_log_density takes a single point")
    if target.all_gaussian:
        lh = target.component_log_densities(x)
        r = np.exp(lh - special.logsumexp(lh))
        g = np.zeros_like(x)
        for rj, c in zip(r, target.components):
            mu, S = c.gaussian_params()
            g -= rj * np.linalg.solve(S, x - mu)
        return g
    h = _fd_steps(x, 1.0 / 3.0)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (target.log_density(x + e) - target.log_density(x - e)) / (2.0 * h[i])
    return g


def hessian_log_density(target: MixtureTarget, x) -> np.ndarray:
    x = target._check(x).astype(float)
    d = x.size
    if target.all_gaussian:
        lh = target.component_log_densities(x)
        r = np.exp(lh - special.logsumexp(lh))
        H = np.zeros((d, d))
        gbar = np.zeros(d)
        for rj, c in zip(r, target.components):
            mu, S = c.gaussian_params()
            P = np.linalg.inv(S)
            gj = -P @ (x - mu)
            H += rj * (-P + np.outer(gj, gj))
            gbar += rj * gj
        H -= np.outer(gbar, gbar)
        return 0.5 * (H + H.T)
    h = _fd_steps(x, 0.25)
    f = target.log_density
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


def curvature_at_mode(target: MixtureTarget, mu_k) -> np.ndarray:
    """Sigma_k = -(Hessian of log pi at mu_k)^-1, checked positive definite."""
    H = hessian_log_density(target, mu_k)
    try:
        np.linalg.cholesky(-H)
    except np.linalg.LinAlgError as exc:
        raise NotARegularModeError(f"Hessian at {mu_k} is not negative definite") from exc
    S = np.linalg.inv(-H)
    return 0.5 * (S + S.T)


def laplace_weights(target, M: Sequence, S: Sequence) -> np.ndarray:
    """w_j proportional to pi(mu_j) |Sigma_j|^(1/2), normalised in log space.

    `target` is anything callable as a log-density (a MixtureTarget works).
    """
    if len(M) == 0:
        raise ValueError("need at least one mode point")
    if len(M) != len(S):
        raise ValueError("M and S must have equal length")
    logpi = np.array([float(target(np.asarray(m, dtype=float))) for m in M])
    lw = logpi + 0.5 * np.array([logdet_spd(s) for s in S])
    return np.exp(lw - special.logsumexp(lw))


def sample_component(target: MixtureTarget, j: int, beta: float, rng: np.random.Generator,
                     size=None, ctx: "HatContext | None" = None) -> np.ndarray:
    """Exact draw(s) from N(mu_j, Sigma_j / beta).

    Non-Gaussian components use the Laplace surrogate from `ctx`.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    comp = target.components[j]
    if comp.is_gaussian:
        mu, S = comp.gaussian_params()
        L = np.linalg.cholesky(S)
    elif ctx is not None:
        mu, L = ctx.modes[j], ctx.chol[j]
    else:
        raise UnsupportedKindError("non-Gaussian component needs a HatContext surrogate")
    shape = (target.dim,) if size is None else (*np.atleast_1d(size), target.dim)
    z = rng.standard_normal(shape)
    return mu + (z @ L.T) / np.sqrt(beta)


# ---------------------------------------------------------------------------
# Mode context for HAT-style targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HatContext:
    """Mode points, curvature matrices and Laplace weights."""
    modes: np.ndarray
    covs: np.ndarray
    weights: np.ndarray
    log_pi_modes: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.modes, dtype=float))
        S = np.asarray(self.covs, dtype=float).reshape(M.shape[0], M.shape[1], M.shape[1])
        w = np.asarray(self.weights, dtype=float).ravel()
        lp = np.asarray(self.log_pi_modes, dtype=float).ravel()
        K = M.shape[0]
        if K < 1 or S.shape[0] != K or w.size != K or lp.size != K:
            raise ValueError("modes, covs, weights and log_pi_modes must have equal length K >= 1")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("Laplace weights must sum to 1")
        chol = np.stack([_chol(s) for s in S])
        object.__setattr__(self, "modes", M)
        object.__setattr__(self, "covs", S)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "log_pi_modes", lp)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "precs", np.stack([np.linalg.inv(s) for s in S]))
        object.__setattr__(self, "logdets", 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(1))

    @property
    def K(self) -> int:
        return self.modes.shape[0]

    @property
    def dim(self) -> int:
        return self.modes.shape[1]

    @classmethod
    def from_target(cls, target: MixtureTarget, modes=None, covs=None) -> "HatContext":
        """Build from mode points (default: component modes) using curvature and Laplace weights."""
        if modes is None:
            modes = [c.mode() for c in target.components]
        modes = [np.asarray(m, dtype=float) for m in modes]
        if covs is None:
            covs = [curvature_at_mode(target, m) for m in modes]
        w = laplace_weights(target, modes, covs)
        lp = [target.log_density(m) for m in modes]
        return cls(np.array(modes), np.array(covs), w, np.array(lp))

    @classmethod
    def from_gaussian_components(cls, target: MixtureTarget) -> "HatContext":
        """Mode points and scales taken from the mixture's own Gaussian parameters."""
        params = [c.gaussian_params() for c in target.components]
        modes = np.array([p[0] for p in params])
        covs = np.array([p[1] for p in params])
        lp = np.array([target.log_density(m) for m in modes])
        return cls(modes, covs, target.weights, lp)

    def permuted(self, order) -> "HatContext":
        order = list(order)
        return HatContext(self.modes[order], self.covs[order], self.weights[order],
                          self.log_pi_modes[order])


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------

def _family_from_json(spec: dict) -> UnivariateFamily:
    kind = spec.get("kind", "gaussian").lower()
    if kind == "gaussian":
        return Gaussian(float(spec.get("mu", 0.0)), float(spec.get("sigma", 1.0)))
    if kind in ("skew_normal", "skewnormal"):
        return SkewNormal(float(spec.get("mu", 0.0)), float(spec.get("sigma", 1.0)),
                          float(spec.get("alpha", 0.0)))
    if kind in ("exponential_power", "exp_power"):
        return ExponentialPower(float(spec.get("lambda", spec.get("lam", 1.0))),
                                float(spec.get("r", 2.0)), float(spec.get("mu", 0.0)))
    raise ValueError(f"unknown univariate family {kind!r}")


def _matrix_from_json(m, d: int) -> np.ndarray:
    if isinstance(m, dict):
        if "diag" in m:
            diag = np.asarray(m["diag"], dtype=float)
            if diag.size == 1:
                diag = np.full(d, float(diag.ravel()[0]))
            return np.diag(diag)
        if "scalar" in m:
            return float(m["scalar"]) * np.eye(d)
        raise ValueError("matrix object must have 'diag' or 'scalar'")
    return np.asarray(m, dtype=float).reshape(d, d)


def _vector_from_json(v, d: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    return np.full(d, arr[0]) if arr.size == 1 else arr


def mixture_from_dict(spec: dict) -> MixtureTarget:
    d = int(spec["dimension"])
    comps = []
    for c in spec["components"]:
        kind = c.get("kind", "gaussian").lower()
        if kind == "gaussian":
            shape = FullGaussian(_vector_from_json(c["mean"], d), _matrix_from_json(c["cov"], d))
        elif kind == "iid_product":
            shape = IIDProduct(_family_from_json(c["family"]), d)
        else:
            raise ValueError(f"unknown component kind {kind!r}")
        comps.append(MixtureComponent(float(c["weight"]), shape))
    return MixtureTarget(tuple(comps))


def load_mixture(path) -> MixtureTarget:
    with open(Path(path)) as fh:
        return mixture_from_dict(json.load(fh))


def mixture_to_dict(target: MixtureTarget) -> dict:
    comps = []
    for c in target.components:
        if isinstance(c.shape, FullGaussian):
            comps.append({"weight": c.weight, "kind": "gaussian",
                          "mean": c.shape.mu.tolist(), "cov": c.shape.Sigma.tolist()})
        else:
            f = c.shape.family
            if isinstance(f, Gaussian):
                fam = {"kind": "gaussian", "mu": f.mu, "sigma": f.sigma}
            elif isinstance(f, SkewNormal):
                fam = {"kind": "skew_normal", "mu": f.mu, "sigma": f.sigma, "alpha": f.alpha}
            else:
                fam = {"kind": "exponential_power", "lambda": f.lam, "r": f.r, "mu": f.mu}
            comps.append({"weight": c.weight, "kind": "iid_product", "family": fam})
    return {"dimension": target.dim, "components": comps}


def gaussian_mixture(weights, means, covs) -> MixtureTarget:
    """Convenience constructor for a full-covariance Gaussian mixture."""
    comps = []
    for w, m, S in zip(weights, means, covs):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        S = np.asarray(S, dtype=float)
        if S.ndim < 2:
            S = np.atleast_1d(S)
            S = np.diag(np.broadcast_to(S, m.shape).astype(float))
        comps.append(MixtureComponent(float(w), FullGaussian(m, S)))
    return MixtureTarget(tuple(comps))
