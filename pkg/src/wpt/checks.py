"""Quadrature and identity oracles run by ``wpt verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from . import tempered_targets as tt
from .diffusion_limit import i_beta
from .mixture_targets import ExponentialPower, Gaussian, HatContext, gaussian_logpdf, gaussian_mixture

BETAS = (0.5, 0.1, 0.05, 0.005)
TOL = 1e-6


@dataclass
class CheckResult:
    group: str
    name: str
    passed: bool
    detail: str


def reference_mixture():
    """1-d pair: w = (0.2, 0.8), N(-10, 9) and N(10, 1)."""
    return gaussian_mixture([0.2, 0.8], [[-10.0], [10.0]], [[[9.0]], [[1.0]]])


def _mass(logf: Callable[[float], float], centre: float, scale: float) -> float:
    """Integral of exp(logf) over the real line, split at the centre."""
    f = lambda x: math.exp(logf(x))  # noqa: E731
    a, _ = integrate.quad(f, -np.inf, centre, epsabs=0.0, epsrel=1e-12, limit=400)
    b, _ = integrate.quad(f, centre, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return a + b


def _component_masses(target, beta, term) -> np.ndarray:
    masses = []
    for c in target.components:
        mu, S = c.gaussian_params()
        m = _mass(lambda x, c=c: term(c, np.array([x]), beta), float(mu[0]),
                  math.sqrt(float(S[0, 0]) / beta))
        masses.append(m)
    m = np.array(masses)
    return m / m.sum()


def _power_term(c, x, beta):
    return beta * (math.log(c.weight) + float(c.logpdf(x)))


def _mode_height_term(c, x, beta):
    lh_mode = math.log(c.weight) + float(c.logpdf(c.mode()))
    return beta * (math.log(c.weight) + float(c.logpdf(x))) + (1.0 - beta) * lh_mode


def _wsgm_term(c, x, beta):
    mu, S = c.gaussian_params()
    return math.log(c.weight) + float(gaussian_logpdf(x, mu, S / beta))


def check_power_weights() -> list[CheckResult]:
    t = reference_mixture()
    out = []
    for b in BETAS:
        got = _component_masses(t, b, _power_term)
        want = tt.theoretical_power_weight(t.weights, [c.gaussian_params()[1] for c in t.components], b)
        err = float(np.max(np.abs(got - want)))
        out.append(CheckResult("power-weights", f"power weights beta={b}", err < TOL,
                               f"quadrature {np.round(got, 8).tolist()} closed form "
                               f"{np.round(want, 8).tolist()} max err {err:.2e}"))
    return out


def check_gradient_weights() -> list[CheckResult]:
    t = reference_mixture()
    out = []
    for b in BETAS:
        got = _component_masses(t, b, tt.gradient_corrected_component_log)
        err = float(np.max(np.abs(got - t.weights)))
        out.append(CheckResult("gradient-weights", f"gradient-corrected weights beta={b}", err < TOL,
                               f"masses {np.round(got, 8).tolist()} max err {err:.2e}"))
    return out


def check_mode_height_weights() -> list[CheckResult]:
    t = reference_mixture()
    out = []
    for b in BETAS:
        got = _component_masses(t, b, _mode_height_term)
        err = float(np.max(np.abs(got - t.weights)))
        out.append(CheckResult("mode-height-weights", f"mode-height weights beta={b}", err < TOL,
                               f"masses {np.round(got, 8).tolist()} max err {err:.2e}"))
    return out


def check_wsgm() -> list[CheckResult]:
    t = reference_mixture()
    w = tt.make_tempered(t, "wsgm")
    out = []
    for b in BETAS:
        got = _component_masses(t, b, _wsgm_term)
        err = float(np.max(np.abs(got - t.weights)))
        total = _mass(lambda x: float(w.logpdf(b, np.array([x]))), 0.0, 10.0 / math.sqrt(b))
        ok = err < TOL and abs(total - 1.0) < TOL
        out.append(CheckResult("wsgm", f"weights and normalisation beta={b}", ok,
                               f"masses {np.round(got, 8).tolist()} total {total:.10f}"))
    return out


def check_dimension_ratio() -> list[CheckResult]:
    out = []
    for sigma, d, b in ((3.0, 10, 0.5), (2.0, 5, 0.1), (1.5, 20, 0.9)):
        W = tt.theoretical_power_weight([0.5, 0.5], [np.eye(d), sigma ** 2 * np.eye(d)], b)
        ratio = W[1] / W[0]
        want = sigma ** (d * (1 - b))
        ok = abs(ratio / want - 1.0) < 1e-10
        out.append(CheckResult("dimension-ratio", f"sigma={sigma} d={d} beta={b}", ok,
                               f"ratio {ratio:.10g} expected {want:.10g}"))
    return out


def check_cold_identity() -> list[CheckResult]:
    t = gaussian_mixture([0.3, 0.7], [[-4.0, 0.0], [5.0, 1.0]],
                         [np.diag([1.0, 2.0]), np.array([[1.0, 0.3], [0.3, 0.5]])])
    ctx = HatContext.from_gaussian_components(t)
    X = np.random.default_rng(7).normal(scale=6.0, size=(50, 2))
    lp = t.log_density(X)
    out = []
    for kind in ("power", "wsgm", "bhat", "hat"):
        tgt = tt.make_tempered(t, kind, ctx)
        err = float(np.max(np.abs(tgt.logpdf(1.0, X) - lp)))
        out.append(CheckResult("cold-identity", f"{kind} at beta=1 equals log pi", err < 1e-10,
                               f"max err {err:.2e}"))
    tgt = tt.make_tempered(t, "mode_height", ctx)
    j = tt.nearest_component(tgt.gaussian_set(), X)
    lh = t.component_log_densities(X)[np.arange(len(X)), j]
    err = float(np.max(np.abs(tgt.logpdf(1.0, X) - lh)))
    out.append(CheckResult("cold-identity", "mode_height at beta=1 equals the assigned component", err < 1e-10,
                           f"max err {err:.2e}"))
    return out


def check_info_curve() -> list[CheckResult]:
    out = []
    fams = [ExponentialPower(1.0, 1.0), ExponentialPower(0.7, 2.0), ExponentialPower(1.3, 4.0),
            Gaussian(0.0, 2.0)]
    for f in fams:
        for b in (0.1, 1.0):
            a = i_beta(f, b, "analytic")
            q = i_beta(f, b, "quad")
            err = abs(a - q) / a
            out.append(CheckResult("info-curve", f"{type(f).__name__}({getattr(f, 'r', 2.0)}) beta={b}",
                                   err < TOL, f"analytic {a:.10g} quadrature {q:.10g}"))
    return out


GROUPS: dict[str, Callable[[], list[CheckResult]]] = {
    "power-weights": check_power_weights,
    "gradient-weights": check_gradient_weights,
    "mode-height-weights": check_mode_height_weights,
    "wsgm": check_wsgm,
    "dimension-ratio": check_dimension_ratio,
    "cold-identity": check_cold_identity,
    "info-curve": check_info_curve,
}


# short tokens accepted by ``wpt verify --filter``
ALIASES = {"thm1a": "power-weights", "thm1b": "gradient-weights", "thm1c": "mode-height-weights",
           "eq9": "dimension-ratio", "beta1": "cold-identity", "ibeta": "info-curve"}


def run_checks(groups=None) -> list[CheckResult]:
    names = list(GROUPS) if not groups else [ALIASES.get(g, g) for g in groups]
    unknown = [g for g in names if g not in GROUPS]
    if unknown:
        raise KeyError(f"unknown check groups {unknown}; available: {list(GROUPS)}")
    out = []
    for g in names:
        out.extend(GROUPS[g]())
    return out
