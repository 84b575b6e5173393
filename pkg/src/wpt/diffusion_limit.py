"""Idealised weight-preserving ST on two exponential-power modes and its limiting processes.

The simplified process mixes instantly within a mode, so each step only
needs the sufficient statistic T = lambda * sum |x_i|^r of a fresh draw from
the tempered component. Under x ~ f^beta, beta * T ~ Gamma(d / r), which is
what the kernels consume.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .backend import simplified_module
from .mixture_targets import ExponentialPower, Gaussian, SkewNormal
from .tempering import TemperatureLadder

ELL0 = 2.38


class DivergentIntegralError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Ladders and spacing
# ---------------------------------------------------------------------------

def ladder_eqn_beta(d: int, ell, beta_min: float, rule: str = "euler") -> TemperatureLadder:
    """Ladder from 1 down to beta_min with spacing ell(beta)/sqrt(d).

    ``ell`` is a positive callable or a constant ell0 meaning ell(beta) = beta * ell0.
    ``rule="euler"`` takes literal steps beta_i = beta_{i-1} - ell(beta_{i-1})/sqrt(d);
    ``rule="exact"`` follows the flow of the same spacing equation, which for
    ell(beta) = beta * ell0 gives beta_i = beta_{i-1} exp(-ell0/sqrt(d)).
    The first level at or below beta_min is clamped to beta_min. A ladder whose
    first step already overshoots is returned as {1, beta_min} with a warning.
    """
    if not 0 < beta_min < 1:
        raise ValueError("beta_min must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be positive")
    ell0 = None
    if not callable(ell):
        ell0 = float(ell)
        if not ell0 > 0:
            raise ValueError("ell must be positive")
        fn = lambda b: b * ell0  # noqa: E731
    else:
        fn = ell
    if rule not in ("euler", "exact"):
        raise ValueError("rule must be 'euler' or 'exact'")
    sd = math.sqrt(d)
    betas = [1.0]
    degenerate = False
    while betas[-1] > beta_min:
        b = betas[-1]
        step = fn(b)
        if not step > 0:
            raise ValueError(f"ell must be positive on (beta_min, 1]; got {step} at {b}")
        if rule == "euler":
            nb = b - step / sd
        elif ell0 is not None:
            nb = b * math.exp(-ell0 / sd)
        else:
            # integrate d beta / ds = -ell(beta) over s in [0, 1/sqrt(d)]
            sol = integrate.solve_ivp(lambda s, y: [-fn(max(y[0], 1e-300))], (0.0, 1.0 / sd), [b],
                                      rtol=1e-10, atol=1e-14)
            nb = float(sol.y[0, -1])
        if nb <= beta_min:
            if len(betas) == 1 and nb <= 0:
                degenerate = True
            nb = beta_min
        betas.append(nb)
    if degenerate:
        warnings.warn("first ladder step overshoots zero; degenerate two-level ladder", stacklevel=2)
    lad = TemperatureLadder(np.array(betas), "eqn_beta", ell0)
    object.__setattr__(lad, "degenerate", degenerate)
    return lad


def spacing_function(ell0: float = ELL0):
    """ell(beta) = I0(beta)^(-1/2) ell0 with I0(beta) = 1 / beta^2."""
    return lambda b: b * ell0


def i_beta(family, beta: float, method: str = "auto") -> float:
    """Var_{x ~ f^beta}(log f(x)) for a univariate family.

    Exponential-power (and Gaussian, r = 2) components have the closed form
    1 / (r beta^2); anything else, or ``method="quad"``, uses quadrature.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if method not in ("auto", "analytic", "quad"):
        raise ValueError("method must be 'auto', 'analytic' or 'quad'")
    if method != "quad":
        if isinstance(family, ExponentialPower):
            return 1.0 / (family.r * beta ** 2)
        if isinstance(family, Gaussian):
            return 1.0 / (2.0 * beta ** 2)
        if method == "analytic":
            raise ValueError(f"no closed form for {type(family).__name__}")
    return _i_beta_quad(family, beta)


def _i_beta_quad(family, beta: float) -> float:
    mode = float(family.mode())
    lf0 = float(family.logpdf(mode))

    def moments(k):
        def f(x):
            lf = float(family.logpdf(x))
            w = math.exp(beta * (lf - lf0))
            return w * (lf - lf0) ** k
        tot = 0.0
        for a, b in ((-np.inf, mode), (mode, np.inf)):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    v, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=500)
                except integrate.IntegrationWarning as e:
                    raise DivergentIntegralError(str(e)) from None
            tot += v
        if not math.isfinite(tot):
            raise DivergentIntegralError("moment integral is not finite")
        return tot

    z0, z1, z2 = moments(0), moments(1), moments(2)
    if not z0 > 0:
        raise DivergentIntegralError("tempered density does not normalise")
    m1 = z1 / z0
    return z2 / z0 - m1 * m1


def limit_acceptance(r: float, ell0: float = ELL0) -> float:
    """2 Phi(-ell0 / (2 sqrt r))."""
    return float(2.0 * stats.norm.cdf(-ell0 / (2.0 * math.sqrt(r))))


# ---------------------------------------------------------------------------
# The simplified process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedConfig:
    d: int
    p: float = 0.5
    families: tuple = (ExponentialPower(1.0, 2.0), ExponentialPower(1.0, 2.0))
    ell0: float = ELL0
    beta_min: float = 0.01
    beta_min_rule: str = "fixed"      # "fixed" | "inverse_d_squared"
    ladder_rule: str = "exact"        # "exact" | "euler"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if not self.ell0 > 0:
            raise ValueError("ell0 must be positive")
        if self.beta_min_rule not in ("fixed", "inverse_d_squared"):
            raise ValueError("beta_min_rule must be 'fixed' or 'inverse_d_squared'")
        if not 0 < self.effective_beta_min < 1:
            raise ValueError("beta_min must lie in (0, 1)")
        if len(self.families) != 2 or not all(isinstance(f, ExponentialPower) for f in self.families):
            raise ValueError("two exponential-power families are required")

    @property
    def effective_beta_min(self) -> float:
        if self.beta_min_rule == "inverse_d_squared":
            return 1.0 / self.d ** 2
        return float(self.beta_min)

    @property
    def r(self) -> tuple[float, float]:
        return float(self.families[0].r), float(self.families[1].r)

    def ladder(self) -> TemperatureLadder:
        return ladder_eqn_beta(self.d, self.ell0, self.effective_beta_min, self.ladder_rule)

    def with_(self, **kw) -> "SimplifiedConfig":
        return SimplifiedConfig(**{**self.__dict__, **kw})

    @classmethod
    def from_dict(cls, spec: dict) -> "SimplifiedConfig":
        fams = spec.get("families")
        if fams is None:
            r = spec.get("r", [2.0, 2.0])
            lam = spec.get("lam", [1.0, 1.0])
            fams = (ExponentialPower(float(lam[0]), float(r[0])), ExponentialPower(float(lam[1]), float(r[1])))
        else:
            fams = tuple(ExponentialPower(float(f.get("lam", 1.0)), float(f["r"])) for f in fams)
        return cls(d=int(spec["d"]), p=float(spec.get("p", 0.5)), families=fams,
                   ell0=float(spec.get("ell0", ELL0)), beta_min=float(spec.get("beta_min", 0.01)),
                   beta_min_rule=spec.get("beta_min_rule", "fixed"),
                   ladder_rule=spec.get("ladder_rule", "exact"))


@dataclass
class SignedTempPath:
    """Signed inverse temperature X = (3 - 2I) beta, with time in units of d steps."""
    betas: np.ndarray
    levels: np.ndarray
    modes: np.ndarray
    d: int

    @property
    def values(self) -> np.ndarray:
        return (3 - 2 * self.modes.astype(np.int64)) * self.betas[self.levels]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.levels.size) / self.d


@dataclass
class SimplifiedRun:
    cfg: SimplifiedConfig
    ladder: TemperatureLadder
    n_steps: int
    occupancy: np.ndarray          # (levels, 2) visit counts after each step
    prop: np.ndarray               # (rungs, 2) proposals per rung and mode
    acc: np.ndarray
    accprob: np.ndarray
    qv: float                      # sum of squared z-increments
    hit_step: int | None = None
    path: SignedTempPath | None = None
    final: tuple = (0, 1)

    @property
    def mean_acceptance(self) -> float:
        return float(self.acc.sum() / max(self.prop.sum(), 1))

    def rung_acceptance(self, mode: int | None = None) -> np.ndarray:
        if mode is None:
            a, p = self.accprob.sum(1), self.prop.sum(1)
        else:
            a, p = self.accprob[:, mode - 1], self.prop[:, mode - 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(p > 0, a / np.maximum(p, 1), np.nan)

    @property
    def positive_fraction(self) -> float:
        return float(self.occupancy[:, 0].sum() / self.occupancy.sum())

    def qv_per_unit_time(self) -> float:
        return self.qv / (self.n_steps / self.cfg.d)


def _z_of(levels, modes, h_levels, zslope):
    sign = np.where(modes == 1, 1.0, -1.0)
    h = sign * h_levels[levels]
    return h * np.where(modes == 1, zslope[0], zslope[1])


def simplified_st_run(cfg: SimplifiedConfig, n_steps: int, rng: np.random.Generator, *,
                      start_level: int = 0, start_mode: int | None = None,
                      stop_at_bottom: bool = False, record: bool = False,
                      chunk: int = 1_000_000, backend: str | None = None) -> SimplifiedRun:
    """Run the idealised two-mode process for ``n_steps`` temperature proposals.

    Each step draws the tempered statistic for the current mode, proposes a
    neighbouring rung uniformly, and accepts with the normalised-component
    ratio exp(-(beta' - beta) T) (beta'/beta)^(d/r). The mode is redrawn with
    P(mode 1) = p at every step that starts at the hottest level.
    """
    ladder = cfg.ladder()
    betas = ladder.betas
    L = betas.size
    n = L - 1
    r1, r2 = cfg.r
    mod = simplified_module(backend)
    mode = (1 if rng.random() < cfg.p else 2) if start_mode is None else int(start_mode)
    level = int(start_level)
    occ = np.zeros((L, 2), dtype=np.int64)
    prop = np.zeros((max(n, 1), 2), dtype=np.int64)
    acc = np.zeros_like(prop)
    accprob = np.zeros((max(n, 1), 2))
    h_levels = np.log(betas / betas[-1]) / cfg.ell0
    zslope = (limit_acceptance(r1, cfg.ell0) ** -0.5, limit_acceptance(r2, cfg.ell0) ** -0.5)
    qv = 0.0
    z_prev = _z_of(np.array([level]), np.array([mode]), h_levels, zslope)[0]
    paths_l, paths_m = ([np.array([level])], [np.array([mode], dtype=np.int8)]) if record else (None, None)
    done = 0
    hit = 0 if (stop_at_bottom and level == n) else None
    while done < n_steps and hit is None:
        C = min(chunk, n_steps - done)
        g1 = rng.standard_gamma(cfg.d / r1, C)
        g2 = rng.standard_gamma(cfg.d / r2, C)
        u = rng.random((C, 3))
        out = mod.simplified_chain(betas, float(cfg.d), r1, r2, float(cfg.p), level, mode,
                                   g1, g2, u, stop_at_bottom)
        lv, md = out["levels"][1:], out["modes"][1:]
        np.add.at(occ, (lv, md.astype(np.int64) - 1), 1)
        prop += out["prop"]
        acc += out["acc"]
        accprob += out["accprob"]
        z = _z_of(lv, md, h_levels, zslope)
        if z.size:
            qv += float((z[0] - z_prev) ** 2 + np.sum(np.diff(z) ** 2))
            z_prev = z[-1]
        if record:
            paths_l.append(lv)
            paths_m.append(md)
        if stop_at_bottom and out["n_done"] < C:
            hit = done + int(out["n_done"])
        elif stop_at_bottom and lv.size and lv[-1] == n and hit is None:
            hit = done + int(out["n_done"])
        level, mode = int(out["level"]), int(out["mode"])
        done += int(out["n_done"])
    path = None
    if record:
        path = SignedTempPath(betas, np.concatenate(paths_l), np.concatenate(paths_m), cfg.d)
    return SimplifiedRun(cfg, ladder, done, occ, prop, acc, accprob, qv, hit, path, (level, mode))


def hitting_time(cfg: SimplifiedConfig, rng: np.random.Generator, max_steps: int = 10**9,
                 backend: str | None = None) -> int:
    """Steps until the process started at beta = 1 first reaches the hottest level."""
    out = simplified_st_run(cfg, max_steps, rng, start_level=0, start_mode=1,
                            stop_at_bottom=True, chunk=200_000, backend=backend)
    if out.hit_step is None:
        raise RuntimeError("hottest level not reached within max_steps")
    return out.hit_step


def mean_hitting_time(cfg: SimplifiedConfig, replicates: int, rng: np.random.Generator,
                      backend: str | None = None) -> tuple[float, float]:
    """(mean, standard error) of the first hitting time of beta_min over replicates."""
    if replicates < 2:
        raise ValueError("need at least two replicates")
    t = np.array([hitting_time(cfg, rng, backend=backend) for _ in range(replicates)], dtype=float)
    return float(t.mean()), float(t.std(ddof=1) / math.sqrt(t.size))


@dataclass
class ScalingFit:
    d_values: list
    mean_times: list
    std_errors: list
    slope: float
    intercept: float
    r2: float
    normalised: list = field(default_factory=list)    # time / d or time / (d (log d)^2)
    times: list = field(default_factory=list)         # per-d replicate hitting times

    @property
    def normalised_spread(self) -> float:
        v = np.asarray(self.normalised)
        return float(v.max() / v.min())


def mixing_scaling_fit(cfg_template: SimplifiedConfig, d_values, replicates: int,
                       rng: np.random.Generator, backend: str | None = None) -> ScalingFit:
    """Log-log regression of mean beta_min hitting time against d (fixed beta_min)
    or against d (log d)^2 (beta_min = 1/d^2)."""
    d_values = [int(d) for d in d_values]
    if len(d_values) < 3:
        raise ValueError("need at least three dimensions")
    if replicates < 2:
        raise ValueError("need at least two replicates per dimension")
    means, ses, times = [], [], []
    for d in d_values:
        cfg = cfg_template.with_(d=d)
        t = np.array([hitting_time(cfg, rng, backend=backend) for _ in range(replicates)], dtype=float)
        times.append(t.tolist())
        means.append(float(t.mean()))
        ses.append(float(t.std(ddof=1) / math.sqrt(t.size)))
    dv = np.asarray(d_values, dtype=float)
    if cfg_template.beta_min_rule == "inverse_d_squared":
        xreg = dv * np.log(dv) ** 2
    else:
        xreg = dv
    lx, ly = np.log(xreg), np.log(np.asarray(means))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2) / ss) if ss > 0 else 1.0
    return ScalingFit(d_values, means, ses, float(slope), float(intercept), r2,
                      (np.asarray(means) / xreg).tolist(), times)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def h_transform(x, ell, beta_min: float):
    """Integral of 1/ell from beta_min to |x|, signed by x; 0 at x = 0.

    A constant ``ell`` means ell(u) = u * ell0 and uses the closed form
    sgn(x) log(|x| / beta_min) / ell0.
    """
    xa = np.asarray(x, dtype=float)
    ax = np.abs(xa)
    tol = 1e-12
    bad = (ax != 0) & ((ax < beta_min * (1 - tol)) | (ax > 1 + tol))
    if np.any(bad):
        raise ValueError("|x| must lie in [beta_min, 1] or x = 0")
    if not callable(ell):
        ell0 = float(ell)
        with np.errstate(divide="ignore"):
            out = np.where(ax == 0, 0.0, np.sign(xa) * np.log(np.maximum(ax, beta_min) / beta_min) / ell0)
    else:
        flat = [0.0 if v == 0 else math.copysign(integrate.quad(lambda u: 1.0 / ell(u), beta_min, abs(v),
                                                                epsrel=1e-12)[0], v)
                for v in np.atleast_1d(xa).ravel()]
        out = np.array(flat).reshape(np.shape(xa))
    return float(out) if np.ndim(out) == 0 else out


def z_transform(h_val, r1: float, r2: float, ell0: float = ELL0):
    """h [2 Phi(-ell0 / (2 sqrt r(h)))]^(-1/2), with r = r1 for h > 0 and r2 for h < 0."""
    h = np.asarray(h_val, dtype=float)
    c1, c2 = limit_acceptance(r1, ell0), limit_acceptance(r2, ell0)
    out = h * np.where(h > 0, c1 ** -0.5, c2 ** -0.5)
    return float(out) if out.ndim == 0 else out


def reflection_bounds(r1: float, r2: float, ell0: float, beta_min: float, ell=None) -> tuple[float, float]:
    """Reflection points (z_min, z_max) of the limiting skew Brownian motion."""
    if ell is None:
        length = math.log(1.0 / beta_min) / ell0
    else:
        length = integrate.quad(lambda u: 1.0 / ell(u), beta_min, 1.0, epsrel=1e-12)[0]
    return (-limit_acceptance(r2, ell0) ** -0.5 * length, limit_acceptance(r1, ell0) ** -0.5 * length)


def excursion_weights(p: float, r1: float, r2: float, ell0: float = ELL0) -> tuple[float, float]:
    """a = p [2 Phi(-ell0/(2 sqrt r1))]^(1/2), b = (1-p) [2 Phi(-ell0/(2 sqrt r2))]^(1/2)."""
    return (p * limit_acceptance(r1, ell0) ** 0.5, (1 - p) * limit_acceptance(r2, ell0) ** 0.5)


@dataclass
class LatticePath:
    step: float
    positions: np.ndarray | None     # lattice index per step (skew) or position per step (Walsh)
    occupancy: np.ndarray
    arms: np.ndarray | None = None
    origin: int = 0
    offset: int = 0

    @property
    def path(self) -> np.ndarray | None:
        return None if self.positions is None else self.positions * self.step


def skew_bm_simulate(a: float, b: float, z_min: float, z_max: float, dt: float, n_steps: int,
                     rng: np.random.Generator, record: bool = True,
                     backend: str | None = None) -> LatticePath:
    """Skew Brownian motion as a +-sqrt(dt) lattice walk reflected at z_min and z_max.

    From 0 the walk steps up with probability a / (a + b); elsewhere it moves
    symmetrically, holding in place when a step would leave the domain.
    ``occupancy`` counts visits to lattice points kmin..kmax.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not z_min < 0 < z_max:
        raise ValueError("need z_min < 0 < z_max")
    h = math.sqrt(dt)
    kmin, kmax = -max(1, int(round(-z_min / h))), max(1, int(round(z_max / h)))
    u = rng.random(int(n_steps))
    out = simplified_module(backend).skew_walk(0, kmin, kmax, a / (a + b), u, record)
    return LatticePath(h, out["path"], out["occupancy"], offset=kmin)


def skew_side_masses(path: LatticePath) -> tuple[float, float, float, float]:
    """(positive mass, negative mass, positive density, negative density) excluding 0."""
    occ = path.occupancy
    idx = np.arange(occ.size) + path.offset
    pos, neg = occ[idx > 0], occ[idx < 0]
    tot = pos.sum() + neg.sum()
    return (pos.sum() / tot, neg.sum() / tot, pos.sum() / tot / pos.size, neg.sum() / tot / neg.size)


def walsh_bm_simulate(weights, arm_lengths, dt: float, n_steps: int, rng: np.random.Generator,
                      record: bool = True, backend: str | None = None) -> LatticePath:
    """Walsh Brownian motion on a star: at the origin an arm is chosen with probabilities ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.size < 2:
        raise ValueError("need at least two arms")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be non-negative and sum to 1")
    h = math.sqrt(dt)
    lengths = np.maximum(1, np.round(np.asarray(arm_lengths, dtype=float) / h)).astype(np.int64)
    if lengths.size != w.size:
        raise ValueError("one length per arm")
    cum = np.cumsum(w)
    cum[-1] = 1.0
    u = rng.random(int(n_steps))
    out = simplified_module(backend).walsh_walk(0, 0, lengths, cum, u, record)
    return LatticePath(h, out["pos"], out["occupancy"], out["arms"], int(out["origin"]))


def walsh_arm_fractions(path: LatticePath) -> np.ndarray:
    per_arm = path.occupancy.sum(1).astype(float)
    return per_arm / per_arm.sum()


# ---------------------------------------------------------------------------
# Piecewise uniformity
# ---------------------------------------------------------------------------

def piecewise_uniform_check(path, bins: int = 20, support=None, min_per_side: int = 100):
    """Largest relative deviation of each side's histogram from that side's mean density.

    ``path`` is an array of H values or a SimplifiedRun. For lattice-valued
    paths pass ``support`` (the distinct attainable values); bins then group
    whole lattice points and densities are per lattice point. Zero is
    excluded from both sides. Returns (positive deviation, negative deviation).
    """
    if isinstance(path, SimplifiedRun):
        return _run_uniformity(path, bins, min_per_side)
    v = np.asarray(path, dtype=float).ravel()
    out = []
    for side in (v[v > 0], -v[v < 0]):
        if side.size < min_per_side:
            raise ValueError(f"fewer than {min_per_side} samples on one side")
        if support is not None:
            pts = np.unique(np.abs(np.asarray(support, dtype=float)))
            pts = pts[pts > 0]
            counts = np.array([np.sum(np.isclose(side, s, rtol=1e-9, atol=1e-12)) for s in pts])
            out.append(_grouped_deviation(counts, bins))
        else:
            hist, _ = np.histogram(side, bins=bins, range=(0.0, side.max()))
            out.append(float(np.max(np.abs(hist / hist.mean() - 1.0))))
    return tuple(out)


def _grouped_deviation(counts: np.ndarray, bins: int) -> float:
    """Counts on consecutive lattice points grouped into at most ``bins`` bins."""
    groups = np.array_split(np.asarray(counts, dtype=float), min(bins, counts.size))
    dens = np.array([g.sum() / g.size for g in groups])
    return float(np.max(np.abs(dens / dens.mean() - 1.0)))


def _run_uniformity(run: SimplifiedRun, bins: int, min_per_side: int):
    occ = run.occupancy[:-1]     # the hottest level (H = 0) belongs to neither side
    out = []
    for j in range(2):
        c = occ[:, j]
        if c.sum() < min_per_side:
            raise ValueError(f"fewer than {min_per_side} samples on one side")
        out.append(_grouped_deviation(c[::-1], bins))
    return tuple(out)
