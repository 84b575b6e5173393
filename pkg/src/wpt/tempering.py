"""Tempering drivers: simulated tempering, parallel tempering and their HAT variants."""
from __future__ import annotations

import enum
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .backend import ChainKernels
from .mixture_targets import (
    HatContext,
    MixtureTarget,
    UnsupportedKindError,
    load_mixture,
    mixture_from_dict,
)
from .samplers import KernelConfig
from .tempered_targets import (
    GVariant,
    TemperedTarget,
    TemperKind,
    estimate_pseudo_prior,
    mode_assign,
)

log = logging.getLogger(__name__)

RWM, MODAL = 0, 1


class ConfigError(ValueError):
    """Raised with every problem found in a run configuration."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Driver(enum.Enum):
    ST = "ST"
    PT = "PT"
    HAST = "HAST"
    HAT = "HAT"

    @classmethod
    def parse(cls, s) -> "Driver":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).upper())
        except ValueError:
            raise ValueError(f"unknown driver {s!r}; choose from ST, PT, HAST, HAT") from None

    @property
    def is_st(self) -> bool:
        return self in (Driver.ST, Driver.HAST)


# ---------------------------------------------------------------------------
# Ladders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemperatureLadder:
    betas: np.ndarray
    spacing_rule: str = "explicit"      # "explicit" | "geometric" | "eqn_beta"
    param: float | None = None          # ratio for geometric, ell0 for eqn_beta

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.betas, dtype=float))
        if b.ndim != 1 or b.size < 1:
            raise ValueError("ladder needs at least one level")
        if b[0] != 1.0:
            raise ValueError("ladder must start at beta = 1")
        if np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise ValueError("inverse temperatures must be positive and finite")
        if np.any(np.diff(b) >= 0):
            raise ValueError("inverse temperatures must be strictly decreasing")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    def __len__(self) -> int:
        return self.betas.size

    @property
    def n(self) -> int:
        return self.betas.size - 1

    @property
    def beta_min(self) -> float:
        return float(self.betas[-1])

    @property
    def log_gaps(self) -> np.ndarray:
        return -np.diff(np.log(self.betas))

    @classmethod
    def from_log_gaps(cls, gaps, rule="explicit", param=None) -> "TemperatureLadder":
        return cls(np.exp(-np.concatenate([[0.0], np.cumsum(gaps)])), rule, param)

    @classmethod
    def from_dict(cls, spec) -> "TemperatureLadder":
        if isinstance(spec, (list, tuple)):
            return cls(np.asarray(spec, dtype=float))
        kind = str(spec.get("kind", "geometric")).lower()
        if kind == "geometric":
            return geometric_ladder(int(spec["n_levels"]), float(spec["ratio"]))
        if kind == "explicit":
            return cls(np.asarray(spec["betas"], dtype=float))
        if kind == "eqn_beta":
            from .diffusion_limit import ladder_eqn_beta
            return ladder_eqn_beta(int(spec["d"]), float(spec["ell0"]), float(spec["beta_min"]),
                                   rule=spec.get("rule", "euler"))
        raise ValueError(f"unknown ladder kind {kind!r}")


def geometric_ladder(n_levels: int, ratio: float) -> TemperatureLadder:
    if int(n_levels) < 1:
        raise ValueError("n_levels must be >= 1")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    return TemperatureLadder(float(ratio) ** np.arange(int(n_levels)), "geometric", float(ratio))


# ---------------------------------------------------------------------------
# States, kernels and traces
# ---------------------------------------------------------------------------

@dataclass
class STState:
    T: int
    x: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(self.x)):
            raise ValueError("state must be finite")


@dataclass
class PTState:
    xs: np.ndarray

    def __post_init__(self):
        self.xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        if not np.all(np.isfinite(self.xs)):
            raise ValueError("states must be finite")


class Kernel:
    """Kernel configuration plus its per-level adaptive state."""

    def __init__(self, config: KernelConfig, betas, d: int):
        self.config = config
        betas = np.asarray(betas, dtype=float)
        base = config.scale if config.scale is not None else 2.38 / math.sqrt(d)
        self.log_scales = np.log(base / np.sqrt(betas))
        self.counts = np.zeros(betas.size, dtype=np.int64)
        self.code = RWM if config.kind == "rwm" else MODAL
        self.target_acc = config.accept_target(d)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)


@dataclass
class ChainTrace:
    """Append-only record of a tempering run.

    Rows hold every sub-iteration. For ST drivers ``levels`` is the current
    temperature index; for PT drivers the rows are the cold chain and
    ``levels`` is zero throughout.
    """
    driver: Driver
    betas: np.ndarray
    dim: int
    _parts: dict = field(default_factory=lambda: {k: [] for k in
                                                    ("sweep", "levels", "x", "mode", "accepted")})
    pair_prop: np.ndarray | None = None
    pair_acc: np.ndarray | None = None
    pair_accprob: np.ndarray | None = None
    kern_prop: np.ndarray | None = None
    kern_acc: np.ndarray | None = None
    off_ladder: int = 0
    runtime: float = 0.0
    seed: int | None = None
    log_k: np.ndarray | None = None
    final_state: STState | PTState | None = None
    snapshots: list = field(default_factory=list)

    def __post_init__(self):
        L = len(self.betas)
        self.pair_prop = np.zeros(max(L - 1, 0), dtype=np.int64)
        self.pair_acc = np.zeros(max(L - 1, 0), dtype=np.int64)
        self.pair_accprob = np.zeros(max(L - 1, 0))
        self.kern_prop = np.zeros(L, dtype=np.int64)
        self.kern_acc = np.zeros(L, dtype=np.int64)
        self._cache = None

    def append(self, sweep, levels, x, mode, accepted):
        p = self._parts
        p["sweep"].append(np.asarray(sweep, dtype=np.int64))
        p["levels"].append(np.asarray(levels, dtype=np.int64))
        p["x"].append(np.asarray(x, dtype=float).reshape(-1, self.dim))
        p["mode"].append(np.asarray(mode, dtype=np.int64))
        p["accepted"].append(np.asarray(accepted, dtype=np.int8))
        self._cache = None

    def _cat(self):
        if self._cache is None:
            p = self._parts
            self._cache = {k: (np.concatenate(v) if v else np.zeros((0, self.dim) if k == "x" else 0))
                           for k, v in p.items()}
        return self._cache

    @property
    def sweep(self) -> np.ndarray:
        return self._cat()["sweep"]

    @property
    def levels(self) -> np.ndarray:
        return self._cat()["levels"]

    @property
    def x(self) -> np.ndarray:
        return self._cat()["x"]

    @property
    def mode(self) -> np.ndarray:
        return self._cat()["mode"]

    @property
    def accepted(self) -> np.ndarray:
        return self._cat()["accepted"]

    @property
    def n_levels(self) -> int:
        return len(self.betas)

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.betas)[self.levels]

    def __len__(self) -> int:
        return sum(a.size for a in self._parts["sweep"])

    def cold_x(self) -> np.ndarray:
        return self.x[self.levels == 0]

    def swap_rates(self) -> list[float | None]:
        return [float(a / p) if p > 0 else None for a, p in zip(self.pair_acc, self.pair_prop)]

    def swap_accprob_rates(self) -> list[float | None]:
        return [float(a / p) if p > 0 else None for a, p in zip(self.pair_accprob, self.pair_prop)]

    def _add_stats(self, out):
        self.pair_prop += out["pair_prop"]
        self.pair_acc += out["pair_acc"]
        self.pair_accprob += out["pair_accprob"]
        self.kern_prop += out["kern_prop"]
        self.kern_acc += out["kern_acc"]
        self.off_ladder += int(out.get("off_ladder", 0))


# ---------------------------------------------------------------------------
# Single sweeps
# ---------------------------------------------------------------------------

def _labeller(target: TemperedTarget, ctx: HatContext | None) -> Callable:
    if ctx is not None:
        return lambda X: np.atleast_1d(mode_assign(ctx, X, 1.0))
    return lambda X: (np.mean(X, axis=-1) >= 0).astype(np.int64)


def _st_draws(rng, C, m, d):
    return rng.random((C, 2)), rng.standard_normal((C, m, d)), rng.random((C, m))


def _pt_draws(rng, C, L, m, d):
    return rng.random((C, 2)), rng.standard_normal((C, L, m, d)), rng.random((C, L, m))


def _as_kernel(kernel, betas, d) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    return Kernel(kernel if isinstance(kernel, KernelConfig) else KernelConfig.from_dict(kernel),
                  betas, d)


def st_sweep(state: STState, ladder: TemperatureLadder, tempered_target: TemperedTarget,
             kernel, m: int, rng: np.random.Generator, log_k=None, adapt: bool = False,
             backend: str | None = None):
    """One ST sweep: a temperature move then ``m`` kernel steps at the new level.

    Returns the new state and the sweep's rows (``levels``, ``xs``, ``acc``).
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    betas = ladder.betas
    d = state.x.size
    k = _as_kernel(kernel, betas, d)
    lk = np.zeros(len(betas)) if log_k is None else np.asarray(log_k, dtype=float)
    ut, z, um = _st_draws(rng, 1, m, d)
    out = ChainKernels(tempered_target, backend).st_chain(
        betas, lk, state.x, int(state.T), m, k.code, k.config.exact_resample, k.log_scales,
        k.counts, 1 if (adapt and k.config.adapt) else 0, k.target_acc, ut, z, um)
    return STState(out["level"], out["x"]), out


def pt_sweep(state: PTState, ladder: TemperatureLadder, tempered_target: TemperedTarget,
             kernel, m: int, rng: np.random.Generator, adapt: bool = False,
             backend: str | None = None):
    """One PT sweep: a uniformly chosen adjacent swap then ``m`` kernel steps per level."""
    if m < 0:
        raise ValueError("m must be >= 0")
    betas = ladder.betas
    L, d = state.xs.shape
    if L != len(betas):
        raise ValueError("PTState must hold one state per level")
    k = _as_kernel(kernel, betas, d)
    us, z, um = _pt_draws(rng, 1, L, m, d)
    out = ChainKernels(tempered_target, backend).pt_chain(
        betas, state.xs, m, k.code, k.config.exact_resample, k.log_scales, k.counts,
        1 if (adapt and k.config.adapt) else 0, k.target_acc, us, z, um)
    return PTState(out["xs"]), out


# ---------------------------------------------------------------------------
# Ladder tuning
# ---------------------------------------------------------------------------

@dataclass
class TuneResult:
    ladder: TemperatureLadder
    converged: bool
    status: str
    rates: list
    iterations: int


def tune_ladder(tempered_target: TemperedTarget, kernel, target_swap: float = 0.234,
                rng: np.random.Generator | None = None, *, n_levels: int = 2,
                initial: TemperatureLadder | None = None, m: int = 5, batch: int | None = None,
                max_iter: int = 200, band: float = 0.05, backend: str | None = None,
                x0=None, driver="PT") -> TuneResult:
    """Robbins-Monro adaptation of the adjacent log-gaps against a swap-acceptance target.

    Batches of the chosen driver are run on the current ladder (PT swaps, or
    ST temperature moves under the analytic pseudo-prior); each log-gap is
    scaled by exp(gamma_i (rate_k - target)) with gamma_i = i^-0.6, so gaps
    with too much acceptance widen. Stops once every pair's batch rate lies
    within ``band`` of the target and a fresh batch on the frozen ladder
    confirms it, or when ``max_iter`` batches have been spent.
    """
    if not 0 < target_swap <= 1:
        raise ValueError("target_swap must lie in (0, 1]")
    # target_swap = 1 is only reached as the gaps vanish, so it never converges
    rng = np.random.default_rng() if rng is None else rng
    ladder = initial if initial is not None else geometric_ladder(max(int(n_levels), 2), 0.5)
    if len(ladder) < 2:
        return TuneResult(ladder, True, "ok", [], 0)
    st_mode = Driver.parse(driver).is_st
    d = tempered_target.dim
    L = len(ladder)
    batch = batch or (200 if st_mode else 100) * (L - 1)
    gaps = ladder.log_gaps.copy()
    start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    xs = np.tile(start, (L, 1))
    st_state = [start.copy(), 0]
    lk = np.zeros(L)
    k = _as_kernel(kernel, ladder.betas, d)
    ck = ChainKernels(tempered_target, backend)
    rates = [None] * (L - 1)

    def st_batch(betas, n_adapt):
        nonlocal lk
        try:
            lk = np.array([tempered_target.log_pseudo_prior(b) for b in betas])
        except UnsupportedKindError:
            pass    # keep the running occupancy-corrected values
        ut, z, um = _st_draws(rng, batch, m, d)
        out = ck.st_chain(betas, lk, st_state[0], st_state[1], m, k.code, k.config.exact_resample,
                          k.log_scales, k.counts, n_adapt, k.target_acc, ut, z, um)
        st_state[:] = [out["x"], out["level"]]
        counts = np.bincount(out["levels"], minlength=L)
        if np.all(counts > 0):
            lk = estimate_pseudo_prior(counts, lk)
        return out

    def run_batch(betas, adapt):
        nonlocal xs
        n_adapt = batch if (adapt and k.config.adapt) else 0
        if st_mode:
            out = st_batch(betas, n_adapt)
        else:
            us, z, um = _pt_draws(rng, batch, L, m, d)
            out = ck.pt_chain(betas, xs, m, k.code, k.config.exact_resample, k.log_scales,
                              k.counts, n_adapt, k.target_acc, us, z, um)
            xs = out["xs"]
        p = np.maximum(out["pair_prop"], 1)
        return out["pair_accprob"] / p

    # settle the within-level kernels before touching the gaps
    run_batch(ladder.betas, True)
    for it in range(1, max_iter + 1):
        betas = np.exp(-np.concatenate([[0.0], np.cumsum(gaps)]))
        r = run_batch(betas, True)
        rates = r.tolist()
        if target_swap < 1 and np.all(np.abs(r - target_swap) <= band):
            check = run_batch(betas, False)
            if np.all(np.abs(check - target_swap) <= band):
                lad = TemperatureLadder(betas, "explicit")
                return TuneResult(lad, True, "ok", check.tolist(), it)
        gaps = gaps * np.exp(it ** -0.6 * (r - target_swap))
        gaps = np.maximum(gaps, 1e-12)
    betas = np.exp(-np.concatenate([[0.0], np.cumsum(gaps)]))
    status = "warning: iteration cap reached without convergence"
    if target_swap >= 1 or np.min(gaps) < 1e-3:
        status += "; ladder collapsed toward beta = 1"
    log.warning(status)
    try:
        lad = TemperatureLadder(betas, "explicit")
    except ValueError:
        lad = TemperatureLadder(np.exp(-np.concatenate([[0.0], np.cumsum(np.maximum(gaps, 1e-9))])))
    return TuneResult(lad, False, status, rates, max_iter)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    target: MixtureTarget
    driver: Driver
    temper_kind: TemperKind
    ladder: TemperatureLadder
    kernel: KernelConfig
    s: int
    m: int
    g_variant: GVariant = GVariant.CANONICAL
    burn_in: int = 10_000
    adapt_sweeps: int | None = None
    pseudo_prior: str | list = "analytic"
    pilot_sweeps: int = 20_000
    replicates: int = 1
    seed: int = 0
    init: str | list = "mode:0"
    init_level: int = 0
    region: tuple | None = None          # (coordinate, lower, upper)
    modes: list | None = None
    name: str = "run"
    chunk: int = 5_000
    backend: str | None = None
    raw: dict = field(default_factory=dict)

    @property
    def adapt_for(self) -> int:
        if self.adapt_sweeps is not None:
            return int(self.adapt_sweeps)
        return int(self.burn_in) // (self.m + 1)

    @classmethod
    def from_dict(cls, spec: dict, base_dir: str | Path | None = None) -> "RunConfig":
        """Validate a JSON-style configuration, collecting every error before raising."""
        errors: list[str] = []
        spec = dict(spec)
        known = {"name", "target", "driver", "temper_kind", "g_variant", "ladder", "kernel",
                 "pseudo_prior", "pilot_sweeps", "s", "m", "burn_in", "adapt_sweeps",
                 "replicates", "seed", "init", "init_level", "region", "modes", "chunk",
                 "backend", "description"}
        for k in spec:
            if k not in known:
                errors.append(f"unknown key {k!r}")

        def get(key, conv, default=None, required=False):
            if key not in spec:
                if required:
                    errors.append(f"missing required key {key!r}")
                return default
            try:
                return conv(spec[key])
            except (TypeError, ValueError, KeyError) as e:
                errors.append(f"{key}: {e}")
                return default

        def nonneg_int(v):
            if isinstance(v, bool) or int(v) != v or int(v) < 0:
                raise ValueError(f"expected a non-negative integer, got {v!r}")
            return int(v)

        target = None
        if "target" not in spec:
            errors.append("missing required key 'target'")
        else:
            t = spec["target"]
            try:
                if isinstance(t, str):
                    p = Path(t)
                    if not p.is_absolute() and base_dir is not None:
                        p = Path(base_dir) / p
                    target = load_mixture(p)
                else:
                    target = mixture_from_dict(t)
            except (OSError, ValueError, KeyError, TypeError) as e:
                errors.append(f"target: {e}")
        driver = get("driver", Driver.parse, required=True)
        default_kind = "hat" if driver in (Driver.HAST, Driver.HAT) else "power"
        kind = get("temper_kind", TemperKind.parse, TemperKind.parse(default_kind))
        if driver in (Driver.HAST, Driver.HAT) and kind not in (TemperKind.HAT, None):
            errors.append(f"driver {driver.value} runs on HAT targets; temper_kind {kind.value} given")
        if kind is TemperKind.GRADIENT:
            errors.append("gradient-corrected targets are for verification only and cannot be sampled")
        gv = get("g_variant", GVariant.parse, GVariant.CANONICAL)
        ladder = get("ladder", TemperatureLadder.from_dict, required=True)
        kernel = get("kernel", KernelConfig.from_dict, KernelConfig())
        s = get("s", nonneg_int, required=True)
        m = get("m", nonneg_int, 5)
        burn_in = get("burn_in", nonneg_int, 10_000)
        adapt_sweeps = get("adapt_sweeps", nonneg_int, None)
        pilot = get("pilot_sweeps", nonneg_int, 20_000)
        reps = get("replicates", nonneg_int, 1)
        if reps is not None and reps < 1:
            errors.append("replicates must be >= 1")
        seed = get("seed", nonneg_int, 0)
        chunk = get("chunk", nonneg_int, 5_000)
        if chunk is not None and chunk < 1:
            errors.append("chunk must be >= 1")
        init_level = get("init_level", nonneg_int, 0)
        pp = spec.get("pseudo_prior", "analytic")
        if isinstance(pp, str):
            if pp not in ("analytic", "estimate", "none"):
                errors.append(f"pseudo_prior must be 'analytic', 'estimate', 'none' or a list, got {pp!r}")
        elif ladder is not None and len(pp) != len(ladder):
            errors.append("pseudo_prior list length must equal the number of levels")
        init = spec.get("init", "mode:0")
        region = None
        if "region" in spec:
            r = spec["region"]
            try:
                if isinstance(r, dict):
                    region = (int(r.get("coordinate", 0)), float(r["lower"]), float(r["upper"]))
                else:
                    region = (0, float(r[0]), float(r[1]))
                if not region[1] < region[2]:
                    errors.append("region lower bound must be below upper bound")
            except (TypeError, ValueError, KeyError, IndexError) as e:
                errors.append(f"region: {e}")
        modes = spec.get("modes")
        backend = spec.get("backend")
        if backend not in (None, "python", "compiled"):
            errors.append(f"backend must be 'python' or 'compiled', got {backend!r}")

        if target is not None:
            d = target.dim
            if ladder is not None and init_level is not None and init_level >= len(ladder):
                errors.append(f"init_level {init_level} outside the ladder")
            if isinstance(init, str):
                if init != "random_mode" and not (init.startswith("mode:") and init[5:].isdigit()):
                    errors.append(f"init must be 'mode:<k>', 'random_mode' or a vector, got {init!r}")
                elif init.startswith("mode:") and int(init[5:]) >= len(target.components):
                    errors.append(f"init mode index {init[5:]} out of range")
            elif np.asarray(init).shape != (d,):
                errors.append(f"init vector must have length {d}")
            if region is not None and not 0 <= region[0] < d:
                errors.append(f"region coordinate {region[0]} outside dimension {d}")
            if modes is not None and np.asarray(modes, dtype=float).ndim != 2:
                errors.append("modes must be a list of points")
            if kernel is not None and kernel.kind == "modal_independence":
                ok = (modes is not None and len(modes) == 2) or len(target.components) == 2
                if not ok:
                    errors.append("modal_independence kernel needs exactly two modes")
        if errors:
            raise ConfigError(errors)
        return cls(target=target, driver=driver, temper_kind=kind, ladder=ladder, kernel=kernel,
                   s=s, m=m, g_variant=gv, burn_in=burn_in, adapt_sweeps=adapt_sweeps,
                   pseudo_prior=pp, pilot_sweeps=pilot, replicates=reps, seed=seed, init=init,
                   init_level=init_level, region=region, modes=modes,
                   name=str(spec.get("name", "run")), chunk=chunk, backend=backend, raw=spec)


def build_context(cfg: RunConfig) -> HatContext | None:
    modes = None if cfg.modes is None else [np.asarray(p, dtype=float) for p in cfg.modes]
    try:
        return HatContext.from_target(cfg.target, modes=modes)
    except (ValueError, np.linalg.LinAlgError):
        if cfg.temper_kind in (TemperKind.BHAT, TemperKind.HAT):
            raise
        return None


def build_tempered(cfg: RunConfig, ctx: HatContext | None = None) -> TemperedTarget:
    needs_ctx = cfg.temper_kind in (TemperKind.BHAT, TemperKind.HAT) or not cfg.target.all_gaussian
    if ctx is None and needs_ctx:
        ctx = build_context(cfg)
    return TemperedTarget(cfg.target, cfg.temper_kind, ctx, cfg.g_variant)


def initial_point(cfg: RunConfig, rng: np.random.Generator, ctx: HatContext | None) -> np.ndarray:
    if not isinstance(cfg.init, str):
        return np.asarray(cfg.init, dtype=float)
    points = (ctx.modes if ctx is not None and cfg.modes is not None
              else np.array([c.mode() for c in cfg.target.components]))
    if cfg.init == "random_mode":
        return np.array(points[int(rng.integers(len(points)))], dtype=float)
    return np.array(points[int(cfg.init[5:])], dtype=float)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def _resolve_log_k(cfg, tt, rng, kernel, ck, x0) -> np.ndarray:
    betas = cfg.ladder.betas
    pp = cfg.pseudo_prior
    if not isinstance(pp, str):
        return np.asarray(pp, dtype=float)
    if pp == "none" or not cfg.driver.is_st:
        return np.zeros(len(betas))
    if pp == "analytic":
        return np.array([tt.log_pseudo_prior(b) for b in betas])
    # one pilot pass with flat log K, then an occupancy correction
    lk = np.zeros(len(betas))
    ut, z, um = _st_draws(rng, cfg.pilot_sweeps, cfg.m, cfg.target.dim)
    ls, cnt = kernel.log_scales.copy(), kernel.counts.copy()
    out = ck.st_chain(betas, lk, x0, cfg.init_level, cfg.m, kernel.code,
                      kernel.config.exact_resample, ls, cnt, cfg.pilot_sweeps if kernel.config.adapt else 0,
                      kernel.target_acc, ut, z, um)
    return estimate_pseudo_prior(np.bincount(out["levels"], minlength=len(betas)), lk)


def run(driver, config: RunConfig, rng: np.random.Generator | None = None, *,
        on_chunk: Callable | None = None, ctx: HatContext | None = None,
        record_all: bool = False) -> ChainTrace:
    """Run one chain of the configured driver.

    ``on_chunk(trace, start_row)`` is called after each block of sweeps so
    callers can persist rows incrementally.
    """
    cfg = config
    driver = Driver.parse(driver)
    if driver is not cfg.driver:
        cfg = RunConfig(**{**cfg.__dict__, "driver": driver})
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if ctx is None:
        ctx = build_context(cfg)
    tt = build_tempered(cfg, ctx)
    betas = cfg.ladder.betas
    L, d, m = len(betas), cfg.target.dim, cfg.m
    kernel = Kernel(cfg.kernel, betas, d)
    if kernel.code == MODAL and tt.gaussian_set().means.shape[0] != 2:
        raise ValueError("modal_independence kernel needs exactly two modes")
    ck = ChainKernels(tt, cfg.backend)
    label = _labeller(tt, ctx)
    x0 = initial_point(cfg, rng, ctx)
    trace = ChainTrace(driver, betas, d, seed=cfg.seed)
    t0 = time.perf_counter()
    adapt_left = cfg.adapt_for if cfg.kernel.adapt else 0

    if driver.is_st:
        lk = _resolve_log_k(cfg, tt, rng, kernel, ck, x0)
        trace.log_k = lk
        T = int(cfg.init_level)
        x = x0
        trace.append([0], [T], x[None], label(x[None]), [0])
    else:
        xs = np.tile(x0, (L, 1))
        trace.append([0], [0], x0[None], label(x0[None]), [0])
    if on_chunk:
        on_chunk(trace, 0)

    done = 0
    while done < cfg.s:
        C = min(cfg.chunk, cfg.s - done)
        n_adapt = min(adapt_left, C)
        start_row = len(trace)
        sweeps = np.repeat(np.arange(done + 1, done + C + 1), m + 1)
        if driver.is_st:
            ut, z, um = _st_draws(rng, C, m, d)
            out = ck.st_chain(betas, lk, x, T, m, kernel.code, kernel.config.exact_resample,
                              kernel.log_scales, kernel.counts, n_adapt, kernel.target_acc,
                              ut, z, um)
            x, T = out["x"], out["level"]
            trace.append(sweeps, out["levels"], out["xs"], label(out["xs"]), out["acc"])
        else:
            us, z, um = _pt_draws(rng, C, L, m, d)
            out = ck.pt_chain(betas, xs, m, kernel.code, kernel.config.exact_resample,
                              kernel.log_scales, kernel.counts, n_adapt, kernel.target_acc,
                              us, z, um, record_all=record_all)
            xs = out["xs"]
            trace.append(sweeps, np.zeros(sweeps.size, dtype=np.int64), out["cold"],
                         label(out["cold"]), out["acc"])
            if record_all:
                trace.snapshots.append(out["snapshots"])
        trace._add_stats(out)
        adapt_left -= n_adapt
        done += C
        if on_chunk:
            on_chunk(trace, start_row)
    trace.final_state = STState(T, x) if driver.is_st else PTState(xs)
    trace.runtime = time.perf_counter() - t0
    trace.kernel_scales = kernel.scales
    return trace


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("WPT_THREADS", "1")))
    except ValueError:
        return 1


def run_replicates(config: RunConfig, *, threads: int | None = None,
                   on_chunk_factory: Callable | None = None) -> list[ChainTrace]:
    """Independent replicates with seeds seed, seed+1, ... (run concurrently with WPT_THREADS)."""
    ctx = build_context(config)
    threads = thread_count() if threads is None else threads

    def one(i):
        cb = on_chunk_factory(i) if on_chunk_factory else None
        cfg = RunConfig(**{**config.__dict__, "seed": config.seed + i})
        return run(cfg.driver, cfg, np.random.default_rng(cfg.seed), on_chunk=cb, ctx=ctx)

    if threads <= 1 or config.replicates == 1:
        return [one(i) for i in range(config.replicates)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, range(config.replicates)))
