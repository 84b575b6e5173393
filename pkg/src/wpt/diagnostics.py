"""Summaries of tempering runs: trace functional, running weights, swap tables, batch means."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .mixture_targets import HatContext
from .tempered_targets import mode_assign


class DiagnosticError(ValueError):
    pass


def trace_functional(beta_t, x_bar_t, beta_min: float):
    """log(beta/beta_min)/log(1/beta_min) * sgn(x_bar); 0 at the hottest level, +-1 at beta = 1."""
    b = np.asarray(beta_t, dtype=float)
    if not 0 < beta_min < 1:
        raise DiagnosticError("beta_min must lie in (0, 1)")
    tol = 1e-12
    if np.any(b < beta_min * (1 - tol)) or np.any(b > 1 + tol):
        raise DiagnosticError("beta_t must lie in [beta_min, 1]")
    mag = np.log(b / beta_min) / np.log(1.0 / beta_min)
    out = np.clip(mag, 0.0, 1.0) * np.sign(np.asarray(x_bar_t, dtype=float))
    return float(out) if out.ndim == 0 else out


def trace_functional_series(trace, ctx: HatContext | None = None) -> np.ndarray:
    """The functional for every row of an ST trace.

    The sign comes from the coordinate mean; with a two-mode ``ctx`` and a
    target whose modes are not split by the sign of the mean, pass ``ctx`` and
    the assignment (0 -> -1, 1 -> +1) is used instead.
    """
    betas = np.asarray(trace.betas)
    if ctx is not None:
        if ctx.K != 2:
            raise DiagnosticError("the signed functional is a two-mode construct")
        sign = np.where(np.atleast_1d(mode_assign(ctx, trace.x, 1.0)) == 0, -1.0, 1.0)
    else:
        sign = trace.x.mean(axis=1)
    return trace_functional(betas[trace.levels], sign, float(betas[-1]))


def region_indicator(coordinate: int, lower: float, upper: float) -> Callable:
    return lambda X: (X[:, coordinate] > lower) & (X[:, coordinate] < upper)


def running_weight(trace, region_predicate: Callable, burn_in: int = 10_000) -> np.ndarray:
    """Running post-burn-in mean of the region indicator over cold-chain samples.

    ``trace`` is a ChainTrace (cold rows are used) or an (N, d) array. Element
    j of the result is the estimate after burn_in + j + 1 cold samples.
    """
    X = trace.cold_x() if hasattr(trace, "cold_x") else np.atleast_2d(np.asarray(trace, dtype=float))
    post = X[int(burn_in):]
    if post.shape[0] == 0:
        raise DiagnosticError("no samples after burn-in")
    ind = np.asarray(region_predicate(post), dtype=float)
    return np.cumsum(ind) / np.arange(1, ind.size + 1)


def batch_means_sd(final_estimates: Sequence[float]) -> tuple[float, float, float]:
    """(mean, sample SD across runs, SD / sqrt(R))."""
    e = np.asarray(final_estimates, dtype=float)
    if e.size < 2:
        raise DiagnosticError("need at least two replicate estimates")
    sd = float(np.std(e, ddof=1))
    return float(e.mean()), sd, sd / np.sqrt(e.size)


def swap_rate_table(trace) -> list[float | None]:
    """Accepted / proposed per adjacent pair; None where a pair was never proposed."""
    if hasattr(trace, "pair_acc"):
        acc, prop = trace.pair_acc, trace.pair_prop
    else:
        acc, prop = trace
    return [float(a) / float(p) if p > 0 else None for a, p in zip(acc, prop)]


def mode_occupancy(trace, ctx: HatContext | None, burn_in: int = 0) -> np.ndarray:
    """Fractions of cold-level samples assigned to each mode by the beta = 1 assignment.

    ``burn_in`` counts trace rows (sub-iterations) dropped before selecting
    the cold level.
    """
    keep = np.arange(len(trace.levels)) >= burn_in
    X = trace.x[(trace.levels == 0) & keep]
    K = 1 if ctx is None else ctx.K
    if X.shape[0] == 0:
        return np.full(K, np.nan)
    if ctx is None:
        return np.ones(1)
    labels = np.atleast_1d(mode_assign(ctx, X, 1.0))
    return np.bincount(labels, minlength=K) / labels.size


@dataclass
class RunSummary:
    replicate: int
    weight_estimate: float | None
    swap_rates: list
    runtime: float
    seed: int | None = None
    kernel_accept: list = field(default_factory=list)
    mode_occupancy: list = field(default_factory=list)
    n_rows: int = 0

    def __post_init__(self):
        if self.weight_estimate is not None and not 0.0 <= self.weight_estimate <= 1.0:
            raise DiagnosticError("weight estimate must lie in [0, 1]")
        if any(r is not None and not 0.0 <= r <= 1.0 for r in self.swap_rates):
            raise DiagnosticError("swap rates must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def summarise(trace, replicate: int, region=None, burn_in: int = 10_000,
              ctx: HatContext | None = None) -> tuple[RunSummary, np.ndarray | None]:
    series = None
    w = None
    if region is not None:
        series = running_weight(trace, region_indicator(*region), burn_in)
        w = float(series[-1])
    kern = [float(a / p) if p else None for a, p in zip(trace.kern_acc, trace.kern_prop)]
    occ = mode_occupancy(trace, ctx, burn_in).tolist() if ctx is not None else []
    s = RunSummary(replicate, w, swap_rate_table(trace), float(trace.runtime), trace.seed,
                   kern, occ, len(trace))
    return s, series


def mean_swap_rate(rates: Sequence[float | None]) -> float:
    r = [v for v in rates if v is not None]
    return float(np.mean(r)) if r else float("nan")


def report_tables(summaries: dict[str, list[RunSummary]]) -> dict:
    """Per-method replicate estimates and their batch-means summary."""
    out = {"estimates": {}, "summary": {}}
    for name, runs in summaries.items():
        runs = sorted(runs, key=lambda r: r.replicate)
        est = [r.weight_estimate for r in runs]
        out["estimates"][name] = est
        row = {"runtime_mean": float(np.mean([r.runtime for r in runs])),
               "mean_swap_rate": float(np.mean([mean_swap_rate(r.swap_rates) for r in runs])),
               "replicates": len(runs)}
        vals = [e for e in est if e is not None]
        if len(vals) >= 2:
            m, sd, pooled = batch_means_sd(vals)
            row.update(mean=m, per_run_sd=sd, pooled_sd=pooled)
        elif len(vals) == 1:
            row.update(mean=vals[0], per_run_sd=None, pooled_sd=None)
        out["summary"][name] = row
    return out


class TraceWriter:
    """Incremental CSV writer: sweep,level,beta,x_0..x_{d-1},mode,accepted."""

    def __init__(self, path, dim: int, flush_every: int = 10_000):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(["sweep", "level", "beta"] + [f"x_{i}" for i in range(dim)]
                         + ["mode", "accepted"])
        self.flush_every = flush_every
        self._since = 0

    def __call__(self, trace, start_row: int):
        sw, lv, X = trace.sweep[start_row:], trace.levels[start_row:], trace.x[start_row:]
        md, ac = trace.mode[start_row:], trace.accepted[start_row:]
        betas = np.asarray(trace.betas)
        for i in range(sw.size):
            self._w.writerow([int(sw[i]), int(lv[i]), repr(float(betas[lv[i]]))]
                             + [repr(float(v)) for v in X[i]] + [int(md[i]), int(ac[i])])
            self._since += 1
            if self._since >= self.flush_every:
                self._fh.flush()
                self._since = 0

    def close(self):
        self._fh.close()


def write_series(path, series: np.ndarray, burn_in: int):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "weight"])
        for j, v in enumerate(series):
            w.writerow([burn_in + j + 1, repr(float(v))])


def load_summaries(runs_dir) -> dict[str, list[RunSummary]]:
    """Collect summary.json files below ``runs_dir`` keyed by run name."""
    out: dict[str, list[RunSummary]] = {}
    for p in sorted(Path(runs_dir).rglob("summary.json")):
        d = json.loads(p.read_text())
        name = d.get("name", p.parent.name)
        for r in d.get("replicates", []):
            out.setdefault(name, []).append(RunSummary.from_dict(r))
    return out
