"""Command-line entry point: ``wpt run | verify | report | diffusion | tune-ladder``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    DiagnosticError,
    TraceWriter,
    load_summaries,
    report_tables,
    summarise,
    write_series,
)
from .diffusion_limit import SimplifiedConfig, mixing_scaling_fit, simplified_st_run
from .mixture_targets import mixture_to_dict
from .tempered_targets import make_tempered
from .tempering import (
    ConfigError,
    RunConfig,
    build_context,
    geometric_ladder,
    run_replicates,
    thread_count,
    tune_ladder,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("wpt")


# ---------------------------------------------------------------------------
# Config resolution and hashing
# ---------------------------------------------------------------------------

def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: invalid JSON ({e})"]) from None


def load_run_spec(path, overrides: dict | None = None) -> tuple[dict, Path]:
    """Raw config dict (a manifest's recorded config is accepted too) with overrides applied."""
    path = Path(path)
    spec = _read_json(path)
    if "config" in spec and "config_hash" in spec:
        spec = spec["config"]
    spec = dict(spec)
    for k, v in (overrides or {}).items():
        if v is not None:
            spec[k] = v
    return spec, path.parent


def resolved_config(cfg: RunConfig) -> dict:
    """Every semantic field with defaults filled in and the target inlined."""
    return {
        "target": mixture_to_dict(cfg.target),
        "driver": cfg.driver.value,
        "temper_kind": cfg.temper_kind.value,
        "g_variant": cfg.g_variant.value,
        "ladder": {"kind": "explicit", "betas": [float(b) for b in cfg.ladder.betas]},
        "kernel": asdict(cfg.kernel),
        "s": cfg.s,
        "m": cfg.m,
        "burn_in": cfg.burn_in,
        "adapt_sweeps": cfg.adapt_for,
        "pseudo_prior": cfg.pseudo_prior if isinstance(cfg.pseudo_prior, str)
        else [float(v) for v in cfg.pseudo_prior],
        "pilot_sweeps": cfg.pilot_sweeps,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "init": cfg.init if isinstance(cfg.init, str) else [float(v) for v in cfg.init],
        "init_level": cfg.init_level,
        "region": None if cfg.region is None else
        {"coordinate": cfg.region[0], "lower": cfg.region[1], "upper": cfg.region[2]},
        "modes": cfg.modes,
        "chunk": cfg.chunk,
    }


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(resolved_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "s": args.s, "m": args.m, "replicates": args.replicates,
                 "burn_in": args.burn_in, "backend": args.backend}
    spec, base = load_run_spec(args.config, overrides)
    cfg = RunConfig.from_dict(spec, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = build_context(cfg)
    writers: dict[int, TraceWriter] = {}

    def factory(i):
        d = out / f"replicate_{i:03d}"
        d.mkdir(exist_ok=True)
        if args.no_trace:
            return None
        writers[i] = TraceWriter(d / "trace.csv", cfg.target.dim)
        return writers[i]

    threads = thread_count() if args.threads is None else args.threads
    t0 = time.perf_counter()
    try:
        traces = run_replicates(cfg, threads=threads, on_chunk_factory=factory)
    finally:
        for w in writers.values():
            w.close()
    summaries = []
    records = []
    for i, tr in enumerate(traces):
        d = out / f"replicate_{i:03d}"
        region = cfg.region if _has_post_burn(tr, cfg) else None
        summary, series = summarise(tr, i, region, cfg.burn_in, ctx)
        row = summary.to_dict()
        row["driver"] = cfg.driver.value
        row["temper_kind"] = cfg.temper_kind.value
        summaries.append(row)
        rec = {"replicate": i, "seed": cfg.seed + i, "dir": d.name}
        if series is not None:
            write_series(d / "running_weight.csv", series, cfg.burn_in)
            rec["running_weight"] = f"{d.name}/running_weight.csv"
        if not args.no_trace:
            rec["trace"] = f"{d.name}/trace.csv"
        records.append(rec)
        w = row["weight_estimate"]
        rates = ", ".join("-" if r is None else f"{r:.3f}" for r in row["swap_rates"])
        print(f"replicate {i} seed {cfg.seed + i}: W={'n/a' if w is None else f'{w:.4f}'} "
              f"swap rates [{rates}] {row['runtime']:.2f}s")
    (out / "summary.json").write_text(json.dumps(
        {"name": cfg.name, "driver": cfg.driver.value, "temper_kind": cfg.temper_kind.value,
         "replicates": summaries}, indent=2))
    manifest = {
        "config": resolved_config(cfg) | {"name": cfg.name},
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "replicate_seeds": [cfg.seed + i for i in range(cfg.replicates)],
        "version": __version__,
        "wall_time": time.perf_counter() - t0,
        "outputs": records,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {out}")
    return EXIT_OK


def _has_post_burn(trace, cfg: RunConfig) -> bool:
    return cfg.region is not None and trace.cold_x().shape[0] > cfg.burn_in


def cmd_verify(args) -> int:
    from .checks import run_checks
    try:
        results = run_checks(args.filter or None)
    except KeyError as e:
        print(e.args[0], file=sys.stderr)
        return EXIT_VALIDATION
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} [{r.group}] {r.name}: {r.detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def cmd_report(args) -> int:
    runs = Path(args.runs)
    if not runs.is_dir():
        raise ConfigError([f"{runs} is not a directory"])
    summaries = load_summaries(runs)
    if not summaries:
        raise ConfigError([f"no summary.json files found below {runs}"])
    tables = report_tables(summaries)
    drivers = {}
    for p in sorted(runs.rglob("summary.json")):
        d = json.loads(p.read_text())
        name = d.get("name", p.parent.name)
        drivers[name] = d.get("driver")
        row = tables["summary"].get(name)
        if row is not None:
            row["driver"] = d.get("driver")
            row["temper_kind"] = d.get("temper_kind")
            if row.get("replicates", 0) < 2:
                row["note"] = "pooled SD omitted: needs at least two replicates"
    tables["by_driver"] = {}
    for name, drv in drivers.items():
        tables["by_driver"].setdefault(drv or "unknown", []).append(name)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(tables, indent=2))
    series_path = out.with_name(out.stem + "_series.csv")
    with open(series_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "replicate", "k", "weight"])
        for p in sorted(runs.rglob("running_weight.csv")):
            sj = p.parent.parent / "summary.json"
            name = json.loads(sj.read_text()).get("name", sj.parent.name) if sj.exists() else "run"
            rep = int(p.parent.name.split("_")[-1]) if "_" in p.parent.name else 0
            with open(p) as src:
                rd = csv.reader(src)
                next(rd, None)
                for j, (k, v) in enumerate(rd):
                    if j % args.stride == 0:
                        w.writerow([name, rep, k, v])
    for name, row in tables["summary"].items():
        sd = row.get("per_run_sd")
        print(f"{name}: mean={row.get('mean')} per-run SD={sd} pooled SD={row.get('pooled_sd')} "
              f"RT={row['runtime_mean']:.2f}s swap={row['mean_swap_rate']:.3f}")
    print(f"wrote {out} and {series_path}")
    return EXIT_OK


def cmd_diffusion(args) -> int:
    spec = _read_json(Path(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(spec.get("seed", 0) if args.seed is None else args.seed)
    base = {k: v for k, v in spec.items() if k not in ("fits", "stationary", "seed", "name")}
    fits = spec.get("fits")
    if not fits:
        raise ConfigError(["diffusion config needs a non-empty 'fits' list"])
    errors = []
    jobs = []
    for i, f in enumerate(fits):
        merged = {**base, **{k: v for k, v in f.items() if k not in ("label", "d_values", "replicates")}}
        merged.setdefault("d", (f.get("d_values") or [2])[0])
        try:
            tmpl = SimplifiedConfig.from_dict(merged)
            if len(f.get("d_values", [])) < 3:
                raise ValueError("d_values needs at least three dimensions")
            if int(f.get("replicates", 0)) < 2:
                raise ValueError("replicates must be >= 2")
            jobs.append((f.get("label", f"fit_{i}"), tmpl, f["d_values"], int(f["replicates"])))
        except (ValueError, KeyError, TypeError) as e:
            errors.append(f"fits[{i}]: {e}")
    if errors:
        raise ConfigError(errors)
    rng = np.random.default_rng(seed)
    result = {"seed": seed, "fits": {}}
    with open(out / "hitting_times.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fit", "d", "replicate", "hitting_time", "time_over_d"])
        for label, tmpl, dvals, reps in jobs:
            fit = mixing_scaling_fit(tmpl, dvals, reps, rng, backend=args.backend)
            for d, ts in zip(fit.d_values, fit.times):
                for j, t in enumerate(ts):
                    w.writerow([label, d, j, int(t), repr(t / d)])
            result["fits"][label] = {
                "beta_min_rule": tmpl.beta_min_rule, "d_values": fit.d_values,
                "mean_hitting_times": fit.mean_times, "std_errors": fit.std_errors,
                "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                "normalised_times": fit.normalised, "normalised_spread": fit.normalised_spread}
            print(f"{label}: slope {fit.slope:.3f} (R^2 {fit.r2:.3f}), "
                  f"normalised spread {fit.normalised_spread:.2f}")
    st = spec.get("stationary")
    if st:
        cfg = SimplifiedConfig.from_dict({**base, **{k: v for k, v in st.items() if k != "n_steps"}})
        r = simplified_st_run(cfg, int(st.get("n_steps", 1_000_000)), rng, backend=args.backend)
        result["stationary"] = {"d": cfg.d, "p": cfg.p,
                                "rung_acceptance": r.rung_acceptance().tolist(),
                                "positive_fraction": r.positive_fraction,
                                "mean_acceptance": r.mean_acceptance}
    (out / "fit.json").write_text(json.dumps(result, indent=2))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_tune_ladder(args) -> int:
    spec, base = load_run_spec(args.config, {"seed": args.seed})
    spec.setdefault("ladder", [1.0])
    spec.setdefault("s", 0)
    cfg = RunConfig.from_dict(spec, base)
    ctx = build_context(cfg)
    tt = make_tempered(cfg.target, cfg.temper_kind, ctx, cfg.g_variant)
    init = cfg.ladder if len(cfg.ladder) >= 2 and not args.levels else None
    n = args.levels or len(cfg.ladder)
    if init is None:
        init = geometric_ladder(max(n, 2), 0.5)
    rng = np.random.default_rng(cfg.seed)
    x0 = np.array(cfg.target.components[0].mode(), dtype=float)
    res = tune_ladder(tt, cfg.kernel, args.target_swap, rng, initial=init, m=cfg.m,
                      max_iter=args.max_iter, backend=cfg.backend, x0=x0, driver=cfg.driver)
    doc = {"betas": res.ladder.betas.tolist(), "converged": res.converged, "status": res.status,
           "rates": res.rates, "iterations": res.iterations, "target_swap": args.target_swap,
           "driver": cfg.driver.value}
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    if not res.converged:
        print(res.status, file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are validation failures (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wpt", description="Tempered MCMC for multimodal targets")
    p.add_argument("--version", action="version", version=f"wpt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--s", type=int)
    r.add_argument("--m", type=int)
    r.add_argument("--replicates", type=int)
    r.add_argument("--burn-in", type=int, dest="burn_in")
    r.add_argument("--backend", choices=("python", "compiled"))
    r.add_argument("--threads", type=int, help="overrides WPT_THREADS")
    r.add_argument("--no-trace", action="store_true", help="skip the per-row trace CSV")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="quadrature and identity checks")
    v.add_argument("--filter", action="append", help="check group (repeatable)")
    v.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", help="tables from a directory of run summaries")
    rp.add_argument("--runs", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--stride", type=int, default=1, help="keep every n-th series row")
    rp.set_defaults(func=cmd_report)

    d = sub.add_parser("diffusion", help="hitting-time scaling of the simplified process")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int)
    d.add_argument("--backend", choices=("python", "compiled"))
    d.set_defaults(func=cmd_diffusion)

    t = sub.add_parser("tune-ladder", help="stochastic-approximation ladder tuning")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--levels", type=int)
    t.add_argument("--target-swap", type=float, default=0.234, dest="target_swap")
    t.add_argument("--max-iter", type=int, default=200, dest="max_iter")
    t.set_defaults(func=cmd_tune_ladder)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print("invalid configuration:", file=sys.stderr)
        for err in e.errors:
            print(f"  - {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, RuntimeError, DiagnosticError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
