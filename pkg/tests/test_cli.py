import json
from pathlib import Path

import numpy as np
import pytest

from wpt import tempered_targets
from wpt.cli import EXIT_CHECK, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, config_hash, main
from wpt.tempering import RunConfig

ROOT = Path(__file__).resolve().parents[1]
EXP = ROOT / "experiments"


def small_config(tmp_path, **kw):
    spec = json.loads((EXP / "sec42_hat.json").read_text())
    spec["target"] = str(EXP / "targets" / "skew_four_mode_5d.json")
    spec.update(s=120, burn_in=60, replicates=2, chunk=50)
    spec.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(spec))
    return p


# --- exit codes -------------------------------------------------------------

def test_usage_error_exits_validation(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["run"])
    assert ei.value.code == EXIT_VALIDATION
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == EXIT_VALIDATION


def test_invalid_config_lists_every_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"driver": "nope", "s": -3, "ladder": [0.5], "bogus": 1}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    for frag in ("target", "driver", "s:", "ladder", "bogus"):
        assert frag in err
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_malformed_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) \
        == EXIT_VALIDATION


def test_runtime_failure_exit_code(tmp_path, capsys):
    # an unwritable output location is an I/O failure
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = small_config(tmp_path, replicates=1)
    assert main(["run", "--config", str(cfg), "--out", str(blocker / "sub")]) == EXIT_RUNTIME


# --- run and manifests ------------------------------------------------------

def test_run_writes_artifacts_and_manifest_round_trips(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out1 = tmp_path / "a"
    assert main(["run", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
    man = json.loads((out1 / "manifest.json").read_text())
    assert man["replicate_seeds"] == [100, 101]
    summ = json.loads((out1 / "summary.json").read_text())
    assert len(summ["replicates"]) == 2 and summ["driver"] == "HAT"
    rows = (out1 / "replicate_000" / "trace.csv").read_text().splitlines()
    assert rows[0].startswith("sweep,level,beta,x_0") and len(rows) == 1 + 120 * 6 + 1
    assert (out1 / "replicate_001" / "running_weight.csv").exists()

    out2 = tmp_path / "b"
    assert main(["run", "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == EXIT_OK
    for i in range(2):
        t1 = (out1 / f"replicate_{i:03d}" / "trace.csv").read_bytes()
        t2 = (out2 / f"replicate_{i:03d}" / "trace.csv").read_bytes()
        assert t1 == t2
    assert json.loads((out2 / "manifest.json").read_text())["config_hash"] == man["config_hash"]


def test_zero_sweeps_gives_valid_manifest(tmp_path, capsys):
    cfg = small_config(tmp_path, replicates=1)
    out = tmp_path / "z"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--s", "0"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["s"] == 0
    rows = (out / "replicate_000" / "trace.csv").read_text().splitlines()
    assert len(rows) == 2
    assert json.loads((out / "summary.json").read_text())["replicates"][0]["weight_estimate"] is None


def test_threads_env_gives_same_output(tmp_path, monkeypatch, capsys):
    cfg = small_config(tmp_path, driver="PT", temper_kind="power", replicates=3, s=60)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "seq")]) == EXIT_OK
    monkeypatch.setenv("WPT_THREADS", "3")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "par")]) == EXIT_OK
    for i in range(3):
        a = (tmp_path / "seq" / f"replicate_{i:03d}" / "trace.csv").read_bytes()
        b = (tmp_path / "par" / f"replicate_{i:03d}" / "trace.csv").read_bytes()
        assert a == b


SEMANTIC_CHANGES = [
    {"seed": 7}, {"s": 121}, {"m": 4}, {"burn_in": 61}, {"g_variant": "robust"},
    {"ladder": {"kind": "geometric", "n_levels": 8, "ratio": 0.3}}, {"kernel": {"kind": "rwm", "scale": 0.5}},
    {"init": "mode:1"}, {"region": {"coordinate": 1, "lower": -30.0, "upper": 0.0}},
    {"driver": "PT", "temper_kind": "power"}, {"replicates": 3}, {"pseudo_prior": "none"},
]


def _hash(spec):
    return config_hash(RunConfig.from_dict(spec))


def test_config_hash_tracks_semantic_fields(tmp_path):
    base = json.loads(small_config(tmp_path).read_text())
    h0 = _hash(base)
    hashes = {h0}
    for change in SEMANTIC_CHANGES:
        h = _hash({**base, **change})
        assert h != h0, change
        hashes.add(h)
    assert len(hashes) == len(SEMANTIC_CHANGES) + 1
    # presentation-only fields and spelled-out defaults leave it unchanged
    assert _hash({**base, "name": "other", "backend": "python"}) == h0
    assert _hash({**base, "kernel": {"kind": "rwm", "adapt": True}}) == h0
    assert _hash({**base, "ladder": {"kind": "explicit", "betas": (0.31 ** np.arange(8)).tolist()}}) == h0
    target_inline = json.loads((EXP / "targets" / "skew_four_mode_5d.json").read_text())
    assert _hash({**base, "target": target_inline}) == h0


# --- verify -----------------------------------------------------------------

def test_verify_all_pass(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_verify_filter_thm1c(capsys):
    assert main(["verify", "--filter", "thm1c"]) == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert lines and all("[mode-height-weights]" in ln for ln in lines)


def test_verify_unknown_filter(capsys):
    assert main(["verify", "--filter", "nonsense"]) == EXIT_VALIDATION


def test_verify_catches_mutated_power_weight(monkeypatch, capsys):
    real = tempered_targets.theoretical_power_weight

    def wrong_sign(w, Sigma, beta):
        # exponent (beta - 1)/2 instead of (1 - beta)/2 on the determinant
        w = np.asarray(w, dtype=float)
        dets = np.array([np.linalg.det(np.atleast_2d(S)) for S in Sigma])
        v = w ** beta * dets ** ((beta - 1) / 2)
        return v / v.sum()

    assert not np.allclose(wrong_sign([0.2, 0.8], [[[9.0]], [[1.0]]], 0.5),
                           real([0.2, 0.8], [[[9.0]], [[1.0]]], 0.5))
    monkeypatch.setattr(tempered_targets, "theoretical_power_weight", wrong_sign)
    assert main(["verify", "--filter", "thm1a"]) == EXIT_CHECK
    assert "FAIL [power-weights]" in capsys.readouterr().out


# --- report -----------------------------------------------------------------

def _write_summary(d: Path, name, driver, estimates):
    d.mkdir(parents=True)
    reps = [{"replicate": i, "weight_estimate": e, "swap_rates": [0.2, 0.25], "runtime": 1.0}
            for i, e in enumerate(estimates)]
    (d / "summary.json").write_text(json.dumps({"name": name, "driver": driver, "replicates": reps}))


def test_report_tables(tmp_path, capsys):
    runs = tmp_path / "runs"
    _write_summary(runs / "hat", "hat", "HAT", [0.27, 0.24, 0.26, 0.22, 0.22, 0.27, 0.23, 0.28, 0.25, 0.26])
    _write_summary(runs / "pt", "pt", "PT", [0.23, 0.36, 0.19])
    _write_summary(runs / "one", "single", "ST", [0.4])
    out = tmp_path / "tables.json"
    assert main(["report", "--runs", str(runs), "--out", str(out)]) == EXIT_OK
    tab = json.loads(out.read_text())
    hat = tab["summary"]["hat"]
    assert {"mean", "per_run_sd", "pooled_sd"} <= hat.keys()
    assert hat["pooled_sd"] == pytest.approx(hat["per_run_sd"] / np.sqrt(10))
    assert tab["summary"]["single"]["pooled_sd"] is None and "note" in tab["summary"]["single"]
    assert tab["by_driver"] == {"HAT": ["hat"], "ST": ["single"], "PT": ["pt"]}
    assert (tmp_path / "tables_series.csv").exists()


def test_report_on_real_run(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "runs" / "hat")]) == EXIT_OK
    out = tmp_path / "t.json"
    assert main(["report", "--runs", str(tmp_path / "runs"), "--out", str(out), "--stride", "5"]) == EXIT_OK
    tab = json.loads(out.read_text())
    assert len(tab["estimates"]["skew_hat"]) == 2
    series = (tmp_path / "t_series.csv").read_text().splitlines()
    assert series[0] == "name,replicate,k,weight" and len(series) > 2


def test_report_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["report", "--runs", str(tmp_path / "empty"), "--out", str(tmp_path / "t.json")]) \
        == EXIT_VALIDATION
    assert main(["report", "--runs", str(tmp_path / "missing"), "--out", str(tmp_path / "t.json")]) \
        == EXIT_VALIDATION


# --- diffusion and tune-ladder --------------------------------------------

def test_diffusion_command(tmp_path, capsys):
    cfg = {"seed": 1, "p": 0.5, "r": [2, 2], "fits": [
        {"label": "fixed", "beta_min": 0.1, "d_values": [16, 64, 256], "replicates": 20}],
        "stationary": {"d": 36, "beta_min": 0.1, "n_steps": 20000}}
    p = tmp_path / "diff.json"
    p.write_text(json.dumps(cfg))
    assert main(["diffusion", "--config", str(p), "--out", str(tmp_path / "d")]) == EXIT_OK
    fit = json.loads((tmp_path / "d" / "fit.json").read_text())
    assert set(fit["fits"]) == {"fixed"} and "slope" in fit["fits"]["fixed"]
    assert 0 < fit["stationary"]["positive_fraction"] < 1
    rows = (tmp_path / "d" / "hitting_times.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 20


def test_diffusion_config_errors(tmp_path, capsys):
    p = tmp_path / "diff.json"
    p.write_text(json.dumps({"fits": [{"d_values": [4, 9]}, {"d_values": [4, 9, 16], "replicates": 1}]}))
    assert main(["diffusion", "--config", str(p), "--out", str(tmp_path / "d")]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "fits[0]" in err and "fits[1]" in err


def test_tune_ladder_command(tmp_path, capsys):
    spec = {"target": {"dimension": 2, "components": [
        {"weight": 1.0, "kind": "gaussian", "mean": [0.0, 0.0], "cov": {"scalar": 1.0}}]},
        "driver": "PT", "m": 3, "seed": 2}
    p = tmp_path / "t.json"
    p.write_text(json.dumps(spec))
    out = tmp_path / "ladder.json"
    assert main(["tune-ladder", "--config", str(p), "--levels", "3", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["converged"] and len(doc["betas"]) == 3 and doc["betas"][0] == 1.0
    assert all(abs(r - 0.234) <= 0.05 for r in doc["rates"])


def test_console_script_version():
    import shutil
    import subprocess
    exe = shutil.which("wpt")
    if exe is None:
        pytest.skip("console script not installed")
    out = subprocess.run([exe, "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.startswith("wpt ")
