import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from gafsim import cli


def run_cli(*argv):
    return cli.main(list(argv))


def write_cfg(path, **kv):
    lines = [f"{k} = {v}" for k, v in kv.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    return str(path)


def test_sample_deterministic(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert run_cli("sample", "--n", "1", "--degree", "3", "--seed", "7", "--out", str(a)) == 0
    assert run_cli("sample", "--n", "1", "--degree", "3", "--seed", "7", "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()
    payload = json.loads(a.read_text())
    assert payload["degree"] == 3
    assert len(payload["indices"]) == len(payload["values"]) == 4


def test_sample_degree_from_radius(tmp_path):
    out = tmp_path / "s.json"
    assert run_cli("sample", "--n", "1", "--radius", "1", "--eps", "1e-9", "--seed", "7", "--out", str(out)) == 0
    payload = json.loads(out.read_text())
    from gafsim import gaf

    assert payload["degree"] == gaf.choose_degree(1, 1.0, 1e-9)


def test_sample_grid(tmp_path):
    out = tmp_path / "g.json"
    assert run_cli(
        "sample", "--n", "1", "--degree", "8", "--seed", "3", "--out", str(out),
        "--grid", "5", "--grid-extent", "1.5",
    ) == 0
    payload = json.loads(out.read_text())
    assert payload["grid"]["points_per_side"] == 5
    assert len(payload["grid"]["values"]) == 25


def test_sample_flag_conflict_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        run_cli("sample", "--n", "1", "--degree", "3", "--radius", "1", "--eps", "1e-9",
                "--seed", "7", "--out", str(tmp_path / "x.json"))
    assert err.value.code == 2


def test_sample_missing_n_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        run_cli("sample", "--degree", "3", "--out", str(tmp_path / "x.json"))
    assert err.value.code == 2


def test_hole_run_outputs_and_worker_determinism(tmp_path):
    cfg = write_cfg(
        tmp_path / "h.cfg",
        n=1, radii="0.8, 1.0", trials=200, seed=42, eps="1e-6", workers=1,
    )
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert run_cli("hole", "--config", cfg, "--out", str(out1)) == 0
    assert run_cli("hole", "--config", cfg, "--out", str(out2), "--workers", "2") == 0
    assert (out1 / "hole_summary.csv").read_bytes() == (out2 / "hole_summary.csv").read_bytes()

    # manifest names every output with a valid checksum
    manifest = json.loads((out1 / "hole_manifest.json").read_text())
    assert manifest["command"] == "hole"
    assert manifest["master_seed"] == 42
    for entry in manifest["outputs"]:
        p = out1 / entry["path"]
        assert p.exists()
        assert hashlib.sha256(p.read_bytes()).hexdigest() == entry["sha256"]
        assert p.stat().st_size == entry["bytes"]

    # JSONL schema
    with open(out1 / "hole_trials.jsonl") as fh:
        for line in list(fh)[:20]:
            rec = json.loads(line)
            assert set(rec) == {"trial", "radius", "result", "seconds"}

    # summary CSV header
    with open(out1 / "hole_summary.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["radius", "estimate", "ci_lo", "ci_hi", "trials"]
    assert len(rows) == 3


def test_count_run_mean_band(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", n=1, radii="3.0", trials=200, seed=12)
    out = tmp_path / "count"
    assert run_cli("count", "--config", cfg, "--out", str(out)) == 0
    with open(out / "count_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert 0.9 <= float(rows[0]["estimate"]) <= 1.1


def test_config_errors_exit_2(tmp_path):
    assert run_cli("hole", "--config", str(tmp_path / "missing.cfg")) == 2
    bad = write_cfg(tmp_path / "bad.cfg", n=1, radii="1.0", trials=10, nosuchkey=3)
    assert run_cli("hole", "--config", bad) == 2
    incomplete = write_cfg(tmp_path / "inc.cfg", n=1)
    assert run_cli("hole", "--config", incomplete) == 2
    malformed = tmp_path / "mal.cfg"
    malformed.write_text("this is not a key value line\n")
    assert run_cli("hole", "--config", str(malformed)) == 2


def test_fit_synthetic_and_round_trip(tmp_path, capsys):
    summary = tmp_path / "synth.csv"
    radii = (0.5, 1.0, 1.5, 2.0, 2.5)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "estimate", "ci_lo", "ci_hi", "trials"])
        for r in radii:
            p = math.exp(-(r**4))
            w.writerow([r, repr(p), repr(p), repr(p), 10**6])
    plot = tmp_path / "plot.csv"
    assert run_cli("fit", "--in", str(summary), "--plot-out", str(plot)) == 0
    out = capsys.readouterr().out
    slope = float(out.split("slope = ")[1].splitlines()[0])
    assert slope == pytest.approx(4.0, abs=1e-9)

    # round trip: refitting the emitted plot data reproduces the slope
    with open(plot, newline="") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r["log_r"]) for r in rows])
    y = np.array([float(r["loglog_inv_p"]) for r in rows])
    refit = np.polyfit(x, y, 1)[0]
    assert refit == pytest.approx(slope, abs=1e-9)


def test_fit_gate_exit_3(tmp_path):
    summary = tmp_path / "short.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "estimate", "ci_lo", "ci_hi", "trials"])
        w.writerow([1.0, 0.5, 0.4, 0.6, 100])
        w.writerow([2.0, 0.0, 0.0, 0.1, 100])
    assert run_cli("fit", "--in", str(summary)) == 3


def test_fit_bad_input_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run_cli("fit", "--in", str(bad)) == 2


def test_invalid_cap_breach_exits_3(tmp_path, monkeypatch):
    from gafsim.experiments import ExperimentError

    def broken_runner(cfg, sink=None):
        raise ExperimentError("radius 1.0: 7 invalid trials out of 10 exceeds the 0.5% cap")

    monkeypatch.setitem(cli._RUNNERS, "hole", broken_runner)
    cfg = write_cfg(tmp_path / "h.cfg", n=1, radii="1.0", trials=10, seed=1)
    out = tmp_path / "run"
    assert run_cli("hole", "--config", cfg, "--out", str(out)) == 3
    diag = out / "hole_diagnostics.txt"
    assert diag.exists() and "invalid trials" in diag.read_text()


def test_invariance_cli_smoke(tmp_path):
    cfg = write_cfg(
        tmp_path / "i.cfg",
        n=1, radii="1.0", trials=150, seed=9, zeta="2+0j", s=1.0,
    )
    out = tmp_path / "inv"
    assert run_cli("invariance", "--config", cfg, "--out", str(out)) == 0
    manifest = json.loads((out / "invariance_manifest.json").read_text())
    assert manifest["diagnostics"]["control_accept"] is True
    assert manifest["diagnostics"]["corruption_accept"] is False
    with open(out / "invariance_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["radius"]) == 1.0


def test_maxgrowth_and_surface_cli_smoke(tmp_path):
    cfg = write_cfg(tmp_path / "m.cfg", n=1, radii="3.0", trials=60, seed=4)
    for name in ("maxgrowth", "surface"):
        out = tmp_path / name
        assert run_cli(name, "--config", cfg, "--out", str(out)) == 0
        with open(out / f"{name}_summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert 0.35 <= float(rows[0]["estimate"]) <= 0.65
