"""Command-line front end: configuration, execution, persistence.

Outputs per experiment run: a JSON Lines file of per-trial records
({trial, radius, result, seconds}), a summary CSV (radius, estimate, ci_lo,
ci_hi, trials), and a run manifest with content checksums, written
atomically at the end.  Exit codes: 0 success, 2 usage or configuration
error, 3 statistical-quality failure (invalid-trial cap, fit gate).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, experiments, gaf
from .coeff import Seed, sample_coefficients
from .experiments import ExperimentConfig, ExperimentError, FitGateError


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_summary(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["radius", "estimate", "ci_lo", "ci_hi", "trials"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, path)


class _JsonlSink:
    def __init__(self, path: Path):
        self.path = path
        self._fh = open(path, "w")

    def __call__(self, records: list[dict]) -> None:
        for rec in records:
            self._fh.write(json.dumps(rec, sort_keys=True))
            self._fh.write("\n")

    def close(self) -> None:
        self._fh.close()


def _parse_config_file(path: str) -> dict:
    raw: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()
    return raw


class ConfigError(ValueError):
    pass


_CONFIG_PARSERS = {
    "n": int,
    "radii": lambda v: tuple(float(x) for x in v.replace(",", " ").split()),
    "trials": int,
    "seed": int,
    "eps": float,
    "lines": int,
    "workers": int,
    "out": str,
    "h": float,
    "m": int,
    "zeta": complex,
    "s": float,
}


def _build_config(path: str, args) -> ExperimentConfig:
    raw = _parse_config_file(path)
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} (expected one of {sorted(known)})")
        try:
            kwargs[key] = _CONFIG_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
    if args.trials is not None:
        kwargs["trials"] = args.trials
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.workers is not None:
        kwargs["workers"] = args.workers
    if args.out is not None:
        kwargs["out"] = args.out
    missing = {"n", "radii", "trials"} - set(kwargs)
    if missing:
        raise ConfigError(f"config is missing required keys: {sorted(missing)}")
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _normal_ci(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, mean
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(len(values))
    return mean - half, mean + half


def _summary_rows(name: str, cfg: ExperimentConfig, result) -> list[tuple]:
    if name == "hole":
        return [
            (p.radius, p.p_hat, p.ci_lo, p.ci_hi, p.trials) for p in result.points
        ]
    if name == "count":
        rows = []
        for p in result.points:
            scaled = p.counts[~np.isnan(p.counts)] / (p.radius**2)
            lo, hi = _normal_ci(scaled)
            rows.append((p.radius, float(scaled.mean()), lo, hi, cfg.trials))
        return rows
    if name == "maxgrowth":
        rows = []
        for p in result.points:
            lo, hi = _normal_ci(p.ratios)
            rows.append((p.radius, p.mean, lo, hi, cfg.trials))
        return rows
    if name == "surface":
        rows = []
        for p in result.points:
            lo, hi = _normal_ci(p.mean_ratios)
            rows.append((p.radius, p.mean, lo, hi, cfg.trials))
        return rows
    if name == "invariance":
        # estimate = KS p-value; both interval columns carry the KS statistic.
        return [
            (
                result.s,
                result.main.pvalue,
                result.main.statistic,
                result.main.statistic,
                cfg.trials,
            )
        ]
    raise AssertionError(name)


def _diagnostics(name: str, result) -> dict:
    if name == "hole":
        return {str(p.radius): {"invalid": p.invalid} for p in result.points}
    if name == "count":
        return {str(p.radius): {"invalid": p.invalid} for p in result.points}
    if name == "invariance":
        return {
            "control_accept": result.control.accept,
            "corruption_accept": result.corruption.accept,
        }
    if name == "maxgrowth":
        return {str(p.radius): {"m": p.m, "outlier_rate": p.outlier_rate} for p in result.points}
    if name == "surface":
        return {
            str(p.radius): {"abslog_violation_rate": p.abslog_violation_rate}
            for p in result.points
        }
    return {}


_RUNNERS = {
    "hole": experiments.run_hole_curve,
    "count": experiments.run_concentration,
    "maxgrowth": experiments.run_max_growth,
    "invariance": experiments.run_invariance,
    "surface": experiments.run_surface_checks,
}


def _cmd_experiment(name: str, args) -> int:
    try:
        cfg = _build_config(args.config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(cfg.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    jsonl_path = outdir / f"{name}_trials.jsonl"
    summary_path = outdir / f"{name}_summary.csv"
    manifest_path = outdir / f"{name}_manifest.json"
    started = _utcnow()
    sink = _JsonlSink(jsonl_path)
    try:
        result = _RUNNERS[name](cfg, sink=sink)
    except ExperimentError as exc:
        sink.close()
        diag_path = outdir / f"{name}_diagnostics.txt"
        diag_path.write_text(f"{exc}\n")
        print(f"error: {exc} (diagnostics in {diag_path})", file=sys.stderr)
        return 3
    finally:
        sink.close()
    _write_summary(summary_path, _summary_rows(name, cfg, result))
    outputs = []
    for path in (jsonl_path, summary_path):
        outputs.append(
            {"path": path.name, "sha256": _sha256(path), "bytes": path.stat().st_size}
        )
    cfg_echo = asdict(cfg)
    cfg_echo["zeta"] = str(cfg_echo["zeta"])
    _write_manifest(
        manifest_path,
        {
            "tool": "gafsim",
            "version": __version__,
            "command": name,
            "config": cfg_echo,
            "master_seed": cfg.seed,
            "started": started,
            "finished": _utcnow(),
            "outputs": outputs,
            "diagnostics": _diagnostics(name, result),
        },
    )
    print(f"{name}: wrote {summary_path}")
    return 0


def _cmd_sample(args) -> int:
    if args.degree is not None and (args.radius is not None or args.eps is not None):
        raise _USAGE("--degree conflicts with --radius/--eps")
    if args.degree is None:
        if args.radius is None or args.eps is None:
            raise _USAGE("provide either --degree or both --radius and --eps")
        degree = gaf.choose_degree(args.n, args.radius, args.eps)
    else:
        degree = args.degree
    seed = Seed(args.seed)
    table = sample_coefficients(seed, args.n, degree)
    payload = {
        "n": args.n,
        "degree": degree,
        "seed": args.seed,
        "indices": [list(j) for j in table.indices],
        "values": [[v.real, v.imag] for v in table.values],
    }
    if args.grid:
        sample = gaf.realize(seed, args.n, degree)
        extent = args.grid_extent
        side = np.linspace(-extent, extent, args.grid)
        pts = np.zeros((args.grid * args.grid, args.n), dtype=np.complex128)
        grid_re, grid_im = np.meshgrid(side, side, indexing="ij")
        pts[:, 0] = (grid_re + 1j * grid_im).ravel()
        vals = gaf.evaluate_at(sample, pts)
        payload["grid"] = {
            "axis": 0,
            "extent": extent,
            "points_per_side": args.grid,
            "values": [[v.real, v.imag] for v in vals],
        }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    Path(args.out).write_text(text + "\n")
    print(f"sample: wrote {args.out} (degree {degree}, {len(table)} coefficients)")
    return 0


def _read_summary_curve(path: str) -> experiments.HoleCurve:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"radius", "estimate", "ci_lo", "ci_hi", "trials"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            p_hat = float(row["estimate"])
            trials = int(row["trials"])
            points.append(
                experiments.HolePoint(
                    radius=float(row["radius"]),
                    trials=trials,
                    holes=int(round(p_hat * trials)),
                    invalid=0,
                    p_hat=p_hat,
                    ci_lo=float(row["ci_lo"]),
                    ci_hi=float(row["ci_hi"]),
                )
            )
    return experiments.HoleCurve(points=tuple(points))


def _cmd_fit(args) -> int:
    try:
        curve = _read_summary_curve(args.infile)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        fit = experiments.fit_scaling_exponent(curve)
    except FitGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"slope = {fit.slope!r}")
    print(f"intercept = {fit.intercept!r}")
    for r, resid in zip(fit.radii, fit.residuals):
        print(f"residual r={r!r}: {resid!r}")
    plot_path = Path(args.plot_out or (args.infile + ".fitdata.csv"))
    with open(plot_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_r", "loglog_inv_p", "fit"])
        for r, resid in zip(fit.radii, fit.residuals):
            x = math.log(r)
            y = fit.slope * x + fit.intercept + resid
            writer.writerow([_fmt(x), _fmt(y), _fmt(fit.slope * x + fit.intercept)])
    print(f"fit: wrote {plot_path}")
    return 0


class _USAGE(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gafsim",
        description="Zero statistics of Gaussian analytic functions: sampling, "
        "hole probabilities, counting concentration, growth checks.",
    )
    parser.add_argument("--version", action="version", version=f"gafsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="dump one coefficient table (and optional grid)")
    sp.add_argument("--n", type=int, required=True, help="complex dimension")
    sp.add_argument("--degree", type=int, default=None, help="degree cap J")
    sp.add_argument("--radius", type=float, default=None, help="target radius for choose_degree")
    sp.add_argument("--eps", type=float, default=None, help="target tail bound for choose_degree")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--grid", type=int, default=0, help="evaluation grid points per side")
    sp.add_argument("--grid-extent", type=float, default=2.0)

    for name, text in (
        ("hole", "hole-probability curve"),
        ("count", "counting-function concentration"),
        ("maxgrowth", "growth rate of the sphere max"),
        ("invariance", "translation invariance of the shifted max"),
        ("surface", "spherical means of log|psi|"),
    ):
        ep = sub.add_parser(name, help=text)
        ep.add_argument("--config", required=True, help="flat key = value config file")
        ep.add_argument("--trials", type=int, default=None)
        ep.add_argument("--seed", type=int, default=None)
        ep.add_argument("--workers", type=int, default=None)
        ep.add_argument("--out", default=None)

    fp = sub.add_parser("fit", help="fit the scaling exponent of a hole summary")
    fp.add_argument("--in", dest="infile", required=True)
    fp.add_argument("--plot-out", default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_experiment(args.command, args)
    except _USAGE as exc:
        parser.error(str(exc))  # exits 2
        return 2


if __name__ == "__main__":
    sys.exit(main())
