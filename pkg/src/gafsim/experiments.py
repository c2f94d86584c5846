"""Monte Carlo drivers: hole curves, scaling fits, concentration, max growth,
translation invariance, and surface-integral checks.

Every driver is a pure function of (config, master seed): trials are chunked
at a fixed size independent of the worker count, each trial derives its own
seed stream, and aggregation reduces ordered per-trial arrays, so numeric
outputs are bit-identical for any parallelism.  Workers return compact
arrays; per-trial records (trial, radius, result, seconds) are handed to an
optional sink in trial order, and the `seconds` field is the only
non-reproducible entry.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as _beta
from scipy.stats import ks_2samp

from . import gaf, geometry, zeros
from .coeff import Seed

TRIAL_CHUNK = 256
DEVIATION_DELTAS = (0.1, 0.2)
MAX_INVALID_FRACTION = 0.005
GROWTH_FLAG_DELTA = 0.1
KS_LEVEL = 0.01


class ExperimentError(RuntimeError):
    """A run violated one of its statistical-quality contracts."""


class FitGateError(ExperimentError):
    """Too few radii passed the fit quality gate."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    n: int
    radii: tuple[float, ...]
    trials: int
    seed: int = 1
    eps: float = 1e-6
    lines: int = 16
    workers: int = 1
    out: str | None = None
    h: float = 0.05
    m: int | None = None
    zeta: complex = 2.0 + 0.0j
    s: float = 1.0

    def __post_init__(self) -> None:
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if not radii or any(r <= 0 for r in radii):
            raise ValueError("radii must be positive")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _quad_m(cfg: ExperimentConfig) -> int:
    return cfg.m if cfg.m is not None else (64 if cfg.n == 1 else 8)


def _map_chunks(worker, base: tuple, trials: int, workers: int) -> list:
    tasks = [base + (s, min(s + TRIAL_CHUNK, trials)) for s in range(0, trials, TRIAL_CHUNK)]
    if workers > 1 and len(tasks) > 1:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with ctx.Pool(processes=workers) as pool:
            return pool.map(worker, tasks, chunksize=1)
    return [worker(t) for t in tasks]


def _emit(sink, records: list[dict]) -> None:
    if sink is not None and records:
        sink(records)


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval (valid at k = 0 and k = n)."""
    if n <= 0:
        return 0.0, 1.0
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(_beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(_beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


# ---------------------------------------------------------------------------
# hole curve


@dataclass(frozen=True)
class HolePoint:
    radius: float
    trials: int
    holes: int
    invalid: int
    p_hat: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class HoleCurve:
    points: tuple[HolePoint, ...]

    @classmethod
    def from_probabilities(
        cls, radii: tuple[float, ...], probs: tuple[float, ...], trials: int
    ) -> "HoleCurve":
        """Synthetic curve with zero-width intervals (fit tests and round trips)."""
        pts = tuple(
            HolePoint(
                radius=float(r),
                trials=trials,
                holes=int(round(p * trials)),
                invalid=0,
                p_hat=float(p),
                ci_lo=float(p),
                ci_hi=float(p),
            )
            for r, p in zip(radii, probs)
        )
        return cls(points=pts)


def _hole_chunk(task):
    master, n, J, radii, lines, grid, start, stop = task
    codes = np.empty((stop - start, len(radii)), dtype=np.int8)
    secs = np.zeros((stop - start, len(radii)), dtype=np.float64)
    for i, t in enumerate(range(start, stop)):
        sample = gaf.realize(Seed(master).derive("hole", t), n, J)
        witness_r = math.inf
        for k, r in enumerate(radii):
            t0 = time.perf_counter()
            if witness_r < r:
                codes[i, k] = 0
            else:
                try:
                    v = zeros.hole_test(sample, r, L=lines, grid=grid)
                except zeros.RetriesExhaustedError:
                    codes[i, k] = -1
                else:
                    if v.verdict == "hole":
                        codes[i, k] = 1
                    else:
                        codes[i, k] = 0
                        witness_r = min(witness_r, float(np.linalg.norm(v.witness)))
            secs[i, k] = time.perf_counter() - t0
    return codes, secs


def run_hole_curve(cfg: ExperimentConfig, sink=None) -> HoleCurve:
    """Estimate the hole probability at each radius of the config.

    One coefficient sample per trial (shared across radii, which preserves the
    inclusion of hole events); invalid trials are reported per radius and the
    run fails loudly if they exceed 0.5% anywhere.
    """
    J = gaf.choose_degree(cfg.n, max(cfg.radii), cfg.eps)
    base = (cfg.seed, cfg.n, J, cfg.radii, cfg.lines, 256)
    parts = _map_chunks(_hole_chunk, base, cfg.trials, cfg.workers)
    codes = np.concatenate([p[0] for p in parts], axis=0)
    secs = np.concatenate([p[1] for p in parts], axis=0)

    if sink is not None:
        names = {1: "hole", 0: "not_hole", -1: "invalid"}
        for t in range(0, cfg.trials, TRIAL_CHUNK):
            block = []
            for i in range(t, min(t + TRIAL_CHUNK, cfg.trials)):
                for k, r in enumerate(cfg.radii):
                    block.append(
                        {
                            "trial": i,
                            "radius": r,
                            "result": names[int(codes[i, k])],
                            "seconds": float(secs[i, k]),
                        }
                    )
            _emit(sink, block)

    points = []
    for k, r in enumerate(cfg.radii):
        col = codes[:, k]
        holes = int(np.sum(col == 1))
        invalid = int(np.sum(col == -1))
        if invalid > MAX_INVALID_FRACTION * cfg.trials:
            raise ExperimentError(
                f"radius {r}: {invalid} invalid trials out of {cfg.trials} "
                f"exceeds the {MAX_INVALID_FRACTION:.1%} cap"
            )
        valid = cfg.trials - invalid
        p_hat = holes / valid if valid else math.nan
        lo, hi = clopper_pearson(holes, valid)
        points.append(HolePoint(r, cfg.trials, holes, invalid, p_hat, lo, hi))
    return HoleCurve(points=tuple(points))


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residuals: tuple[float, ...]
    radii: tuple[float, ...]


def fit_scaling_exponent(curve: HoleCurve) -> FitResult:
    """OLS of log(-log p) against log r over gated points (no weighting).

    Gate: 0 < p < 1 and interval width below p.  Fewer than four gated radii
    is a refusal carrying the gate report.
    """
    gated = [
        pt
        for pt in curve.points
        if 0.0 < pt.p_hat < 1.0 and (pt.ci_hi - pt.ci_lo) < pt.p_hat
    ]
    if len(gated) < 4:
        report = "; ".join(
            f"r={pt.radius}: p={pt.p_hat:.3g} ci_width={pt.ci_hi - pt.ci_lo:.3g}"
            for pt in curve.points
        )
        raise FitGateError(f"only {len(gated)} radii pass the quality gate ({report})")
    x = np.log([pt.radius for pt in gated])
    y = np.log([-math.log(pt.p_hat) for pt in gated])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        residuals=tuple(float(v) for v in resid),
        radii=tuple(pt.radius for pt in gated),
    )


# ---------------------------------------------------------------------------
# counting concentration


@dataclass(frozen=True)
class ConcentrationPoint:
    radius: float
    counts: np.ndarray  # per-trial geometric counts, nan where invalid
    mean: float
    variance: float
    tail_rates: dict[float, float]
    invalid: int


@dataclass(frozen=True)
class ConcentrationResult:
    points: tuple[ConcentrationPoint, ...]


def _concentration_chunk(task):
    master, n, J, radii, h, m, start, stop = task
    nus = np.empty((stop - start, len(radii)), dtype=np.float64)
    secs = np.zeros_like(nus)
    poly = rng = None
    for i, t in enumerate(range(start, stop)):
        sample = gaf.realize(Seed(master).derive("count", t), n, J)
        if n == 1:
            poly = zeros.gaf_polynomial(sample)
            rng = zeros._aux_rng(sample, "retry")
        for k, r in enumerate(radii):
            t0 = time.perf_counter()
            try:
                if n == 1:
                    count, _c, _r = zeros.count_zeros_disk_robust(poly, r, rng)
                    nus[i, k] = count
                else:
                    nus[i, k] = zeros.counting_from_jensen(sample, r, h=h, m=m).count
            except (zeros.RetriesExhaustedError, geometry.SingularIntegrandError):
                nus[i, k] = math.nan
            secs[i, k] = time.perf_counter() - t0
    return nus, secs


def run_concentration(cfg: ExperimentConfig, sink=None) -> ConcentrationResult:
    """Per-radius distribution of the counting function, with deviation tails.

    n = 1 uses exact winding counts; n >= 2 the spherical-mean estimator.
    Reports the empirical rate of |half_count - r^2/2| >= delta r^2 for
    delta in DEVIATION_DELTAS.
    """
    margin = math.exp(cfg.h) if cfg.n >= 2 else 1.0
    J = gaf.choose_degree(cfg.n, max(cfg.radii) * margin, cfg.eps)
    base = (cfg.seed, cfg.n, J, cfg.radii, cfg.h, _quad_m(cfg))
    parts = _map_chunks(_concentration_chunk, base, cfg.trials, cfg.workers)
    nus = np.concatenate([p[0] for p in parts], axis=0)
    secs = np.concatenate([p[1] for p in parts], axis=0)

    if sink is not None:
        for t in range(0, cfg.trials, TRIAL_CHUNK):
            block = []
            for i in range(t, min(t + TRIAL_CHUNK, cfg.trials)):
                for k, r in enumerate(cfg.radii):
                    block.append(
                        {
                            "trial": i,
                            "radius": r,
                            "result": None if math.isnan(nus[i, k]) else float(nus[i, k]),
                            "seconds": float(secs[i, k]),
                        }
                    )
            _emit(sink, block)

    points = []
    for k, r in enumerate(cfg.radii):
        col = nus[:, k]
        invalid = int(np.sum(np.isnan(col)))
        if invalid > MAX_INVALID_FRACTION * cfg.trials:
            raise ExperimentError(
                f"radius {r}: {invalid} invalid trials exceeds the cap"
            )
        good = col[~np.isnan(col)]
        tails = {
            d: float(np.mean(np.abs(good / 2.0 - r * r / 2.0) >= d * r * r))
            for d in DEVIATION_DELTAS
        }
        points.append(
            ConcentrationPoint(
                radius=r,
                counts=col,
                mean=float(good.mean()),
                variance=float(good.var(ddof=1)) if len(good) > 1 else 0.0,
                tail_rates=tails,
                invalid=invalid,
            )
        )
    return ConcentrationResult(points=tuple(points))


# ---------------------------------------------------------------------------
# max growth


@dataclass(frozen=True)
class MaxStat:
    """Shifted maximum over one sphere: max of log|psi(z)| - |z|^2/2."""

    radius: float
    center: np.ndarray
    value: float


def max_stat(sample: gaf.GafSample, center: np.ndarray, s: float, nodes: np.ndarray) -> MaxStat:
    """Shifted max over the given sphere nodes translated to the center."""
    pts = nodes + np.asarray(center, dtype=np.complex128)[None, :]
    vals = gaf.log_abs_at(sample, pts) - 0.5 * (np.abs(pts) ** 2).sum(axis=1)
    return MaxStat(radius=s, center=np.asarray(center), value=float(vals.max()))


@dataclass(frozen=True)
class MaxGrowthPoint:
    radius: float
    ratios: np.ndarray  # (log max |psi|) / r^2 per trial
    mean: float
    std: float
    outlier_rate: float  # |ratio - 1/2| >= GROWTH_FLAG_DELTA
    m: int


@dataclass(frozen=True)
class MaxGrowthResult:
    points: tuple[MaxGrowthPoint, ...]


def _node_max(sample, nodes_c):
    return float(gaf.log_abs_at(sample, nodes_c).max())


def _calibrate_growth_m(master: int, n: int, J: int, r: float, pilots: int) -> int:
    # The node max is a lower bound for the sphere max; m is grown until the
    # refinement moves it by less than 0.01 r^2 on every pilot sample.
    d = 2 * n
    for m in (16, 32, 64, 128):
        part = geometry.cached_partition(d, m, r)
        fine = geometry.cached_partition(d, 2 * m, r)
        nodes = geometry.real_to_complex(part.representatives)
        nodes_f = geometry.real_to_complex(fine.representatives)
        worst = 0.0
        for t in range(pilots):
            sample = gaf.realize(Seed(master).derive("maxgrowth", t), n, J)
            worst = max(worst, abs(_node_max(sample, nodes_f) - _node_max(sample, nodes)))
        if worst < 0.01 * r * r:
            return m
    return 256


def _maxgrowth_chunk(task):
    master, n, J, radii, ms, start, stop = task
    out = np.empty((stop - start, len(radii)), dtype=np.float64)
    secs = np.zeros_like(out)
    node_sets = [
        geometry.real_to_complex(geometry.cached_partition(2 * n, m, r).representatives)
        for m, r in zip(ms, radii)
    ]
    for i, t in enumerate(range(start, stop)):
        sample = gaf.realize(Seed(master).derive("maxgrowth", t), n, J)
        for k, r in enumerate(radii):
            t0 = time.perf_counter()
            out[i, k] = _node_max(sample, node_sets[k]) / (r * r)
            secs[i, k] = time.perf_counter() - t0
    return out, secs


def run_max_growth(cfg: ExperimentConfig, sink=None) -> MaxGrowthResult:
    """Distribution of (log max |psi| on the sphere) / r^2 per radius.

    The max is taken over a fixed quadrature node set per radius (a lower
    bound of the true sphere max); the node count is calibrated on pilot
    samples until an m -> 2m refinement moves it by under 0.01 r^2.
    """
    J = gaf.choose_degree(cfg.n, max(cfg.radii), cfg.eps)
    pilots = min(8, cfg.trials)
    ms = tuple(
        _calibrate_growth_m(cfg.seed, cfg.n, J, r, pilots) if cfg.m is None else cfg.m
        for r in cfg.radii
    )
    base = (cfg.seed, cfg.n, J, cfg.radii, ms)
    parts = _map_chunks(_maxgrowth_chunk, base, cfg.trials, cfg.workers)
    ratios = np.concatenate([p[0] for p in parts], axis=0)
    secs = np.concatenate([p[1] for p in parts], axis=0)

    if sink is not None:
        for t in range(0, cfg.trials, TRIAL_CHUNK):
            block = []
            for i in range(t, min(t + TRIAL_CHUNK, cfg.trials)):
                for k, r in enumerate(cfg.radii):
                    block.append(
                        {
                            "trial": i,
                            "radius": r,
                            "result": float(ratios[i, k]),
                            "seconds": float(secs[i, k]),
                        }
                    )
            _emit(sink, block)

    points = []
    for k, r in enumerate(cfg.radii):
        col = ratios[:, k]
        points.append(
            MaxGrowthPoint(
                radius=r,
                ratios=col,
                mean=float(col.mean()),
                std=float(col.std(ddof=1)) if len(col) > 1 else 0.0,
                outlier_rate=float(np.mean(np.abs(col - 0.5) >= GROWTH_FLAG_DELTA)),
                m=ms[k],
            )
        )
    return MaxGrowthResult(points=tuple(points))


# ---------------------------------------------------------------------------
# translation invariance


@dataclass(frozen=True)
class KSDecision:
    statistic: float
    pvalue: float
    accept: bool  # accept equality in distribution at KS_LEVEL


@dataclass(frozen=True)
class InvarianceResult:
    zeta: np.ndarray
    s: float
    main: KSDecision
    control: KSDecision  # same-distribution calibration, must accept
    corruption: KSDecision  # shift removed from group B, must reject
    group_a: np.ndarray
    group_b: np.ndarray


def _invariance_chunk(task):
    master, n, J, s, m, center, label, start, stop = task
    center = np.asarray(center, dtype=np.complex128)
    nodes = geometry.real_to_complex(
        geometry.cached_partition(2 * n, m, s).representatives
    )
    pts = nodes + center[None, :]
    half_sq = 0.5 * (np.abs(pts) ** 2).sum(axis=1)
    shifted = np.empty(stop - start, dtype=np.float64)
    unshifted = np.empty_like(shifted)
    secs = np.zeros_like(shifted)
    for i, t in enumerate(range(start, stop)):
        t0 = time.perf_counter()
        sample = gaf.realize(Seed(master).derive(label, t), n, J)
        la = gaf.log_abs_at(sample, pts)
        shifted[i] = float((la - half_sq).max())
        unshifted[i] = float(la.max())
        secs[i] = time.perf_counter() - t0
    return shifted, unshifted, secs


def _ks(a: np.ndarray, b: np.ndarray) -> KSDecision:
    res = ks_2samp(a, b)
    return KSDecision(
        statistic=float(res.statistic),
        pvalue=float(res.pvalue),
        accept=bool(res.pvalue > KS_LEVEL),
    )


def run_invariance(
    cfg: ExperimentConfig,
    zeta: np.ndarray | complex | None = None,
    s: float | None = None,
    sink=None,
) -> InvarianceResult:
    """Two-sample KS test of the shifted max at center 0 versus center zeta.

    Group A and group B use independent seed streams; equality in
    distribution is the expected outcome.  A same-distribution control (two
    independent center-0 groups) must accept, and a corruption control
    (group B with the -|z|^2/2 shift removed) must reject.
    """
    n = cfg.n
    if zeta is None:
        zeta = cfg.zeta
    if np.isscalar(zeta):
        zvec = np.zeros(n, dtype=np.complex128)
        zvec[0] = zeta
    else:
        zvec = np.asarray(zeta, dtype=np.complex128).reshape(n)
    s = float(cfg.s if s is None else s)
    J = gaf.choose_degree(n, float(np.linalg.norm(zvec)) + s, cfg.eps)
    m = _quad_m(cfg)
    zero = np.zeros(n, dtype=np.complex128)

    groups = {}
    seconds = {}
    for label, center in (
        ("invariance/A", zero),
        ("invariance/B", zvec),
        ("invariance/A2", zero),
    ):
        base = (cfg.seed, n, J, s, m, tuple(center.tolist()), label)
        parts = _map_chunks(_invariance_chunk, base, cfg.trials, cfg.workers)
        groups[label] = (
            np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
        )
        seconds[label] = np.concatenate([p[2] for p in parts])

    if sink is not None:
        offset = 0
        for label in ("invariance/A", "invariance/B", "invariance/A2"):
            shifted = groups[label][0]
            block = [
                {
                    "trial": offset + i,
                    "radius": s,
                    "result": float(shifted[i]),
                    "seconds": float(seconds[label][i]),
                }
                for i in range(cfg.trials)
            ]
            _emit(sink, block)
            offset += cfg.trials

    a_shift = groups["invariance/A"][0]
    b_shift, b_plain = groups["invariance/B"]
    a2_shift = groups["invariance/A2"][0]
    return InvarianceResult(
        zeta=zvec,
        s=s,
        main=_ks(a_shift, b_shift),
        control=_ks(a_shift, a2_shift),
        corruption=_ks(a_shift, b_plain),
        group_a=a_shift,
        group_b=b_shift,
    )


# ---------------------------------------------------------------------------
# surface-integral checks


def abslog_bound_coefficient(n: int) -> float:
    """Coefficient of r^2 bounding the |log|psi|| spherical mean: 3^(2n) + 1."""
    return 3.0 ** (2 * n) + 1.0


@dataclass(frozen=True)
class SurfacePoint:
    radius: float
    mean_ratios: np.ndarray  # A(r) / r^2 per trial
    abs_ratios: np.ndarray  # |log| integral / r^2 per trial
    mean: float
    std: float
    abslog_violation_rate: float  # abs integral above (3^(2n)+1) r^2
    low_band_rate: float  # A/r^2 <= 1/2 - GROWTH_FLAG_DELTA


@dataclass(frozen=True)
class SurfaceResult:
    points: tuple[SurfacePoint, ...]


def _surface_chunk(task):
    master, n, J, radii, m, start, stop = task
    a_vals = np.empty((stop - start, len(radii)), dtype=np.float64)
    abs_vals = np.empty_like(a_vals)
    secs = np.zeros_like(a_vals)
    parts_by_r = {r: geometry.cached_partition(2 * n, m, r) for r in radii}
    for i, t in enumerate(range(start, stop)):
        sample = gaf.realize(Seed(master).derive("surface", t), n, J)
        for k, r in enumerate(radii):
            t0 = time.perf_counter()
            res = zeros.sphere_log_integral(sample, r, parts_by_r[r])
            a_vals[i, k] = res.value
            abs_vals[i, k] = res.abs_value
            secs[i, k] = time.perf_counter() - t0
    return a_vals, abs_vals, secs


def run_surface_checks(cfg: ExperimentConfig, sink=None) -> SurfaceResult:
    """Per-radius distributions of A(r)/r^2 and the |log| mean, with the
    coefficient bound violation rate."""
    J = gaf.choose_degree(cfg.n, max(cfg.radii), cfg.eps)
    base = (cfg.seed, cfg.n, J, cfg.radii, _quad_m(cfg))
    parts = _map_chunks(_surface_chunk, base, cfg.trials, cfg.workers)
    a_vals = np.concatenate([p[0] for p in parts], axis=0)
    abs_vals = np.concatenate([p[1] for p in parts], axis=0)
    secs = np.concatenate([p[2] for p in parts], axis=0)

    if sink is not None:
        for t in range(0, cfg.trials, TRIAL_CHUNK):
            block = []
            for i in range(t, min(t + TRIAL_CHUNK, cfg.trials)):
                for k, r in enumerate(cfg.radii):
                    block.append(
                        {
                            "trial": i,
                            "radius": r,
                            "result": float(a_vals[i, k]),
                            "seconds": float(secs[i, k]),
                        }
                    )
            _emit(sink, block)

    bound_coef = abslog_bound_coefficient(cfg.n)
    points = []
    for k, r in enumerate(cfg.radii):
        a_ratio = a_vals[:, k] / (r * r)
        abs_ratio = abs_vals[:, k] / (r * r)
        points.append(
            SurfacePoint(
                radius=r,
                mean_ratios=a_ratio,
                abs_ratios=abs_ratio,
                mean=float(a_ratio.mean()),
                std=float(a_ratio.std(ddof=1)) if len(a_ratio) > 1 else 0.0,
                abslog_violation_rate=float(np.mean(abs_ratio > bound_coef)),
                low_band_rate=float(np.mean(a_ratio <= 0.5 - GROWTH_FLAG_DELTA)),
            )
        )
    return SurfaceResult(points=tuple(points))
