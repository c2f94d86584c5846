"""Truncated Gaussian analytic fields: evaluation, line restriction, tail control.

A realization is psi(z) = sum over |j| <= J of w_j z^j / sqrt(j!), with w_j
the standard complex Gaussian coefficients from `coeff`.  Evaluation runs
grade by grade in the canonical index order with compensated summation, so
results are reproducible bit for bit regardless of worker count.  Powers are
accumulated per coordinate as z_k^t / sqrt(t!) so no intermediate overflows
before the sum itself would (the full sum is O(exp(|z|^2/2))); the log
pathway additionally folds exp(-|z_k|^2/2) into each coordinate, which keeps
log|psi| finite for |z|^2 up to roughly twice the float64 exponent range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .coeff import (
    CapacityError,
    CoefficientTable,
    Seed,
    count_indices,
    enumerate_indices,
    gaussian_stream,
)

_EVAL_CHUNK = 1024

# Grade threshold 2*e*n*r^2: below it the tail majorant's ratio is not < 1.
TAIL_GRADE_FACTOR = 2.0 * math.e


class DegreeTooSmallError(ValueError):
    """Degree cap below the validity threshold of the tail majorant."""


@dataclass(frozen=True, eq=False)
class GafSample:
    """One truncated realization: coefficients plus precomputed index data.

    `scales[k]` is 1/sqrt(j!) for `indices[k]` (log-factorial accumulated, so
    it stays finite for degree caps in the hundreds).  Immutable; safe for
    concurrent read-only evaluation.
    """

    n: int
    J: int
    coeffs: CoefficientTable
    seed: Seed
    scales: np.ndarray
    index_matrix: np.ndarray
    grade_starts: np.ndarray

    def __post_init__(self) -> None:
        if self.coeffs.n != self.n or self.coeffs.J != self.J:
            raise ValueError("coefficient table does not match sample shape")


@lru_cache(maxsize=32)
def _index_plan(n: int, J: int):
    # Shared per-(n, J) evaluation tables; samples differ only in values.
    indices = tuple(enumerate_indices(n, J))
    matrix = np.array(indices, dtype=np.int64).reshape(len(indices), n)
    grade_starts = np.searchsorted(matrix.sum(axis=1), np.arange(J + 1)).astype(np.int64)
    scales = np.exp(-0.5 * gammaln(matrix + 1.0).sum(axis=1))
    matrix.setflags(write=False)
    grade_starts.setflags(write=False)
    scales.setflags(write=False)
    return indices, matrix, grade_starts, scales


def _assemble(values: np.ndarray, n: int, J: int, seed: Seed) -> GafSample:
    indices, matrix, grade_starts, scales = _index_plan(n, J)
    coeffs = CoefficientTable(n=n, J=J, indices=indices, values=values)
    return GafSample(
        n=n,
        J=J,
        coeffs=coeffs,
        seed=seed,
        scales=scales,
        index_matrix=matrix,
        grade_starts=grade_starts,
    )


def realize(seed: Seed, n: int, J: int) -> GafSample:
    """Sample coefficients and precompute evaluation tables."""
    count = count_indices(n, J)
    return _assemble(gaussian_stream(seed, count), n, J, seed)


def from_values(values: np.ndarray, n: int, J: int, seed: Seed | None = None) -> GafSample:
    """Sample with prescribed coefficient values (controls and tests)."""
    values = np.asarray(values, dtype=np.complex128)
    expected = count_indices(n, J)
    if values.shape != (expected,):
        raise ValueError(f"expected {expected} values, got {values.shape}")
    return _assemble(values, n, J, seed if seed is not None else Seed(0))


def _as_points(z, n: int) -> np.ndarray:
    pts = np.asarray(z, dtype=np.complex128)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    if pts.ndim == 1:
        if n == 1:
            pts = pts.reshape(-1, 1)
        elif pts.shape == (n,):
            pts = pts.reshape(1, n)
        else:
            raise ValueError(f"points of dimension {n} expected, got shape {pts.shape}")
    if pts.ndim != 2 or pts.shape[1] != n:
        raise ValueError(f"points of dimension {n} expected, got shape {pts.shape}")
    return pts


def _scaled_powers(pts: np.ndarray, J: int, shift: bool) -> np.ndarray:
    # pow[c, p, t] = z_c^t / sqrt(t!) at point p, times exp(-|z_c|^2/2) when
    # shifted.  Recurrence in t keeps every entry bounded.
    k, n = pts.shape
    pows = np.empty((n, k, J + 1), dtype=np.complex128)
    if shift:
        pows[:, :, 0] = np.exp(-0.5 * np.abs(pts.T) ** 2)
    else:
        pows[:, :, 0] = 1.0
    zt = pts.T
    for t in range(1, J + 1):
        pows[:, :, t] = pows[:, :, t - 1] * zt / math.sqrt(t)
    return pows


def _accumulate(sample: GafSample, pts: np.ndarray, shift: bool) -> np.ndarray:
    # Grade-major Kahan summation, vectorized over points.
    values = sample.coeffs.values
    idx = sample.index_matrix
    starts = sample.grade_starts
    k = pts.shape[0]
    # overflow to inf/nan is the documented outcome for the unshifted path at
    # extreme |z|; callers use the log pathway there
    with np.errstate(over="ignore", invalid="ignore"):
        pows = _scaled_powers(pts, sample.J, shift)
        acc = np.zeros(k, dtype=np.complex128)
        comp = np.zeros(k, dtype=np.complex128)
        bounds = list(starts) + [len(values)]
        for g in range(sample.J + 1):
            s, e = bounds[g], bounds[g + 1]
            mono = pows[0][:, idx[s:e, 0]]
            for c in range(1, sample.n):
                mono = mono * pows[c][:, idx[s:e, c]]
            partial = mono @ values[s:e]
            y = partial - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
    return acc


def evaluate_at(sample: GafSample, z) -> np.ndarray:
    """Truncated sum at each of the given points in C^n (vectorized)."""
    pts = _as_points(z, sample.n)
    out = np.empty(pts.shape[0], dtype=np.complex128)
    for s in range(0, pts.shape[0], _EVAL_CHUNK):
        out[s : s + _EVAL_CHUNK] = _accumulate(sample, pts[s : s + _EVAL_CHUNK], shift=False)
    return out


def evaluate(sample: GafSample, z) -> complex:
    """Truncated sum at one point (scalar accepted when n = 1)."""
    return complex(evaluate_at(sample, z)[0])


def log_abs_at(sample: GafSample, z) -> np.ndarray:
    """log|psi| at each point, overflow-safe; -inf where the value is exactly 0."""
    pts = _as_points(z, sample.n)
    out = np.empty(pts.shape[0], dtype=np.float64)
    for s in range(0, pts.shape[0], _EVAL_CHUNK):
        block = pts[s : s + _EVAL_CHUNK]
        shifted = _accumulate(sample, block, shift=True)
        mag = np.abs(shifted)
        half_sq = 0.5 * (np.abs(block) ** 2).sum(axis=1)
        with np.errstate(divide="ignore"):
            out[s : s + _EVAL_CHUNK] = np.where(mag == 0.0, -np.inf, np.log(np.where(mag == 0.0, 1.0, mag)) + half_sq)
    return out


def log_abs(sample: GafSample, z) -> float:
    return float(log_abs_at(sample, z)[0])


def restrict_to_line(sample: GafSample, u) -> np.ndarray:
    """Coefficients c_0..c_J of t -> psi(t*u) for a unit direction u.

    c_k = sum over |j| = k of w_j u^j / sqrt(j!); evaluating the returned
    polynomial at t reproduces psi(t*u).
    """
    u = np.asarray(u, dtype=np.complex128).reshape(-1)
    if u.shape != (sample.n,):
        raise ValueError(f"direction must have {sample.n} coordinates")
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"direction must be a unit vector, |u| = {norm!r}")
    upow = np.empty((sample.n, sample.J + 1), dtype=np.complex128)
    upow[:, 0] = 1.0
    for t in range(1, sample.J + 1):
        upow[:, t] = upow[:, t - 1] * u
    idx = sample.index_matrix
    mono = upow[0][idx[:, 0]]
    for c in range(1, sample.n):
        mono = mono * upow[c][idx[:, c]]
    terms = sample.coeffs.values * sample.scales * mono
    return np.add.reduceat(terms, sample.grade_starts)


@dataclass(frozen=True)
class TailBound:
    """Certified truncation tail bound at one (J, r).

    On the event that every dropped coefficient satisfies |w_j| <= 2^(|j|/2)
    (probability >= `confidence`), the dropped tail of psi is bounded by
    `bound` uniformly on the closed ball of radius r.  `confidence` is
    1 - sum over |j| > J of exp(-2^|j|); the sum is truncated once terms fall
    below 1e-300, whose remainder is smaller than the last kept term.
    """

    J: int
    r: float
    bound: float
    confidence: float


def _min_grade(n: int, r: float) -> int:
    return math.ceil(TAIL_GRADE_FACTOR * n * r * r)


def _log_grade_term(d: int, n: int, base: float) -> float:
    # log of C(d+n-1, n-1) * (base/d)^(d/2), base = 2*e*n*r^2
    return (
        gammaln(d + n)
        - gammaln(d + 1)
        - gammaln(n)
        + 0.5 * d * (math.log(base) - math.log(d))
    )


def tail_bound(n: int, J: int, r: float) -> TailBound:
    """Majorize sum over |j| > J of 2^(|j|/2) r^|j| / sqrt(j!).

    Grade d contributes at most C(d+n-1, n-1) * (2*e*n*r^2 / d)^(d/2): the
    factorial is bounded below through Stirling per factor together with
    prod(j_k^j_k) >= |j|^|j| / n^|j|.  Grades are summed until the geometric
    tail estimate falls below 1e-3 of the partial sum and the estimate is
    added, so the result still majorizes the full series.
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    floor = _min_grade(n, r)
    if J < floor:
        raise DegreeTooSmallError(
            f"degree cap {J} is below the majorant validity threshold "
            f"{floor} = ceil(2e*n*r^2) for n={n}, r={r}; increase J"
        )
    base = TAIL_GRADE_FACTOR * n * r * r
    partial = 0.0
    d = J + 1
    term = math.exp(_log_grade_term(d, n, base))
    for _ in range(200_000):
        partial += term
        nxt = math.exp(_log_grade_term(d + 1, n, base))
        ratio = nxt / term if term > 0 else 0.0
        if ratio < 1.0:
            tail_est = nxt / (1.0 - ratio)
            if tail_est < 1e-3 * partial or tail_est == 0.0:
                bound = partial + tail_est
                break
        d += 1
        term = nxt
    else:  # pragma: no cover - the ratio drops below 1 past the threshold
        raise RuntimeError("tail majorant did not converge")

    miss = 0.0
    for dd in range(J + 1, J + 400):
        if dd > 9:  # exp(-2^10) already underflows float64
            break
        t = math.comb(dd + n - 1, n - 1) * math.exp(-(2.0**dd))
        miss += t
        if t < 1e-300:
            break
    confidence = max(0.0, 1.0 - miss)
    return TailBound(J=J, r=r, bound=bound, confidence=confidence)


def choose_degree(n: int, r: float, eps: float) -> int:
    """Smallest degree cap whose tail bound at radius r is <= eps.

    Doubling then bisection on tail_bound; never below ceil(2e*n*r^2) + 1.
    """
    if r <= 0 or eps <= 0:
        raise ValueError("radius and target bound must be positive")
    lo = _min_grade(n, r) + 1
    count_indices(n, lo)  # capacity check at the floor
    if tail_bound(n, lo, r).bound <= eps:
        return lo
    hi = lo
    while True:
        hi *= 2
        try:
            count_indices(n, hi)
        except CapacityError:
            raise CapacityError(
                f"no degree cap within capacity reaches tail bound {eps} "
                f"at n={n}, r={r}"
            ) from None
        if tail_bound(n, hi, r).bound <= eps:
            break
    lo_fail = max(lo, hi // 2)
    while hi - lo_fail > 1:
        mid = (hi + lo_fail) // 2
        if tail_bound(n, mid, r).bound <= eps:
            hi = mid
        else:
            lo_fail = mid
    return hi
