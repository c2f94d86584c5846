"""Zero counting: exact winding counts, the spherical-mean estimator, holes.

One complex variable gets an exact oracle: the winding number of p around
the circle |z| = r, computed by trapezoidal quadrature of z p'(z)/p(z) with
the node count doubled until the value certifies itself by landing near an
integer; the distance to that integer is returned as the certificate.  The
companion-matrix count is an independent oracle kept for cross-validation.

In n variables the counting function comes from the log-radius difference of
spherical means of log|psi|: the centered difference (A(r e^h) - A(r e^-h))
/ (4h) equals the average of the half-current-normalized counting function
over the log-radius band [r e^-h, r e^h].  `count` below is the geometric
normalization (integer zero count for n = 1, mean r^2); `half_count` is its
half (mean r^2/2).

Hole detection reduces to one-variable slices: every zero lies on the
complex line through the origin and itself, so psi is zero-free on B(0, r)
iff every restriction psi(t u) is zero-free for |t| < r.  Slicing a random
direction can miss a zero, never invent one, so "hole" verdicts carry a
one-sided error that shrinks with the number of lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npp
from numpy.random import Generator, Philox

from . import gaf, geometry
from .gaf import GafSample

_CONTOUR_FLOOR = 1e-12
_TRIM_RTOL = 1e-13


class ContourError(RuntimeError):
    """Winding integral could not be certified on this contour."""


class RetriesExhaustedError(ContourError):
    """Perturbed-radius retries all failed; the trial is invalid."""


@dataclass(frozen=True)
class CountingEstimate:
    """Counting-function value at radius r.

    `count` is the geometric zero count (projective mass in the doubled
    normalization; a non-negative integer for the winding method).
    `half_count` = count/2 is the same quantity in the half-current
    normalization whose mean is r^2/2.
    """

    r: float
    count: float
    method: str
    error_bar: float

    def __post_init__(self) -> None:
        if self.method == "winding" and self.count != int(self.count):
            raise ValueError("winding counts must be integers")

    @property
    def half_count(self) -> float:
        return self.count / 2.0


@dataclass(frozen=True)
class HoleVerdict:
    verdict: str  # "hole" | "not_hole"
    witness: np.ndarray | None
    lines_tested: int
    min_modulus_on_grid: float


def _trim(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=np.complex128).reshape(-1)
    mags = np.abs(poly)
    top = mags.max()
    if top == 0.0:
        raise ValueError("polynomial is identically zero")
    keep = np.nonzero(mags > _TRIM_RTOL * top)[0]
    return poly[: keep[-1] + 1]


def count_zeros_disk(
    poly: np.ndarray, r: float, n0: int = 256, nmax: int = 1 << 17
) -> tuple[int, float]:
    """Zeros of the polynomial in |z| < r by the argument principle.

    Returns (count, certificate); the certificate is the distance of the
    converged trapezoid value to the nearest integer.  Raises ContourError
    when a zero sits too close to the contour (minimum |p| on the nodes below
    1e-12 of the maximum) or the doubling never certifies.
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    c = _trim(poly)
    if len(c) == 1:  # nonzero constant: exact winding 0
        return 0, 0.0
    dc = c[1:] * np.arange(1, len(c))
    prev = None
    n = n0
    while n <= nmax:
        z = r * np.exp(2j * np.pi * np.arange(n) / n)
        vals = npp.polyval(z, c)
        mags = np.abs(vals)
        if mags.min() < _CONTOUR_FLOOR * mags.max():
            raise ContourError(f"zero within {_CONTOUR_FLOOR} of the contour |z| = {r}")
        integral = float(np.mean(z * npp.polyval(z, dc) / vals).real)
        nearest = round(integral)
        if (
            prev is not None
            and abs(integral - nearest) < 0.25
            and round(prev) == nearest
            and abs(prev - nearest) < 0.25
        ):
            return int(nearest), abs(integral - nearest)
        prev = integral
        n *= 2
    raise ContourError(f"winding value failed to stabilize below {nmax} nodes")


def count_zeros_companion(poly: np.ndarray, r: float) -> int:
    """Independent oracle: companion-matrix roots with modulus < r."""
    c = _trim(poly)
    if len(c) == 1:
        return 0
    roots = np.roots(c[::-1])
    return int(np.sum(np.abs(roots) < r))


def count_zeros_disk_robust(
    poly: np.ndarray,
    r: float,
    rng: Generator,
    retries: int = 5,
    n0: int = 256,
) -> tuple[int, float, float]:
    """count_zeros_disk with the contract's perturbed-radius retries.

    On a contour failure the radius is multiplied by a random factor within
    one part in a thousand and the count retried, at most `retries` times.
    Returns (count, certificate, radius actually used).
    """
    radius = r
    for attempt in range(retries + 1):
        try:
            count, cert = count_zeros_disk(poly, radius, n0=n0)
            return count, cert, radius
        except ContourError:
            if attempt == retries:
                raise RetriesExhaustedError(
                    f"no certified contour near |z| = {r} after {retries} retries"
                ) from None
            radius = r * (1.0 + rng.uniform(-1e-3, 1e-3))
    raise AssertionError("unreachable")


def gaf_polynomial(sample: GafSample) -> np.ndarray:
    """For n = 1: the coefficients w_j / sqrt(j!) of the truncated field."""
    if sample.n != 1:
        raise ValueError("gaf_polynomial is defined for one-variable samples")
    return sample.coeffs.values * sample.scales


class _MemoPoints:
    # Caches f over the exact node arrays the partition machinery reuses, so
    # the pair of integrals below shares one field evaluation per node set.
    # The keyed array is stored too: holding the reference pins its id, so a
    # recycled address can never serve a stale value.
    def __init__(self, fn):
        self.fn = fn
        self._store: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        key = id(pts)
        hit = self._store.get(key)
        if hit is None:
            hit = (pts, np.asarray(self.fn(pts), dtype=np.float64))
            self._store[key] = hit
        return hit[1]


@dataclass(frozen=True)
class SphereLogIntegral:
    """Spherical means of log|psi| at one radius."""

    r: float
    value: float  # integral of log|psi|
    abs_value: float  # integral of |log|psi||
    error: float
    abs_error: float


def sphere_log_integral(
    sample: GafSample, r: float, part: geometry.SpherePartition
) -> SphereLogIntegral:
    """A(r) = integral of log|psi| over S_r, plus the |log| integral."""
    if abs(part.r - r) > 1e-9 * max(r, 1.0):
        raise ValueError(f"partition radius {part.r} does not match r={r}")
    if part.d != 2 * sample.n:
        raise ValueError("partition dimension does not match the sample")

    base = _MemoPoints(lambda pts: gaf.log_abs_at(sample, geometry.real_to_complex(pts)))
    value, err = geometry.surface_integral(base, part)
    abs_value, abs_err = geometry.surface_integral(lambda pts: np.abs(base(pts)), part)
    return SphereLogIntegral(r=r, value=value, abs_value=abs_value, error=err, abs_error=abs_err)


def _default_m(n: int) -> int:
    return 64 if n == 1 else 8


def counting_from_jensen(
    sample: GafSample, r: float, h: float = 0.05, m: int | None = None
) -> CountingEstimate:
    """Counting estimate from the log-radius difference of spherical means.

    half_count(r) ~= (A(r e^h) - A(r e^-h)) / (4h), the centered difference
    of A/2 in log radius; this equals the exact average of half_count over
    [r e^-h, r e^h], so the returned value is a band average rather than a
    point value.  The error bar adds the quadrature indicators to the h vs
    h/2 refinement difference.
    """
    if not 0.0 < h <= 0.2:
        raise ValueError(f"log-radius half-step must be in (0, 0.2], got {h}")
    outer = r * math.exp(h)
    gaf.tail_bound(sample.n, sample.J, outer)  # refuses invalid truncation
    if m is None:
        m = _default_m(sample.n)
    d = 2 * sample.n

    def mean_at(radius: float) -> SphereLogIntegral:
        part = geometry.cached_partition(d, m, radius)
        return sphere_log_integral(sample, radius, part)

    hi, lo = mean_at(outer), mean_at(r * math.exp(-h))
    est = (hi.value - lo.value) / (4.0 * h)
    hi2, lo2 = mean_at(r * math.exp(h / 2.0)), mean_at(r * math.exp(-h / 2.0))
    est_half = (hi2.value - lo2.value) / (2.0 * h)
    error_bar = abs(est - est_half) + (hi.error + lo.error) / (4.0 * h)
    return CountingEstimate(r=r, count=2.0 * est, method="jensen", error_bar=error_bar)


def nevanlinna_T(
    sample: GafSample, r: float, part: geometry.SpherePartition
) -> tuple[float, float]:
    """Spherical mean of log+ |psi| (growth gauge; grows like r^2/2)."""
    if abs(part.r - r) > 1e-9 * max(r, 1.0):
        raise ValueError(f"partition radius {part.r} does not match r={r}")

    def plus_part(pts):
        la = gaf.log_abs_at(sample, geometry.real_to_complex(pts))
        return np.maximum(la, 0.0)

    return geometry.surface_integral(plus_part, part)


def _aux_rng(sample: GafSample, tag: str) -> Generator:
    return Generator(Philox(key=sample.seed.child(tag).philox_key()))


def _polish_root(poly: np.ndarray, dpoly: np.ndarray, t0: complex) -> complex:
    t = t0
    for _ in range(12):
        dv = npp.polyval(t, dpoly)
        if dv == 0:
            break
        step = npp.polyval(t, poly) / dv
        t -= step
        if abs(step) < 1e-14 * max(1.0, abs(t)):
            break
    return t


def _witness_on_line(poly: np.ndarray, r: float) -> complex | None:
    c = _trim(poly)
    if len(c) == 1:
        return None
    roots = np.roots(c[::-1])
    inside = roots[np.abs(roots) < r * (1.0 + 1e-9)]
    if len(inside) == 0:
        return None
    dpoly = np.asarray(poly[1:], dtype=np.complex128) * np.arange(1, len(poly))
    cand = inside[np.argmin(np.abs(inside))]
    t = _polish_root(np.asarray(poly, np.complex128), dpoly, complex(cand))
    if abs(t) >= r:
        t = complex(cand)
    return t


def _ball_grid(n: int, r: float, rng: Generator, size: int) -> np.ndarray:
    # Quasi-coarse diagnostic grid: uniform directions, radii by the volume map.
    g = rng.normal(size=(size, 2 * n))
    g /= np.linalg.norm(g, axis=1)[:, None]
    radii = r * rng.random(size) ** (1.0 / (2 * n))
    return geometry.real_to_complex(g * radii[:, None])


def hole_test(
    sample: GafSample, r: float, L: int = 16, grid: int = 256
) -> HoleVerdict:
    """Decide whether B(0, r) is free of zeros of the truncated field.

    n = 1: one certified winding count on the sample's own coefficients.
    n >= 2: L uniformly random complex lines through the origin; the first
    slice with a positive count yields a not_hole verdict and a polished
    witness, in line-index order, so results do not depend on scheduling.
    Contour degeneracies are retried on perturbed radii; exhausted retries
    raise RetriesExhaustedError, which callers count as an invalid trial.
    """
    if L < 1:
        raise ValueError(f"line count must be >= 1, got {L}")
    floor = math.ceil(gaf.TAIL_GRADE_FACTOR * sample.n * r * r)
    if sample.J < floor:
        raise gaf.DegreeTooSmallError(
            f"degree cap {sample.J} is not valid to radius {r} (needs >= {floor})"
        )
    retry_rng = _aux_rng(sample, "retry")
    grid_pts = _ball_grid(sample.n, r, _aux_rng(sample, "grid"), min(16**sample.n, 4096))
    min_mod = float(np.abs(gaf.evaluate_at(sample, grid_pts)).min())

    if sample.n == 1:
        poly = gaf_polynomial(sample)
        count, _cert, _r_used = count_zeros_disk_robust(poly, r, retry_rng, n0=grid)
        if count == 0:
            return HoleVerdict("hole", None, 1, min_mod)
        t = _witness_on_line(poly, r)
        witness = np.array([t if t is not None else 0.0], dtype=np.complex128)
        return HoleVerdict("not_hole", witness, 1, min_mod)

    dir_rng = _aux_rng(sample, "dir")
    for k in range(L):
        u = dir_rng.normal(size=sample.n) + 1j * dir_rng.normal(size=sample.n)
        u /= np.linalg.norm(u)
        poly = gaf.restrict_to_line(sample, u)
        count, _cert, _r_used = count_zeros_disk_robust(poly, r, retry_rng, n0=grid)
        if count > 0:
            t = _witness_on_line(poly, r)
            witness = (t if t is not None else 0.0) * u
            return HoleVerdict("not_hole", witness, k + 1, min_mod)
    return HoleVerdict("hole", None, L, min_mod)
