"""Sphere partitions, normalized surface quadrature, Poisson kernel on balls.

The partition of S_r in R^d follows the enclosing-cube construction: each of
the 2d facets of [-r, r]^d is split into m^(d-1) equal subcubes and each
subcube is projected radially onto the sphere.  Cell measures are the exact
solid angles of the subcubes (adaptive tensor Gauss-Legendre on the
projection Jacobian r / |x|^d, driven to 1e-10 relative, then normalized so
the measures sum to 1 exactly).  Representatives are the projected subcube
centers; every facet is congruent, so one facet's solid angles are computed
and tiled.

Surface integrals are measure-weighted Riemann sums over representatives,
with an error indicator from the m -> 2m refinement.  The Poisson kernel for
the ball of radius r in R^(2n) is r^(2n-2) (r^2 - |zeta|^2) / |zeta - z|^(2n)
under the unit-mass normalization of the sphere measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product

import numpy as np

_MEASURE_RTOL = 1e-10
_GL_ORDERS = (6, 10, 14, 20, 28)
_CHUNK_BUDGET = 4_000_000  # floats per quadrature chunk
MAX_CELLS = 2_000_000


class SingularIntegrandError(RuntimeError):
    """Integrand stayed -inf on quadrature nodes through local refinement."""


def complex_to_real(z: np.ndarray) -> np.ndarray:
    """C^n points (..., n) -> R^(2n) points (..., 2n), coordinates interleaved."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=np.float64)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def real_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of complex_to_real."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise ValueError("last axis must have even length")
    return x[..., 0::2] + 1j * x[..., 1::2]


def sphere_area(d: int, r: float) -> float:
    """Surface area of S_r in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0) * r ** (d - 1)


def _gl01(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def _box_solid_angles_fixed(
    d: int, r: float, corners: np.ndarray, width: float, order: int
) -> np.ndarray:
    # Solid angle of axis-aligned boxes [corner, corner+width]^(d-1) sitting on
    # a facet at distance r: integral of r / (r^2 + |t|^2)^(d/2).
    dim = d - 1
    x, w = _gl01(order)
    ref = np.array(list(product(x, repeat=dim)), dtype=np.float64)  # (g^dim, dim)
    wts = np.array([math.prod(c) for c in product(w, repeat=dim)], dtype=np.float64)
    nnodes = ref.shape[0]
    out = np.empty(corners.shape[0], dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // (nnodes * dim))
    for s in range(0, corners.shape[0], chunk):
        block = corners[s : s + chunk]
        pts = block[:, None, :] + width * ref[None, :, :]
        rho2 = r * r + np.einsum("ijk,ijk->ij", pts, pts)
        f = r / rho2 ** (d / 2.0)
        out[s : s + chunk] = (f @ wts) * width**dim
    return out


def _box_solid_angles(d: int, r: float, corners: np.ndarray, width: float) -> np.ndarray:
    prev = None
    for order in _GL_ORDERS:
        cur = _box_solid_angles_fixed(d, r, corners, width, order)
        if prev is not None and np.max(np.abs(cur - prev) / np.abs(cur)) <= _MEASURE_RTOL:
            return cur
        prev = cur
    return prev  # pragma: no cover - order 28 is far past 1e-10 for these cells


@dataclass(frozen=True, eq=False)
class SpherePartition:
    """Disjoint measurable cells covering S_r in R^d.

    N = 2d * m^(d-1) cells.  `measures` are positive and sum to 1 exactly (the
    computed solid angles are normalized by their total, which itself matches
    the sphere area to the quadrature tolerance).  `diameter_bounds` come from
    the containing subcube: the radial projection only contracts.
    """

    d: int
    r: float
    m: int
    representatives: np.ndarray
    measures: np.ndarray
    diameter_bounds: np.ndarray
    facet_axes: np.ndarray
    facet_signs: np.ndarray
    cell_corners: np.ndarray  # tangential lower corners, axes ascending

    def __len__(self) -> int:
        return self.representatives.shape[0]

    @property
    def cell_width(self) -> float:
        return 2.0 * self.r / self.m

    @cached_property
    def refined(self) -> "SpherePartition":
        return partition_sphere(self.d, 2 * self.m, self.r)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Cell index containing each point of S_r (ties resolved to the
        lowest facet axis, consistent with the disjoint redesign of cells)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        axes = np.argmax(np.abs(pts), axis=1)
        vals = pts[np.arange(len(pts)), axes]
        signs = np.where(vals >= 0, 1, -1)
        scale = self.r / np.abs(vals)
        cube = pts * scale[:, None]
        per_facet = self.m ** (self.d - 1)
        h = self.cell_width
        ids = np.empty(len(pts), dtype=np.int64)
        for k in range(len(pts)):
            tang = [a for a in range(self.d) if a != axes[k]]
            t = cube[k, tang]
            cellidx = np.clip(((t + self.r) / h).astype(np.int64), 0, self.m - 1)
            ravel = 0
            for c in cellidx:
                ravel = ravel * self.m + int(c)
            facet = 2 * int(axes[k]) + (0 if signs[k] > 0 else 1)
            ids[k] = facet * per_facet + ravel
        return ids


def partition_sphere(d: int, m: int, r: float) -> SpherePartition:
    """Build the 2d * m^(d-1) cell partition of S_r in R^d."""
    if d < 2 or d % 2:
        raise ValueError(f"real dimension must be even and >= 2, got {d}")
    if m < 1:
        raise ValueError(f"subdivision parameter must be >= 1, got {m}")
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    per_facet = m ** (d - 1)
    total_cells = 2 * d * per_facet
    if total_cells > MAX_CELLS:
        raise OverflowError(
            f"partition for d={d}, m={m} has {total_cells} cells, above {MAX_CELLS}"
        )
    h = 2.0 * r / m
    edges = -r + h * np.arange(m)
    corners = np.array(list(product(edges, repeat=d - 1)), dtype=np.float64)
    omega_facet = _box_solid_angles(d, r, corners, h)

    total = 2 * d * float(omega_facet.sum())
    exact = sphere_area(d, 1.0)  # solid angle of the full sphere
    if abs(total - exact) > 1e-8 * exact:  # pragma: no cover - construction integrity
        raise RuntimeError("facet solid angles do not add up to the sphere area")

    centers = corners + h / 2.0
    reps = np.empty((total_cells, d), dtype=np.float64)
    meas = np.empty(total_cells, dtype=np.float64)
    fax = np.empty(total_cells, dtype=np.int8)
    fsg = np.empty(total_cells, dtype=np.int8)
    ccorn = np.empty((total_cells, d - 1), dtype=np.float64)
    block = 0
    for axis in range(d):
        tang = [a for a in range(d) if a != axis]
        for sign in (1.0, -1.0):
            sl = slice(block * per_facet, (block + 1) * per_facet)
            p = np.empty((per_facet, d), dtype=np.float64)
            p[:, axis] = sign * r
            p[:, tang] = centers
            reps[sl] = r * p / np.linalg.norm(p, axis=1)[:, None]
            meas[sl] = omega_facet
            fax[sl] = axis
            fsg[sl] = 1 if sign > 0 else -1
            ccorn[sl] = corners
            block += 1
    meas /= meas.sum()
    diam = np.full(total_cells, math.sqrt(d - 1) * h)
    return SpherePartition(
        d=d,
        r=r,
        m=m,
        representatives=reps,
        measures=meas,
        diameter_bounds=diam,
        facet_axes=fax,
        facet_signs=fsg,
        cell_corners=ccorn,
    )


@lru_cache(maxsize=128)
def cached_partition(d: int, m: int, r: float) -> SpherePartition:
    """Memoized partitions; experiments reuse one node set across samples."""
    return partition_sphere(d, m, r)


@dataclass(frozen=True)
class PoissonKernelQuery:
    """Kernel arguments: interior point zeta, boundary point z, for B(0, r) in C^n."""

    zeta: np.ndarray
    z: np.ndarray
    r: float
    n: int

    def __post_init__(self) -> None:
        zeta = np.asarray(self.zeta).reshape(-1)
        z = np.asarray(self.z).reshape(-1)
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "z", z)
        if np.linalg.norm(zeta) >= self.r:
            raise ValueError("interior point must satisfy |zeta| < r")
        if abs(np.linalg.norm(z) - self.r) > 1e-9 * self.r:
            raise ValueError("boundary point must satisfy |z| = r")


def kernel_values(zeta: np.ndarray, pts: np.ndarray, r: float, d: int) -> np.ndarray:
    """Poisson kernel P_r(zeta, .) at boundary points (real coordinates, d = 2n)."""
    zeta = np.asarray(zeta, dtype=np.float64).reshape(-1)
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    diff = pts - zeta[None, :]
    dist = np.linalg.norm(diff, axis=1)
    return r ** (d - 2) * (r * r - float(zeta @ zeta)) / dist**d


def _as_real_point(v: np.ndarray, n: int) -> np.ndarray:
    # Accept a point of C^n (length n, possibly real-typed) or its real
    # interleaved form in R^(2n).
    v = np.asarray(v).reshape(-1)
    if v.shape[0] == n:
        return complex_to_real(v.astype(np.complex128).reshape(1, -1))[0]
    if v.shape[0] == 2 * n and not np.iscomplexobj(v):
        return v.astype(np.float64)
    raise ValueError(f"point must have {n} complex or {2 * n} real coordinates")


def poisson_kernel(q: PoissonKernelQuery) -> float:
    """Kernel value for one query; strictly positive on its domain."""
    zr = _as_real_point(q.zeta, q.n)
    pr = _as_real_point(q.z, q.n).reshape(1, -1)
    return float(kernel_values(zr, pr, q.r, 2 * q.n)[0])


def _cell_value(f, part: SpherePartition, cell: int, level: int = 0) -> float:
    # Measure-weighted average of f over one cell, splitting the subcube when
    # the representative hits the -inf sentinel.  Never silently excludes.
    corner = part.cell_corners[cell]
    width = part.cell_width
    axis = int(part.facet_axes[cell])
    sign = float(part.facet_signs[cell])
    return _box_value(f, part.d, part.r, corner, width, axis, sign, level)


def _box_value(f, d, r, corner, width, axis, sign, level) -> float:
    tang = [a for a in range(d) if a != axis]
    center = corner + width / 2.0
    p = np.empty(d)
    p[axis] = sign * r
    p[tang] = center
    rep = (r * p / np.linalg.norm(p)).reshape(1, -1)
    val = float(np.asarray(f(rep), dtype=np.float64)[0])
    if np.isfinite(val) or val == np.inf:
        return val
    if level >= 3:
        raise SingularIntegrandError("integrand singular on quadrature node")
    half = width / 2.0
    sub_corners = np.array(
        [corner + half * np.array(offs) for offs in product((0, 1), repeat=d - 1)]
    )
    omegas = _box_solid_angles(d, r, sub_corners, half)
    vals = np.array(
        [_box_value(f, d, r, c, half, axis, sign, level + 1) for c in sub_corners]
    )
    return float((omegas / omegas.sum()) @ vals)


def _riemann_sum(f, part: SpherePartition) -> float:
    # copy: the singular patch below must not write into f's own storage
    vals = np.array(f(part.representatives), dtype=np.float64, copy=True)
    bad = np.nonzero(np.isneginf(vals))[0]
    for cell in bad:
        vals[cell] = _cell_value(f, part, int(cell))
    return float(part.measures @ vals)


def surface_integral(f, part: SpherePartition) -> tuple[float, float]:
    """(sum of sigma_j f(x_j), error indicator from the m -> 2m refinement).

    `f` takes an (k, d) array of points on the sphere and returns (k,) values.
    Cells whose representative returns -inf are refined locally up to three
    levels before failing.
    """
    coarse = _riemann_sum(f, part)
    fine = _riemann_sum(f, part.refined)
    return coarse, 0.5 * abs(coarse - fine)


def harmonic_reproduce(h, zeta: np.ndarray, part: SpherePartition) -> tuple[float, float]:
    """Quadrature of P_r(zeta, .) h(.) over the partition; targets h(zeta).

    Restricted to |zeta| <= 0.9 r: the kernel gradient scales like the inverse
    distance to the boundary to the power d+2, which degrades the quadrature
    long before the kernel itself misbehaves.
    """
    zeta = np.asarray(zeta, dtype=np.float64).reshape(-1)
    if np.linalg.norm(zeta) > 0.9 * part.r * (1 + 1e-12):
        raise ValueError("interior point must satisfy |zeta| <= 0.9 r")

    def integrand(pts):
        return kernel_values(zeta, pts, part.r, part.d) * np.asarray(h(pts), dtype=np.float64)

    return surface_integral(integrand, part)


def kernel_second_normalization(
    kappa: float, z: np.ndarray, part_inner: SpherePartition
) -> tuple[float, float]:
    """Quadrature of P_r(., z) over the inner sphere S_(kappa r); targets 1.

    `part_inner` lives on radius kappa*r; z lies on the outer sphere of
    radius r = part_inner.r / kappa.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must be in (0, 1), got {kappa}")
    r = part_inner.r / kappa
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if abs(np.linalg.norm(z) - r) > 1e-9 * r:
        raise ValueError("z must lie on the outer sphere of radius r = part_inner.r / kappa")
    d = part_inner.d

    def integrand(pts):
        pts = np.atleast_2d(pts)
        w2 = np.einsum("ij,ij->i", pts, pts)
        dist = np.linalg.norm(pts - z[None, :], axis=1)
        return r ** (d - 2) * (r * r - w2) / dist**d

    return surface_integral(integrand, part_inner)
