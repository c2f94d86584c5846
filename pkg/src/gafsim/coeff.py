"""Multi-index bookkeeping and reproducible complex Gaussian coefficient streams.

Coefficients are indexed by multi-indices j in N^n, ordered graded
lexicographically: first by order |j| = sum(j_k), ties broken by tuple
comparison.  That order is canonical everywhere in this package.  Each index
owns a fixed pair of counter positions in a keyed Philox stream (positions
2*rank and 2*rank+1, where rank is the graded-lex position), so the draw for
a given (seed, index) never depends on how many other indices are sampled:
growing the degree cap appends new values and never permutes earlier ones.

The coefficient law is the standard complex Gaussian with density
(1/pi) exp(-|w|^2): E|w|^2 = 1, P(|w| >= t) = exp(-t^2), and the real and
imaginary parts are independent N(0, 1/2).  This normalization is load
bearing; the alternative unit-variance-per-component convention would
silently rescale every growth constant and acceptance band downstream.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.random import Philox

MultiIndex = tuple[int, ...]

# Hard cap on materialized coefficient tables (arrays of this length are
# allocated in one piece).
MAX_TABLE_SIZE = 20_000_000

_UINT64_MASK = (1 << 64) - 1


class CapacityError(OverflowError):
    """A requested index set is too large to materialize."""


def index_order(j: MultiIndex) -> int:
    """|j| = j_1 + ... + j_n."""
    return sum(j)


def index_factorial(j: MultiIndex) -> int:
    """j! = j_1! * ... * j_n! (exact integer)."""
    out = 1
    for jk in j:
        out *= math.factorial(jk)
    return out


def count_indices(n: int, J: int) -> int:
    """Number of multi-indices with |j| <= J, i.e. C(J+n, n)."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if J < 0:
        raise ValueError(f"degree cap must be >= 0, got {J}")
    total = math.comb(J + n, n)
    if total > MAX_TABLE_SIZE:
        raise CapacityError(
            f"index set for n={n}, J={J} has {total} entries, "
            f"above the capacity limit {MAX_TABLE_SIZE}"
        )
    return total


def _compositions(total: int, parts: int) -> Iterator[MultiIndex]:
    # Lexicographically increasing tuples of `parts` non-negative ints summing
    # to `total`.
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def enumerate_indices(n: int, J: int) -> list[MultiIndex]:
    """All multi-indices with |j| <= J in graded lexicographic order."""
    total = count_indices(n, J)
    out: list[MultiIndex] = []
    for grade in range(J + 1):
        out.extend(_compositions(grade, n))
    assert len(out) == total
    return out


@dataclass(frozen=True)
class Seed:
    """Master seed plus stream labels.

    Derivation is a pure function: the Philox key depends only on
    (master, experiment, trial), so two processes that derive the same labels
    draw identical streams with no shared state.
    """

    master: int
    experiment: str = ""
    trial: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master <= _UINT64_MASK:
            raise ValueError(f"master seed must fit in 64 bits, got {self.master}")
        if self.trial < 0:
            raise ValueError(f"trial index must be >= 0, got {self.trial}")

    def derive(self, experiment: str, trial: int) -> "Seed":
        """Seed for one (experiment, trial) stream under the same master."""
        return Seed(self.master, experiment, trial)

    def child(self, tag: str) -> "Seed":
        """Sub-stream of this seed for auxiliary randomness (retries, lines)."""
        return Seed(self.master, f"{self.experiment}/{tag}", self.trial)

    def philox_key(self) -> np.ndarray:
        label = f"{self.experiment}\x1f{self.trial}".encode()
        digest = hashlib.blake2b(label, digest_size=8).digest()
        k1 = int.from_bytes(digest, "little")
        return np.array([self.master, k1], dtype=np.uint64)


def gaussian_stream(seed: Seed, count: int) -> np.ndarray:
    """First `count` standard complex Gaussians of the seed's stream.

    Draw k consumes exactly raw outputs 2k and 2k+1 of the keyed Philox
    counter, mapped by |w|^2 = -log(1-u1) (an exact Exp(1)) and a uniform
    phase 2*pi*u2.  Requesting more draws extends the array; it never changes
    earlier entries.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return np.empty(0, dtype=np.complex128)
    raw = Philox(key=seed.philox_key()).random_raw(2 * count)
    u = (raw >> np.uint64(11)) * 2.0**-53
    modulus = np.sqrt(-np.log1p(-u[0::2]))
    phase = 2.0 * np.pi * u[1::2]
    return modulus * np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """Complex Gaussian coefficients for every multi-index with |j| <= J.

    `indices` is graded-lex ordered and `values[k]` belongs to `indices[k]`.
    """

    n: int
    J: int
    indices: tuple[MultiIndex, ...]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def value(self, j: MultiIndex) -> complex:
        return complex(self.values[self._rank()[tuple(j)]])

    def items(self) -> Iterator[tuple[MultiIndex, complex]]:
        for j, w in zip(self.indices, self.values):
            yield j, complex(w)

    def _rank(self) -> dict[MultiIndex, int]:
        cache = getattr(self, "_rank_cache", None)
        if cache is None:
            cache = {j: k for k, j in enumerate(self.indices)}
            object.__setattr__(self, "_rank_cache", cache)
        return cache


def sample_coefficients(seed: Seed, n: int, J: int) -> CoefficientTable:
    """Sample the i.i.d. standard complex Gaussian table for (seed, n, J).

    Deterministic given (seed, n, J); the table for degree cap J is a prefix
    of the table for J+1.
    """
    indices = enumerate_indices(n, J)
    values = gaussian_stream(seed, len(indices))
    return CoefficientTable(n=n, J=J, indices=tuple(indices), values=values)


def small_ball_probability(lam: float) -> float:
    """P(|w| <= lam) = 1 - exp(-lam^2), valid bracketing range 0 < lam <= 1.

    On that range the value lies in [lam^2/2, lam^2]; outside it the
    bracketing fails, so the domain is enforced.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    return -math.expm1(-lam * lam)
