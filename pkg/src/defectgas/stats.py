"""Survival curves, confidence bands, accumulators and splittable randomness."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sps

from . import _prf
from .errors import GridMismatch

MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RandomnessHandle:
    """A (master seed, lineage path) pair naming one reproducible stream.

    Streams are functions of the pair alone, so results do not depend on the
    order in which parallel tasks run.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & MASK64)
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def split(self, i: int) -> "RandomnessHandle":
        return RandomnessHandle(self.seed, self.path + (int(i),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def key(self) -> int:
        """A 64-bit word derived from the lineage (used to seed marking fields)."""
        return int(_prf.derive_key(self.seed, *self.path))


def as_handle(randomness) -> RandomnessHandle:
    if isinstance(randomness, RandomnessHandle):
        return randomness
    return RandomnessHandle(0 if randomness is None else int(randomness))


def wilson_band(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    z = _sps.norm.ppf(0.5 + level / 2.0)
    p = successes / n
    z2n = z * z / n
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


def wilson_bands(successes, n: int, level: float = 0.95):
    lows, highs = zip(*(wilson_band(int(s), n, level) for s in successes)) if len(successes) else ((), ())
    return np.array(lows, dtype=float), np.array(highs, dtype=float)


@dataclass
class EmpiricalCDF:
    """Tabulated survival estimates P(X >= T) with 95% Wilson bands."""

    grid: np.ndarray
    survival: np.ndarray
    n: int
    band_low: np.ndarray
    band_high: np.ndarray
    censored_count: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def half_width(self) -> np.ndarray:
        return np.maximum(self.survival - self.band_low, self.band_high - self.survival)

    def at(self, T: float) -> float:
        idx = np.nonzero(np.asarray(self.grid) == T)[0]
        if not idx.size:
            raise KeyError(T)
        return float(self.survival[idx[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("T,survival,band_low,band_high,n,censored_count\n")
        for T, s, lo, hi in zip(self.grid, self.survival, self.band_low, self.band_high):
            buf.write(f"{float(T)!r},{float(s)!r},{float(lo)!r},{float(hi)!r},{self.n},{self.censored_count}\n")
        return buf.getvalue()


class SurvivalAccumulator:
    """Counts of observations >= T on a fixed grid; merges are exact."""

    def __init__(self, grid):
        g = np.asarray(grid, dtype=np.float64)
        if g.ndim != 1 or np.any(np.diff(g) < 0):
            raise ValueError("grid must be a sorted 1-d array")
        self.grid = g
        self.counts = np.zeros(g.size, dtype=np.int64)
        self.n = 0
        self.censored = 0

    def add(self, values, censored=None):
        """Add observations; ``inf`` entries count as censored beyond every grid point."""
        v = np.asarray(values, dtype=np.float64)
        sv = np.sort(v)
        # number of v >= T is n - (number of v < T)
        self.counts += v.size - np.searchsorted(sv, self.grid, side="left")
        self.n += v.size
        self.censored += int(np.count_nonzero(np.isinf(v))) if censored is None else int(np.count_nonzero(censored))
        return self

    def merge(self, other: "SurvivalAccumulator") -> "SurvivalAccumulator":
        if not np.array_equal(self.grid, other.grid):
            raise GridMismatch("cannot merge accumulators on different grids")
        out = SurvivalAccumulator(self.grid)
        out.counts = self.counts + other.counts
        out.n = self.n + other.n
        out.censored = self.censored + other.censored
        return out

    def to_cdf(self, metadata=None, level: float = 0.95) -> EmpiricalCDF:
        if self.n == 0:
            raise ValueError("no observations")
        lo, hi = wilson_bands(self.counts, self.n, level)
        return EmpiricalCDF(
            grid=self.grid.copy(),
            survival=self.counts / self.n,
            n=self.n,
            band_low=lo,
            band_high=hi,
            censored_count=self.censored,
            metadata=dict(metadata or {}),
        )


class MomentAccumulator:
    """Streaming mean and variance of integer-valued observations.

    Sums are kept as Python integers, so merging is exact and independent of
    order.
    """

    def __init__(self):
        self.n = 0
        self.total = 0
        self.total_sq = 0

    def add(self, values):
        v = np.asarray(values)
        if v.size and not np.issubdtype(v.dtype, np.integer):
            if not np.all(v == np.round(v)):
                raise TypeError("MomentAccumulator takes integer-valued observations")
            v = v.astype(np.int64)
        v = v.astype(np.int64)
        self.n += int(v.size)
        self.total += int(v.sum(dtype=np.int64))
        self.total_sq += int(np.dot(v, v))
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator()
        out.n = self.n + other.n
        out.total = self.total + other.total
        out.total_sq = self.total_sq + other.total_sq
        return out

    @property
    def mean(self) -> float:
        return self.total / self.n

    @property
    def variance(self) -> float:
        if self.n < 2:
            return float("nan")
        num = self.n * self.total_sq - self.total * self.total
        return num / (self.n * (self.n - 1))

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.n)


def ks_distance(a: EmpiricalCDF, b: EmpiricalCDF) -> float:
    """Largest absolute survival difference on a shared grid."""
    if len(a.grid) != len(b.grid) or not np.array_equal(np.asarray(a.grid), np.asarray(b.grid)):
        raise GridMismatch("survival curves are tabulated on different grids")
    return float(np.max(np.abs(np.asarray(a.survival) - np.asarray(b.survival)))) if len(a.grid) else 0.0


def combined_halfwidth(a: EmpiricalCDF, b: EmpiricalCDF) -> np.ndarray:
    """Half-width of the 95% band for the difference of two independent curves."""
    return np.sqrt(a.half_width**2 + b.half_width**2)
