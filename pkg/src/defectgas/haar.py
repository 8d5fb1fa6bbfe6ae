"""Random unimodular and affine lattices from the invariant measures.

d = 2 is exact: the upper half plane point x + iy is drawn from dx dy / y^2
on the standard fundamental domain by inversion (x = sin(phi) with phi
uniform, then y = sqrt(1 - x^2) / U), so there is neither rejection nor cusp
truncation.  d >= 3 uses Iwasawa coordinates on a Siegel set, which covers a
fundamental domain with bounded multiplicity; those samples are flagged
approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import special_ortho_group

from .errors import ConfigError, InvalidDimension
from .lattice import AffineLattice, LatticeBatch, OffsetClass, UnimodularMatrix
from .random_field import FieldSpec, MarkLaw
from .stats import as_handle

SQRT3_2 = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class LatticeSample:
    spec: AffineLattice
    offset_class: OffsetClass
    weight: float = 1.0
    approximate: bool = False


@dataclass(frozen=True)
class MarkedLatticeSample:
    lattice: LatticeSample
    marking: FieldSpec
    direction: np.ndarray | None = None


def _iwasawa_2d(x, y, theta):
    """Batch of N(x) A(y) K(theta) as (n, 2, 2) arrays."""
    sy = np.sqrt(y)
    c, s = np.cos(theta), np.sin(theta)
    # rows of N(x) A(y) = [[sqrt y, x / sqrt y], [0, 1 / sqrt y]]
    a11, a12, a22 = sy, x / sy, 1.0 / sy
    M = np.empty(x.shape + (2, 2))
    M[..., 0, 0] = a11 * c + a12 * s
    M[..., 0, 1] = -a11 * s + a12 * c
    M[..., 1, 0] = a22 * s
    M[..., 1, 1] = a22 * c
    return M


def sample_unimodular_2d_batch(rng: np.random.Generator, n: int, y_max: float | None = None) -> np.ndarray:
    """n Haar-random matrices in SL(2, R), each a fundamental-domain representative times a rotation."""
    phi = rng.uniform(-math.pi / 6.0, math.pi / 6.0, n)
    x = np.sin(phi)
    y0 = np.sqrt(1.0 - x * x)
    u = 1.0 - rng.random(n)  # (0, 1]
    if y_max is not None:
        # condition on y <= y_max: U >= y0 / y_max
        lo = y0 / y_max
        u = lo + (1.0 - lo) * u
    y = y0 / u
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    return _iwasawa_2d(x, y, theta)


def cusp_mass_above(y_max: float) -> float:
    """Haar probability of Im z > y_max on the fundamental domain (for y_max >= 1)."""
    return 3.0 / (math.pi * y_max)


def sample_unimodular_2d(randomness=None) -> UnimodularMatrix:
    rng = as_handle(randomness).generator()
    return UnimodularMatrix(sample_unimodular_2d_batch(rng, 1)[0])


def sample_unimodular_siegel_batch(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    """Approximate Haar samples for d >= 3 from a Siegel set.

    N upper unipotent with entries uniform in [-1/2, 1/2]; the log-ratios
    s_k = log(a_k / a_{k+1}) independent with density proportional to
    exp(-k (d - k) s) on [log(sqrt(3)/2), inf); K Haar in SO(d).
    """
    if d < 3:
        raise InvalidDimension("the Siegel-set sampler is for d >= 3")
    s0 = math.log(SQRT3_2)
    k = np.arange(1, d)
    s = s0 + rng.exponential(1.0 / (k * (d - k)), size=(n, d - 1))
    # log a_i = c + sum_{k >= i} s_k, normalised to sum zero
    tail = np.concatenate([np.cumsum(s[:, ::-1], axis=1)[:, ::-1], np.zeros((n, 1))], axis=1)
    loga = tail - tail.mean(axis=1, keepdims=True)
    a = np.exp(loga)
    N = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    iu = np.triu_indices(d, 1)
    N[:, iu[0], iu[1]] = rng.uniform(-0.5, 0.5, size=(n, len(iu[0])))
    K = special_ortho_group.rvs(d, size=n, random_state=rng)
    K = K.reshape(n, d, d)
    NA = N * a[:, None, :]
    M = NA @ K
    # remove rounding drift in the determinant
    det = np.linalg.det(M)
    return M / np.abs(det)[:, None, None] ** (1.0 / d)


def sample_unimodular_siegel(d: int, randomness=None) -> UnimodularMatrix:
    rng = as_handle(randomness).generator()
    return UnimodularMatrix(sample_unimodular_siegel_batch(rng, d, 1)[0])


def sample_unimodular_batch(rng, d: int, n: int) -> np.ndarray:
    return sample_unimodular_2d_batch(rng, n) if d == 2 else sample_unimodular_siegel_batch(rng, d, n)


def primitive_residues(s: int, d: int) -> np.ndarray:
    """All m in {0..s-1}^d with gcd(m, s) = 1."""
    grid = np.stack(np.meshgrid(*([np.arange(s)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    g = np.gcd.reduce(np.concatenate([grid, np.full((len(grid), 1), s)], axis=1), axis=1)
    return grid[g == 1]


def sample_offsets(rng: np.random.Generator, offset_class: OffsetClass, d: int, n: int) -> np.ndarray:
    """Offsets xi for n lattices of the given class."""
    if offset_class.kind == "integer":
        return np.zeros((n, d))
    if offset_class.kind == "irrational":
        return rng.random((n, d))
    s = offset_class.s
    if len(offset_class.m) != d:
        raise InvalidDimension("rational offset numerator has the wrong dimension")
    out = np.empty((n, d), dtype=np.int64)
    todo = np.arange(n)
    while todo.size:
        cand = rng.integers(0, s, size=(todo.size, d))
        g = np.gcd.reduce(np.concatenate([cand, np.full((todo.size, 1), s)], axis=1), axis=1)
        ok = g == 1
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return out / s


def sample_affine_batch(rng, offset_class: OffsetClass, d: int, n: int) -> LatticeBatch:
    Ms = sample_unimodular_batch(rng, d, n)
    xis = sample_offsets(rng, offset_class, d, n)
    return LatticeBatch.from_arrays(Ms, xis)


def sample_affine(offset_class: OffsetClass, d: int = 2, randomness=None) -> LatticeSample:
    if d < 2:
        raise InvalidDimension("dimension must be at least 2")
    rng = as_handle(randomness).generator()
    M = sample_unimodular_batch(rng, d, 1)[0]
    xi = sample_offsets(rng, offset_class, d, 1)[0]
    return LatticeSample(AffineLattice(UnimodularMatrix.renormalized(M), xi), offset_class, 1.0, d >= 3)


def sample_marked_limit(offset_class: OffsetClass, law: MarkLaw, origin_law: MarkLaw | None = None,
                        direction_law=None, randomness=None, d: int = 2) -> MarkedLatticeSample:
    """A random affine lattice with an independent fresh marking and a direction u ~ lambda."""
    is_int = offset_class.kind == "integer"
    if is_int != (origin_law is not None):
        raise ConfigError("origin_law must be given exactly for the integer offset class")
    h = as_handle(randomness)
    lat = sample_affine(offset_class, d, h.split(0))
    seed = h.split(1).key()
    field = FieldSpec.origin_special(origin_law, law, seed) if is_int else FieldSpec.iid(law, seed)
    u = None
    if direction_law is not None:
        u = direction_law.sample(h.split(2).generator(), 1)[0]
    return MarkedLatticeSample(lat, field, u)
