"""Stateless keyed hash used for every reproducible random draw in the package.

The mixer is the splitmix64 finalizer.  A *site hash* folds an integer vector
into a 64-bit key; a *draw* derives independent words from a site hash by slot
number.  The compiled kernels implement the identical arithmetic, so values
agree bit for bit between backends.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z):
    """splitmix64 finalizer on uint64 scalars or arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def as_u64(x):
    """Two's-complement view of signed integers as uint64."""
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)
    arr = np.asarray(x)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64).astype(np.uint64)


def slot_const(slot):
    with np.errstate(over="ignore"):
        return GOLDEN * (np.uint64(slot) + np.uint64(1))


def site_hash(key, m):
    """Hash of ``key`` and integer vectors ``m`` (last axis is the coordinate)."""
    m = as_u64(m)
    h = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for i in range(m.shape[-1]):
            h = mix64(h ^ (m[..., i] + slot_const(i)))
    return h


def draw(h, slot):
    return mix64(np.asarray(h, dtype=np.uint64) ^ slot_const(slot))


def to_unit(x):
    """Map uint64 words to doubles in [0, 1) using the top 53 bits."""
    return (np.asarray(x, dtype=np.uint64) >> _S11).astype(np.float64) * _INV53


def derive_key(seed, *words):
    """Key for a (seed, word, word, ...) lineage; pure function of its inputs."""
    h = mix64(as_u64(seed) ^ GOLDEN)
    with np.errstate(over="ignore"):
        for i, w in enumerate(words):
            h = mix64(h ^ (as_u64(w) + slot_const(i)))
    return h
