"""Unimodular matrices, the diagonal flow, direction frames and affine lattices.

Vectors are rows and groups act from the right, so the affine lattice with
basis ``M`` and offset ``xi`` is the point set ``{(m + xi) M : m in Z^d}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import AntipodalDirection, InvalidDimension, InvalidOffset, NotUnimodular

DET_TOL = 1e-9


class UnimodularMatrix:
    """A real d x d matrix with determinant one (to ``DET_TOL``)."""

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidDimension(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 2:
            raise InvalidDimension("dimension must be at least 2")
        det = np.linalg.det(a)
        if not abs(det - 1.0) <= DET_TOL:
            raise NotUnimodular(f"det = {det!r}; use UnimodularMatrix.renormalized to repair")
        a.setflags(write=False)
        self._a = a

    @classmethod
    def renormalized(cls, entries) -> "UnimodularMatrix":
        """Explicit repair: divide by det^(1/d).  Negative determinants are rejected."""
        a = np.array(entries, dtype=np.float64)
        det = np.linalg.det(a)
        if det <= 0:
            raise NotUnimodular(f"cannot renormalize a matrix with det = {det!r}")
        return cls(a / det ** (1.0 / a.shape[0]))

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __matmul__(self, other):
        other = other.entries if isinstance(other, UnimodularMatrix) else np.asarray(other)
        return UnimodularMatrix(self._a @ other)

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, UnimodularMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"UnimodularMatrix({self._a.tolist()!r})"


def identity(d: int) -> UnimodularMatrix:
    return UnimodularMatrix(np.eye(d))


@dataclass(frozen=True)
class FlowTime:
    t: float

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError("flow time must be non-negative")

    @property
    def radius(self) -> float:
        return math.exp(-self.t)

    @classmethod
    def from_radius(cls, r: float) -> "FlowTime":
        if not 0 < r <= 1:
            raise ValueError("radius must lie in (0, 1]")
        return cls(-math.log(r))


def flow_matrix(t: float, d: int) -> UnimodularMatrix:
    """diag(e^{-(d-1)t}, e^t, ..., e^t)."""
    if d < 2:
        raise InvalidDimension("dimension must be at least 2")
    diag = np.full(d, math.exp(t))
    diag[0] = math.exp(-(d - 1) * t)
    return UnimodularMatrix(np.diag(diag))


def rotation_to_direction(v) -> np.ndarray:
    """Rotation K in SO(d) with ``e1 @ K.T == v`` (equivalently ``v @ K == e1``).

    K rotates in the plane spanned by e1 and v and fixes its orthogonal
    complement.  Undefined at v = -e1.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise InvalidDimension("direction must be a vector of length >= 2")
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    d = v.size
    c = v[0]
    if c + 1.0 <= 1e-9:
        raise AntipodalDirection("no plane rotation takes e1 to -e1 continuously")
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = np.outer(v, e1) - np.outer(e1, v)
    return np.eye(d) + w + (w @ w) / (1.0 + c)


def rotations_to_directions(vs) -> np.ndarray:
    """Batch version of :func:`rotation_to_direction` for an (n, d) array."""
    vs = np.asarray(vs, dtype=np.float64)
    n, d = vs.shape
    c = vs[:, 0]
    if np.any(c + 1.0 <= 1e-9):
        raise AntipodalDirection("no plane rotation takes e1 to -e1 continuously")
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = vs[:, :, None] * e1[None, None, :] - e1[None, :, None] * vs[:, None, :]
    return np.eye(d)[None] + w + (w @ w) / (1.0 + c)[:, None, None]


def lll_reduce(basis, delta: float = 0.99):
    """LLL-reduce the rows of ``basis``.

    Returns ``(reduced, U)`` with ``reduced == U @ basis`` and ``U`` an
    integer matrix of determinant +-1.
    """
    B = np.array(basis, dtype=np.float64)
    d = B.shape[0]
    U = np.eye(d, dtype=np.int64)

    def gram_schmidt(B):
        Bs = np.zeros_like(B)
        mu = np.zeros((d, d))
        for i in range(d):
            Bs[i] = B[i]
            for j in range(i):
                mu[i, j] = B[i] @ Bs[j] / (Bs[j] @ Bs[j])
                Bs[i] = Bs[i] - mu[i, j] * Bs[j]
        return Bs, mu

    Bs, mu = gram_schmidt(B)
    k = 1
    guard = 0
    while k < d:
        guard += 1
        if guard > 100000:
            raise RuntimeError("LLL did not terminate")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                B[k] -= q * B[j]
                U[k] -= q * U[j]
                Bs, mu = gram_schmidt(B)
        lhs = Bs[k] @ Bs[k]
        rhs = (delta - mu[k, k - 1] ** 2) * (Bs[k - 1] @ Bs[k - 1])
        if lhs >= rhs:
            k += 1
        else:
            B[[k, k - 1]] = B[[k - 1, k]]
            U[[k, k - 1]] = U[[k - 1, k]]
            Bs, mu = gram_schmidt(B)
            k = max(k - 1, 1)
    return B, U


def gauss_reduce_batch(bases):
    """Lagrange-Gauss reduction of a batch of 2x2 bases, shape (n, 2, 2).

    Returns ``(reduced, U)`` with ``reduced[i] == U[i] @ bases[i]``.
    """
    B = np.array(bases, dtype=np.float64)
    n = B.shape[0]
    U = np.broadcast_to(np.eye(2, dtype=np.int64), (n, 2, 2)).copy()
    active = np.ones(n, dtype=bool)
    for _ in range(200):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        b1, b2 = B[idx, 0], B[idx, 1]
        n1 = np.einsum("ij,ij->i", b1, b1)
        n2 = np.einsum("ij,ij->i", b2, b2)
        swap = n2 < n1
        if swap.any():
            s = idx[swap]
            B[s] = B[s][:, ::-1]
            U[s] = U[s][:, ::-1]
        b1, b2 = B[idx, 0], B[idx, 1]
        q = np.rint(np.einsum("ij,ij->i", b1, b2) / np.einsum("ij,ij->i", b1, b1))
        B[idx, 1] = b2 - q[:, None] * b1
        U[idx, 1] = U[idx, 1] - q.astype(np.int64)[:, None] * U[idx, 0]
        nb1 = np.einsum("ij,ij->i", B[idx, 0], B[idx, 0])
        nb2 = np.einsum("ij,ij->i", B[idx, 1], B[idx, 1])
        done = (q == 0) & (nb2 >= nb1)
        active[idx[done]] = False
    else:
        raise RuntimeError("Gauss reduction did not terminate")
    return B, U


@dataclass(frozen=True)
class OffsetClass:
    """Arithmetic type of a launch offset: integer, rational m/s, or irrational."""

    kind: str
    s: int | None = None
    m: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("integer", "rational", "irrational"):
            raise InvalidOffset(f"unknown offset class {self.kind!r}")
        if self.kind == "rational":
            if self.s is None or self.m is None or self.s < 2:
                raise InvalidOffset("rational offset needs s >= 2 and an integer vector m")
            if math.gcd(self.s, *self.m) != 1:
                raise InvalidOffset(f"gcd(m, s) must be 1, got m={self.m}, s={self.s}")

    @classmethod
    def integer(cls):
        return cls("integer")

    @classmethod
    def irrational(cls):
        return cls("irrational")

    @classmethod
    def rational(cls, s: int, m):
        return cls("rational", int(s), tuple(int(x) for x in m))

    @property
    def tag(self) -> int:
        return {"integer": 0, "rational": 1, "irrational": 2}[self.kind]

    @property
    def denominator(self) -> int:
        """The index used for the limit law F_s: 1 for integer, s for rational, 0 otherwise."""
        return {"integer": 1, "rational": self.s, "irrational": 0}[self.kind]

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "rational":
            out.update(s=self.s, m=list(self.m))
        return out

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "rational":
            return cls.rational(d["s"], d["m"])
        return cls(d["kind"])

    @classmethod
    def classify(cls, xi, max_denominator: int = 64, tol: float = 1e-12) -> "OffsetClass":
        """Best-effort numeric classification of an offset vector.

        Exactly integral vectors are ``integer``; vectors within ``tol`` of a
        rational with denominator <= ``max_denominator`` are ``rational``;
        everything else is reported ``irrational``.
        """
        xi = np.asarray(xi, dtype=np.float64)
        if np.all(xi == np.round(xi)):
            return cls.integer()
        fracs = [Fraction(float(x)).limit_denominator(max_denominator) for x in xi]
        if all(abs(float(f) - x) <= tol for f, x in zip(fracs, xi)):
            s = math.lcm(*(f.denominator for f in fracs))
            if s == 1:
                return cls.integer()
            return cls.rational(s, [int(f * s) for f in fracs])
        return cls.irrational()


@dataclass(frozen=True, eq=False)
class AffineLattice:
    """The point set ``(Z^d + offset) @ basis``."""

    basis: UnimodularMatrix
    offset: np.ndarray = field(default=None)

    def __post_init__(self):
        basis = self.basis if isinstance(self.basis, UnimodularMatrix) else UnimodularMatrix(self.basis)
        object.__setattr__(self, "basis", basis)
        off = np.zeros(basis.dim) if self.offset is None else np.array(self.offset, dtype=np.float64)
        if off.shape != (basis.dim,):
            raise InvalidDimension(f"offset must have shape ({basis.dim},)")
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def offset_is_integral(self) -> bool:
        return bool(np.all(self.offset == np.round(self.offset)))

    def point(self, m) -> np.ndarray:
        return lattice_point(self, m)

    def points(self, ms) -> np.ndarray:
        """Points for an (n, d) integer array, evaluated in a fixed summation order."""
        ms = np.asarray(ms, dtype=np.float64)
        M = self.basis.entries
        c = ms + self.offset
        out = c[:, 0:1] * M[0]
        for j in range(1, self.dim):
            out = out + c[:, j : j + 1] * M[j]
        return out

    def transformed(self, g) -> "AffineLattice":
        """The lattice ``(Z^d + offset) @ basis @ g`` for a unimodular ``g``."""
        g = g.entries if isinstance(g, UnimodularMatrix) else np.asarray(g)
        return AffineLattice(UnimodularMatrix(self.basis.entries @ g), self.offset)

    @cached_property
    def reduced(self) -> "ReducedBasis":
        return ReducedBasis.of(self)

    def to_dict(self):
        return {"basis": self.basis.entries.tolist(), "offset": self.offset.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(UnimodularMatrix(d["basis"]), d["offset"])

    @classmethod
    def integer_lattice(cls, d: int, offset=None) -> "AffineLattice":
        return cls(identity(d), offset)


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """LLL-reduced copy of a lattice basis used for coefficient bounds.

    ``basis == U @ original`` and the offset in reduced coordinates is
    ``offset @ inv(U)``; reduced index ``k`` corresponds to original index
    ``k @ U``.
    """

    basis: np.ndarray
    inverse: np.ndarray
    U: np.ndarray
    offset: np.ndarray
    shortest: float

    @classmethod
    def of(cls, lat: AffineLattice) -> "ReducedBasis":
        B, U = lll_reduce(lat.basis.entries)
        Uinv = np.rint(np.linalg.inv(U)).astype(np.int64)
        off = lat.offset @ Uinv
        norms = np.linalg.norm(B, axis=1)
        for a in (B, U, off):
            a.setflags(write=False)
        return cls(B, np.linalg.inv(B), U, off, float(norms.min()))


def lattice_point(lat: AffineLattice, m) -> np.ndarray:
    """``(m + xi) M`` for one integer vector ``m``."""
    return lat.points(np.asarray(m, dtype=np.float64)[None, :])[0]


@dataclass(frozen=True, eq=False)
class LatticeBatch:
    """Packed arrays for n affine lattices, in the layout the kernels expect.

    ``M`` original bases, ``xi`` offsets, ``Binv`` inverses of reduced bases,
    ``U`` the integer change of basis (reduced = U @ M) and ``xr`` the offsets
    in reduced coordinates.
    """

    M: np.ndarray
    xi: np.ndarray
    Binv: np.ndarray
    U: np.ndarray
    xr: np.ndarray
    shortest: np.ndarray

    def __len__(self):
        return self.M.shape[0]

    @property
    def dim(self) -> int:
        return self.M.shape[1]

    @classmethod
    def from_lattice(cls, lat: AffineLattice) -> "LatticeBatch":
        red = lat.reduced
        return cls(
            np.ascontiguousarray(lat.basis.entries[None]),
            np.ascontiguousarray(lat.offset[None]),
            np.ascontiguousarray(red.inverse[None]),
            np.ascontiguousarray(red.U[None].astype(np.int64)),
            np.ascontiguousarray(red.offset[None]),
            np.array([red.shortest]),
        )

    @classmethod
    def from_arrays(cls, Ms, xis) -> "LatticeBatch":
        Ms = np.ascontiguousarray(Ms, dtype=np.float64)
        xis = np.ascontiguousarray(xis, dtype=np.float64)
        n, d, _ = Ms.shape
        if d == 2:
            B, U = gauss_reduce_batch(Ms)
            det = U[:, 0, 0] * U[:, 1, 1] - U[:, 0, 1] * U[:, 1, 0]
            Uinv = np.empty_like(U)
            Uinv[:, 0, 0] = U[:, 1, 1] * det
            Uinv[:, 1, 1] = U[:, 0, 0] * det
            Uinv[:, 0, 1] = -U[:, 0, 1] * det
            Uinv[:, 1, 0] = -U[:, 1, 0] * det
        else:
            B = np.empty_like(Ms)
            U = np.empty((n, d, d), dtype=np.int64)
            for i in range(n):
                B[i], U[i] = lll_reduce(Ms[i])
            Uinv = np.rint(np.linalg.inv(U)).astype(np.int64)
        xr = np.einsum("ni,nij->nj", xis, Uinv.astype(np.float64))
        shortest = np.linalg.norm(B, axis=2).min(axis=1)
        return cls(Ms, xis, np.ascontiguousarray(np.linalg.inv(B)), np.ascontiguousarray(U), np.ascontiguousarray(xr), shortest)
