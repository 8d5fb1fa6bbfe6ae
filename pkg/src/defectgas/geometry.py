"""Open convex regions, exact lattice point enumeration and defect point sets."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .errors import InvalidDimension, UnboundedRegion
from .lattice import AffineLattice, FlowTime, LatticeBatch, UnimodularMatrix, flow_matrix, rotation_to_direction
from .random_field import FieldSpec, MarkPredicate, marks

MAX_CANDIDATES = 50_000_000

REGION_BALL, REGION_BOX, REGION_CYLINDER, REGION_ANNULUS = 0, 1, 2, 3


def ball_volume(d: int, R: float) -> float:
    return math.pi ** (d / 2) / special.gamma(d / 2 + 1) * R**d


class ConvexRegion:
    """Bounded open region with a membership test and an axis-aligned bounding box."""

    kind: int
    dim: int

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return _kernels._pykernels.inside(self.kind, self.kernel_params(), x)

    def kernel_params(self) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def check_bounded(self):
        lo, hi = self.bounding_box()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnboundedRegion(f"{type(self).__name__} is unbounded")


@dataclass(frozen=True, eq=False)
class Ball(ConvexRegion):
    center: np.ndarray
    radius: float
    kind = REGION_BALL

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    @property
    def dim(self):
        return self.center.size

    def kernel_params(self):
        return np.concatenate([self.center, [self.radius]])

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def volume(self):
        return ball_volume(self.dim, self.radius)

    def rotated(self, K) -> "Ball":
        return Ball(self.center @ np.asarray(K), self.radius)


@dataclass(frozen=True, eq=False)
class Box(ConvexRegion):
    lo: np.ndarray
    hi: np.ndarray
    kind = REGION_BOX

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape:
            raise InvalidDimension("box corners differ in dimension")

    @property
    def dim(self):
        return self.lo.size

    def kernel_params(self):
        return np.concatenate([self.lo, self.hi])

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def volume(self):
        return float(np.prod(np.clip(self.hi - self.lo, 0, None)))


@dataclass(frozen=True, eq=False)
class Cylinder(ConvexRegion):
    """Z(T, R) = {0 < y1 < T, |y_perp| < R} in local coordinates y_i = x . frame[i]."""

    T: float
    R: float
    frame: np.ndarray | None = None
    d: int = 2
    kind = REGION_CYLINDER

    def __post_init__(self):
        if not (self.T > 0 and self.R > 0):
            raise ValueError("cylinder length and radius must be positive")
        frame = np.eye(self.d) if self.frame is None else np.asarray(self.frame, dtype=np.float64)
        if frame.shape != (frame.shape[0], frame.shape[0]) or not np.allclose(frame @ frame.T, np.eye(frame.shape[0]), atol=1e-12):
            raise ValueError("cylinder frame must be an orthogonal matrix")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "d", frame.shape[0])

    @property
    def dim(self):
        return self.d

    def kernel_params(self):
        return np.concatenate([[self.T, self.R], self.frame.ravel()])

    def bounding_box(self):
        axis = self.frame[0]
        ends = np.stack([np.zeros(self.d), self.T * axis])
        spread = self.R * np.sqrt(np.clip(1.0 - axis * axis, 0.0, None))
        return ends.min(axis=0) - spread, ends.max(axis=0) + spread

    def volume(self):
        return self.T * ball_volume(self.d - 1, self.R)

    def rotated(self, K) -> "Cylinder":
        return Cylinder(self.T, self.R, self.frame @ np.asarray(K))


@dataclass(frozen=True, eq=False)
class Annulus(ConvexRegion):
    """{r1 < |x - center| < r2}.  Not convex, but bounded with a null boundary."""

    r1: float
    r2: float
    center: np.ndarray | None = None
    d: int = 2
    kind = REGION_ANNULUS

    def __post_init__(self):
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=np.float64)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "d", c.size)
        if not 0 <= self.r1 <= self.r2:
            raise ValueError("annulus radii must satisfy 0 <= r1 <= r2")

    @property
    def dim(self):
        return self.d

    def kernel_params(self):
        return np.concatenate([self.center, [self.r1, self.r2]])

    def bounding_box(self):
        return self.center - self.r2, self.center + self.r2

    def volume(self):
        return ball_volume(self.d, self.r2) - ball_volume(self.d, self.r1)

    def rotated(self, K) -> "Annulus":
        return Annulus(self.r1, self.r2, self.center @ np.asarray(K))


@dataclass(frozen=True)
class PointSet:
    """Integer indices ``m`` (n, d) and the corresponding points (n, d), sorted by ``m``."""

    m: np.ndarray
    points: np.ndarray
    a: np.ndarray | None = None
    z: np.ndarray | None = None

    def __len__(self):
        return self.m.shape[0]

    def __iter__(self):
        return iter(zip(map(tuple, self.m.tolist()), self.points))

    def to_csv(self) -> str:
        d = self.m.shape[1] if self.m.ndim == 2 else 0
        cols = [f"m{i}" for i in range(d)] + [f"x{i}" for i in range(d)]
        if self.a is not None:
            cols += ["a"] + [f"z{i}" for i in range(d)]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for j in range(len(self)):
            row = [str(int(v)) for v in self.m[j]] + [repr(float(v)) for v in self.points[j]]
            if self.a is not None:
                row += [str(int(self.a[j]))] + [repr(float(v)) for v in self.z[j]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def _sorted(m, p, *extra):
    if len(m) == 0:
        return (m, p) + extra
    order = np.lexsort(m.T[::-1])
    return (m[order], p[order]) + tuple(e[order] for e in extra)


def candidate_sites(spec: AffineLattice, lo, hi, dilation: float = 0.0):
    """Every (m, point) whose point may lie in the box [lo, hi] dilated by a ball.

    The coefficient range of each reduced basis vector is bounded through the
    dual basis; the result is a superset and is filtered by the caller.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    red = spec.reduced
    Binv = red.inverse
    a = lo[:, None] * Binv
    b = hi[:, None] * Binv
    cmin = np.minimum(a, b).sum(axis=0) - dilation * np.linalg.norm(Binv, axis=0)
    cmax = np.maximum(a, b).sum(axis=0) + dilation * np.linalg.norm(Binv, axis=0)
    kmin = np.ceil(cmin - red.offset - 1e-7).astype(np.int64)
    kmax = np.floor(cmax - red.offset + 1e-7).astype(np.int64)
    d = spec.dim
    if np.any(kmin > kmax):
        return np.zeros((0, d), dtype=np.int64), np.zeros((0, d))
    total = int(np.prod(kmax - kmin + 1))
    if total > MAX_CANDIDATES:
        raise MemoryError(f"{total} candidate sites; shrink the region")
    axes = [np.arange(x, y + 1, dtype=np.int64) for x, y in zip(kmin, kmax)]
    k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    m = k @ red.U
    return m, spec.points(m)


def enumerate_points(spec: AffineLattice, region: ConvexRegion) -> PointSet:
    """All (m, (m + xi) M) with the point strictly inside ``region``."""
    if region.dim != spec.dim:
        raise InvalidDimension("region and lattice dimensions differ")
    region.check_bounded()
    lo, hi = region.bounding_box()
    m, p = candidate_sites(spec, lo, hi)
    inside = region.contains(p) if len(m) else np.zeros(0, dtype=bool)
    return PointSet(*_sorted(m[inside], p[inside]))


def origin_site(spec: AffineLattice):
    """The index m with (m + xi) M = 0 when xi is integral, else None."""
    if not spec.offset_is_integral:
        return None
    return (-spec.offset).astype(np.int64)


def count_theta(spec: AffineLattice, region: ConvexRegion, exclude_origin: bool = False) -> int:
    pts = enumerate_points(spec, region)
    n = len(pts)
    ref = origin_site(spec)
    if exclude_origin and ref is not None and n:
        n -= int(np.count_nonzero(np.all(pts.m == ref, axis=1)))
    return n


def count_marked(spec: AffineLattice, field: FieldSpec, region: ConvexRegion, predicate=None) -> int:
    """Number of points in ``region`` whose mark satisfies ``predicate`` (all marks if None)."""
    pts = enumerate_points(spec, region)
    if predicate is None or not len(pts):
        return len(pts)
    a, z = marks(field, pts.m)
    return int(np.count_nonzero(predicate(a, z)))


def project_J(w, t) -> np.ndarray:
    """w_perp + e^{-d t} (e1 . w) e1; the transverse part alone when t is infinite."""
    w = np.array(w, dtype=np.float64)
    if isinstance(t, FlowTime):
        t = t.t
    d = w.shape[-1]
    out = w.copy()
    out[..., 0] = 0.0 if math.isinf(t) else math.exp(-d * t) * w[..., 0]
    return out


@dataclass(frozen=True, eq=False)
class DefectScene:
    """A lattice, a marking field, the scatterer radius r and a launch-offset function beta."""

    spec: AffineLattice
    field: FieldSpec
    r: float
    beta: object = None

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("scatterer radius must be positive")
        if self.beta is None:
            from .free_path import BetaFunction

            object.__setattr__(self, "beta", BetaFunction.zero())

    @property
    def dim(self):
        return self.spec.dim

    def relative_shifts(self, m):
        """z_xi(m): z(m) - z(-xi) for integral xi, else z(m); also returns a(m)."""
        a, z = marks(self.field, m)
        ref = origin_site(self.spec)
        if ref is not None:
            z = z - marks(self.field, ref[None, :])[1][0]
        return a, z

    def shift_bound(self, u) -> float:
        extra = self.field.r_max if origin_site(self.spec) is not None else 0.0
        return self.field.r_max + extra + float(np.linalg.norm(self.beta(u)))


def defect_points_physical(scene: DefectScene, u, window: ConvexRegion) -> PointSet:
    """{(m + xi) M + r [z_xi(m) - beta(u)] : a(m) = 1} inside ``window``."""
    window.check_bounded()
    u = np.asarray(u, dtype=np.float64)
    lo, hi = window.bounding_box()
    m, p = candidate_sites(scene.spec, lo, hi, scene.r * (1.0 + scene.shift_bound(u)))
    if not len(m):
        return PointSet(m, p, np.zeros(0, np.int8), p.copy())
    a, z = scene.relative_shifts(m)
    x = p + scene.r * (z - scene.beta(u))
    ok = a.astype(bool) & window.contains(x)
    return PointSet(*_sorted(m[ok], x[ok], a[ok], z[ok]))


def defect_points_rotated(scene: DefectScene, u, t, window: ConvexRegion) -> PointSet:
    """{(m + xi) M E Phi^t + J_t([z_xi(m) - beta(u)] E) : a(m) = 1} inside ``window``."""
    window.check_bounded()
    t = t.t if isinstance(t, FlowTime) else float(t)
    u = np.asarray(u, dtype=np.float64)
    d = scene.dim
    E = rotation_to_direction(u)
    G = E @ flow_matrix(t, d).entries
    moved = AffineLattice(UnimodularMatrix.renormalized(scene.spec.basis.entries @ G), scene.spec.offset)
    lo, hi = window.bounding_box()
    m, _ = candidate_sites(moved, lo, hi, scene.shift_bound(u))
    if not len(m):
        empty = np.zeros((0, d))
        return PointSet(m, empty, np.zeros(0, np.int8), empty)
    a, z = scene.relative_shifts(m)
    base = scene.spec.points(m) @ G
    x = base + project_J((z - scene.beta(u)) @ E, t)
    ok = a.astype(bool) & window.contains(x)
    return PointSet(*_sorted(m[ok], x[ok], a[ok], z[ok]))


def count_batch(lattices: LatticeBatch, region: ConvexRegion, *, exclude=None, ref=None, field=None,
                keys=None, E=None, bvec=None, shifted=False, dilation=0.0) -> np.ndarray:
    """Kernel-backed counts of (optionally kept and transversally shifted) points per lattice."""
    n, d = len(lattices), lattices.dim
    region.check_bounded()
    lo, hi = region.bounding_box()
    marked = field is not None and not _trivial(field)
    fi, fp = (field or FieldSpec.iid(_unit_law())).kernel_params(d)
    out = np.zeros(n, dtype=np.int64)
    _kernels.count_batch(
        lattices.M, lattices.xi, lattices.Binv, lattices.U, lattices.xr,
        region.kind, np.ascontiguousarray(region.kernel_params()), lo, hi, float(dilation),
        _or(E, lambda: np.broadcast_to(np.eye(d), (n, d, d)).copy()),
        _or(bvec, lambda: np.zeros((n, d))),
        _or(keys, lambda: np.zeros(n, dtype=np.uint64), np.uint64),
        _or(ref, lambda: np.zeros((n, d), dtype=np.int64), np.int64),
        _or(exclude, lambda: np.zeros(n, dtype=np.int8), np.int8),
        fi, fp, int(marked), int(bool(shifted)), out,
    )
    return out


def _or(x, default, dtype=np.float64):
    return default() if x is None else np.ascontiguousarray(x, dtype=dtype)


def _unit_law():
    from .random_field import MarkLaw

    return MarkLaw(1.0)


def _trivial(field: FieldSpec) -> bool:
    """True when every site is kept with zero displacement."""
    law = field.law
    plain = law.keep_prob == 1.0 and law.displacement.kind == "none"
    if field.kind == "origin-special":
        o = field.origin_law
        plain = plain and o.keep_prob == 1.0 and o.displacement.kind == "none"
    return plain


__all__ = [
    "Annulus",
    "Ball",
    "Box",
    "ConvexRegion",
    "Cylinder",
    "DefectScene",
    "MarkPredicate",
    "PointSet",
    "candidate_sites",
    "count_batch",
    "count_marked",
    "count_theta",
    "defect_points_physical",
    "defect_points_rotated",
    "enumerate_points",
    "origin_site",
    "project_J",
]
