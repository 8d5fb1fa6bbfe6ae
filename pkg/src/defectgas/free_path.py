"""Free path lengths in defect scenes and their empirical distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._parallel import map_chunks
from .errors import ConfigError, InvalidLaunch
from .geometry import DefectScene, _trivial
from .lattice import LatticeBatch, rotation_to_direction
from .random_field import marks, resampled_keys
from .stats import SurvivalAccumulator, as_handle

DEFAULT_T_MAX = 50.0


@dataclass(frozen=True, eq=False)
class DirectionLaw:
    """Absolutely continuous law on the unit sphere.

    ``sphere``: uniform.  ``cap``: uniform on {v : angle(v, axis) <= angle}.
    ``density`` (d = 2 only): piecewise constant density in the polar angle,
    ``weights[k]`` on [2 pi k / N, 2 pi (k + 1) / N).
    """

    kind: str
    d: int = 2
    axis: np.ndarray | None = None
    angle: float | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("sphere", "cap", "density"):
            raise ConfigError(f"unknown direction law {self.kind!r}")
        if self.kind == "cap":
            axis = np.asarray(self.axis, dtype=np.float64)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
                # normalise once; re-normalising a unit vector can move its last bit
                axis = axis / np.linalg.norm(axis)
            object.__setattr__(self, "axis", axis)
            object.__setattr__(self, "d", axis.size)
            if not 0 < self.angle <= math.pi:
                raise ConfigError("cap angle must lie in (0, pi]")
        if self.kind == "density":
            w = np.asarray(self.weights, dtype=np.float64)
            if self.d != 2:
                raise ConfigError("tabulated densities are supported for d = 2")
            if w.ndim != 1 or np.any(w < 0) or not w.sum() > 0:
                raise ConfigError("density weights must be non-negative with positive sum")
            object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def sphere(cls, d: int = 2):
        return cls("sphere", d)

    @classmethod
    def cap(cls, axis, angle: float):
        return cls("cap", axis=axis, angle=float(angle))

    @classmethod
    def density(cls, weights):
        return cls("density", 2, weights=weights)

    @property
    def rotation_invariant(self) -> bool:
        return self.kind == "sphere"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.d
        if self.kind == "sphere":
            g = rng.standard_normal((n, d))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        if self.kind == "density":
            w = self.weights
            k = rng.choice(w.size, size=n, p=w)
            phi = 2.0 * math.pi * (k + rng.random(n)) / w.size
            return np.stack([np.cos(phi), np.sin(phi)], axis=1)
        local = self._cap_around_e1(rng, n)
        if self.axis[0] <= -1.0 + 1e-12:
            return -local
        return local @ rotation_to_direction(self.axis).T

    def _cap_around_e1(self, rng, n):
        d = self.d
        alpha = self.angle
        if d == 2:
            phi = rng.uniform(-alpha, alpha, n)
            return np.stack([np.cos(phi), np.sin(phi)], axis=1)
        # cos of the polar angle has density proportional to (1 - w^2)^((d-3)/2) on [cos alpha, 1]
        lo = math.cos(alpha)
        w = np.empty(n)
        todo = np.arange(n)
        while todo.size:
            cand = rng.uniform(lo, 1.0, todo.size)
            acc = rng.random(todo.size) <= (1.0 - cand * cand) ** ((d - 3) / 2.0)
            w[todo[acc]] = cand[acc]
            todo = todo[~acc]
        g = rng.standard_normal((n, d - 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.concatenate([w[:, None], np.sqrt(1.0 - w * w)[:, None] * g], axis=1)

    def to_dict(self):
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "cap":
            out.update(axis=self.axis.tolist(), angle=self.angle)
        if self.kind == "density":
            out["weights"] = self.weights.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "cap":
            return cls.cap(d["axis"], d["angle"])
        if d["kind"] == "density":
            return cls.density(d["weights"])
        return cls.sphere(d.get("d", 2))


@dataclass(frozen=True, eq=False)
class BetaFunction:
    """Launch offset beta(v): zero, forward (beta(v) = v), or a custom continuous map."""

    kind: str = "zero"
    fn: object = None
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "forward", "custom"):
            raise ConfigError(f"unknown beta kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None and self.table is None:
            raise ConfigError("custom beta needs a function or a table")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def forward(cls):
        return cls("forward")

    @classmethod
    def custom(cls, fn):
        return cls("custom", fn=fn)

    @classmethod
    def tabulated(cls, values):
        """d = 2: values (N, 2) at polar angles 2 pi k / N, periodic linear interpolation."""
        return cls("custom", table=np.asarray(values, dtype=np.float64))

    def __call__(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(v)
        if self.kind == "forward":
            return v.copy()
        if self.table is not None:
            vv = np.atleast_2d(v)
            N = len(self.table)
            pos = (np.arctan2(vv[:, 1], vv[:, 0]) % (2 * math.pi)) / (2 * math.pi) * N
            i0 = np.floor(pos).astype(int) % N
            f = (pos - np.floor(pos))[:, None]
            out = (1 - f) * self.table[i0] + f * self.table[(i0 + 1) % N]
            return out if v.ndim == 2 else out[0]
        if v.ndim == 2:
            return np.array([self.fn(x) for x in v], dtype=np.float64)
        return np.asarray(self.fn(v), dtype=np.float64)

    def admissible(self, v) -> np.ndarray:
        """True where the ray beta(v) + t v, t > 0, avoids the open unit ball."""
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        b = np.atleast_2d(self(v))
        s = np.einsum("ij,ij->i", b, v)
        nb2 = np.einsum("ij,ij->i", b, b)
        perp2 = nb2 - s * s
        return np.where(s >= 0, nb2 >= 1.0, perp2 >= 1.0)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.table is not None:
            out["table"] = self.table.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "custom":
            if "table" not in d:
                raise ConfigError("only tabulated custom beta functions can be deserialised")
            return cls.tabulated(d["table"])
        return cls(d["kind"])


@dataclass(frozen=True)
class PathSample:
    direction: np.ndarray
    tau: float
    scaled: float
    censored: bool = False


def _scene_kernel_args(scene: DefectScene):
    batch = LatticeBatch.from_lattice(scene.spec)
    delta = max(1.0, float(batch.shortest[0]))
    fi, fp = scene.field.kernel_params(scene.dim)
    marked = int(not _trivial(scene.field))
    W = scene.r * (1.0 + scene.field.r_max)
    return batch, delta, fi, fp, marked, W


def _trace(scene, args, Q, V, keys, skip, use_skip, lmax):
    batch, delta, fi, fp, marked, W = args
    n = Q.shape[0]
    t = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    _kernels.free_path_batch(
        batch.M, batch.xi, batch.Binv, batch.U, batch.xr,
        np.ascontiguousarray(Q, dtype=np.float64), np.ascontiguousarray(V, dtype=np.float64),
        np.ascontiguousarray(keys, dtype=np.uint64), np.ascontiguousarray(skip, dtype=np.int64),
        np.ascontiguousarray(use_skip, dtype=np.int8),
        float(scene.r), float(W), float(delta), float(lmax), fi, fp, marked, t, status,
    )
    return t, status


def free_path(scene: DefectScene, q, v, T_max_scaled: float = DEFAULT_T_MAX) -> PathSample:
    """First entry time of q + t v into the open scatterer balls, censored at r^(1-d) T_max_scaled."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    d = scene.dim
    scale = scene.r ** (d - 1)
    lmax = T_max_scaled / scale
    args = _scene_kernel_args(scene)
    t, status = _trace(scene, args, q[None], v[None], np.array([scene.field.key]), np.zeros((1, d)), np.zeros(1), lmax)
    if status[0] == 2:
        raise InvalidLaunch("launch point lies strictly inside a scatterer")
    if status[0] == 1:
        return PathSample(v, math.inf, math.inf, True)
    return PathSample(v, float(t[0]), float(t[0]) * scale, False)


def _launch_site(scene: DefectScene, q):
    """The lattice index at q when q is a lattice point, else None."""
    spec = scene.spec
    coeff = q @ np.linalg.inv(spec.basis.entries) - spec.offset
    near = np.rint(coeff)
    if np.max(np.abs(coeff - near)) > 1e-9:
        return None
    m0 = near.astype(np.int64)
    if not np.array_equal(spec.point(m0), q):
        raise ConfigError("launch point is within 1e-9 of a lattice site but not on it; pass the site exactly")
    return m0


def _own_hit(beta_v, v, r):
    """Entry time into the launch site's own ball from offset r beta(v), inf if the ray avoids it."""
    s = -np.einsum("ij,ij->i", beta_v, v)
    rho2 = np.einsum("ij,ij->i", beta_v, beta_v) - s * s
    hit = (s > 0) & (rho2 < 1.0)
    out = np.full(len(v), math.inf)
    out[hit] = r * (s[hit] - np.sqrt(1.0 - rho2[hit]))
    return out


def _empirical(scene: DefectScene, direction_law: DirectionLaw, n: int, grid, launch, beta, r,
               T_max_scaled, randomness, workers, averaged: bool, chunk: int):
    if beta is not None or r is not None:
        scene = DefectScene(scene.spec, scene.field, scene.r if r is None else r, scene.beta if beta is None else beta)
    if direction_law.d != scene.dim:
        raise ConfigError("direction law and scene dimensions differ")
    d = scene.dim
    q = np.zeros(d) if launch is None else np.asarray(launch, dtype=np.float64)
    m0 = _launch_site(scene, q)
    handle = as_handle(randomness)
    scale = scene.r ** (d - 1)
    lmax = T_max_scaled / scale
    args = _scene_kernel_args(scene)
    grid = np.asarray(grid, dtype=np.float64)
    field_ = scene.field

    def run(ci, a, b):
        rng = handle.split(ci).generator()
        V = direction_law.sample(rng, b - a)
        keys = resampled_keys(field_, np.arange(a, b), 0xF1E1D) if averaged else np.full(b - a, field_.key, dtype=np.uint64)
        bv = np.atleast_2d(scene.beta(V))
        Q = q + scene.r * bv
        skip = np.zeros((b - a, d), dtype=np.int64)
        use_skip = np.zeros(b - a, dtype=np.int8)
        own = np.full(b - a, math.inf)
        if m0 is not None:
            if np.any(np.einsum("ij,ij->i", bv, bv) < 1.0 - 1e-12):
                raise InvalidLaunch("beta(v) puts the launch point inside its own scatterer")
            _, z0 = marks(field_, np.broadcast_to(m0, (b - a, d)), key=keys)
            Q = Q + scene.r * z0
            skip[:] = m0
            use_skip[:] = 1
            own = _own_hit(bv, V, scene.r)
        t, status = _trace(scene, args, Q, V, keys, skip, use_skip, lmax)
        if np.any(status == 2):
            raise InvalidLaunch("a launch point lies strictly inside a scatterer")
        t = np.minimum(np.where(status == 1, math.inf, t), own)
        scaled = np.where(t <= lmax, t * scale, math.inf)
        return SurvivalAccumulator(grid).add(scaled)

    parts = map_chunks(run, n, chunk, workers)
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    case = "iii" if m0 is not None else "i/ii"
    meta = {
        "kind": "averaged" if averaged else "fixed-field",
        "case": case,
        "lattice": scene.spec.to_dict(),
        "field": field_.to_dict(),
        "r": scene.r,
        "beta": scene.beta.to_dict(),
        "direction_law": direction_law.to_dict(),
        "launch": q.tolist(),
        "T_max_scaled": T_max_scaled,
        "seed": handle.seed,
        "path": list(handle.path),
        "chunk": chunk,
        "backend": _kernels.BACKEND,
    }
    return acc.to_cdf(meta)


def empirical_F_fixed_field(scene: DefectScene, direction_law: DirectionLaw, n: int, grid, *, launch=None,
                            beta=None, r=None, T_max_scaled: float = DEFAULT_T_MAX, randomness=0,
                            workers=None, chunk: int = 4096):
    """Survival of r^(d-1) tau(q + r beta(v) [+ r z(q M^-1)], v; r) over v ~ lambda, one fixed marking."""
    return _empirical(scene, direction_law, n, grid, launch, beta, r, T_max_scaled, randomness, workers, False, chunk)


def empirical_F_averaged(scene: DefectScene, direction_law: DirectionLaw, n: int, grid, *, launch=None,
                         beta=None, r=None, T_max_scaled: float = DEFAULT_T_MAX, randomness=0,
                         workers=None, chunk: int = 4096):
    """As :func:`empirical_F_fixed_field`, but every ray sees a freshly seeded marking."""
    return _empirical(scene, direction_law, n, grid, launch, beta, r, T_max_scaled, randomness, workers, True, chunk)
