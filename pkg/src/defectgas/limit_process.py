"""Monte Carlo for the limiting free path laws and the expectation identities behind them.

A replicate is a Haar-random affine lattice, a direction u ~ lambda and a
fresh marking.  Points keep their axial coordinate x1 and are shifted in the
transverse hyperplane by ((z - z_ref - beta(u)) E(u))_perp (reference terms
only for integral offsets, where the origin point is dropped).  The smallest
x1 of a surviving point inside the unit tube gives every grid survival
P(no point in Z(T, 1)) at once.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from ._parallel import map_chunks
from .errors import ConfigError, InsufficientSamples
from .free_path import BetaFunction, DirectionLaw
from .geometry import ConvexRegion, Cylinder, count_batch
from .haar import sample_affine_batch
from .lattice import LatticeBatch, OffsetClass, rotations_to_directions
from .random_field import FieldSpec, MarkLaw, resampled_keys
from .stats import MomentAccumulator, SurvivalAccumulator, as_handle, combined_halfwidth

DEFAULT_CHUNK = 20_000


@dataclass(frozen=True, eq=False)
class LimitLawSpec:
    """Ingredients of the limiting marked point process.

    ``origin_law`` (the law of the launch site's own mark) and ``beta`` enter
    only for the integer offset class and must be absent otherwise.
    """

    offset_class: OffsetClass
    mark_law: MarkLaw = field(default_factory=lambda: MarkLaw(1.0))
    origin_law: MarkLaw | None = None
    direction_law: DirectionLaw | None = None
    beta: BetaFunction | None = None
    d: int = 2

    def __post_init__(self):
        is_int = self.offset_class.kind == "integer"
        if is_int:
            if self.origin_law is None or self.beta is None:
                raise ConfigError("the integer offset class needs origin_law and beta")
        elif self.origin_law is not None or self.beta is not None:
            raise ConfigError("origin_law and beta only apply to the integer offset class")
        if self.direction_law is None:
            object.__setattr__(self, "direction_law", DirectionLaw.sphere(self.d))
        if self.direction_law.d != self.d:
            raise ConfigError("direction law dimension differs from d")

    @classmethod
    def unmarked(cls, offset_class: OffsetClass, d: int = 2) -> "LimitLawSpec":
        if offset_class.kind == "integer":
            return cls(offset_class, MarkLaw(1.0), MarkLaw(1.0), DirectionLaw.sphere(d), BetaFunction.zero(), d)
        return cls(offset_class, MarkLaw(1.0), None, DirectionLaw.sphere(d), None, d)

    @classmethod
    def for_scene(cls, scene, direction_law: DirectionLaw, averaged: bool = False) -> "LimitLawSpec":
        """Limit law matching a defect scene launched from the origin.

        For a fixed marking the launch site's own mark is the point mass at
        its realised value; averaging over markings uses its law instead.
        """
        from .geometry import origin_site

        spec = scene.spec
        oc = OffsetClass.classify(spec.offset)
        law = scene.field.target_law()
        if oc.kind != "integer":
            return cls(oc, law, None, direction_law, None, scene.dim)
        ref = origin_site(spec)
        if averaged:
            site_law = scene.field.origin_law if scene.field.kind == "origin-special" else law
        else:
            from .random_field import Displacement, mark_at

            z0 = mark_at(scene.field, ref).z
            site_law = MarkLaw(1.0, Displacement.fixed(z0))
        return cls(oc, law, site_law, direction_law, scene.beta, scene.dim)

    @property
    def is_integer(self) -> bool:
        return self.offset_class.kind == "integer"

    @property
    def r_max(self) -> float:
        return self.mark_law.r_max

    def field_template(self, seed: int) -> FieldSpec:
        if self.is_integer:
            return FieldSpec.origin_special(self.origin_law, self.mark_law, seed)
        return FieldSpec.iid(self.mark_law, seed)

    def trivial_marks(self) -> bool:
        plain = self.mark_law.keep_prob == 1.0 and self.mark_law.displacement.kind == "none"
        if self.is_integer:
            plain = plain and self.origin_law.displacement.kind == "none"
        return plain

    def to_dict(self):
        return {
            "offset_class": self.offset_class.to_dict(),
            "mark_law": self.mark_law.to_dict(),
            "origin_law": None if self.origin_law is None else self.origin_law.to_dict(),
            "direction_law": self.direction_law.to_dict(),
            "beta": None if self.beta is None else self.beta.to_dict(),
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            OffsetClass.from_dict(d["offset_class"]),
            MarkLaw.from_dict(d["mark_law"]),
            None if d.get("origin_law") is None else MarkLaw.from_dict(d["origin_law"]),
            DirectionLaw.from_dict(d["direction_law"]),
            None if d.get("beta") is None else BetaFunction.from_dict(d["beta"]),
            int(d.get("d", 2)),
        )


@dataclass
class _Replicates:
    lattices: LatticeBatch
    E: np.ndarray
    bvec: np.ndarray
    keys: np.ndarray
    ref: np.ndarray
    exclude: np.ndarray


def _frames(u):
    """E(u) with u E(u) = e1; the antipodal direction gets the half-turn in the (e1, e2) plane."""
    n, d = u.shape
    anti = u[:, 0] + 1.0 <= 1e-9
    E = np.empty((n, d, d))
    if np.any(~anti):
        E[~anti] = rotations_to_directions(u[~anti])
    if np.any(anti):
        flip = np.eye(d)
        flip[0, 0] = flip[1, 1] = -1.0
        E[anti] = flip
    return E


def _replicates(law: LimitLawSpec, handle, ci: int, a: int, b: int, field_: FieldSpec) -> _Replicates:
    rng = handle.split(ci).generator()
    n, d = b - a, law.d
    lat = sample_affine_batch(rng, law.offset_class, d, n)
    u = law.direction_law.sample(rng, n)
    E = _frames(u)
    if law.is_integer:
        bvec = np.ascontiguousarray(np.atleast_2d(law.beta(u)))
        ref = np.ascontiguousarray(-np.rint(lat.xi).astype(np.int64))
        exclude = np.ones(n, dtype=np.int8)
    else:
        bvec = np.zeros((n, d))
        ref = np.zeros((n, d), dtype=np.int64)
        exclude = np.zeros(n, dtype=np.int8)
    keys = resampled_keys(field_, np.arange(a, b), 0x11A17)
    return _Replicates(lat, E, bvec, keys, ref, exclude)


def _shift_bound(law: LimitLawSpec, bvec) -> float:
    s = law.mark_law.r_max
    if law.is_integer:
        s += law.origin_law.r_max + (float(np.max(np.linalg.norm(bvec, axis=1))) if len(bvec) else 0.0)
    return s


def _first_entries(law: LimitLawSpec, rep: _Replicates, field_: FieldSpec, tmax: float, R: float = 1.0,
                   marked: bool | None = None) -> np.ndarray:
    lat = rep.lattices
    d = law.d
    marked = (not law.trivial_marks()) if marked is None else marked
    fi, fp = field_.kernel_params(d)
    bvec = rep.bvec
    out = np.empty(len(lat))
    _kernels.first_entry_batch(
        lat.M, lat.xi, lat.Binv, lat.U, lat.xr, rep.E, bvec, rep.keys, rep.ref, rep.exclude,
        float(R), float(_shift_bound(law, bvec)), 1.0, float(tmax), fi, fp, int(marked), out,
    )
    return out


def _check_n(n):
    if n < 100:
        raise InsufficientSamples("at least 100 replicates are needed")


def _merge(parts):
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc


def estimate_F(law: LimitLawSpec, grid, n: int, randomness=0, workers=None, chunk: int = DEFAULT_CHUNK):
    """Survival P(no kept, shifted point in Z(T, 1)) of the limit process on ``grid``."""
    _check_n(n)
    grid = np.asarray(grid, dtype=np.float64)
    handle = as_handle(randomness)
    tmax = float(grid.max()) if grid.size else 0.0
    field_ = law.field_template(handle.key())

    def run(ci, a, b):
        rep = _replicates(law, handle, ci, a, b, field_)
        return SurvivalAccumulator(grid).add(_first_entries(law, rep, field_, tmax))

    acc = _merge(map_chunks(run, n, chunk, workers))
    meta = {"law": law.to_dict(), "seed": handle.seed, "path": list(handle.path), "chunk": chunk, "backend": _kernels.BACKEND}
    return acc.to_cdf(meta)


def estimate_Fbar(offset_class: OffsetClass, grid, n: int, randomness=0, d: int = 2, workers=None,
                  chunk: int = DEFAULT_CHUNK):
    """Survival of the unmarked process (origin removed for the integer class)."""
    return estimate_F(LimitLawSpec.unmarked(offset_class, d), grid, n, randomness, workers, chunk)


@dataclass
class CheckReport:
    name: str
    estimate: float
    target: float
    std_error: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _mean_check(name, counts: MomentAccumulator, target: float, k_sigma: float, details):
    se = counts.std_error if counts.n > 1 else float("nan")
    est = counts.mean
    if se == 0 or math.isnan(se):
        passed = est == target
    else:
        passed = abs(est - target) <= k_sigma * se
    return CheckReport(name, est, target, se, bool(passed), details)


def siegel_check(region: ConvexRegion, n: int, d: int = 2, offset_class: OffsetClass | None = None,
                 randomness=0, workers=None, chunk: int = DEFAULT_CHUNK, k_sigma: float = 3.0) -> CheckReport:
    """Mean lattice point count in ``region`` against its volume (origin excluded for lattices)."""
    _check_n(n)
    oc = offset_class or OffsetClass.integer()
    handle = as_handle(randomness)

    def run(ci, a, b):
        rng = handle.split(ci).generator()
        lat = sample_affine_batch(rng, oc, d, b - a)
        excl = np.full(b - a, int(oc.kind == "integer"), dtype=np.int8)
        ref = -np.rint(lat.xi).astype(np.int64)
        return MomentAccumulator().add(count_batch(lat, region, exclude=excl, ref=ref))

    acc = _merge(map_chunks(run, n, chunk, workers))
    return _mean_check("siegel", acc, region.volume(), k_sigma,
                       {"n": n, "d": d, "offset_class": oc.to_dict(), "region": type(region).__name__, "approximate": d >= 3})


def count_samples(region: ConvexRegion, n: int, d: int = 2, offset_class: OffsetClass | None = None,
                  randomness=0, workers=None, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Raw counts Theta(region) (Theta_0 for the integer class) over n Haar-random lattices."""
    oc = offset_class or OffsetClass.irrational()
    handle = as_handle(randomness)

    def run(ci, a, b):
        rng = handle.split(ci).generator()
        lat = sample_affine_batch(rng, oc, d, b - a)
        excl = np.full(b - a, int(oc.kind == "integer"), dtype=np.int8)
        return count_batch(lat, region, exclude=excl, ref=-np.rint(lat.xi).astype(np.int64))

    return np.concatenate(map_chunks(run, n, chunk, workers))


def marked_counts(law: LimitLawSpec, region: ConvexRegion, n: int, randomness=0, workers=None,
                  chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Counts of the limit process (kept, transversally shifted points) in ``region``."""
    handle = as_handle(randomness)
    field_ = law.field_template(handle.key())
    fi_needed = not law.trivial_marks()

    def run(ci, a, b):
        rep = _replicates(law, handle, ci, a, b, field_)
        return count_batch(rep.lattices, region, exclude=rep.exclude, ref=rep.ref,
                           field=field_ if fi_needed else None, keys=rep.keys, E=rep.E, bvec=rep.bvec,
                           shifted=True, dilation=_shift_bound(law, rep.bvec))

    return np.concatenate(map_chunks(run, n, chunk, workers))


def siegel_veech_check(law: LimitLawSpec, region: ConvexRegion, n: int, randomness=0, workers=None,
                       chunk: int = DEFAULT_CHUNK, k_sigma: float = 3.0) -> CheckReport:
    """Mean count of the marked limit process in ``region`` against rho_bar * leb(region)."""
    _check_n(n)
    counts = marked_counts(law, region, n, randomness, workers, chunk)
    acc = MomentAccumulator().add(counts)
    target = law.mark_law.rho_bar() * region.volume()
    return _mean_check("siegel-veech", acc, target, k_sigma, {"n": n, "law": law.to_dict(), "region": type(region).__name__})


@dataclass
class ComparisonReport:
    grid: np.ndarray
    F: np.ndarray
    Fbar_scaled: np.ndarray
    halfwidth: np.ndarray
    violations: list
    n: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {
            "grid": self.grid.tolist(),
            "F": self.F.tolist(),
            "Fbar_scaled": self.Fbar_scaled.tolist(),
            "halfwidth": self.halfwidth.tolist(),
            "violations": self.violations,
            "n": self.n,
            "passed": self.passed,
        }


def comparison_lemma_check(law: LimitLawSpec, grid, n: int, randomness=0, workers=None,
                           chunk: int = DEFAULT_CHUNK) -> ComparisonReport:
    """F(T) against the unmarked survival at (1 + r_max)^(d-1) T, on shared lattice replicates."""
    _check_n(n)
    grid = np.asarray(grid, dtype=np.float64)
    scaled = (1.0 + law.r_max) ** (law.d - 1) * grid
    handle = as_handle(randomness)
    field_ = law.field_template(handle.key())
    bare = LimitLawSpec.unmarked(law.offset_class, law.d)
    tmax = float(max(grid.max(), scaled.max()))

    def run(ci, a, b):
        rep = _replicates(law, handle, ci, a, b, field_)
        marked = _first_entries(law, rep, field_, tmax)
        rep0 = _Replicates(rep.lattices, rep.E, np.zeros_like(rep.bvec), rep.keys, rep.ref, rep.exclude)
        plain = _first_entries(bare, rep0, bare.field_template(0), tmax, marked=False)
        return SurvivalAccumulator(grid).add(marked), SurvivalAccumulator(scaled).add(plain)

    parts = map_chunks(run, n, chunk, workers)
    F = _merge([p[0] for p in parts]).to_cdf()
    Fb = _merge([p[1] for p in parts]).to_cdf()
    hw = np.sqrt(F.half_width**2 + Fb.half_width**2)
    bad = [float(T) for T, f, g, h in zip(grid, F.survival, Fb.survival, hw) if g - f > h]
    return ComparisonReport(grid, F.survival, Fb.survival, hw, bad, n)


def tail_constant(d: int, r_max: float = 0.0) -> float:
    """pi^((d-1)/2) (1 + r_max)^(1-d) / (2^d d Gamma((d+3)/2) zeta(d))."""
    return (
        math.pi ** ((d - 1) / 2.0)
        * (1.0 + r_max) ** (1 - d)
        / (2**d * d * special.gamma((d + 3) / 2.0) * special.zeta(d))
    )


@dataclass
class TailReport:
    T: float
    estimate: float
    paper_bound: float
    ratio: float
    std_error: float
    n: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def tail_bound_check(d: int, r_max: float, T: float, n: int, randomness=0, workers=None,
                     chunk: int = DEFAULT_CHUNK, keep_prob: float = 1.0) -> TailReport:
    """Monte Carlo T F_0(T) for a generic offset against the power-law lower bound constant."""
    if T < 10:
        raise ConfigError("the tail check needs T >= 10")
    from .random_field import Displacement

    disp = Displacement.ball(r_max) if r_max > 0 else Displacement.none()
    law = LimitLawSpec(OffsetClass.irrational(), MarkLaw(keep_prob, disp), None, DirectionLaw.sphere(d), None, d)
    cdf = estimate_F(law, [T], n, randomness, workers, chunk)
    F = float(cdf.survival[0])
    est = T * F
    se = T * math.sqrt(max(F * (1 - F), 1.0 / n) / n)
    bound = tail_constant(d, r_max)
    ratio = est / bound
    return TailReport(float(T), est, bound, ratio, se, n, bool(ratio >= 0.9))
