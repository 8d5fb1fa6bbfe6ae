"""Seeded random markings of Z^d with marks (a, z) in {0, 1} x R^d.

Every mark is a pure function of (seed, field kind, site): a keyed hash of the
site is expanded into the uniforms that decide removal (``a``) and
displacement (``z``).  Nothing is stateful, so one realisation can be queried
at any site, in any order, from any thread.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _prf
from .errors import ConfigError, InsufficientSamples

MAX_DIM = 4
BALL_TRIES = 64

KIND_TAGS = {"iid": 1, "origin-special": 2, "mdep": 3}
DISP_CODES = {"none": 0, "ball": 1, "fixed": 2}


@dataclass(frozen=True)
class Displacement:
    """Law of the displacement mark z: none, uniform in a ball, or a fixed vector."""

    kind: str = "none"
    r_max: float = 0.0
    w: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in DISP_CODES:
            raise ConfigError(f"unknown displacement kind {self.kind!r}")
        if self.kind == "ball" and not self.r_max >= 0:
            raise ConfigError("ball radius must be non-negative")
        if self.kind == "fixed":
            if self.w is None:
                raise ConfigError("fixed displacement needs a vector w")
            object.__setattr__(self, "w", tuple(float(x) for x in self.w))
            object.__setattr__(self, "r_max", float(np.linalg.norm(self.w)))
        if self.kind == "none":
            object.__setattr__(self, "r_max", 0.0)

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def ball(cls, r_max: float):
        return cls("ball", float(r_max))

    @classmethod
    def fixed(cls, w):
        return cls("fixed", 0.0, tuple(w))

    @property
    def rotation_invariant(self) -> bool:
        return self.kind == "ball" or (self.kind == "fixed" and self.r_max == 0) or self.kind == "none"


@dataclass(frozen=True)
class MarkLaw:
    """Single-site mark law: keep with probability ``keep_prob``, displace per ``displacement``."""

    keep_prob: float = 1.0
    displacement: Displacement = field(default_factory=Displacement.none)

    def __post_init__(self):
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ConfigError("keep probability must lie in [0, 1]")
        if self.displacement is None:
            object.__setattr__(self, "displacement", Displacement.none())

    @property
    def r_max(self) -> float:
        return self.displacement.r_max

    def rho_bar(self) -> float:
        return self.keep_prob

    def prob(self, pred: "MarkPredicate", d: int) -> float:
        """Exact probability of a predicate under this law."""
        pa = 1.0
        if pred.a is not None:
            pa = self.keep_prob if pred.a == 1 else 1.0 - self.keep_prob
        if pred.normal is None:
            return pa
        n = np.asarray(pred.normal, dtype=float)
        n = n / np.linalg.norm(n)
        c = pred.threshold
        disp = self.displacement
        if disp.kind == "none":
            pz = 1.0 if 0.0 <= c else 0.0
        elif disp.kind == "fixed":
            pz = 1.0 if float(np.dot(disp.w, n)) <= c else 0.0
        else:
            R = disp.r_max
            if R == 0:
                pz = 1.0 if 0.0 <= c else 0.0
            else:
                x = min(max(c / R, -1.0), 1.0)
                pz = 0.5 + math.copysign(0.5, x) * special.betainc(0.5, (d + 1) / 2.0, x * x)
        return pa * pz

    def to_dict(self):
        disp = self.displacement
        out = {"p": self.keep_prob, "displacement": disp.kind, "r_max": disp.r_max}
        if disp.kind == "fixed":
            out["w"] = list(disp.w)
        return out

    @classmethod
    def from_dict(cls, d):
        kind = d.get("displacement", "none")
        if kind == "ball":
            disp = Displacement.ball(d["r_max"])
        elif kind == "fixed":
            disp = Displacement.fixed(d["w"])
        else:
            disp = Displacement.none()
        return cls(float(d.get("p", 1.0)), disp)


@dataclass(frozen=True)
class Mark:
    a: int
    z: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Mark) and self.a == other.a and np.array_equal(self.z, other.z)

    def __hash__(self):
        return hash((self.a, self.z.tobytes()))


@dataclass(frozen=True)
class FieldSpec:
    """A marking field: kind, site law(s), window radius and seed.

    kinds: ``iid`` (all sites follow ``law``), ``origin-special`` (site 0
    follows ``origin_law``), ``mdep`` (a(m) = 1 iff every base uniform in the
    l-infinity window of radius ``R`` around m is below p^(1/(2R+1)^d);
    displacements i.i.d.).
    """

    kind: str
    law: MarkLaw
    seed: int = 0
    origin_law: MarkLaw | None = None
    R: int | None = None

    def __post_init__(self):
        if self.kind not in KIND_TAGS:
            raise ConfigError(f"unknown field kind {self.kind!r}")
        if (self.kind == "origin-special") != (self.origin_law is not None):
            raise ConfigError("origin_law is required for, and only for, origin-special fields")
        if self.kind == "mdep":
            if self.R is None or int(self.R) < 1:
                raise ConfigError("m-dependent fields need a window radius R >= 1")
            object.__setattr__(self, "R", int(self.R))
        elif self.R is not None:
            raise ConfigError("window radius R only applies to mdep fields")
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @classmethod
    def iid(cls, law: MarkLaw, seed: int = 0):
        return cls("iid", law, seed)

    @classmethod
    def origin_special(cls, origin_law: MarkLaw, law: MarkLaw, seed: int = 0):
        return cls("origin-special", law, seed, origin_law=origin_law)

    @classmethod
    def mdependent(cls, R: int, law: MarkLaw, seed: int = 0):
        return cls("mdep", law, seed, R=R)

    def with_seed(self, seed: int) -> "FieldSpec":
        return FieldSpec(self.kind, self.law, seed, self.origin_law, self.R)

    @property
    def key(self) -> np.uint64:
        return _prf.derive_key(self.seed, KIND_TAGS[self.kind])

    @property
    def r_max(self) -> float:
        r = self.law.r_max
        if self.origin_law is not None:
            r = max(r, self.origin_law.r_max)
        return r

    def target_law(self) -> MarkLaw:
        """Asymptotic single-site distribution (rho)."""
        return self.law

    def rho_bar(self) -> float:
        return self.law.rho_bar()

    def to_dict(self) -> dict:
        disp = self.law.displacement
        out = {
            "kind": self.kind,
            "p": self.law.keep_prob,
            "displacement": disp.kind,
            "r_max": disp.r_max,
            "R": self.R,
            "seed": self.seed,
        }
        if disp.kind == "fixed":
            out["w"] = list(disp.w)
        if self.origin_law is not None:
            out["origin_law"] = self.origin_law.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        law = MarkLaw.from_dict(d)
        origin = MarkLaw.from_dict(d["origin_law"]) if d.get("origin_law") else None
        return cls(d["kind"], law, int(d.get("seed", 0)), origin, d.get("R"))

    @classmethod
    def from_json(cls, text: str) -> "FieldSpec":
        return cls.from_dict(json.loads(text))

    def kernel_params(self, d: int):
        """Flat (int, float) parameter arrays understood by the compiled kernels."""
        if d > MAX_DIM:
            raise ConfigError(f"kernels support d <= {MAX_DIM}")
        fi = np.zeros(6, dtype=np.int64)
        fp = np.zeros(5 + 2 * MAX_DIM, dtype=np.float64)
        origin = self.origin_law or self.law
        fi[0] = {"iid": 0, "origin-special": 1, "mdep": 2}[self.kind]
        fi[1] = DISP_CODES[self.law.displacement.kind]
        fi[2] = DISP_CODES[origin.displacement.kind]
        fi[3] = self.R or 0
        fi[4] = d
        fp[0] = self.law.keep_prob
        fp[1] = self.law.displacement.r_max
        fp[2] = origin.keep_prob
        fp[3] = origin.displacement.r_max
        if self.law.displacement.kind == "fixed":
            fp[4 : 4 + d] = self.law.displacement.w
        if origin.displacement.kind == "fixed":
            fp[4 + MAX_DIM : 4 + MAX_DIM + d] = origin.displacement.w
        fp[4 + 2 * MAX_DIM] = self.window_threshold(d)
        return fi, fp

    def window_threshold(self, d: int) -> float:
        """Per-site threshold of the m-dependent construction, p^(1/(2R+1)^d)."""
        if self.kind != "mdep":
            return self.law.keep_prob
        p = self.law.keep_prob
        return p ** (1.0 / (2 * self.R + 1) ** d) if p > 0 else 0.0


def _displacements(h, disp: Displacement, d: int):
    """Displacement vectors for site hashes ``h`` (any shape)."""
    shape = np.shape(h)
    z = np.zeros(shape + (d,))
    if disp.kind == "fixed":
        z[...] = disp.w
    elif disp.kind == "ball" and disp.r_max > 0:
        R = disp.r_max
        R2 = R * R
        pending = np.ones(shape, dtype=bool)
        for j in range(BALL_TRIES):
            if not pending.any():
                break
            hp = h[pending]
            y = np.empty(hp.shape + (d,))
            for i in range(d):
                u = _prf.to_unit(_prf.draw(hp, 1 + j * d + i))
                y[..., i] = R * (2.0 * u - 1.0)
            ok = np.sum(y * y, axis=-1) <= R2
            idx = tuple(ix[ok] for ix in np.nonzero(pending))
            z[idx] = y[ok]
            pending[idx] = False
    return z


def _keep(h, p: float):
    return (_prf.to_unit(_prf.draw(h, 0)) < p).astype(np.int8)


def marks(field: FieldSpec, ms, key=None):
    """Vectorised marks.

    ``ms`` is an integer array with coordinates on the last axis; ``key``
    optionally overrides the field key (broadcast against ``ms[..., 0]``),
    which is how estimators randomise over seeds.  Returns ``(a, z)``.
    """
    ms = np.asarray(ms, dtype=np.int64)
    d = ms.shape[-1]
    k = field.key if key is None else np.asarray(key, dtype=np.uint64)
    shape = np.broadcast_shapes(np.shape(k), ms.shape[:-1])
    ms = np.broadcast_to(ms, shape + (d,))
    k = np.broadcast_to(k, shape)
    h = _prf.site_hash(k, ms)
    law = field.law
    if field.kind == "mdep":
        R = field.R
        theta = field.window_threshold(d)
        ok = np.ones(shape, dtype=bool)
        for off in itertools.product(range(-R, R + 1), repeat=d):
            u = _prf.to_unit(_prf.draw(_prf.site_hash(k, ms + np.asarray(off, dtype=np.int64)), 0))
            ok &= u < theta
        a = ok.astype(np.int8)
    else:
        a = _keep(h, law.keep_prob)
    z = _displacements(h, law.displacement, d)
    if field.kind == "origin-special":
        at0 = np.all(ms == 0, axis=-1)
        if at0.any():
            olaw = field.origin_law
            h0 = h[at0]
            a[at0] = _keep(h0, olaw.keep_prob)
            z[at0] = _displacements(h0, olaw.displacement, d)
    return a, z


def mark_at(field: FieldSpec, m) -> Mark:
    a, z = marks(field, np.asarray(m, dtype=np.int64)[None, :])
    return Mark(int(a[0]), z[0])


def z_xi(field: FieldSpec, m, xi) -> np.ndarray:
    """Displacement relative to the launch site: z(m) - z(-xi) when xi is integral."""
    xi = np.asarray(xi, dtype=np.float64)
    m = np.asarray(m, dtype=np.int64)
    _, z = marks(field, np.atleast_2d(m))
    if np.all(xi == np.round(xi)):
        _, z0 = marks(field, (-xi).astype(np.int64)[None, :])
        z = z - z0
    return z[0] if m.ndim == 1 else z


# -- mixing estimators -------------------------------------------------------


@dataclass(frozen=True)
class MarkPredicate:
    """Measurable rectangle in Y: a-value test and/or a z half-space ``z . normal <= threshold``."""

    a: int | None = None
    normal: tuple[float, ...] | None = None
    threshold: float = 0.0

    def __call__(self, a, z):
        ok = np.ones(np.shape(a), dtype=bool)
        if self.a is not None:
            ok &= np.asarray(a) == self.a
        if self.normal is not None:
            ok &= np.asarray(z) @ np.asarray(self.normal, dtype=float) <= self.threshold
        return ok


KEEP = MarkPredicate(a=1)


@dataclass(frozen=True)
class MixingEstimate:
    order: int
    separation: float
    estimate: float
    std_error: float
    sites: tuple = ()

    def bounded_by(self, k_sigma: float = 3.0) -> bool:
        return self.estimate <= k_sigma * self.std_error


def theta_panel(k: int, s: float, d: int):
    """Fixed panel of k-site configurations with pairwise distance >= s."""
    step = max(1, math.ceil(s))
    diag_step = max(1, math.ceil(s / math.sqrt(d)))
    e1 = np.zeros(d, dtype=np.int64)
    e1[0] = 1
    e2 = np.zeros(d, dtype=np.int64)
    e2[1] = 1
    ones = np.ones(d, dtype=np.int64)
    base = np.zeros(d, dtype=np.int64)
    base[0], base[1] = 3, -2
    panel = [
        np.array([i * step * e1 for i in range(k)]),
        np.array([base + i * step * e2 for i in range(k)]),
        np.array([i * diag_step * ones for i in range(k)]),
    ]
    for cfg in panel:
        for i in range(k):
            for j in range(i):
                assert np.linalg.norm(cfg[i] - cfg[j]) >= s
    return panel


def resampled_keys(field: FieldSpec, indices, stream: int = 0):
    """Field keys for fresh seeds ``derive_key(field.seed, stream, i)``, one per index.

    Key i equals ``field.with_seed(seed_i).key``; used to average over the
    law of the marking.
    """
    seeds = _prf.derive_key(field.seed, stream, np.asarray(indices, dtype=np.int64))
    return _prf.derive_key(seeds, KIND_TAGS[field.kind])


def _trial_keys(field: FieldSpec, trials: int, stream: int):
    return resampled_keys(field, np.arange(trials), stream)


def estimate_theta_k(
    field: FieldSpec, k: int, s: float, trials: int, events=None, panel=None, d: int = 2
) -> MixingEstimate:
    """Monte Carlo estimate of the order-k mixing coefficient at separation s.

    Seeds are randomised; for each panel configuration the statistic is
    |P(all events) - prod P(event_i)|, and the largest over the panel is
    reported with a delta-method standard error.
    """
    if k < 2:
        raise ValueError("order must be at least 2")
    if trials < 100:
        raise InsufficientSamples("at least 100 trials are needed")
    events = list(events) if events is not None else [KEEP] * k
    if len(events) != k:
        raise ValueError("need exactly k event predicates")
    if panel is None:
        panel = theta_panel(k, s, d)
    keys = _trial_keys(field, trials, 0xA11CE)
    best = None
    for cfg in panel:
        cfg = np.asarray(cfg, dtype=np.int64)
        a, z = marks(field, cfg[None, :, :], key=keys[:, None])
        ind = np.stack([ev(a[:, i], z[:, i]) for i, ev in enumerate(events)], axis=1).astype(float)
        joint = np.all(ind > 0, axis=1).astype(float)
        p = ind.mean(axis=0)
        stat = joint.mean() - np.prod(p)
        lin = joint.copy()
        for i in range(k):
            lin -= np.prod(np.delete(p, i)) * ind[:, i]
        se = float(lin.std(ddof=1) / math.sqrt(trials))
        cand = (abs(float(stat)), se, tuple(map(tuple, cfg.tolist())))
        if best is None or cand[0] > best[0]:
            best = cand
    return MixingEstimate(k, float(s), best[0], best[1], best[2])


def beta_panel_sites(xi, s: float, max_sites: int = 4):
    """Admissible sites of smallest ||m + xi|| subject to ||m + xi|| >= s."""
    xi = np.asarray(xi, dtype=float)
    d = xi.size
    rad = int(math.ceil(s + np.abs(xi).max() + 2))
    grid = np.array(list(itertools.product(range(-rad, rad + 1), repeat=d)), dtype=np.int64)
    norms = np.linalg.norm(grid + xi, axis=1)
    ok = norms >= s
    grid, norms = grid[ok], norms[ok]
    shell = norms <= norms.min() + 1e-9
    sites = grid[shell]
    order = np.lexsort(sites.T[::-1])
    return sites[order][:max_sites]


def estimate_beta_xi(field: FieldSpec, xi, s: float, trials: int, tests=None) -> MixingEstimate:
    """Estimate the distance of single-site marginals from the target law.

    Sup over panel sites with ||m + xi|| >= s and over a fixed panel of test
    sets A of |P(eta(m) in A) - rho(A)|.
    """
    if trials < 100:
        raise InsufficientSamples("at least 100 trials are needed")
    xi = np.asarray(xi, dtype=float)
    d = xi.size
    target = field.target_law()
    if tests is None:
        e1 = tuple(1.0 if i == 0 else 0.0 for i in range(d))
        tests = [KEEP, MarkPredicate(a=1, normal=e1, threshold=0.0)]
    sites = beta_panel_sites(xi, s)
    keys = _trial_keys(field, trials, 0xBE7A)
    a, z = marks(field, sites[None, :, :], key=keys[:, None])
    best = (0.0, 0.0, ())
    for j, site in enumerate(sites):
        for test in tests:
            hits = test(a[:, j], z[:, j]).astype(float)
            phat = hits.mean()
            stat = abs(phat - target.prob(test, d))
            se = math.sqrt(max(phat * (1 - phat), 1.0 / trials) / trials)
            if stat > best[0] or not best[2]:
                best = (float(stat), se, (tuple(site.tolist()),))
    return MixingEstimate(1, float(s), best[0], best[1], best[2])
