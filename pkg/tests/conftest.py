import itertools
import sys
import math

import numpy as np
import pytest

from defectgas import AffineLattice, UnimodularMatrix


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")


def random_unimodular(rng, d=2, steps=4, scale_range=(0.6, 1.6)):
    """Desk-scale unimodular matrix: a few integer shears, a diagonal stretch and a rotation."""
    M = np.eye(d)
    for _ in range(steps):
        i, j = rng.choice(d, 2, replace=False)
        E = np.eye(d)
        E[i, j] = rng.integers(-1, 2)
        M = E @ M
    s = rng.uniform(*scale_range, d)
    s /= np.prod(s) ** (1.0 / d)
    M = M * s[None, :]
    th = rng.uniform(0, 2 * math.pi)
    if d == 2:
        K = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    else:
        K, _ = np.linalg.qr(rng.normal(size=(d, d)))
        if np.linalg.det(K) < 0:
            K[:, 0] = -K[:, 0]
    M = M @ K
    return M / abs(np.linalg.det(M)) ** (1.0 / d)


def box_scan(spec: AffineLattice, radius: float, center=None):
    """Every (m, (m + xi) M) with the point within ``radius`` of ``center``, by scanning an m-box.

    The m-box comes from |c_j| <= radius * ||column j of M^{-1}||, which holds
    for any point of the ball; no reduction is used.
    """
    d = spec.dim
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    Minv = np.linalg.inv(spec.basis.entries)
    c0 = center @ Minv - spec.offset
    w = radius * np.linalg.norm(Minv, axis=0)
    ranges = [range(math.floor(c0[j] - w[j]) - 1, math.ceil(c0[j] + w[j]) + 2) for j in range(d)]
    ms = np.array(list(itertools.product(*ranges)), dtype=np.int64)
    pts = spec.points(ms)
    ok = np.linalg.norm(pts - center, axis=1) <= radius
    return ms[ok], pts[ok]


def brute_free_path(spec, a, z, ms, r, q, v):
    """Smallest strict entry time over all listed sites; same arithmetic order as the kernels."""
    d = spec.dim
    M = spec.basis.entries
    best = math.inf
    for mi, ai, zi in zip(ms, a, z):
        if not ai:
            continue
        c = [float(mi[i]) + float(spec.offset[i]) for i in range(d)]
        p = [c[0] * M[0, k] for k in range(d)]
        for i in range(1, d):
            p = [p[k] + c[i] * M[i, k] for k in range(d)]
        dd = 0.0
        sp = 0.0
        for k in range(d):
            diff = (p[k] + r * float(zi[k])) - float(q[k])
            dd = dd + diff * diff
            sp = sp + diff * float(v[k])
        if dd < r * r:
            return "invalid"
        rho2 = dd - sp * sp
        if sp > 0.0 and rho2 < r * r:
            best = min(best, sp - math.sqrt(r * r - rho2))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def z2():
    return AffineLattice(UnimodularMatrix(np.eye(2)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
