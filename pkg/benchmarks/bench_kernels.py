"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on identical inputs under both backends; the script prints
the best wall time of each and checks that the outputs are bitwise equal.
"""

import argparse
import time

import numpy as np

from defectgas import Cylinder, Displacement, FieldSpec, MarkLaw, OffsetClass
from defectgas._kernels import backend_module
from defectgas.haar import sample_affine_batch
from defectgas.lattice import LatticeBatch, rotations_to_directions


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    field = FieldSpec.iid(MarkLaw(0.7, Displacement.ball(0.3)), 11)
    fi, fp = field.kernel_params(2)

    n_marks = 200_000
    ms = rng.integers(-10**6, 10**6, (n_marks, 2))
    keys = np.full(n_marks, field.key, dtype=np.uint64)

    def marks(mod):
        a = np.empty(n_marks, dtype=np.int8)
        z = np.empty((n_marks, 2))
        mod.field_marks(keys, ms, fi, fp, a, z)
        return a, z

    z2 = LatticeBatch.from_arrays(np.eye(2)[None], np.zeros((1, 2)))
    n_rays = 200
    r = 1e-2
    V = rng.normal(size=(n_rays, 2))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    Q = r * V
    rk = np.full(n_rays, field.key, dtype=np.uint64)
    skip = np.zeros((n_rays, 2), dtype=np.int64)
    use = np.ones(n_rays, dtype=np.int8)

    def paths(mod):
        t = np.empty(n_rays)
        s = np.empty(n_rays, dtype=np.int8)
        mod.free_path_batch(z2.M, z2.xi, z2.Binv, z2.U, z2.xr, Q, V, rk, skip, use, r, r * 1.3, 1.0, 8.0 / r, fi, fp, 1, t, s)
        return t, s

    n_rep = 2000
    lat = sample_affine_batch(rng, OffsetClass.irrational(), 2, n_rep)
    u = rng.normal(size=(n_rep, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u[u[:, 0] < -0.9] *= -1
    E = rotations_to_directions(u)
    bvec = np.zeros((n_rep, 2))
    lk = rng.integers(0, 2**63, n_rep).astype(np.uint64)
    ref = np.zeros((n_rep, 2), dtype=np.int64)
    excl = np.zeros(n_rep, dtype=np.int8)

    def entries(mod):
        out = np.empty(n_rep)
        mod.first_entry_batch(lat.M, lat.xi, lat.Binv, lat.U, lat.xr, E, bvec, lk, ref, excl, 1.0, 0.3, 1.0, 8.0, fi, fp, 1, out)
        return (out,)

    region = Cylinder(5.0, 1.0)
    lo, hi = region.bounding_box()

    def counts(mod):
        out = np.empty(n_rep, dtype=np.int64)
        mod.count_batch(lat.M, lat.xi, lat.Binv, lat.U, lat.xr, region.kind, region.kernel_params(), lo, hi, 0.3,
                        E, bvec, lk, ref, excl, fi, fp, 1, 1, out)
        return (out,)

    return {
        f"field_marks ({n_marks} sites)": marks,
        f"free_path_batch ({n_rays} rays, r={r})": paths,
        f"first_entry_batch ({n_rep} lattices)": entries,
        f"count_batch ({n_rep} lattices, Z(5,1))": counts,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        compiled = backend_module("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    fallback = backend_module("python")
    print(f"{'kernel':<42}{'compiled s':>12}{'fallback s':>12}{'speedup':>10}  equal")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        tc, oc = best_of(lambda: fn(compiled), args.repeat)
        tp, op = best_of(lambda: fn(fallback), args.repeat)
        equal = all(np.array_equal(a, b, equal_nan=a.dtype.kind == "f") for a, b in zip(oc, op))
        print(f"{name:<42}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {equal}")


if __name__ == "__main__":
    main()
