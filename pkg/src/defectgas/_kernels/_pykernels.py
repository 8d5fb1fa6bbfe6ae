"""Pure-Python mirror of the compiled kernels.

Same signatures, same enumeration and the same floating point evaluation
order, vectorised with numpy over the candidates of one segment.  Used when
the extension is unavailable and as the reference in equivalence tests.
"""

import math

import numpy as np

from .. import random_field as rf

MAXD = 4
COEF_PAD = 1e-7
_DISP = {0: "none", 1: "ball", 2: "fixed"}
_KIND = {0: "iid", 1: "origin-special", 2: "mdep"}


def params_to_field(fi, fp) -> rf.FieldSpec:
    d = int(fi[4])

    def law(code, p, rmax, w):
        kind = _DISP[int(code)]
        if kind == "ball":
            disp = rf.Displacement.ball(rmax)
        elif kind == "fixed":
            disp = rf.Displacement.fixed(w[:d])
        else:
            disp = rf.Displacement.none()
        return rf.MarkLaw(float(p), disp)

    main = law(fi[1], fp[0], fp[1], fp[4 : 4 + MAXD])
    kind = _KIND[int(fi[0])]
    origin = law(fi[2], fp[2], fp[3], fp[4 + MAXD : 4 + 2 * MAXD]) if kind == "origin-special" else None
    return rf.FieldSpec(kind, main, 0, origin, int(fi[3]) if kind == "mdep" else None)


def _marks(field, keys, ms):
    return rf.marks(field, ms, key=np.asarray(keys, dtype=np.uint64))


def field_marks(keys, ms, fi, fp, a_out, z_out):
    field = params_to_field(fi, fp)
    a, z = _marks(field, keys, np.asarray(ms))
    a_out[:] = a
    z_out[:] = z


class _Lat:
    def __init__(self, M, xi, Binv, U, xr):
        self.d = M.shape[0]
        self.M = np.asarray(M)
        self.xi = np.asarray(xi)
        self.Binv = np.asarray(Binv)
        self.U = np.asarray(U)
        self.xr = np.asarray(xr)
        self.colnorm = [
            math.sqrt(sum(float(self.Binv[i, j]) * float(self.Binv[i, j]) for i in range(self.d)))
            for j in range(self.d)
        ]

    def coef_box(self, lo, hi, W):
        ranges = []
        for j in range(self.d):
            cmin = 0.0
            cmax = 0.0
            for i in range(self.d):
                a = float(lo[i]) * float(self.Binv[i, j])
                b = float(hi[i]) * float(self.Binv[i, j])
                if a < b:
                    cmin += a
                    cmax += b
                else:
                    cmin += b
                    cmax += a
            cmin -= W * self.colnorm[j]
            cmax += W * self.colnorm[j]
            kmin = math.ceil(cmin - float(self.xr[j]) - COEF_PAD)
            kmax = math.floor(cmax - float(self.xr[j]) + COEF_PAD)
            if kmin > kmax:
                return None
            ranges.append((kmin, kmax))
        return ranges

    def candidates(self, ranges):
        """Original indices m and points (m + xi) M for every k in the box."""
        axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in ranges]
        k = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        m = k @ self.U
        c = m.astype(np.float64) + self.xi
        p = c[:, 0:1] * self.M[0]
        for i in range(1, self.d):
            p = p + c[:, i : i + 1] * self.M[i]
        return m, p


def _lat(M, xi, Binv, U, xr, n):
    return _Lat(np.asarray(M[n]), np.asarray(xi[n]), np.asarray(Binv[n]), np.asarray(U[n]), np.asarray(xr[n]))


def free_path_batch(M, xi, Binv, U, xr, Q, V, keys, skip, use_skip, r, W, delta, lmax, fi, fp, marked, t_out, status_out):
    L = _lat(M, xi, Binv, U, xr, 0)
    d = L.d
    field = params_to_field(fi, fp) if marked else None
    r2 = r * r
    Wpad = W * (1.0 + 1e-9) + 1e-12
    Wpad2 = Wpad * Wpad
    Q = np.asarray(Q)
    V = np.asarray(V)
    for ray in range(Q.shape[0]):
        q = Q[ray]
        v = V[ray]
        best = math.inf
        invalid = False
        seg = 0
        while True:
            s0 = seg * delta
            s1 = s0 + delta
            e0 = [float(q[i]) + s0 * float(v[i]) for i in range(d)]
            e1 = [float(q[i]) + s1 * float(v[i]) for i in range(d)]
            lo = [min(a, b) for a, b in zip(e0, e1)]
            hi = [max(a, b) for a, b in zip(e0, e1)]
            ranges = L.coef_box(lo, hi, Wpad)
            if ranges is not None:
                m, p = L.candidates(ranges)
                keep = np.ones(len(m), dtype=bool)
                if use_skip[ray]:
                    keep &= ~np.all(m == np.asarray(skip[ray]), axis=1)
                dd = np.zeros(len(m))
                sp = np.zeros(len(m))
                for i in range(d):
                    diff = p[:, i] - q[i]
                    dd = dd + diff * diff
                    sp = sp + diff * v[i]
                keep &= (sp >= -Wpad) & (dd - sp * sp <= Wpad2)
                m, p = m[keep], p[keep]
                z = np.zeros_like(p)
                if marked and len(m):
                    a, z = _marks(field, keys[ray], m)
                    ok = a.astype(bool)
                    m, p, z = m[ok], p[ok], z[ok]
                if len(m):
                    dd = np.zeros(len(m))
                    sp = np.zeros(len(m))
                    for i in range(d):
                        c = p[:, i] + r * z[:, i]
                        diff = c - q[i]
                        dd = dd + diff * diff
                        sp = sp + diff * v[i]
                    if np.any(dd < r2):
                        invalid = True
                    else:
                        rho2 = dd - sp * sp
                        hit = (sp > 0.0) & (rho2 < r2)
                        if hit.any():
                            t = sp[hit] - np.sqrt(r2 - rho2[hit])
                            best = min(best, float(t.min()))
            if invalid or best <= s1 or s1 >= lmax:
                break
            seg += 1
        if invalid:
            t_out[ray] = math.nan
            status_out[ray] = 2
        elif best <= lmax:
            t_out[ray] = best
            status_out[ray] = 0
        else:
            t_out[ray] = math.inf
            status_out[ray] = 1


def _perp_shift(field, key, m, z0, b, E, d, marked):
    """Kept mask and transverse shifts ((z - z0 - b) E)_perp for candidate sites."""
    if marked:
        a, z = _marks(field, key, m)
        ok = a.astype(bool)
    else:
        ok = np.ones(len(m), dtype=bool)
        z = np.zeros((len(m), d))
    w = [z[:, i] - z0[i] - b[i] for i in range(d)]
    shifts = []
    for l in range(1, d):
        sh = w[0] * E[0, l]
        for i in range(1, d):
            sh = sh + w[i] * E[i, l]
        shifts.append(sh)
    return ok, shifts


def first_entry_batch(M, xi, Binv, U, xr, E, bvec, keys, ref, exclude, R, sbound, delta, tmax, fi, fp, marked, out):
    field = params_to_field(fi, fp) if marked else None
    d = M.shape[1]
    Rt = R + sbound
    Rt2 = (Rt * (1.0 + 1e-9) + 1e-12) * (Rt * (1.0 + 1e-9) + 1e-12)
    R2 = R * R
    for rep in range(M.shape[0]):
        L = _lat(M, xi, Binv, U, xr, rep)
        excl = bool(exclude[rep])
        rf_site = np.asarray(ref[rep])
        z0 = np.zeros(d)
        if excl and marked:
            z0 = _marks(field, keys[rep], rf_site[None, :])[1][0]
        best = math.inf
        seg = 0
        while True:
            x0 = seg * delta
            x1 = x0 + delta
            lo = [x0] + [-Rt] * (d - 1)
            hi = [x1] + [Rt] * (d - 1)
            ranges = L.coef_box(lo, hi, 0.0)
            if ranges is not None:
                m, p = L.candidates(ranges)
                perp2 = np.zeros(len(m))
                for i in range(1, d):
                    perp2 = perp2 + p[:, i] * p[:, i]
                keep = (p[:, 0] > 0.0) & (p[:, 0] >= x0) & (p[:, 0] < x1) & (perp2 <= Rt2)
                if excl:
                    keep &= ~np.all(m == rf_site, axis=1)
                m, p = m[keep], p[keep]
                if len(m):
                    ok, shifts = _perp_shift(field, keys[rep], m, z0, np.asarray(bvec[rep]), np.asarray(E[rep]), d, marked)
                    q2 = np.zeros(len(m))
                    for l in range(1, d):
                        y = p[:, l] + shifts[l - 1]
                        q2 = q2 + y * y
                    hit = ok & (q2 < R2)
                    if hit.any():
                        best = float(p[hit, 0].min())
            if best < math.inf or x1 >= tmax:
                break
            seg += 1
        out[rep] = best


def inside(kind, rp, x):
    """Open-region membership for an (n, d) array of points."""
    d = x.shape[1]
    rp = np.asarray(rp)
    if kind == 0:
        s = np.zeros(len(x))
        for i in range(d):
            y = x[:, i] - rp[i]
            s = s + y * y
        return s < rp[d] * rp[d]
    if kind == 1:
        ok = np.ones(len(x), dtype=bool)
        for i in range(d):
            ok &= (rp[i] < x[:, i]) & (x[:, i] < rp[d + i])
        return ok
    if kind == 2:
        y0 = x[:, 0] * rp[2]
        for l in range(1, d):
            y0 = y0 + x[:, l] * rp[2 + l]
        s = np.zeros(len(x))
        for i in range(1, d):
            y = x[:, 0] * rp[2 + i * d]
            for l in range(1, d):
                y = y + x[:, l] * rp[2 + i * d + l]
            s = s + y * y
        return (0.0 < y0) & (y0 < rp[0]) & (s < rp[1] * rp[1])
    if kind == 3:
        s = np.zeros(len(x))
        for i in range(d):
            y = x[:, i] - rp[i]
            s = s + y * y
        return (rp[d] * rp[d] < s) & (s < rp[d + 1] * rp[d + 1])
    raise ValueError(f"unknown region kind {kind}")


def count_batch(M, xi, Binv, U, xr, kind, rp, box_lo, box_hi, dilation, E, bvec, keys, ref, exclude, fi, fp, marked, shifted, out):
    field = params_to_field(fi, fp) if marked else None
    d = M.shape[1]
    for rep in range(M.shape[0]):
        L = _lat(M, xi, Binv, U, xr, rep)
        excl = bool(exclude[rep])
        rf_site = np.asarray(ref[rep])
        z0 = np.zeros(d)
        if excl and marked and shifted:
            z0 = _marks(field, keys[rep], rf_site[None, :])[1][0]
        ranges = L.coef_box(box_lo, box_hi, dilation)
        if ranges is None:
            out[rep] = 0
            continue
        m, p = L.candidates(ranges)
        if excl:
            keep = ~np.all(m == rf_site, axis=1)
            m, p = m[keep], p[keep]
        if shifted:
            ok, shifts = _perp_shift(field, keys[rep], m, z0, np.asarray(bvec[rep]), np.asarray(E[rep]), d, marked)
            x = p.copy()
            for l in range(1, d):
                x[:, l] = p[:, l] + shifts[l - 1]
        else:
            ok = _marks(field, keys[rep], m)[0].astype(bool) if marked and len(m) else np.ones(len(m), dtype=bool)
            x = p
        out[rep] = int(np.count_nonzero(ok & inside(kind, rp, x))) if len(m) else 0
