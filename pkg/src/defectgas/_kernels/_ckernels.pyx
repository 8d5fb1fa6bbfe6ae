# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: site marks, ray marching, first-entry binning, counting.

All floating point work is written in a fixed evaluation order and the
extension is compiled without contraction or fast-math, so results agree bit
for bit with the numpy reference in ``_pykernels``.  Every loop runs without
the GIL.
"""

from libc.math cimport sqrt, ceil, floor, INFINITY, NAN
from libc.stdint cimport uint64_t, int64_t, int8_t

cdef extern from *:
    """
    static inline uint64_t dg_mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    #define DG_GOLDEN 0x9E3779B97F4A7C15ULL
    """
    uint64_t dg_mix64(uint64_t z) nogil
    uint64_t DG_GOLDEN

cdef enum:
    MAXD = 4
    BALL_TRIES = 64

cdef double INV53 = 1.0 / 9007199254740992.0
cdef double COEF_PAD = 1e-7


cdef struct Field:
    int kind
    int disp
    int disp0
    int R
    int d
    int marked
    double p
    double rmax
    double p0
    double rmax0
    double theta
    double w[MAXD]
    double w0[MAXD]


cdef struct Lat:
    int d
    double M[MAXD * MAXD]
    double xi[MAXD]
    double Binv[MAXD * MAXD]
    double colnorm[MAXD]
    int64_t U[MAXD * MAXD]
    double xr[MAXD]


cdef Field make_field(const int64_t[::1] fi, const double[::1] fp, int marked):
    cdef Field f
    cdef int i
    f.kind = <int>fi[0]
    f.disp = <int>fi[1]
    f.disp0 = <int>fi[2]
    f.R = <int>fi[3]
    f.d = <int>fi[4]
    f.marked = marked
    f.p = fp[0]
    f.rmax = fp[1]
    f.p0 = fp[2]
    f.rmax0 = fp[3]
    for i in range(MAXD):
        f.w[i] = fp[4 + i]
        f.w0[i] = fp[4 + MAXD + i]
    f.theta = fp[4 + 2 * MAXD]
    return f


cdef inline uint64_t site_hash(uint64_t key, const int64_t* m, int d) noexcept nogil:
    cdef uint64_t h = key
    cdef int i
    for i in range(d):
        h = dg_mix64(h ^ (<uint64_t>m[i] + DG_GOLDEN * <uint64_t>(i + 1)))
    return h


cdef inline double draw_unit(uint64_t h, int slot) noexcept nogil:
    cdef uint64_t x = dg_mix64(h ^ (DG_GOLDEN * <uint64_t>(slot + 1)))
    return <double>(x >> 11) * INV53


cdef inline void displacement(uint64_t h, int kind, double R, const double* w, int d, double* z) noexcept nogil:
    cdef int i, j
    cdef double y[MAXD]
    cdef double s, R2
    for i in range(d):
        z[i] = 0.0
    if kind == 2:
        for i in range(d):
            z[i] = w[i]
    elif kind == 1 and R > 0:
        R2 = R * R
        for j in range(BALL_TRIES):
            s = 0.0
            for i in range(d):
                y[i] = R * (2.0 * draw_unit(h, 1 + j * d + i) - 1.0)
                s = s + y[i] * y[i]
            if s <= R2:
                for i in range(d):
                    z[i] = y[i]
                return


cdef inline int window_keep(const Field* f, uint64_t key, const int64_t* m) noexcept nogil:
    cdef int d = f.d
    cdef int R = f.R
    cdef int64_t o[MAXD]
    cdef int64_t n[MAXD]
    cdef int i, j
    for i in range(d):
        o[i] = -R
    while True:
        for i in range(d):
            n[i] = m[i] + o[i]
        if not draw_unit(site_hash(key, n, d), 0) < f.theta:
            return 0
        j = d - 1
        while j >= 0:
            o[j] += 1
            if o[j] <= R:
                break
            o[j] = -R
            j -= 1
        if j < 0:
            return 1


cdef inline int site_mark(const Field* f, uint64_t key, const int64_t* m, double* z) noexcept nogil:
    """Keep flag a(m); writes z(m)."""
    cdef int d = f.d
    cdef int i, a
    cdef bint origin = f.kind == 1
    cdef uint64_t h = site_hash(key, m, d)
    if origin:
        for i in range(d):
            if m[i] != 0:
                origin = False
                break
    if origin:
        a = draw_unit(h, 0) < f.p0
        displacement(h, f.disp0, f.rmax0, f.w0, d, z)
        return a
    if f.kind == 2:
        a = window_keep(f, key, m)
    else:
        a = draw_unit(h, 0) < f.p
    displacement(h, f.disp, f.rmax, f.w, d, z)
    return a


cdef inline void load_lat(Lat* L, int d, const double[:, :, ::1] M, const double[:, ::1] xi,
                          const double[:, :, ::1] Binv, const int64_t[:, :, ::1] U,
                          const double[:, ::1] xr, Py_ssize_t n) noexcept nogil:
    cdef int i, j
    cdef double s
    L.d = d
    for i in range(d):
        L.xi[i] = xi[n, i]
        L.xr[i] = xr[n, i]
        for j in range(d):
            L.M[i * MAXD + j] = M[n, i, j]
            L.Binv[i * MAXD + j] = Binv[n, i, j]
            L.U[i * MAXD + j] = U[n, i, j]
    for j in range(d):
        s = 0.0
        for i in range(d):
            s = s + Binv[n, i, j] * Binv[n, i, j]
        L.colnorm[j] = sqrt(s)


cdef inline void lat_point(const Lat* L, const int64_t* k, int64_t* m, double* p) noexcept nogil:
    """Original index m = k U and point (m + xi) M in a fixed summation order."""
    cdef int d = L.d
    cdef int i, j
    cdef double c[MAXD]
    for j in range(d):
        m[j] = 0
        for i in range(d):
            m[j] += k[i] * L.U[i * MAXD + j]
        c[j] = <double>m[j] + L.xi[j]
    for j in range(d):
        p[j] = c[0] * L.M[j]
    for i in range(1, d):
        for j in range(d):
            p[j] = p[j] + c[i] * L.M[i * MAXD + j]


cdef inline int coef_box(const Lat* L, const double* lo, const double* hi, double W,
                         int64_t* kmin, int64_t* kmax) noexcept nogil:
    """Reduced-coordinate box covering the world box [lo, hi] dilated by a ball of radius W."""
    cdef int d = L.d
    cdef int i, j
    cdef double a, b, cmin, cmax
    for j in range(d):
        cmin = 0.0
        cmax = 0.0
        for i in range(d):
            a = lo[i] * L.Binv[i * MAXD + j]
            b = hi[i] * L.Binv[i * MAXD + j]
            if a < b:
                cmin += a
                cmax += b
            else:
                cmin += b
                cmax += a
        cmin -= W * L.colnorm[j]
        cmax += W * L.colnorm[j]
        kmin[j] = <int64_t>ceil(cmin - L.xr[j] - COEF_PAD)
        kmax[j] = <int64_t>floor(cmax - L.xr[j] + COEF_PAD)
        if kmin[j] > kmax[j]:
            return 0
    return 1


cdef inline bint next_index(int64_t* k, const int64_t* kmin, const int64_t* kmax, int d) noexcept nogil:
    cdef int j = d - 1
    while j >= 0:
        k[j] += 1
        if k[j] <= kmax[j]:
            return True
        k[j] = kmin[j]
        j -= 1
    return False


cdef inline bint same_site(const int64_t* m, const int64_t* ref, int d) noexcept nogil:
    cdef int i
    for i in range(d):
        if m[i] != ref[i]:
            return False
    return True


def field_marks(const uint64_t[::1] keys, const int64_t[:, ::1] ms, const int64_t[::1] fi,
                const double[::1] fp, int8_t[::1] a_out, double[:, ::1] z_out):
    """Marks at sites ``ms[i]`` under keys ``keys[i]``."""
    cdef Field f = make_field(fi, fp, 1)
    cdef Py_ssize_t n = ms.shape[0], i
    cdef int d = f.d, j
    cdef int64_t m[MAXD]
    cdef double z[MAXD]
    with nogil:
        for i in range(n):
            for j in range(d):
                m[j] = ms[i, j]
            a_out[i] = <int8_t>site_mark(&f, keys[i], m, z)
            for j in range(d):
                z_out[i, j] = z[j]


def free_path_batch(const double[:, :, ::1] M, const double[:, ::1] xi, const double[:, :, ::1] Binv,
                    const int64_t[:, :, ::1] U, const double[:, ::1] xr,
                    const double[:, ::1] Q, const double[:, ::1] V, const uint64_t[::1] keys,
                    const int64_t[:, ::1] skip, const int8_t[::1] use_skip,
                    double r, double W, double delta, double lmax,
                    const int64_t[::1] fi, const double[::1] fp, int marked,
                    double[::1] t_out, int8_t[::1] status_out):
    """First entry times of rays ``Q[i] + t V[i]`` into balls of radius r around kept, shifted sites.

    One lattice (index 0 of the lattice arrays) is shared by all rays.
    status: 0 hit, 1 censored beyond ``lmax``, 2 launch strictly inside a ball.
    """
    cdef Field f = make_field(fi, fp, marked)
    cdef Lat L
    cdef int d = M.shape[1]
    cdef Py_ssize_t n = Q.shape[0], ray
    cdef int i
    cdef int64_t seg
    cdef int64_t k[MAXD]
    cdef int64_t kmin[MAXD]
    cdef int64_t kmax[MAXD]
    cdef int64_t m[MAXD]
    cdef int64_t ref[MAXD]
    cdef double p[MAXD]
    cdef double c[MAXD]
    cdef double z[MAXD]
    cdef double q[MAXD]
    cdef double v[MAXD]
    cdef double lo[MAXD]
    cdef double hi[MAXD]
    cdef double r2 = r * r
    cdef double Wpad = W * (1.0 + 1e-9) + 1e-12
    cdef double Wpad2 = Wpad * Wpad
    cdef double best, s0, s1, dd, sp, diff, rho2, t, e0, e1
    cdef bint invalid, has_skip
    with nogil:
        load_lat(&L, d, M, xi, Binv, U, xr, 0)
        for i in range(d):
            z[i] = 0.0
        for ray in range(n):
            for i in range(d):
                q[i] = Q[ray, i]
                v[i] = V[ray, i]
                ref[i] = skip[ray, i]
            has_skip = use_skip[ray] != 0
            best = INFINITY
            invalid = False
            seg = 0
            while True:
                s0 = seg * delta
                s1 = s0 + delta
                for i in range(d):
                    e0 = q[i] + s0 * v[i]
                    e1 = q[i] + s1 * v[i]
                    lo[i] = e0 if e0 < e1 else e1
                    hi[i] = e1 if e0 < e1 else e0
                if coef_box(&L, lo, hi, Wpad, kmin, kmax):
                    for i in range(d):
                        k[i] = kmin[i]
                    while True:
                        lat_point(&L, k, m, p)
                        if not (has_skip and same_site(m, ref, d)):
                            dd = 0.0
                            sp = 0.0
                            for i in range(d):
                                diff = p[i] - q[i]
                                dd = dd + diff * diff
                                sp = sp + diff * v[i]
                            if sp >= -Wpad and dd - sp * sp <= Wpad2:
                                if marked:
                                    if not site_mark(&f, keys[ray], m, z):
                                        if not next_index(k, kmin, kmax, d):
                                            break
                                        continue
                                dd = 0.0
                                sp = 0.0
                                for i in range(d):
                                    c[i] = p[i] + r * z[i]
                                    diff = c[i] - q[i]
                                    dd = dd + diff * diff
                                    sp = sp + diff * v[i]
                                if dd < r2:
                                    invalid = True
                                    break
                                if sp > 0.0:
                                    rho2 = dd - sp * sp
                                    if rho2 < r2:
                                        t = sp - sqrt(r2 - rho2)
                                        if t < best:
                                            best = t
                        if not next_index(k, kmin, kmax, d):
                            break
                if invalid or best <= s1 or s1 >= lmax:
                    break
                seg += 1
            if invalid:
                t_out[ray] = NAN
                status_out[ray] = 2
            elif best <= lmax:
                t_out[ray] = best
                status_out[ray] = 0
            else:
                t_out[ray] = INFINITY
                status_out[ray] = 1


def first_entry_batch(const double[:, :, ::1] M, const double[:, ::1] xi, const double[:, :, ::1] Binv,
                      const int64_t[:, :, ::1] U, const double[:, ::1] xr,
                      const double[:, :, ::1] E, const double[:, ::1] bvec, const uint64_t[::1] keys,
                      const int64_t[:, ::1] ref, const int8_t[::1] exclude,
                      double R, double sbound, double delta, double tmax,
                      const int64_t[::1] fi, const double[::1] fp, int marked, double[::1] out):
    """Smallest axial coordinate x1 > 0 of a kept point whose shifted transverse part lies in the open R-ball.

    Shifts are ``((z(m) - z(ref) - bvec) E)_perp`` with ``z(ref)`` only when
    ``exclude`` is set (the reference site itself is dropped).  Returns inf
    when nothing enters before ``tmax``.
    """
    cdef Field f = make_field(fi, fp, marked)
    cdef Lat L
    cdef int d = M.shape[1]
    cdef Py_ssize_t n = M.shape[0], rep
    cdef int i, l
    cdef int64_t seg
    cdef int64_t k[MAXD]
    cdef int64_t kmin[MAXD]
    cdef int64_t kmax[MAXD]
    cdef int64_t m[MAXD]
    cdef int64_t rf[MAXD]
    cdef double p[MAXD]
    cdef double z[MAXD]
    cdef double z0[MAXD]
    cdef double w[MAXD]
    cdef double lo[MAXD]
    cdef double hi[MAXD]
    cdef double Rt = R + sbound
    cdef double Rt2 = (Rt * (1.0 + 1e-9) + 1e-12) * (Rt * (1.0 + 1e-9) + 1e-12)
    cdef double R2 = R * R
    cdef double best, x0, x1, perp2, sh, y
    cdef bint excl
    with nogil:
        for rep in range(n):
            load_lat(&L, d, M, xi, Binv, U, xr, rep)
            excl = exclude[rep] != 0
            for i in range(d):
                rf[i] = ref[rep, i]
                z0[i] = 0.0
                z[i] = 0.0
            if excl and marked:
                site_mark(&f, keys[rep], rf, z0)
            best = INFINITY
            seg = 0
            while True:
                x0 = seg * delta
                x1 = x0 + delta
                lo[0] = x0
                hi[0] = x1
                for i in range(1, d):
                    lo[i] = -Rt
                    hi[i] = Rt
                if coef_box(&L, lo, hi, 0.0, kmin, kmax):
                    for i in range(d):
                        k[i] = kmin[i]
                    while True:
                        lat_point(&L, k, m, p)
                        if p[0] > 0.0 and p[0] >= x0 and p[0] < x1 and p[0] < best:
                            perp2 = 0.0
                            for i in range(1, d):
                                perp2 = perp2 + p[i] * p[i]
                            if perp2 <= Rt2 and not (excl and same_site(m, rf, d)):
                                if (not marked) or site_mark(&f, keys[rep], m, z):
                                    for i in range(d):
                                        w[i] = z[i] - z0[i] - bvec[rep, i]
                                    perp2 = 0.0
                                    for l in range(1, d):
                                        sh = w[0] * E[rep, 0, l]
                                        for i in range(1, d):
                                            sh = sh + w[i] * E[rep, i, l]
                                        y = p[l] + sh
                                        perp2 = perp2 + y * y
                                    if perp2 < R2:
                                        best = p[0]
                        if not next_index(k, kmin, kmax, d):
                            break
                if best < INFINITY or x1 >= tmax:
                    break
                seg += 1
            out[rep] = best


cdef inline bint inside(int kind, const double[::1] rp, const double* x, int d) noexcept nogil:
    cdef int i, l
    cdef double s, y, y0
    if kind == 0:
        s = 0.0
        for i in range(d):
            y = x[i] - rp[i]
            s = s + y * y
        return s < rp[d] * rp[d]
    if kind == 1:
        for i in range(d):
            if not (rp[i] < x[i] and x[i] < rp[d + i]):
                return False
        return True
    if kind == 2:
        y0 = x[0] * rp[2]
        for l in range(1, d):
            y0 = y0 + x[l] * rp[2 + l]
        if not (0.0 < y0 and y0 < rp[0]):
            return False
        s = 0.0
        for i in range(1, d):
            y = x[0] * rp[2 + i * d]
            for l in range(1, d):
                y = y + x[l] * rp[2 + i * d + l]
            s = s + y * y
        return s < rp[1] * rp[1]
    if kind == 3:
        s = 0.0
        for i in range(d):
            y = x[i] - rp[i]
            s = s + y * y
        return rp[d] * rp[d] < s and s < rp[d + 1] * rp[d + 1]
    return False


def count_batch(const double[:, :, ::1] M, const double[:, ::1] xi, const double[:, :, ::1] Binv,
                const int64_t[:, :, ::1] U, const double[:, ::1] xr,
                int kind, const double[::1] rp, const double[::1] box_lo, const double[::1] box_hi,
                double dilation,
                const double[:, :, ::1] E, const double[:, ::1] bvec, const uint64_t[::1] keys,
                const int64_t[:, ::1] ref, const int8_t[::1] exclude,
                const int64_t[::1] fi, const double[::1] fp, int marked, int shifted,
                int64_t[::1] out):
    """Number of kept points (shifted transversally when ``shifted``) inside an open region, per lattice."""
    cdef Field f = make_field(fi, fp, marked)
    cdef Lat L
    cdef int d = M.shape[1]
    cdef Py_ssize_t n = M.shape[0], rep
    cdef int i, l
    cdef int64_t cnt
    cdef int64_t k[MAXD]
    cdef int64_t kmin[MAXD]
    cdef int64_t kmax[MAXD]
    cdef int64_t m[MAXD]
    cdef int64_t rf[MAXD]
    cdef double p[MAXD]
    cdef double x[MAXD]
    cdef double z[MAXD]
    cdef double z0[MAXD]
    cdef double w[MAXD]
    cdef double lo[MAXD]
    cdef double hi[MAXD]
    cdef double sh
    cdef bint excl
    with nogil:
        for i in range(d):
            lo[i] = box_lo[i]
            hi[i] = box_hi[i]
        for rep in range(n):
            load_lat(&L, d, M, xi, Binv, U, xr, rep)
            excl = exclude[rep] != 0
            for i in range(d):
                rf[i] = ref[rep, i]
                z0[i] = 0.0
                z[i] = 0.0
            if excl and marked and shifted:
                site_mark(&f, keys[rep], rf, z0)
            cnt = 0
            if coef_box(&L, lo, hi, dilation, kmin, kmax):
                for i in range(d):
                    k[i] = kmin[i]
                while True:
                    lat_point(&L, k, m, p)
                    if not (excl and same_site(m, rf, d)):
                        if (not marked) or site_mark(&f, keys[rep], m, z):
                            if shifted:
                                for i in range(d):
                                    w[i] = z[i] - z0[i] - bvec[rep, i]
                                x[0] = p[0]
                                for l in range(1, d):
                                    sh = w[0] * E[rep, 0, l]
                                    for i in range(1, d):
                                        sh = sh + w[i] * E[rep, i, l]
                                    x[l] = p[l] + sh
                            else:
                                for i in range(d):
                                    x[i] = p[i]
                            if inside(kind, rp, x, d):
                                cnt += 1
                    if not next_index(k, kmin, kmax, d):
                        break
            out[rep] = cnt
