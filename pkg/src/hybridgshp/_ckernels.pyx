# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Signatures mirror :mod:`hybridgshp._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, expm1

cnp.import_array()

cdef double EULER_GAMMA = 0.57721566490153286061
cdef double FPMIN = 1e-300
cdef double EPS = 1e-16


cdef double _exp1(double x) noexcept nogil:
    cdef double s, term, fact, b, c, d, h, de, an
    cdef int k, i
    if x <= 1.0:
        s = 0.0
        fact = 1.0
        term = 1.0
        for k in range(1, 60):
            fact *= x / k
            term = fact / k
            if k % 2 == 1:
                s += term
            else:
                s -= term
            if term < EPS * fabs(s):
                break
        return -EULER_GAMMA - log(x) + s
    if x > 745.0:
        return 0.0
    b = x + 1.0
    c = 1.0 / FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -<double>(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        de = c * d
        h *= de
        if fabs(de - 1.0) < EPS:
            break
    return h * exp(-x)


def exp1(double x):
    if not x > 0.0:
        raise ValueError(f"exp1 requires x > 0, got {x!r}")
    return _exp1(x)


def exp1_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xa.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    for i in range(n):
        if not xa[i] > 0.0:
            raise ValueError(f"exp1 requires x > 0, got {xa[i]!r}")
        out[i] = _exp1(xa[i])
    return out.reshape(np.shape(x))


def agg_push(double[::1] e, long[::1] w, long nb, double e_new, long per_level):
    """Insert a unit-width block (newest first) and merge overflowing levels.

    Returns the new block count.
    """
    cdef long i, j, run_start, run_len, cap = e.shape[0]
    if nb + 1 > cap:
        raise OverflowError("aggregation capacity exceeded")
    for i in range(nb, 0, -1):
        e[i] = e[i - 1]
        w[i] = w[i - 1]
    e[0] = e_new
    w[0] = 1
    nb += 1
    i = 0
    while i < nb:
        run_start = i
        while i + 1 < nb and w[i + 1] == w[run_start]:
            i += 1
        run_len = i - run_start + 1
        if run_len > per_level:
            # merge the two oldest blocks of this width
            e[i - 1] = e[i - 1] + e[i]
            w[i - 1] = w[i - 1] + w[i]
            for j in range(i, nb - 1):
                e[j] = e[j + 1]
                w[j] = w[j + 1]
            nb -= 1
            i -= 1
            continue
        i += 1
    return nb


def agg_temperature(double[::1] e, long[::1] w, long nb, double[::1] gtab):
    cdef long b, age = 0
    cdef double s = 0.0
    cdef long nmax = gtab.shape[0] - 1
    for b in range(nb):
        if age + w[b] > nmax:
            raise IndexError("step response table too short for aggregation history")
        s += (e[b] / w[b]) * (gtab[age + w[b]] - gtab[age])
        age += w[b]
    return s


def direct_superposition(double[::1] q, double[::1] gtab):
    cdef Py_ssize_t n = q.shape[0], i, k
    if gtab.shape[0] < n + 1:
        raise IndexError("step response table too short for history")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] dg = np.diff(np.asarray(gtab)[: n + 1])
    cdef double s
    for i in range(n):
        s = 0.0
        for k in range(i + 1):
            s += q[k] * dg[i - k]
        out[i] = s
    return out


cdef int _solve(double* a, double* b, int n) noexcept nogil:
    cdef int i, j, k, p
    cdef double m, t, best
    for k in range(n):
        p = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                p = i
        if best == 0.0:
            return -1
        if p != k:
            for j in range(n):
                t = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = t
            t = b[k]
            b[k] = b[p]
            b[p] = t
        for i in range(k + 1, n):
            m = a[i * n + k] / a[k * n + k]
            if m != 0.0:
                for j in range(k, n):
                    a[i * n + j] -= m * a[k * n + j]
                b[i] -= m * b[k]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, n):
            t -= a[i * n + j] * b[j]
        b[i] = t / a[i * n + i]
    return 0


def borehole_step(double[::1] temps, double[::1] tb, double t_in, double mcp,
                  double g_wall, double g_pp, double cap, double dt):
    """Advance the 2N-cell U-tube network one backward-Euler step in place.

    Cells are in flow order: down leg top->bottom, then up leg bottom->top.
    Returns ``(t_out, wall_heat_w)`` with wall heat positive into the ground.
    """
    cdef int n2 = temps.shape[0], nseg = n2 // 2, j, pj, pjm
    cdef double g = g_wall + g_pp, ntu, phi, a, bcoef, c_dt = cap / dt
    cdef cnp.ndarray[cnp.float64_t, ndim=1] amat = np.zeros(n2 * n2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rhs = np.empty(n2, dtype=np.float64)
    cdef double* A = <double*> amat.data
    cdef double* B = <double*> rhs.data
    cdef double t_out, heat = 0.0
    if mcp > 0.0:
        ntu = g / mcp
        phi = ntu / expm1(ntu) if ntu > 1e-12 else 1.0
    else:
        phi = 0.0
    a = (1.0 - phi) * g_pp / g
    bcoef = (1.0 - phi) * g_wall / g
    for j in range(n2):
        pj = n2 - 1 - j
        A[j * n2 + j] += c_dt + mcp * phi + g
        A[j * n2 + pj] += mcp * a - g_pp
        B[j] = c_dt * temps[j] + g_wall * tb[j if j < nseg else pj] - mcp * bcoef * tb[j if j < nseg else pj]
        if j == 0:
            B[j] += mcp * t_in
        else:
            pjm = n2 - j
            A[j * n2 + j - 1] -= mcp * phi
            A[j * n2 + pjm] -= mcp * a
            B[j] += mcp * bcoef * tb[(j - 1) if (j - 1) < nseg else pjm]
    if _solve(A, B, n2) != 0:
        raise ArithmeticError("singular borehole network matrix")
    for j in range(n2):
        temps[j] = B[j]
        heat += g_wall * (B[j] - tb[j if j < nseg else n2 - 1 - j])
    if mcp > 0.0:
        t_out = phi * temps[n2 - 1] + (1.0 - phi) * (g_wall * tb[0] + g_pp * temps[0]) / g
    else:
        t_out = temps[n2 - 1]
    return t_out, heat
