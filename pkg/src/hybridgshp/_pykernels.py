"""Pure-Python/numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Both modules expose the same functions with the same semantics; the compiled
one is preferred at import time by :mod:`hybridgshp._kernels`.
"""
import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_FPMIN = 1e-300
_EPS = 1e-16


def exp1(x):
    """Exponential integral E1 for x > 0 (series below 1, continued fraction above)."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"exp1 requires x > 0, got {x!r}")
    if x <= 1.0:
        s = 0.0
        fact = 1.0
        for k in range(1, 60):
            fact *= x / k
            term = fact / k
            s += term if k % 2 else -term
            if term < _EPS * abs(s):
                break
        return -EULER_GAMMA - math.log(x) + s
    if x > 745.0:
        return 0.0
    # modified Lentz evaluation of the continued fraction
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        de = c * d
        h *= de
        if abs(de - 1.0) < _EPS:
            break
    return h * math.exp(-x)


def exp1_array(x):
    xa = np.asarray(x, dtype=np.float64)
    out = np.array([exp1(v) for v in xa.ravel()], dtype=np.float64)
    return out.reshape(xa.shape)


def agg_push(e, w, nb, e_new, per_level):
    cap = e.shape[0]
    if nb + 1 > cap:
        raise OverflowError("aggregation capacity exceeded")
    e[1:nb + 1] = e[:nb].copy()
    w[1:nb + 1] = w[:nb].copy()
    e[0] = e_new
    w[0] = 1
    nb += 1
    i = 0
    while i < nb:
        run_start = i
        while i + 1 < nb and w[i + 1] == w[run_start]:
            i += 1
        if i - run_start + 1 > per_level:
            # merge the two oldest blocks of this width
            e[i - 1] += e[i]
            w[i - 1] += w[i]
            e[i:nb - 1] = e[i + 1:nb].copy()
            w[i:nb - 1] = w[i + 1:nb].copy()
            nb -= 1
            i -= 1
            continue
        i += 1
    return nb


def agg_temperature(e, w, nb, gtab):
    widths = w[:nb]
    edges = np.concatenate(([0], np.cumsum(widths)))
    if edges[-1] > gtab.shape[0] - 1:
        raise IndexError("step response table too short for aggregation history")
    dg = gtab[edges[1:]] - gtab[edges[:-1]]
    return float(np.dot(e[:nb] / widths, dg))


def direct_superposition(q, gtab):
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if gtab.shape[0] < n + 1:
        raise IndexError("step response table too short for history")
    dg = np.diff(np.asarray(gtab, dtype=np.float64)[: n + 1])
    return np.convolve(q, dg)[:n]


def borehole_step(temps, tb, t_in, mcp, g_wall, g_pp, cap, dt):
    n2 = temps.shape[0]
    nseg = n2 // 2
    g = g_wall + g_pp
    if mcp > 0.0:
        ntu = g / mcp
        phi = ntu / math.expm1(ntu) if ntu > 1e-12 else 1.0
    else:
        phi = 0.0
    a = (1.0 - phi) * g_pp / g
    bcoef = (1.0 - phi) * g_wall / g
    seg = np.concatenate((np.arange(nseg), np.arange(nseg)[::-1]))
    tbc = np.asarray(tb, dtype=np.float64)[seg]
    idx = np.arange(n2)
    pair = n2 - 1 - idx
    amat = np.zeros((n2, n2))
    np.add.at(amat, (idx, idx), cap / dt + mcp * phi + g)
    np.add.at(amat, (idx, pair), mcp * a - g_pp)
    rhs = cap / dt * temps + g_wall * tbc - mcp * bcoef * tbc
    rhs[0] += mcp * t_in
    up = idx[1:]
    np.add.at(amat, (up, up - 1), -mcp * phi)
    np.add.at(amat, (up, n2 - up), -mcp * a)
    rhs[1:] += mcp * bcoef * tbc[:-1]
    sol = np.linalg.solve(amat, rhs)
    temps[:] = sol
    heat = float(g_wall * np.sum(sol - tbc))
    if mcp > 0.0:
        t_out = phi * sol[-1] + (1.0 - phi) * (g_wall * tbc[-1] + g_pp * sol[0]) / g
    else:
        t_out = float(sol[-1])
    return float(t_out), heat
