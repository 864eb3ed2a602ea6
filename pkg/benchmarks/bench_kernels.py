"""Time the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends are imported
directly, so the ``HYBRIDGSHP_PURE`` switch does not matter here. Results are
checked for agreement before timings are printed.
"""
import argparse
import timeit

import numpy as np

from hybridgshp import _kernels, _pykernels

rng = np.random.default_rng(0)


def _agg_year(mod, loads, gtab, per_level=16):
    e = np.zeros(4096)
    w = np.zeros(4096, dtype=np.int64)
    nb = 0
    out = np.empty(loads.size)
    for i, q in enumerate(loads):
        nb = mod.agg_push(e, w, nb, float(q), per_level)
        out[i] = mod.agg_temperature(e, w, nb, gtab)
    return out


def _borehole_steps(mod, steps, nseg=8):
    temps = np.full(2 * nseg, 12.0)
    tb = np.full(nseg, 12.0)
    t_out = 0.0
    for k in range(steps):
        t_out, _ = mod.borehole_step(temps, tb, 18.0 + np.sin(k / 50.0), 4000.0, 60.0, 5.0, 2.0e5, 300.0)
    return t_out


def cases(hours):
    x = np.geomspace(1e-6, 50.0, 20000)
    loads = rng.uniform(-40.0, 40.0, hours)
    gtab = np.concatenate(([0.0], np.log1p(np.arange(1, hours + 1) / 24.0)))
    return {
        "exp1_array (20k points)": lambda m: m.exp1_array(x),
        f"aggregation push+evaluate ({hours} h)": lambda m: _agg_year(m, loads, gtab),
        f"direct superposition ({hours} h)": lambda m: m.direct_superposition(loads, gtab),
        "borehole network (2000 steps)": lambda m: _borehole_steps(m, 2000),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hours", type=int, default=8760)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    fast = _kernels.compiled()
    if fast is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . --no-build-isolation")

    print(f"{'kernel':<40} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name, fn in cases(args.hours).items():
        a, b = np.asarray(fn(_pykernels)), np.asarray(fn(fast))
        if not np.allclose(a, b, rtol=1e-9, atol=1e-9):
            raise SystemExit(f"{name}: backends disagree")
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(fast), number=1, repeat=args.repeat))
        print(f"{name:<40} {t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
