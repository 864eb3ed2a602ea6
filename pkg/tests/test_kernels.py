import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridgshp import _kernels, _pykernels

ck = _kernels.compiled()
needs_ext = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def test_backend_flag_matches_module():
    assert _kernels.BACKEND in ("cython", "python")
    if ck is None:
        assert _kernels.BACKEND == "python"


@needs_ext
@given(st.floats(min_value=1e-12, max_value=700.0))
def test_exp1_backends_agree(x):
    a, b = ck.exp1(x), _pykernels.exp1(x)
    assert a == pytest.approx(b, rel=1e-13, abs=1e-300)


@needs_ext
def test_exp1_rejects_nonpositive():
    for mod in (ck, _pykernels):
        with pytest.raises(ValueError):
            mod.exp1(0.0)


@needs_ext
def test_exp1_array_shape():
    x = np.linspace(0.01, 5.0, 12).reshape(3, 4)
    np.testing.assert_allclose(ck.exp1_array(x), _pykernels.exp1_array(x), rtol=1e-13)
    assert ck.exp1_array(x).shape == (3, 4)


@needs_ext
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(-100, 100), min_size=1, max_size=300))
def test_aggregation_backends_agree(per_level, loads):
    cap = per_level * 70
    states = []
    for mod in (ck, _pykernels):
        e = np.zeros(cap)
        w = np.zeros(cap, dtype=np.int64)
        nb = 0
        for q in loads:
            nb = mod.agg_push(e, w, nb, q, per_level)
        states.append((e, w, nb))
    (e1, w1, n1), (e2, w2, n2) = states
    assert n1 == n2
    np.testing.assert_array_equal(w1, w2)
    np.testing.assert_allclose(e1, e2, rtol=0, atol=1e-9)
    gtab = np.concatenate(([0.0], np.log1p(np.arange(1, len(loads) + 2, dtype=float))))
    assert ck.agg_temperature(e1, w1, n1, gtab) == pytest.approx(
        _pykernels.agg_temperature(e2, w2, n2, gtab), rel=1e-12, abs=1e-12)


@needs_ext
def test_direct_superposition_backends_agree():
    rng = np.random.default_rng(3)
    q = rng.uniform(-50, 50, 500)
    gtab = np.concatenate(([0.0], np.sqrt(np.arange(1, 501, dtype=float))))
    np.testing.assert_allclose(ck.direct_superposition(q, gtab), _pykernels.direct_superposition(q, gtab),
                               rtol=1e-12, atol=1e-10)


@needs_ext
@pytest.mark.parametrize("mcp", [0.0, 50.0, 2000.0])
def test_borehole_step_backends_agree(mcp):
    rng = np.random.default_rng(7)
    t0 = rng.uniform(10, 30, 16)
    tb = rng.uniform(15, 20, 8)
    out = []
    for mod in (ck, _pykernels):
        temps = t0.copy()
        res = mod.borehole_step(temps, tb.copy(), 30.0, mcp, 120.0, 4.0, 2.0e4, 300.0)
        out.append((res, temps))
    (r1, s1), (r2, s2) = out
    assert r1[0] == pytest.approx(r2[0], rel=1e-12)
    assert r1[1] == pytest.approx(r2[1], rel=1e-10, abs=1e-8)
    np.testing.assert_allclose(s1, s2, rtol=1e-12)
