import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridgshp.heatpump import (
    KELVIN,
    MAP_HEADER,
    HeatPumpError,
    ModeMap,
    RankDeficientError,
    Reference,
    fit_performance_map,
    fitted_model,
    generate_map_rows,
    hp_capacity,
    hp_cop,
    hp_power,
    normalized,
    read_map_csv,
    synthetic_ashp,
    synthetic_gshp,
    write_map_csv,
)

REF = Reference(1.0e5, 2.5e4, 323.15, 283.15, 5.0, 6.0)
KNOWN = (0.3, 0.4, 0.1, 0.1, 0.1)


def _map(cap=KNOWN, power=(0.2, 0.5, -0.1, 0.2, 0.2)):
    return ModeMap(cap, power, REF)


def _grid_rows(m, n=None):
    rows = generate_map_rows(m, [35.0, 45.0, 55.0], [0.0, 10.0, 20.0])
    return rows if n is None else rows[:n]


def test_constant_map():
    m = ModeMap((1, 0, 0, 0, 0), (1, 0, 0, 0, 0), REF)
    for args in ((300.0, 270.0, 1.0, 2.0), (350.0, 290.0, 9.0, 0.5)):
        assert hp_capacity(m, *args) == REF.q_ref
        assert hp_power(m, *args) == REF.p_ref


def test_reference_point_identity():
    m = _map()
    at_ref = (REF.t_load, REF.t_source, REF.mdot_load, REF.mdot_source)
    assert hp_capacity(m, *at_ref) == pytest.approx(sum(m.capacity_coef) * REF.q_ref, rel=1e-14)
    assert hp_power(m, *at_ref) == pytest.approx(sum(m.power_coef) * REF.p_ref, rel=1e-14)


def test_doubling_load_temperature_increment():
    m = _map()
    base = (REF.t_load, REF.t_source, REF.mdot_load, REF.mdot_source)
    doubled = (2 * REF.t_load, REF.t_source, REF.mdot_load, REF.mdot_source)
    assert hp_capacity(m, *doubled) - hp_capacity(m, *base) == pytest.approx(0.4 * REF.q_ref, rel=1e-12)


def test_capacity_clamp_and_power_floor():
    m = ModeMap((-2.0, 0, 0, 0, 0), (-2.0, 0, 0, 0, 0), REF)
    assert hp_capacity(m, 300.0, 280.0, 1.0, 1.0) == 0.0
    assert hp_power(m, 300.0, 280.0, 1.0, 1.0) == 1.0
    assert hp_cop(m, 300.0, 280.0, 1.0, 1.0) == 0.0


def test_vector_evaluation():
    m = _map()
    tl = np.array([300.0, 320.0, 340.0])
    vec = hp_capacity(m, tl, 280.0, 5.0, 6.0)
    assert vec.shape == (3,)
    for v, t in zip(vec, tl):
        assert v == pytest.approx(hp_capacity(m, float(t), 280.0, 5.0, 6.0))


def test_fit_round_trip_known_coefficients():
    truth = _map()
    res = fit_performance_map(_grid_rows(truth), REF)
    np.testing.assert_allclose(res.mode_map.capacity_coef, KNOWN, atol=1e-9)
    np.testing.assert_allclose(res.mode_map.power_coef, truth.power_coef, atol=1e-9)
    assert res.max_rel_residual_capacity < 1e-9
    assert res.max_rel_residual_power < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=5, max_size=5), st.lists(st.floats(-1.0, 1.0), min_size=5, max_size=5))
def test_fit_round_trip_random(cap, power):
    # keep the data away from the clamps so the generator stays affine
    cap = (cap[0] + 5.0, *cap[1:])
    power = (power[0] + 5.0, *power[1:])
    res = fit_performance_map(_grid_rows(ModeMap(tuple(cap), tuple(power), REF)), REF)
    np.testing.assert_allclose(res.mode_map.capacity_coef, cap, atol=1e-9)
    np.testing.assert_allclose(res.mode_map.power_coef, power, atol=1e-9)


def test_five_independent_rows_interpolate():
    truth = _map()
    rows = _grid_rows(truth)
    pick = []
    for i in range(len(rows)):
        trial = pick + [i]
        x = np.column_stack([np.ones(len(trial)), rows[trial, :4]])
        if np.linalg.matrix_rank(x) == len(trial):
            pick = trial
        if len(pick) == 5:
            break
    res = fit_performance_map(rows[pick], REF)
    assert res.max_rel_residual_capacity < 1e-10
    assert res.max_rel_residual_power < 1e-10


def test_rank_deficient_names_columns():
    at_ref = [(REF.t_load, REF.t_source, REF.mdot_load, REF.mdot_source, 1e5, 2.5e4)] * 8
    with pytest.raises(RankDeficientError) as exc:
        fit_performance_map(at_ref, REF)
    msg = str(exc.value)
    assert "constant" in msg and "t_load" in msg and "mdot_source" in msg
    # fixed flows: only the two flow columns collide with the constant
    rows = generate_map_rows(_map(), [35.0, 45.0, 55.0], [0.0, 10.0, 20.0], flow_fractions=(1.0,))
    with pytest.raises(RankDeficientError) as exc:
        fit_performance_map(rows, REF)
    assert "mdot_load" in str(exc.value) and "mdot_source" in str(exc.value)


def test_fit_input_errors():
    with pytest.raises(HeatPumpError):
        fit_performance_map(np.zeros((4, 6)), REF)
    with pytest.raises(HeatPumpError):
        fit_performance_map(np.zeros((8, 5)), REF)


def test_reference_validation():
    with pytest.raises(HeatPumpError):
        Reference(0.0, 1.0, 300.0, 280.0, 1.0, 1.0)
    with pytest.raises(HeatPumpError):
        Reference(1.0, 1.0, -5.0, 280.0, 1.0, 1.0)
    with pytest.raises(HeatPumpError):
        Reference(1.0, 1.0, 300.0, 280.0, 0.0, 1.0)
    with pytest.raises(HeatPumpError):
        ModeMap((1, 0, 0, 0), (1, 0, 0, 0, 0), REF)


@pytest.mark.parametrize("factory,cops", [(synthetic_gshp, (3.5, 5.5)), (synthetic_ashp, (2.5, 4.5))])
def test_synthetic_generator_cop_at_rating(factory, cops):
    hp = factory()
    for mode, cop in zip(("heating", "cooling"), cops):
        m = hp.mode(mode)
        r = m.ref
        at = (r.t_load, r.t_source, r.mdot_load, r.mdot_source)
        assert sum(m.capacity_coef) == pytest.approx(1.0, abs=1e-14)
        assert hp_cop(m, *at) == pytest.approx(cop, rel=1e-12)


def test_synthetic_cooling_map_prefers_cool_sources():
    m = synthetic_gshp().cooling
    r = m.ref
    warm = hp_cop(m, r.t_load, KELVIN + 32.0, r.mdot_load, r.mdot_source)
    cool = hp_cop(m, r.t_load, KELVIN + 18.0, r.mdot_load, r.mdot_source)
    assert cool > r.q_ref / r.p_ref > warm


def test_scaled_model_keeps_cop():
    hp = synthetic_gshp().scaled(2.0e5)
    for m in (hp.heating, hp.cooling):
        r = m.ref
        assert r.q_ref == 2.0e5
        assert hp_capacity(m, r.t_load, r.t_source, r.mdot_load, r.mdot_source) == pytest.approx(2.0e5, rel=1e-12)
    assert hp.heating.ref.cop == pytest.approx(3.5)
    moved = hp.with_source_flow(3.0)
    assert moved.cooling.ref.mdot_source == 3.0 and moved.heating.ref.q_ref == 2.0e5
    with pytest.raises(HeatPumpError):
        hp.mode("defrost")


def test_map_csv_round_trip(tmp_path):
    m = synthetic_gshp().cooling
    rows = generate_map_rows(m, [7.0, 10.0, 13.0], [15.0, 25.0, 35.0])
    path = tmp_path / "map.csv"
    write_map_csv(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(MAP_HEADER)
    back = read_map_csv(path)
    np.testing.assert_allclose(back, rows, rtol=1e-12, atol=1e-9)
    refit = fitted_model(synthetic_gshp(), cooling_rows=back)
    np.testing.assert_allclose(refit.cooling.capacity_coef, m.capacity_coef, atol=1e-8)
    assert refit.heating == synthetic_gshp().heating


def test_map_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_load_c,t_source_c\n1,2\n")
    with pytest.raises(HeatPumpError, match="missing columns"):
        read_map_csv(bad)
    bad.write_text(",".join(MAP_HEADER) + "\n1,2,3,4,five,6\n")
    with pytest.raises(HeatPumpError, match=":2:"):
        read_map_csv(bad)


def test_normalized_preserves_predictions():
    m = _map(cap=(0.5, 0.4, 0.1, 0.1, 0.1))
    n = normalized(m)
    assert sum(n.capacity_coef) == pytest.approx(1.0)
    for args in ((330.0, 280.0, 4.0, 7.0), (300.0, 290.0, 5.0, 6.0)):
        assert hp_capacity(n, *args) == pytest.approx(hp_capacity(m, *args), rel=1e-12)
        assert hp_power(n, *args) == pytest.approx(hp_power(m, *args), rel=1e-12)
    with pytest.raises(HeatPumpError):
        normalized(ModeMap((-1, 0, 0, 0, 0), (1, 0, 0, 0, 0), REF))
