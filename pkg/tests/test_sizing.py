import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import ils_time_quad, multipole_rb

from hybridgshp.ground import SECONDS_PER_DAY, BorefieldLayout, GroundProperties, PipeGeometry
from hybridgshp.sizing import (
    BlockLoads,
    DesignTemperatures,
    PenaltyConvergenceError,
    PulseSchedule,
    SizingError,
    SizingInfeasibleError,
    SizingInputs,
    SizingSetup,
    annual_net_flux,
    borehole_count,
    borehole_resistance,
    cop_corrections,
    design_month_plf,
    grid_neighbour_response,
    ground_resistances,
    required_length,
    size_borefield,
    temperature_penalty,
    temperature_gap,
)

G = GroundProperties()
RES = ground_resistances(G)


def _oracle_g(t_days):
    return ils_time_quad(t_days * SECONDS_PER_DAY, G.borehole_radius, G.conductivity, G.diffusivity_si)


def _inputs(**kw):
    r_ga, r_gm, r_gd = RES
    base = dict(q_lc=100 / 1.1818181818181819, q_lh=0.0, eflh_c=1000.0, eflh_h=0.0,
                c_fc=1.1818181818181819, c_fh=0.7142857142857143, r_b=0.13,
                r_ga=r_ga, r_gm=r_gm, r_gd=r_gd, plf_m=0.4)
    base.update(kw)
    return SizingInputs(**base)


# ------------------------------------------------------------ resistances


def test_ground_resistances_against_quadrature():
    t1, t2, t3 = 7300.0, 30.0, 0.25
    g123, g23, g3 = _oracle_g(t1 + t2 + t3), _oracle_g(t2 + t3), _oracle_g(t3)
    expected = (g123 - g23, g23 - g3, g3)
    for got, want in zip(RES, expected):
        assert got == pytest.approx(want, rel=1e-6)
    assert RES == pytest.approx((0.18052425389174195, 0.1560781230226797, 0.08090140030526434), rel=1e-9)


def test_ground_resistances_positive_and_scale_with_conductivity():
    assert all(r > 0 for r in RES)
    doubled = ground_resistances(replace(G, conductivity=2 * G.conductivity))
    for a, b in zip(RES, doubled):
        assert b == pytest.approx(0.5 * a, rel=1e-12)


def test_annual_resistance_shrinks_with_annual_pulse():
    # the t1 -> 0 limit sits outside the pulse ordering, so check the approach instead
    vals = [ground_resistances(G, PulseSchedule(annual_pulse=t1))[0] for t1 in (7300.0, 365.0, 60.0, 31.0, 30.01)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # dg/dt <= 1 / (4 pi k t), so R_ga <= t1 / (4 pi k (t2 + t3))
    for t1, v in zip((7300.0, 365.0, 60.0, 31.0, 30.01), vals):
        assert v <= t1 / 30.25 / (4 * math.pi * G.conductivity)


def test_pulse_ordering():
    with pytest.raises(SizingError):
        PulseSchedule(annual_pulse=20.0)
    with pytest.raises(SizingError):
        PulseSchedule(daily_pulse=0.0)


def test_borehole_resistance_override_passthrough():
    assert borehole_resistance(G, override=0.13) == 0.13
    with pytest.raises(SizingError):
        borehole_resistance(G, override=0.0)


def test_borehole_resistance_against_multipole_oracle():
    pipe = PipeGeometry()
    s = pipe.shank_spacing / 2
    want, _ = multipole_rb(G.borehole_radius, pipe.outer_radius, s, -s, G.grout_conductivity,
                           G.conductivity, pipe.wall_resistance())
    assert borehole_resistance(G, pipe) == pytest.approx(want, rel=1e-4)
    assert borehole_resistance(G, pipe) == pytest.approx(0.10162, abs=1e-5)


def test_borehole_resistance_decreases_with_grout_conductivity():
    vals = [borehole_resistance(replace(G, grout_conductivity=k)) for k in (0.8, 1.4, 2.0, 3.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------ correction factors and flux


def test_cop_corrections():
    c_fc, c_fh = cop_corrections(5.5, 3.5)
    assert c_fc == pytest.approx(1.1818, abs=1e-4)
    assert c_fh == pytest.approx(0.7143, abs=1e-4)
    big = cop_corrections(1e12, 1e12)
    assert big == pytest.approx((1.0, 1.0))
    for bad in ((1.0, 3.0), (3.0, 0.5)):
        with pytest.raises(SizingError):
            cop_corrections(*bad)


def test_annual_net_flux_examples():
    assert annual_net_flux(_inputs()) == pytest.approx(11.416, abs=1e-3)
    heat = _inputs(q_lc=0.0, eflh_c=0.0, q_lh=50 / 0.7142857142857143, eflh_h=500.0)
    assert annual_net_flux(heat) == pytest.approx(-2.854, abs=1e-3)
    bal = _inputs(q_lh=100 / 0.7142857142857143, eflh_h=1000.0)
    assert annual_net_flux(bal) == pytest.approx(0.0, abs=1e-12)


def test_inputs_validation():
    with pytest.raises(SizingError):
        _inputs(eflh_c=9000.0)
    with pytest.raises(SizingError):
        _inputs(c_fc=1.0)
    with pytest.raises(SizingError):
        _inputs(c_fh=1.0)
    with pytest.raises(SizingError):
        _inputs(r_b=-0.1)
    with pytest.raises(SizingError):
        _inputs(q_lc=-1.0)
    with pytest.raises(SizingError):
        _inputs(plf_m=0.0)


# ------------------------------------------------------------ required length


def test_hand_case_regression():
    # q_a 11.416 kW, C_fc q_lc 100 kW, R_b 0.13, PLF 0.4, F_sc 1.04, gap 9.5 K
    inp = _inputs(eflh_c=11.416 * 8760 / 100)
    assert annual_net_flux(inp) == pytest.approx(11.416, rel=1e-12)
    assert required_length("cooling", inp) == pytest.approx(3128.18, abs=0.01)
    assert required_length("cooling", inp) == pytest.approx(3128.1826773771377, rel=1e-9)


def test_no_load_no_length():
    inp = _inputs(q_lc=0.0, eflh_c=0.0)
    assert required_length("cooling", inp) == 0.0
    assert required_length("heating", _inputs()) == 0.0  # cooling-only field, heating floored


@settings(max_examples=40)
@given(st.floats(0.1, 50.0), st.floats(0.0, 8760.0), st.floats(-3.0, 3.0))
def test_length_homogeneous_in_loads(scale, eflh, t_p):
    a = _inputs(eflh_c=eflh, t_p=t_p)
    b = replace(a, q_lc=scale * a.q_lc)
    assert required_length("cooling", b) == pytest.approx(scale * required_length("cooling", a), rel=1e-9)


def test_penalty_moves_gaps_in_opposite_directions():
    lo, hi = _inputs(t_p=0.0), _inputs(t_p=1.0)
    # warm drift shrinks the cooling gap and widens the heating gap by the same amount
    assert temperature_gap("cooling", hi) == pytest.approx(temperature_gap("cooling", lo) - 1.0)
    assert temperature_gap("heating", hi) == pytest.approx(temperature_gap("heating", lo) + 1.0)
    assert required_length("cooling", hi) > required_length("cooling", lo)
    heat = _inputs(q_lc=0.0, eflh_c=0.0, q_lh=70.0, eflh_h=1500.0)
    assert required_length("heating", replace(heat, t_p=1.0)) < required_length("heating", heat)


def test_mirrored_loads_swap_lengths():
    c_fc, c_fh = 1.1818181818181819, 0.7142857142857143
    cool = _inputs(q_lc=80.0, eflh_c=1200.0, q_lh=20.0, eflh_h=600.0, t_p=0.7,
                   t_wi_c=25.0, t_wo_c=30.0, t_wi_h=11.0, t_wo_h=6.0)
    # heating magnitudes chosen so the corrected loads swap exactly; drift flips with q_a
    mirror = replace(cool, q_lc=20.0 * c_fh / c_fc, eflh_c=600.0, q_lh=80.0 * c_fc / c_fh, eflh_h=1200.0,
                     t_p=-0.7, t_wi_c=36 - 11.0, t_wo_c=36 - 6.0, t_wi_h=36 - 25.0, t_wo_h=36 - 30.0)
    assert annual_net_flux(mirror) == pytest.approx(-annual_net_flux(cool), rel=1e-12)
    assert required_length("heating", mirror) == pytest.approx(required_length("cooling", cool), rel=1e-12)
    assert required_length("cooling", mirror) == pytest.approx(required_length("heating", cool), rel=1e-12)


def test_singular_denominator():
    with pytest.raises(SizingInfeasibleError) as exc:
        required_length("cooling", _inputs(t_wi_c=17.0, t_wo_c=19.5))
    assert exc.value.mode == "cooling"
    assert exc.value.gap == pytest.approx(0.25)
    assert "temperature gap" in str(exc.value)
    with pytest.raises(SizingError):
        required_length("sideways", _inputs())


# ------------------------------------------------------------ temperature penalty


def test_single_borehole_penalty_is_zero():
    assert temperature_penalty(BorefieldLayout(((0.0, 0.0),)), G, 10.0, 200.0) == 0.0
    assert grid_neighbour_response(1, 6.0, G) == 0.0


def test_two_borehole_penalty_against_quadrature():
    lay = BorefieldLayout(((0.0, 0.0), (6.0, 0.0)))
    t_p = temperature_penalty(lay, G, 4.0, 400.0)  # 10 W/m
    want = 10.0 * ils_time_quad(7300 * SECONDS_PER_DAY, 6.0, G.conductivity, G.diffusivity_si)
    assert t_p == pytest.approx(want, rel=1e-6)
    assert t_p == pytest.approx(1.187352608228497, rel=1e-9)
    assert temperature_penalty(lay, G, -4.0, 400.0) == pytest.approx(-t_p)
    with pytest.raises(SizingError):
        temperature_penalty(lay, G, 4.0, 0.0)


def test_penalty_nondecreasing_in_count_small_fields():
    vals = [grid_neighbour_response(n, 6.0, G) for n in range(1, 37)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.xfail(strict=True, reason="field-mean penalty dips where the near-square fill reshapes (n = 37, 50)")
def test_penalty_nondecreasing_in_count_all_fields():
    vals = [grid_neighbour_response(n, 6.0, G) for n in range(1, 60)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_penalty_dips_are_small():
    vals = np.array([grid_neighbour_response(n, 6.0, G) for n in range(1, 200)])
    assert np.diff(vals).min() > -0.02


@pytest.mark.parametrize("n", [2, 5, 9, 12, 17])
def test_grid_response_matches_explicit_layout(n):
    lay = BorefieldLayout.near_square(n, 6.0)
    explicit = temperature_penalty(lay, G, 1.0, 1000.0) / (1.0 * 1000.0 / 1000.0)
    assert grid_neighbour_response(n, 6.0, G) == pytest.approx(explicit, rel=1e-10)


# ------------------------------------------------------------ counts and full sizing


def test_borehole_count_arithmetic():
    assert borehole_count(46150.0, 200.0) == 231
    assert borehole_count(46150.0, 100.0) == 462
    assert borehole_count(400.0, 200.0) == 2
    assert borehole_count(400.0 + 1e-7, 200.0) == 2
    assert borehole_count(400.1, 200.0) == 3
    assert borehole_count(0.0, 200.0) == 0
    with pytest.raises(SizingError):
        borehole_count(10.0, 0.0)


def test_design_month_plf():
    base = np.ones(8760)
    assert design_month_plf(base) == 1.0
    base[800] = 4.0  # February
    feb = base[744:1416]
    assert design_month_plf(base) == pytest.approx(feb.mean() / 4.0)
    assert design_month_plf(np.zeros(8760)) == 1.0


def test_block_loads_threshold():
    c = np.tile([0.0, 10.0], 4380)
    h = np.tile([4.0, 0.0], 4380)
    full = BlockLoads.from_profiles(h, c)
    assert full.q_lc == 10.0 and full.eflh_c == pytest.approx(4380.0)
    shaved = BlockLoads.from_profiles(h, c, threshold=5.0)
    assert shaved.q_lc == 5.0 and shaved.q_lh == 4.0
    assert shaved.eflh_c == pytest.approx(4380.0)


def _cooling_block(q_lc=300.0, eflh=1500.0):
    return BlockLoads(q_lc, 0.0, eflh, 0.0, 0.6, 1.0)


def _own_requirement(loads, n, setup=SizingSetup()):
    """Boreholes needed when the penalty is that of an ``n``-borehole field."""
    c_fc, c_fh = cop_corrections(setup.cop_cooling, setup.cop_heating)
    r_ga, r_gm, r_gd = RES
    inp = SizingInputs(q_lc=loads.q_lc, q_lh=loads.q_lh, eflh_c=loads.eflh_c, eflh_h=loads.eflh_h,
                       c_fc=c_fc, c_fh=c_fh, r_b=borehole_resistance(G), r_ga=r_ga, r_gm=r_gm, r_gd=r_gd,
                       plf_m=loads.plf_m_c, plf_m_h=loads.plf_m_h)
    q_a = annual_net_flux(inp)
    t_p = q_a * 1000.0 / (n * setup.depth) * grid_neighbour_response(n, setup.spacing, G)
    inp = replace(inp, t_p=t_p)
    length = max(required_length("cooling", inp), required_length("heating", inp))
    return borehole_count(length, setup.depth), t_p


@pytest.mark.parametrize("loads", [_cooling_block(), _cooling_block(120.0, 1200.0), _cooling_block(40.0, 800.0)])
def test_size_count_is_smallest_self_consistent(loads):
    res = size_borefield(loads)
    n = res.borehole_count
    need, t_p = _own_requirement(loads, n)
    assert t_p == pytest.approx(res.t_p, rel=1e-12)
    assert need <= n
    assert _own_requirement(loads, n - 1)[0] > n - 1
    assert res.borehole_count * res.borehole_depth >= res.length
    assert res.length == res.l_c and res.l_h == 0.0 and res.t_p > 0


def test_count_matches_ceiling_without_coupling():
    # boreholes far apart feel no neighbours, so the count is the plain ceiling
    res = size_borefield(_cooling_block(40.0, 800.0), SizingSetup(spacing=5000.0))
    assert res.t_p == pytest.approx(0.0, abs=1e-9)
    assert res.borehole_count == borehole_count(res.length, 200.0)


@pytest.mark.parametrize("loads", [_cooling_block(), _cooling_block(120.0, 1200.0), _cooling_block(40.0, 800.0)])
def test_count_overshoots_ceiling_by_at_most_two(loads):
    res = size_borefield(loads)
    assert 0 <= res.borehole_count - borehole_count(res.length, 200.0) <= 2


def test_depth_halving_doubles_count_arithmetic():
    for length in (46150.0, 9000.0, 12345.6, 200.0):
        a, b = borehole_count(length, 200.0), borehole_count(length, 100.0)
        assert abs(b - 2 * a) <= 1


def test_size_zero_loads():
    res = size_borefield(BlockLoads(0.0, 0.0, 0.0, 0.0))
    assert res.borehole_count == 0 and res.length == 0.0


def test_size_infeasible_temperatures():
    setup = SizingSetup(temps=DesignTemperatures(cooling_in=17.0, cooling_out=19.5))
    with pytest.raises(SizingInfeasibleError):
        size_borefield(_cooling_block(), setup)


def test_penalty_iteration_limit():
    with pytest.raises(PenaltyConvergenceError):
        size_borefield(_cooling_block(800.0, 3000.0), SizingSetup(max_iterations=1))


def test_reference_full_load_requirement(fixture_profiles):
    heating, cooling = fixture_profiles
    res = size_borefield(BlockLoads.from_profiles(heating, cooling))
    assert res.borehole_count == 487
    assert res.t_p == pytest.approx(5.794, abs=1e-3)
    # strong coupling: the smallest self-consistent field drills slightly more than ceil(L / depth)
    assert res.borehole_count * 200.0 >= res.length
    assert math.ceil(res.length / 200.0 - 1e-9) == 486
