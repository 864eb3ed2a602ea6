"""Borefield length sizing with the three-pulse Kavanaugh-Rafferty method.

Loads are positive magnitudes labelled by mode. The net annual ground flux
``q_a`` is rejection minus extraction, so it is positive for a
cooling-dominated field. The temperature penalty ``t_p`` is the signed
long-term drift of the ground around a borehole caused by its neighbours;
it has the sign of ``q_a`` (a cooling-dominated field warms up).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from .ground import (
    SECONDS_PER_DAY,
    BorefieldLayout,
    GroundProperties,
    PipeGeometry,
    ils_response,
    multipole_resistances,
)
from .load_model import HOURS_PER_YEAR, LoadProfile

#: non-leap month lengths for the design-month part-load factor
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
MIN_TEMPERATURE_GAP = 0.5  # K


class SizingError(ValueError):
    pass


class SizingInfeasibleError(SizingError):
    def __init__(self, mode: str, gap: float):
        super().__init__(f"sizing infeasible in {mode} mode: temperature gap {gap:.3f} K <= {MIN_TEMPERATURE_GAP} K")
        self.mode = mode
        self.gap = gap


class PenaltyConvergenceError(SizingError):
    pass


@dataclass(frozen=True)
class PulseSchedule:
    annual_pulse: float = 7300.0  # days
    monthly_pulse: float = 30.0
    daily_pulse: float = 0.25

    def __post_init__(self):
        if not (self.annual_pulse > self.monthly_pulse > self.daily_pulse > 0):
            raise SizingError("pulses must satisfy annual > monthly > daily > 0")


@dataclass(frozen=True)
class DesignTemperatures:
    cooling_in: float = 25.0
    cooling_out: float = 30.0
    heating_in: float = 8.0
    heating_out: float = 3.0

    @property
    def cooling_mean(self) -> float:
        return 0.5 * (self.cooling_in + self.cooling_out)

    @property
    def heating_mean(self) -> float:
        return 0.5 * (self.heating_in + self.heating_out)


@dataclass(frozen=True)
class SizingInputs:
    q_lc: float  # kW
    q_lh: float  # kW
    eflh_c: float
    eflh_h: float
    c_fc: float
    c_fh: float
    r_b: float
    r_ga: float
    r_gm: float
    r_gd: float
    plf_m: float = 1.0
    f_sc: float = 1.04
    t_p: float = 0.0
    t_g: float = 18.0
    t_wi_c: float = 25.0
    t_wo_c: float = 30.0
    t_wi_h: float = 8.0
    t_wo_h: float = 3.0
    #: heating design-month factor; ``None`` reuses ``plf_m``
    plf_m_h: float | None = None

    def __post_init__(self):
        if self.q_lc < 0 or self.q_lh < 0:
            raise SizingError("block loads are magnitudes and must be >= 0")
        for name in ("eflh_c", "eflh_h"):
            v = getattr(self, name)
            if not 0 <= v <= HOURS_PER_YEAR:
                raise SizingError(f"{name} must lie in [0, 8760], got {v}")
        if min(self.r_b, self.r_ga, self.r_gm, self.r_gd) < 0:
            raise SizingError("resistances must be >= 0")
        if not self.c_fc > 1:
            raise SizingError("C_fc must exceed 1")
        if not 0 < self.c_fh < 1:
            raise SizingError("C_fh must lie in (0, 1)")
        for plf in (self.plf_m, self.plf_m_h):
            if plf is not None and not 0 < plf <= 1:
                raise SizingError("part-load factors must lie in (0, 1]")


@dataclass(frozen=True)
class SizingResult:
    q_a: float  # kW
    l_c: float  # m
    l_h: float
    length: float
    borehole_count: int
    borehole_depth: float = 200.0
    t_p: float = 0.0
    iterations: int = 0

    @property
    def total_drilled(self) -> float:
        return self.borehole_count * self.borehole_depth


def ground_resistances(ground: GroundProperties, pulses: PulseSchedule = PulseSchedule()) -> tuple[float, float, float]:
    """Annual, monthly and daily effective ground resistances, m K/W."""
    t1, t2, t3 = (p * SECONDS_PER_DAY for p in (pulses.annual_pulse, pulses.monthly_pulse, pulses.daily_pulse))
    rb = ground.borehole_radius
    g = lambda t: ils_response(t, rb, ground)  # noqa: E731
    g123, g23, g3 = g(t1 + t2 + t3), g(t2 + t3), g(t3)
    return g123 - g23, g23 - g3, g3


def borehole_resistance(ground: GroundProperties, pipe: PipeGeometry | None = None, override: float | None = None) -> float:
    """Effective fluid-to-wall resistance of a single U-tube, m K/W.

    With ``override`` set, that value is returned unchanged.
    """
    if override is not None:
        if not override > 0:
            raise SizingError("borehole resistance override must be positive")
        return float(override)
    r11, r12 = multipole_resistances(ground, pipe or PipeGeometry())
    rb = 0.5 * (r11 + r12)
    if not rb > 0:
        raise SizingError("non-positive borehole resistance for this geometry")
    return rb


def cop_corrections(cop_c: float, cop_h: float) -> tuple[float, float]:
    if not (cop_c > 1 and cop_h > 1):
        raise SizingError("COP values must exceed 1")
    return 1.0 + 1.0 / cop_c, 1.0 - 1.0 / cop_h


def annual_net_flux(inputs: SizingInputs) -> float:
    """Net annual mean heat rate into the ground, kW (rejection positive)."""
    return (inputs.c_fc * inputs.q_lc * inputs.eflh_c - inputs.c_fh * inputs.q_lh * inputs.eflh_h) / HOURS_PER_YEAR


def temperature_gap(mode: str, inputs: SizingInputs) -> float:
    drifted = inputs.t_g + inputs.t_p
    if mode == "cooling":
        return 0.5 * (inputs.t_wi_c + inputs.t_wo_c) - drifted
    if mode == "heating":
        return drifted - 0.5 * (inputs.t_wi_h + inputs.t_wo_h)
    raise SizingError(f"unknown mode {mode!r}")


def required_length(mode: str, inputs: SizingInputs) -> float:
    """Loop length needed for ``mode``, m; floored at zero."""
    q_a = annual_net_flux(inputs) * 1000.0
    if mode == "cooling":
        block, plf, sign = inputs.c_fc * inputs.q_lc, inputs.plf_m, 1.0
    elif mode == "heating":
        plf = inputs.plf_m if inputs.plf_m_h is None else inputs.plf_m_h
        block, sign = inputs.c_fh * inputs.q_lh, -1.0
    else:
        raise SizingError(f"unknown mode {mode!r}")
    num = sign * q_a * inputs.r_ga + block * 1000.0 * (inputs.r_b + plf * inputs.r_gm + inputs.r_gd * inputs.f_sc)
    if num <= 0:
        return 0.0
    gap = temperature_gap(mode, inputs)
    if gap <= MIN_TEMPERATURE_GAP:
        raise SizingInfeasibleError(mode, gap)
    return num / gap


def borehole_count(length: float, depth: float) -> int:
    """Number of boreholes of ``depth`` covering ``length``; a 1e-9 slack absorbs round-off."""
    if not depth > 0:
        raise SizingError("borehole depth must be positive")
    if length <= 0:
        return 0
    return max(1, math.ceil(length / depth - 1e-9))


def temperature_penalty(layout: BorefieldLayout, ground: GroundProperties, q_a: float, length: float,
                        horizon: float = 7300.0) -> float:
    """Mean neighbour-induced wall temperature drift after ``horizon`` days, K."""
    if not length > 0:
        raise SizingError("total length must be positive")
    dists, weights = layout.distance_weights()
    if dists.size == 0:
        return 0.0
    resp = ils_response(horizon * SECONDS_PER_DAY, dists, ground)
    return float(np.dot(weights, resp)) * q_a * 1000.0 / length


def grid_neighbour_response(count: int, spacing: float, ground: GroundProperties, horizon: float = 7300.0) -> float:
    """Mean over boreholes of the summed neighbour ILS responses, K/(W/m).

    Uses the same near-square fill as :meth:`BorefieldLayout.near_square`;
    pair counts per grid offset come from an FFT autocorrelation, so large
    fields stay cheap.
    """
    if count <= 1:
        return 0.0
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    mask = np.zeros((rows, cols))
    mask.flat[:count] = 1.0
    pairs = np.rint(fftconvolve(mask, mask[::-1, ::-1]))
    dy, dx = np.indices(pairs.shape)
    dist = spacing * np.hypot(dx - (cols - 1), dy - (rows - 1))
    sel = (pairs > 0) & (dist > 0)
    resp = ils_response(horizon * SECONDS_PER_DAY, dist[sel], ground)
    return float(np.dot(pairs[sel], resp)) / count


def design_month_plf(base: np.ndarray) -> float:
    """Mean over peak load in the month holding the annual peak; 1 for an empty profile."""
    base = np.asarray(base, dtype=np.float64)
    if base.max() <= 0:
        return 1.0
    edges = np.concatenate(([0], np.cumsum(MONTH_DAYS) * 24))
    month = int(np.searchsorted(edges, int(np.argmax(base)), side="right") - 1)
    chunk = base[edges[month]:edges[month + 1]]
    return float(chunk.mean() / chunk.max())


@dataclass(frozen=True)
class BlockLoads:
    """Shaved design loads for one candidate threshold."""

    q_lc: float
    q_lh: float
    eflh_c: float
    eflh_h: float
    plf_m_c: float = 1.0
    plf_m_h: float = 1.0

    @classmethod
    def from_profiles(cls, heating: LoadProfile | np.ndarray, cooling: LoadProfile | np.ndarray,
                      threshold: float | None = None) -> "BlockLoads":
        """Base loads ``min(L, c)``; ``threshold=None`` keeps the whole profile."""
        h = np.asarray(getattr(heating, "values", heating), dtype=np.float64)
        c = np.asarray(getattr(cooling, "values", cooling), dtype=np.float64)
        if threshold is not None:
            h = np.minimum(h, threshold)
            c = np.minimum(c, threshold)
        q_lc, q_lh = float(c.max()), float(h.max())
        return cls(
            q_lc,
            q_lh,
            float(c.sum() / q_lc) if q_lc > 0 else 0.0,
            float(h.sum() / q_lh) if q_lh > 0 else 0.0,
            design_month_plf(c),
            design_month_plf(h),
        )


@dataclass(frozen=True)
class SizingSetup:
    """Everything except the loads that a sizing run needs."""

    ground: GroundProperties = GroundProperties()
    pulses: PulseSchedule = PulseSchedule()
    temps: DesignTemperatures = DesignTemperatures()
    pipe: PipeGeometry = PipeGeometry()
    r_b_override: float | None = None
    cop_cooling: float = 5.5
    cop_heating: float = 3.5
    f_sc: float = 1.04
    depth: float = 200.0
    spacing: float = 6.0
    max_iterations: int = 60


def size_borefield(loads: BlockLoads, setup: SizingSetup = SizingSetup()) -> SizingResult:
    """Lengths and borehole count with a self-consistent temperature penalty.

    The count is the smallest near-square field whose drilled length covers
    the requirement evaluated with that field's own penalty. Starting from
    the ``t_p = 0`` estimate, the count is advanced by fixed-point steps
    (doubling when the penalty closes the temperature gap) and then
    tightened by bisection.
    """
    if not setup.depth > 0:
        raise SizingError("borehole depth must be positive")
    ground = setup.ground
    r_ga, r_gm, r_gd = ground_resistances(ground, setup.pulses)
    c_fc, c_fh = cop_corrections(setup.cop_cooling, setup.cop_heating)
    base = SizingInputs(
        q_lc=loads.q_lc, q_lh=loads.q_lh, eflh_c=loads.eflh_c, eflh_h=loads.eflh_h,
        c_fc=c_fc, c_fh=c_fh, r_b=borehole_resistance(ground, setup.pipe, setup.r_b_override),
        r_ga=r_ga, r_gm=r_gm, r_gd=r_gd, plf_m=loads.plf_m_c, plf_m_h=loads.plf_m_h, f_sc=setup.f_sc,
        t_p=0.0, t_g=ground.undisturbed_temperature,
        t_wi_c=setup.temps.cooling_in, t_wo_c=setup.temps.cooling_out,
        t_wi_h=setup.temps.heating_in, t_wo_h=setup.temps.heating_out,
    )
    q_a = annual_net_flux(base)
    depth = setup.depth

    def evaluate(n: int):
        t_p = q_a * 1000.0 / (n * depth) * grid_neighbour_response(n, setup.spacing, ground, setup.pulses.annual_pulse)
        inputs = replace(base, t_p=t_p)
        l_c = required_length("cooling", inputs)
        l_h = required_length("heating", inputs)
        return l_c, l_h, t_p

    l_c, l_h, _ = evaluate(1)
    length = max(l_c, l_h)
    if length <= 0:
        return SizingResult(q_a, l_c, l_h, 0.0, 0, depth, 0.0, 1)
    n = borehole_count(length, depth)
    lo = 0  # largest count known to be insufficient
    for it in range(1, setup.max_iterations + 1):
        try:
            l_c, l_h, t_p = evaluate(n)
        except SizingInfeasibleError:
            lo, n = n, 2 * n
            continue
        need = borehole_count(max(l_c, l_h), depth)
        if need <= n:
            break
        lo, n = n, need
    else:
        raise PenaltyConvergenceError(
            f"temperature penalty did not settle within {setup.max_iterations} iterations (last count {n})"
        )
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        try:
            l_c_m, l_h_m, _ = evaluate(mid)
            ok = borehole_count(max(l_c_m, l_h_m), depth) <= mid
        except SizingInfeasibleError:
            ok = False
        if ok:
            hi = mid
        else:
            lo = mid
    l_c, l_h, t_p = evaluate(hi)
    return SizingResult(q_a, l_c, l_h, max(l_c, l_h), hi, depth, t_p, it)
