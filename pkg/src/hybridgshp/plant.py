"""Discrete-time plant simulation: building air node, radiator, reversible
heat pumps on ground/air sources, thermostat hysteresis and source dispatch.

All user-facing temperatures are degC; Kelvin appears only at the heat-pump
map boundary.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ground import (
    WATER_CP,
    AggregationState,
    BorefieldLayout,
    BoreholeInternalModel,
    GFunctionTable,
    GroundProperties,
    PipeGeometry,
    StepResponse,
    borefield_gfunction,
    geometric_times,
    internal_step,
)
from .heatpump import KELVIN, HeatPumpModel, ModeMap
from .load_model import HOURS_PER_YEAR

AIR_RHO = 1.2  # kg/m3
AIR_CP = 1005.0  # J/(kg K)
SOURCE_KINDS = ("GSHP-only", "ASHP-only", "GSHP+ASHP", "GSHP+ElectricHeater")
SLEEP, COOLING, HEATING = "sleep", "cooling", "heating"


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class ControlConfig:
    cool_on: float = 26.0
    cool_off: float = 21.0
    heat_on: float = 19.0
    heat_off: float = 24.0
    supply_heating: float = 50.0
    supply_cooling: float = 10.0
    loop_high: float = 30.0
    loop_low: float = 5.0
    nominal_loop_dt: float = 5.0

    def __post_init__(self):
        if not (self.heat_on < self.cool_off <= self.heat_off < self.cool_on):
            raise PlantError("thermostat thresholds must satisfy heat_on < cool_off <= heat_off < cool_on")
        if not self.loop_low < self.loop_high:
            raise PlantError("loop_low must be below loop_high")
        if not self.nominal_loop_dt > 0:
            raise PlantError("nominal loop temperature difference must be positive")


@dataclass(frozen=True)
class SourceConfig:
    kind: str
    borefield: BorefieldLayout | None = None
    failure_low: float = 2.0
    failure_high: float = 35.0
    #: share of the delivered load taken by the auxiliary source while engaged
    assist_fraction: float = 0.5
    #: engage the auxiliary source at every heating step regardless of loop temperature
    force_assist: bool = False

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise PlantError(f"unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        if self.uses_ground and self.borefield is None:
            raise PlantError(f"{self.kind} requires a borefield")
        if not self.failure_low < self.failure_high:
            raise PlantError("failure envelope must satisfy low < high")
        if not 0 < self.assist_fraction <= 1:
            raise PlantError("assist_fraction must lie in (0, 1]")

    @property
    def uses_ground(self) -> bool:
        return self.kind != "ASHP-only"


@dataclass
class BuildingNode:
    floor_area: float  # m2
    ua: float  # W/K
    temperature: float = 22.5
    floor_height: float = 3.0

    def __post_init__(self):
        if not (self.floor_area > 0 and self.floor_height > 0):
            raise PlantError("floor area and height must be positive")
        if not self.ua > 0:
            raise PlantError("radiator UA must be positive")

    @property
    def capacitance(self) -> float:
        return AIR_RHO * AIR_CP * self.floor_area * self.floor_height


@dataclass(frozen=True)
class PlantParams:
    dt: float = 300.0
    substep: float = 60.0
    pump_specific_power: float = 0.03  # kW per kg/s
    capacity_margin: float = 1.25
    floor_area: float = 40000.0
    floor_height: float = 3.0
    initial_indoor: float = 22.5
    warmup_hours: int = 24
    segments: int = 8
    per_level: int = 16
    hours: int = HOURS_PER_YEAR

    def __post_init__(self):
        if not self.dt > 0 or abs(3600.0 / self.dt - round(3600.0 / self.dt)) > 1e-9:
            raise PlantError("dt must divide 3600 s")
        if not 0 < self.substep <= self.dt:
            raise PlantError("substep must lie in (0, dt]")


@dataclass
class SimulationResult:
    status: str
    breakdown: dict  # kWh per source: gshp, ashp, heater, pumps
    indoor: np.ndarray  # hourly mean, degC
    loop_supply: np.ndarray  # hourly, degC (to the ground)
    loop_return: np.ndarray  # hourly, degC (from the ground)
    loop_dt: np.ndarray  # hourly time-averaged supply-return difference, K
    active: np.ndarray  # hourly flag: pumps ran during the hour
    demand: np.ndarray  # hourly flag: nonzero net building load
    power: dict  # hourly mean kW per source
    indoor_steps: np.ndarray  # end-of-step indoor temperature
    reason: str = ""
    failure_hour: float | None = None
    steps_per_hour: int = 12
    meta: dict = field(default_factory=dict)

    @property
    def total_kwh(self) -> float:
        return float(sum(self.breakdown.values()))

    @property
    def failed(self) -> bool:
        return self.status == "failed"

    def comfort_fraction(self, low: float = 19.0, high: float = 26.0, warmup_hours: int = 24, tol: float = 1e-9) -> float:
        t = self.indoor_steps[warmup_hours * self.steps_per_hour:]
        if t.size == 0:
            return 1.0
        return float(np.mean((t >= low - tol) & (t <= high + tol)))

    def mean_loop_dt(self, hours: str = "demand") -> float:
        """Mean hourly time-averaged loop temperature difference, K.

        ``hours="demand"`` averages over hours with a nonzero net building
        load (the hours the nominal flow was sized for); ``hours="pumps"``
        over hours in which the pumps actually ran. Deadband coasting moves
        energy from quiet hours into pumping hours, so the second figure is
        larger by roughly the inverse of the pumping-hour fraction.
        """
        if hours == "demand":
            sel = self.demand.astype(bool)
        elif hours == "pumps":
            sel = self.active.astype(bool)
        else:
            raise PlantError(f"unknown hour selection {hours!r}")
        return float(np.mean(np.abs(self.loop_dt[sel]))) if sel.any() else 0.0

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "failure_hour": self.failure_hour,
            "total_kwh": self.total_kwh,
            **{f"{k}_kwh": v for k, v in self.breakdown.items()},
        }


# ------------------------------------------------------------------ controls


def thermostat_step(t_indoor: float, mode: str, config: ControlConfig) -> tuple[str, bool]:
    """Hysteresis mode update; returns ``(mode', pumps_on)``."""
    if mode == SLEEP:
        if t_indoor > config.cool_on:
            mode = COOLING
        elif t_indoor < config.heat_on:
            mode = HEATING
    elif mode == COOLING:
        if t_indoor <= config.cool_off:
            mode = SLEEP
    elif mode == HEATING:
        if t_indoor >= config.heat_off:
            mode = SLEEP
    else:
        raise PlantError(f"unknown thermostat mode {mode!r}")
    return mode, mode != SLEEP


def hp_enable(loop_flow: float, model: HeatPumpModel, mode: str = COOLING) -> bool:
    if loop_flow < 0:
        raise PlantError("flow must be >= 0")
    if mode == SLEEP:
        return False
    ref_flow = model.mode(mode).ref.mdot_source
    return loop_flow >= model.min_flow_fraction * ref_flow


@dataclass(frozen=True)
class Dispatch:
    sources: frozenset
    failure: str = ""


def source_dispatch(source: SourceConfig, t_loop: float, config: ControlConfig, mode: str = HEATING) -> Dispatch:
    """Active machines for the current loop temperature."""
    if source.kind == "GSHP-only":
        return Dispatch(frozenset({"gshp"}))
    if source.kind == "ASHP-only":
        return Dispatch(frozenset({"ashp"}))
    outside = not (config.loop_low <= t_loop <= config.loop_high)
    if source.kind == "GSHP+ASHP":
        return Dispatch(frozenset({"gshp", "ashp"}) if outside else frozenset({"gshp"}))
    # electric heater variant
    if outside and mode == COOLING:
        return Dispatch(frozenset({"gshp"}), f"electric heater cannot cool (loop at {t_loop:.2f} C)")
    if (outside or source.force_assist) and mode == HEATING:
        return Dispatch(frozenset({"gshp", "heater"}))
    return Dispatch(frozenset({"gshp"}))


def nominal_flow(profile, config: ControlConfig = ControlConfig()) -> float:
    """Loop flow giving the nominal temperature difference at the mean load (kW profile)."""
    values = np.asarray(getattr(profile, "values", profile), dtype=np.float64)
    mean_w = float(np.mean(values)) * 1000.0
    if not mean_w > 0:
        raise PlantError("nominal flow needs a nonzero mean load")
    return mean_w / (WATER_CP * config.nominal_loop_dt)


def radiator_delivery(node: BuildingNode, mode: str, supply: float, capacity: float) -> float:
    """Heat into the room (negative when cooling), capped by ``capacity``."""
    if mode == HEATING:
        return min(max(node.ua * (supply - node.temperature), 0.0), capacity)
    if mode == COOLING:
        return -min(max(node.ua * (node.temperature - supply), 0.0), capacity)
    return 0.0


def building_step(node: BuildingNode, net_load: float, hvac_delivery: float, dt: float) -> float:
    """Explicit Euler update of the air node; ``net_load`` > 0 is heating demand."""
    if not dt > 0:
        raise PlantError("dt must be positive")
    node.temperature += dt * (hvac_delivery - net_load) / node.capacitance
    return node.temperature


def radiator_ua(peak_heating_w: float, peak_cooling_w: float, config: ControlConfig) -> float:
    """Binding-mode conductance: peak over design supply-to-indoor difference."""
    ua = max(peak_heating_w / (config.supply_heating - config.heat_on),
             peak_cooling_w / (config.cool_on - config.supply_cooling))
    if not ua > 0:
        return 1.0
    return ua


# ----------------------------------------------------------- fast map eval


def _affine(coef, m: ModeMap, scale: float, tl: float, ts: float, ml: float, ms: float) -> float:
    r = m.ref
    return (coef[0] + coef[1] * tl / r.t_load + coef[2] * ts / r.t_source
            + coef[3] * ml / r.mdot_load + coef[4] * ms / r.mdot_source) * scale


def _machine(m: ModeMap, t_load_c: float, t_source_c: float) -> tuple[float, float]:
    """Capacity and full-load power at reference flows."""
    tl, ts = t_load_c + KELVIN, t_source_c + KELVIN
    q = max(_affine(m.capacity_coef, m, m.ref.q_ref, tl, ts, m.ref.mdot_load, m.ref.mdot_source), 0.0)
    p = max(_affine(m.power_coef, m, m.ref.p_ref, tl, ts, m.ref.mdot_load, m.ref.mdot_source), 1.0)
    return q, p


# ------------------------------------------------------------ integration


def _advance_building(node: BuildingNode, mode: str, net: float, cap: float, supply: dict,
                      config: ControlConfig, dt: float, substep: float):
    """Integrate the air node over ``dt`` with thermostat events located in time.

    Returns ``(mode, on_time, energy)`` where the dicts are keyed by heating/cooling.
    """
    c = node.capacitance
    on_time = {HEATING: 0.0, COOLING: 0.0}
    energy = {HEATING: 0.0, COOLING: 0.0}
    remaining = dt
    guard = 0
    while remaining > 1e-9:
        guard += 1
        if guard > 10000:
            raise PlantError("thermostat chattering: event loop did not terminate")
        t = node.temperature
        if mode == SLEEP:
            rate = -net / c
            target = None
            if rate > 0 and t <= config.cool_on:
                target = config.cool_on
            elif rate < 0 and t >= config.heat_on:
                target = config.heat_on
            if target is not None and (target - t) / rate <= remaining:
                h = max((target - t) / rate, 0.0)
                node.temperature = target
                remaining -= h
                # crossing the threshold starts the machine
                mode = COOLING if target == config.cool_on else HEATING
                if h == 0.0 and remaining > 0:
                    continue
            else:
                node.temperature = t + rate * remaining
                remaining = 0.0
                mode, _ = thermostat_step(node.temperature, mode, config)
            continue
        h = min(substep, remaining)
        q = radiator_delivery(node, mode, supply[mode], cap)
        t_new = t + h * (q - net) / c
        off = config.cool_off if mode == COOLING else config.heat_off
        crossed = t_new <= off if mode == COOLING else t_new >= off
        if crossed and t_new != t:
            frac = min(max((t - off) / (t - t_new), 0.0), 1.0)
            h *= frac
            t_new = off
        node.temperature = t_new
        on_time[mode] += h
        energy[mode] += abs(q) * h
        remaining -= h
        if crossed:
            mode = SLEEP
    return mode, on_time, energy


@dataclass
class GroundHandle:
    """Prebuilt field response shared read-only across runs."""

    layout: BorefieldLayout
    gfunc: GFunctionTable
    response: StepResponse
    ground: GroundProperties


def build_ground_handle(layout: BorefieldLayout, ground: GroundProperties, dt: float, hours: int,
                        cache_dir=None) -> GroundHandle:
    nsteps = int(round(hours * 3600.0 / dt))
    times = geometric_times(dt, max(nsteps * dt, 10 * dt), 10)
    g = borefield_gfunction(layout, times, ground, cache_dir=cache_dir)
    return GroundHandle(layout, g, StepResponse.from_gfunction(g, dt, nsteps, ground), ground)


def _interp_steps(hourly: np.ndarray, steps_per_hour: int, hours: int) -> np.ndarray:
    """Hourly means placed at hour centres, linearly interpolated to step midpoints."""
    t_mid = (np.arange(hours * steps_per_hour) + 0.5) / steps_per_hour
    centres = np.arange(hourly.size) + 0.5
    return np.interp(t_mid, centres, hourly)


def simulate(heating, cooling, source: SourceConfig, *, weather=None, controls: ControlConfig = ControlConfig(),
             gshp: HeatPumpModel | None = None, ashp: HeatPumpModel | None = None,
             ground_handle: GroundHandle | None = None, ground: GroundProperties = GroundProperties(),
             pipe: PipeGeometry = PipeGeometry(), params: PlantParams = PlantParams(),
             loop_flow: float | None = None) -> SimulationResult:
    """Run one case. Heating/cooling are hourly kW profiles; weather is hourly degC."""
    from .heatpump import synthetic_ashp, synthetic_gshp

    h_kw = np.asarray(getattr(heating, "values", heating), dtype=np.float64)
    c_kw = np.asarray(getattr(cooling, "values", cooling), dtype=np.float64)
    if h_kw.shape != c_kw.shape or h_kw.ndim != 1:
        raise PlantError("heating and cooling profiles must be 1-D and equal length")
    hours = min(params.hours, h_kw.size)
    if weather is None:
        weather = np.full(h_kw.size, 15.0)
    weather = np.asarray(weather, dtype=np.float64)
    if weather.size < hours:
        raise PlantError("weather series shorter than the simulated horizon")
    dt = params.dt
    sph = int(round(3600.0 / dt))
    nsteps = hours * sph

    net_kw = h_kw - c_kw
    peak_h = max(float(net_kw.max()), 0.0) * 1000.0
    peak_c = max(float(-net_kw.min()), 0.0) * 1000.0
    ua = radiator_ua(peak_h, peak_c, controls)
    node = BuildingNode(params.floor_area, ua, params.initial_indoor, params.floor_height)
    if dt > node.capacitance / node.ua or params.substep > node.capacitance / node.ua:
        raise PlantError(f"time step exceeds the explicit stability bound C/UA = {node.capacitance / node.ua:.1f} s")

    gshp = gshp or synthetic_gshp()
    ashp = ashp or synthetic_ashp()
    q_design = params.capacity_margin * max(peak_h, peak_c, 1.0)
    cop_c, cop_h = gshp.cooling.ref.cop, gshp.heating.ref.cop
    src_profile = np.where(net_kw < 0, -net_kw * (1 + 1 / cop_c), net_kw * (1 - 1 / cop_h))
    mdot = loop_flow if loop_flow is not None else (nominal_flow(src_profile, controls) if src_profile.any() else 1.0)
    gshp = gshp.scaled(q_design).with_source_flow(mdot)
    ashp = ashp.scaled(q_design)

    net_w = _interp_steps(net_kw[:hours] * 1000.0, sph, hours) if hours else np.zeros(0)
    outdoor = _interp_steps(weather[:hours], sph, hours) if hours else np.zeros(0)

    use_ground = source.uses_ground
    if use_ground:
        if ground_handle is None:
            ground_handle = build_ground_handle(source.borefield, ground, dt, hours)
        if ground_handle.response.dt != dt or ground_handle.response.nsteps < nsteps:
            raise PlantError("ground handle does not match the simulation time grid")
        layout = ground_handle.layout
        ground = ground_handle.ground
        n_bh = layout.count
        depth = layout.depth
        bh = BoreholeInternalModel.from_geometry(depth, ground, pipe, params.segments)
        agg = AggregationState(dt, params.per_level)
        resp = ground_handle.response
    t_g = ground.undisturbed_temperature
    t_b = t_g
    t_out = t_g
    t_loop = t_g

    mode = SLEEP
    supply = {HEATING: controls.supply_heating, COOLING: controls.supply_cooling}
    kwh = {"gshp": 0.0, "ashp": 0.0, "heater": 0.0, "pumps": 0.0}
    step_power = {k: np.zeros(nsteps) for k in kwh}
    indoor_steps = np.empty(nsteps)
    sup_steps = np.full(nsteps, np.nan)
    ret_steps = np.full(nsteps, np.nan)
    dt_steps = np.zeros(nsteps)
    on_steps = np.zeros(nsteps)
    status, reason, fail_hour = "completed", "", None
    pump_flow = gshp.heating.ref.mdot_load + (mdot if use_ground else 0.0)
    assist = source.assist_fraction

    k_end = nsteps
    for k in range(nsteps):
        net = float(net_w[k])
        # machine mode for this step: current thermostat state, or what the room is drifting toward
        if mode != SLEEP:
            op_mode = mode
        else:
            op_mode = COOLING if net < 0 else HEATING
        disp = source_dispatch(source, t_loop, controls, op_mode)
        # capacity and power available this step
        if "gshp" in disp.sources:
            q_g, p_g = _machine(gshp.mode(op_mode), supply[op_mode], t_out)
        else:
            q_g, p_g = 0.0, 1.0
        aux = "ashp" if "ashp" in disp.sources else ("heater" if "heater" in disp.sources else None)
        if source.kind == "ASHP-only":
            q_a, p_a = _machine(ashp.mode(op_mode), supply[op_mode], float(outdoor[k]))
            cap = q_a
        elif aux == "ashp":
            q_a, p_a = _machine(ashp.mode(op_mode), supply[op_mode], float(outdoor[k]))
            cap = q_g + q_a
        elif aux == "heater":
            q_a, p_a = q_design, q_design
            cap = q_g + q_a
        else:
            q_a, p_a = 0.0, 1.0
            cap = q_g
        if not hp_enable(mdot if use_ground else gshp.heating.ref.mdot_source, gshp, op_mode):
            cap = 0.0

        mode, on_time, energy = _advance_building(node, mode, net, cap, supply, controls, dt, params.substep)
        # a room that needs the machine it cannot get (heater asked to cool) is a failure
        if disp.failure and (on_time[COOLING] > 0 or mode == COOLING):
            status, reason, fail_hour = "failed", disp.failure, k / sph
            k_end = k
            break
        on_total = on_time[HEATING] + on_time[COOLING]
        e_src = 0.0  # J into the ground
        w = {"gshp": 0.0, "ashp": 0.0, "heater": 0.0}
        for m in (HEATING, COOLING):
            e = energy[m]
            if e <= 0:
                continue
            if m != op_mode:
                # mode flipped inside the step; rate the machines for that mode
                qg_m, pg_m = _machine(gshp.mode(m), supply[m], t_out) if "gshp" in disp.sources else (0.0, 1.0)
                if source.kind == "ASHP-only" or aux == "ashp":
                    qa_m, pa_m = _machine(ashp.mode(m), supply[m], float(outdoor[k]))
                else:
                    qa_m, pa_m = q_a, p_a
            else:
                qg_m, pg_m, qa_m, pa_m = q_g, p_g, q_a, p_a
            if source.kind == "ASHP-only":
                w["ashp"] += pa_m / max(qa_m, 1e-9) * e
                continue
            share = assist if aux is not None and not (aux == "heater" and m == COOLING) else 0.0
            e_aux, e_g = share * e, (1.0 - share) * e
            w_g = pg_m / max(qg_m, 1e-9) * e_g
            w["gshp"] += w_g
            if aux == "ashp":
                w["ashp"] += pa_m / max(qa_m, 1e-9) * e_aux
            elif aux == "heater":
                w["heater"] += e_aux
            e_src += (e_g + w_g) if m == COOLING else -(e_g - w_g)
        for key, val in w.items():
            kwh[key] += val / 3.6e6
            step_power[key][k] = val / dt / 1000.0
        pump_kwh = params.pump_specific_power * pump_flow * on_total / 3600.0
        kwh["pumps"] += pump_kwh
        step_power["pumps"][k] = pump_kwh * 3600.0 / dt
        on_steps[k] = on_total / dt
        indoor_steps[k] = node.temperature

        if use_ground:
            if on_total > 0 and mdot > 0:
                flow_eff = mdot * on_total / dt
                t_in = t_out + e_src / (mdot * on_total * WATER_CP)
                t_out_new, q_per_m, _ = internal_step(bh, t_b, t_in, flow_eff / n_bh, dt)
                d_avg = e_src / (mdot * WATER_CP * dt)
            else:
                t_out_new, q_per_m, _ = internal_step(bh, t_b, t_out, 0.0, dt)
                d_avg = 0.0
            t_out = t_out_new
            agg.push(q_per_m)
            t_b = t_g + agg.temperature_rise(resp)
            sup_steps[k] = t_out + d_avg
            ret_steps[k] = t_out
            dt_steps[k] = d_avg
            t_loop = t_out + 0.5 * d_avg
            if source.kind == "GSHP-only" and not (source.failure_low <= t_loop <= source.failure_high):
                status = "failed"
                fail_hour = (k + 1) / sph
                reason = (f"loop temperature {t_loop:.2f} C outside "
                          f"[{source.failure_low:g}, {source.failure_high:g}] C at hour {fail_hour:.2f}")
                k_end = k + 1
                break

    n_h = k_end // sph
    def hourly(a):
        return a[: n_h * sph].reshape(n_h, sph).mean(axis=1) if n_h else np.zeros(0)

    result = SimulationResult(
        status=status,
        breakdown=kwh,
        indoor=hourly(indoor_steps),
        loop_supply=hourly(sup_steps) if use_ground else np.full(n_h, np.nan),
        loop_return=hourly(ret_steps) if use_ground else np.full(n_h, np.nan),
        loop_dt=hourly(dt_steps),
        active=(hourly(on_steps) > 0).astype(np.int8),
        demand=(np.abs(net_kw[:n_h]) > 0).astype(np.int8),
        power={k2: hourly(v) for k2, v in step_power.items()},
        indoor_steps=indoor_steps[:k_end].copy(),
        reason=reason,
        failure_hour=fail_hour,
        steps_per_hour=sph,
        meta={"ua_w_per_k": ua, "loop_flow_kg_s": mdot, "design_capacity_w": q_design,
              "boreholes": source.borefield.count if source.borefield is not None else 0},
    )
    return result


WEATHER_HEADER = ("hour", "outdoor_drybulb_c")


def write_weather(path: str | Path, temps) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_HEADER)
        for h, t in enumerate(np.asarray(temps, dtype=np.float64)):
            w.writerow([h, repr(float(t))])


def read_weather(path: str | Path) -> np.ndarray:
    """Hourly dry-bulb series, degC, from an ``hour,outdoor_drybulb_c`` CSV."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(WEATHER_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise PlantError(f"{path}: missing columns {sorted(missing)}")
        vals = []
        for i, rec in enumerate(reader, start=2):
            try:
                hour, t = int(rec["hour"]), float(rec["outdoor_drybulb_c"])
            except (TypeError, ValueError):
                raise PlantError(f"{path}:{i}: bad number") from None
            if hour != len(vals):
                raise PlantError(f"{path}:{i}: hours must run 0, 1, 2, ... without gaps")
            if not np.isfinite(t):
                raise PlantError(f"{path}:{i}: non-finite temperature")
            vals.append(t)
    if len(vals) < HOURS_PER_YEAR:
        raise PlantError(f"{path}: expected {HOURS_PER_YEAR} hourly rows, got {len(vals)}")
    return np.array(vals)
