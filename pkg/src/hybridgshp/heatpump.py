"""Equation-fit heat pump model: capacity and power affine in normalized
load/source temperatures and flows.

Temperatures are in Kelvin inside this module; callers convert once.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KELVIN = 273.15
MAP_HEADER = ("t_load_c", "t_source_c", "mdot_load", "mdot_source", "capacity_w", "power_w")
COLUMN_NAMES = ("constant", "t_load", "t_source", "mdot_load", "mdot_source")
POWER_FLOOR_W = 1.0


class HeatPumpError(ValueError):
    pass


class RankDeficientError(HeatPumpError):
    pass


@dataclass(frozen=True)
class Reference:
    q_ref: float  # W
    p_ref: float  # W
    t_load: float  # K
    t_source: float  # K
    mdot_load: float  # kg/s
    mdot_source: float  # kg/s

    def __post_init__(self):
        if not (self.q_ref > 0 and self.p_ref > 0):
            raise HeatPumpError("reference capacity and power must be positive")
        if not (self.t_load > 0 and self.t_source > 0):
            raise HeatPumpError("reference temperatures must be positive Kelvin values")
        if not (self.mdot_load > 0 and self.mdot_source > 0):
            raise HeatPumpError("reference flows must be positive")

    @property
    def cop(self) -> float:
        return self.q_ref / self.p_ref


@dataclass(frozen=True)
class ModeMap:
    """Coefficients for one operating mode."""

    capacity_coef: tuple  # alpha_1..alpha_5
    power_coef: tuple  # beta_1..beta_5
    ref: Reference

    def __post_init__(self):
        if len(self.capacity_coef) != 5 or len(self.power_coef) != 5:
            raise HeatPumpError("equation-fit models need exactly five coefficients")


@dataclass(frozen=True)
class HeatPumpModel:
    heating: ModeMap
    cooling: ModeMap
    min_flow_fraction: float = 0.2
    name: str = ""

    def mode(self, mode: str) -> ModeMap:
        if mode == "heating":
            return self.heating
        if mode == "cooling":
            return self.cooling
        raise HeatPumpError(f"unknown mode {mode!r}")

    def scaled(self, q_ref: float) -> "HeatPumpModel":
        """Same map with both modes rescaled to capacity ``q_ref`` at constant reference COP."""
        def rescale(m: ModeMap) -> ModeMap:
            f = q_ref / m.ref.q_ref
            r = m.ref
            return ModeMap(m.capacity_coef, m.power_coef,
                           Reference(q_ref, r.p_ref * f, r.t_load, r.t_source, r.mdot_load * f, r.mdot_source * f))
        return HeatPumpModel(rescale(self.heating), rescale(self.cooling), self.min_flow_fraction, self.name)

    def with_source_flow(self, mdot_source: float) -> "HeatPumpModel":
        """Same map with the source-side reference flow set to ``mdot_source``."""
        def reflow(m: ModeMap) -> ModeMap:
            r = m.ref
            return ModeMap(m.capacity_coef, m.power_coef,
                           Reference(r.q_ref, r.p_ref, r.t_load, r.t_source, r.mdot_load, mdot_source))
        return HeatPumpModel(reflow(self.heating), reflow(self.cooling), self.min_flow_fraction, self.name)


def _features(ref: Reference, t_load, t_source, mdot_load, mdot_source) -> np.ndarray:
    t_load, t_source, mdot_load, mdot_source = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (t_load, t_source, mdot_load, mdot_source))
    )
    return np.stack(
        [np.ones(t_load.shape), t_load / ref.t_load, t_source / ref.t_source,
         mdot_load / ref.mdot_load, mdot_source / ref.mdot_source],
        axis=-1,
    )


def hp_capacity(m: ModeMap, t_load, t_source, mdot_load, mdot_source):
    """Capacity in W, clamped at zero."""
    q = _features(m.ref, t_load, t_source, mdot_load, mdot_source) @ np.asarray(m.capacity_coef) * m.ref.q_ref
    q = np.maximum(q, 0.0)
    return float(q) if q.ndim == 0 else q


def hp_power(m: ModeMap, t_load, t_source, mdot_load, mdot_source):
    """Full-load electric power in W, floored at 1 W."""
    p = _features(m.ref, t_load, t_source, mdot_load, mdot_source) @ np.asarray(m.power_coef) * m.ref.p_ref
    p = np.maximum(p, POWER_FLOOR_W)
    return float(p) if p.ndim == 0 else p


def hp_cop(m: ModeMap, t_load, t_source, mdot_load, mdot_source):
    return hp_capacity(m, t_load, t_source, mdot_load, mdot_source) / hp_power(m, t_load, t_source, mdot_load, mdot_source)


@dataclass(frozen=True)
class FitResult:
    mode_map: ModeMap
    max_rel_residual_capacity: float
    max_rel_residual_power: float


def fit_performance_map(rows, ref: Reference, *, rcond: float = 1e-10) -> FitResult:
    """Least-squares fit of both coefficient sets.

    ``rows`` holds ``(t_load_K, t_source_K, mdot_load, mdot_source, Q_W, P_W)``.
    """
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 6:
        raise HeatPumpError("performance rows need six columns")
    if data.shape[0] < 5:
        raise HeatPumpError(f"need at least 5 rows, got {data.shape[0]}")
    x = _features(ref, data[:, 0], data[:, 1], data[:, 2], data[:, 3])
    _, sv, vt = np.linalg.svd(x, full_matrices=False)
    tol = rcond * sv[0]
    if sv[-1] <= tol:
        null = vt[sv <= tol]
        involved = [COLUMN_NAMES[j] for j in range(5) if np.any(np.abs(null[:, j]) > 1e-8)]
        raise RankDeficientError(f"performance data is rank deficient; collinear columns: {', '.join(involved)}")
    yq = data[:, 4] / ref.q_ref
    yp = data[:, 5] / ref.p_ref
    a = np.linalg.lstsq(x, yq, rcond=None)[0]
    b = np.linalg.lstsq(x, yp, rcond=None)[0]
    mm = ModeMap(tuple(a.tolist()), tuple(b.tolist()), ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        rq = np.abs(x @ a - yq) / np.maximum(np.abs(yq), 1e-12)
        rp = np.abs(x @ b - yp) / np.maximum(np.abs(yp), 1e-12)
    return FitResult(mm, float(rq.max()), float(rp.max()))


# --------------------------------------------------------- synthetic maps


def sensitivity_coefficients(ref: Reference, d_load: float, d_source: float, flow: float = 0.05) -> tuple:
    """Coefficients giving fractional changes ``d_load``/``d_source`` per kelvin
    at the reference point, summing to one there.
    """
    a2 = d_load * ref.t_load
    a3 = d_source * ref.t_source
    return (1.0 - a2 - a3 - 2 * flow, a2, a3, flow, flow)


def _mode_map(q_ref, cop, t_load_c, t_source_c, mdot_load, mdot_source, q_sens, p_sens) -> ModeMap:
    ref = Reference(q_ref, q_ref / cop, t_load_c + KELVIN, t_source_c + KELVIN, mdot_load, mdot_source)
    return ModeMap(sensitivity_coefficients(ref, *q_sens), sensitivity_coefficients(ref, *p_sens, flow=0.02), ref)


# fractional change per kelvin of (load-side, source-side) temperature
_COOL_Q, _COOL_P = (0.03, -0.01), (-0.005, 0.02)
_HEAT_Q, _HEAT_P = (-0.005, 0.02), (0.015, -0.003)


def synthetic_gshp(q_ref: float = 1.0e6, mdot_source: float = 40.0, mdot_load: float = 40.0,
                   cop_heating: float = 3.5, cop_cooling: float = 5.5) -> HeatPumpModel:
    """Water-to-water machine rated at 50 C supply / 10 C loop (heating) and
    10 C supply / 25 C loop (cooling)."""
    return HeatPumpModel(
        _mode_map(q_ref, cop_heating, 50.0, 10.0, mdot_load, mdot_source, _HEAT_Q, _HEAT_P),
        _mode_map(q_ref, cop_cooling, 10.0, 25.0, mdot_load, mdot_source, _COOL_Q, _COOL_P),
        name="synthetic-gshp",
    )


def synthetic_ashp(q_ref: float = 1.0e6, mdot_source: float = 40.0, mdot_load: float = 40.0,
                   cop_heating: float = 2.5, cop_cooling: float = 4.5) -> HeatPumpModel:
    """Air-to-water machine rated at 10 C outdoor (heating) and 22 C outdoor (cooling)."""
    return HeatPumpModel(
        _mode_map(q_ref, cop_heating, 50.0, 10.0, mdot_load, mdot_source, _HEAT_Q, _HEAT_P),
        _mode_map(q_ref, cop_cooling, 10.0, 22.0, mdot_load, mdot_source, _COOL_Q, _COOL_P),
        name="synthetic-ashp",
    )


def generate_map_rows(m: ModeMap, t_load_c, t_source_c, flow_fractions=(0.6, 1.0, 1.2)) -> np.ndarray:
    """Grid of ``(t_load_K, t_source_K, mdot_load, mdot_source, Q, P)`` rows from ``m``."""
    rows = []
    for tl in t_load_c:
        for ts in t_source_c:
            for fl in flow_fractions:
                for fs in flow_fractions:
                    args = (tl + KELVIN, ts + KELVIN, fl * m.ref.mdot_load, fs * m.ref.mdot_source)
                    rows.append((*args, hp_capacity(m, *args), hp_power(m, *args)))
    return np.array(rows)


def write_map_csv(path: str | Path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MAP_HEADER)
        for r in rows:
            w.writerow([f"{r[0] - KELVIN:.6f}", f"{r[1] - KELVIN:.6f}", repr(float(r[2])), repr(float(r[3])),
                        repr(float(r[4])), repr(float(r[5]))])


def read_map_csv(path: str | Path) -> np.ndarray:
    """Rows with temperatures converted to Kelvin."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MAP_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise HeatPumpError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[k]) for k in MAP_HEADER])
            except (TypeError, ValueError) as exc:
                raise HeatPumpError(f"{path}:{i}: bad number ({exc})") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, 6)
    data[:, :2] += KELVIN
    return data


def normalized(m: ModeMap) -> ModeMap:
    """Rescale so the map reproduces its own reference point exactly.

    A fit against a nominal reference can leave coefficient sums away from
    one; folding the sums into ``q_ref``/``p_ref`` keeps predictions unchanged
    and makes ``ref.cop`` the true rated COP.
    """
    sa, sb = sum(m.capacity_coef), sum(m.power_coef)
    if not (sa > 0 and sb > 0):
        raise HeatPumpError("map predicts non-positive capacity or power at its reference point")
    r = m.ref
    ref = Reference(r.q_ref * sa, r.p_ref * sb, r.t_load, r.t_source, r.mdot_load, r.mdot_source)
    return ModeMap(tuple(a / sa for a in m.capacity_coef), tuple(b / sb for b in m.power_coef), ref)


def fitted_model(base: HeatPumpModel, heating_rows=None, cooling_rows=None) -> HeatPumpModel:
    """``base`` with either mode replaced by a fit to the given map rows.

    The base reference point supplies the normalization for the fit.
    """
    heating, cooling = base.heating, base.cooling
    if heating_rows is not None:
        heating = normalized(fit_performance_map(heating_rows, base.heating.ref).mode_map)
    if cooling_rows is not None:
        cooling = normalized(fit_performance_map(cooling_rows, base.cooling.ref).mode_map)
    return HeatPumpModel(heating, cooling, base.min_flow_fraction, base.name)
