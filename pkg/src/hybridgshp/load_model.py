"""Building metadata, benchmark targets and hourly load-profile scaling.

Unscaled hourly profiles are fitted to a metered annual energy and peak by a
gain/offset transform ``k * L + b`` that minimizes the summed squared relative
errors of the annual total and the annual maximum.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760
KBTUH_TO_KW = 0.293071
KBTU_TO_KWH = 0.293071
TON_TO_KW = 3.51685

BUILDING_TYPES = (
    "Admin",
    "Athletic",
    "Datacenter",
    "Auditorium",
    "Bioscience",
    "Chemistry",
    "Engineering",
    "Classroom",
    "Residence",
    "Mixed-use",
)

#: campus type -> commercial prototype model used to generate its unscaled profile
PROTOTYPE_MAP = {
    "Admin": ("Large office",),
    "Athletic": ("Large hotel",),
    "Datacenter": ("Large hotel",),
    "Auditorium": ("Large office",),
    "Bioscience": ("Hospital",),
    "Chemistry": ("Hospital",),
    "Engineering": ("Hospital",),
    "Classroom": ("Secondary school",),
    "Residence": ("Mid-rise apartment",),
    "Mixed-use": ("Hospital", "Secondary school", "Large office"),
}

MODES = ("heating", "cooling")
EXACT_FIT_RESIDUAL = 1e-20


class LoadModelError(ValueError):
    """Invalid or insufficient load-model input."""


class InsufficientDataError(LoadModelError):
    pass


class DegenerateTargetError(LoadModelError):
    pass


class UnscalableProfileError(LoadModelError):
    pass


class ScalingConvergenceError(LoadModelError):
    def __init__(self, message, k, b, residual):
        super().__init__(message)
        self.k = k
        self.b = b
        self.residual = residual


@dataclass(frozen=True)
class BuildingRecord:
    name: str
    area: float
    annual_electricity: float | None = None
    annual_steam: float | None = None
    peak_heating: float | None = None
    peak_cooling: float | None = None
    building_type: str = "Admin"
    cooling_electricity: float | None = None

    def __post_init__(self):
        if not self.area > 0:
            raise LoadModelError(f"{self.name}: area must be positive, got {self.area}")
        for fname in ("annual_electricity", "annual_steam", "peak_heating", "peak_cooling", "cooling_electricity"):
            v = getattr(self, fname)
            if v is not None and (v < 0 or not math.isfinite(v)):
                raise LoadModelError(f"{self.name}: {fname} must be non-negative, got {v}")
        if self.building_type not in BUILDING_TYPES:
            raise LoadModelError(f"{self.name}: unknown building type {self.building_type!r}")


@dataclass(frozen=True)
class BenchmarkParams:
    steam_loss: float = 0.15
    gas_efficiency: float = 0.80
    absorption_chiller_efficiency: float = 0.4
    existing_chiller_intensity: float = 1.25  # kW/ton
    new_chiller_intensity: float = 0.5  # kW/ton
    heating_system_efficiency: float = 0.95
    diversity_coefficient: float = 1.0
    seasonal_chiller_cop: float | None = None
    #: share of a building's electricity attributed to chillers, per campus type
    cooling_attribution: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("steam_loss", "gas_efficiency", "heating_system_efficiency", "diversity_coefficient"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise LoadModelError(f"{name} must lie in (0, 1], got {v}")
        for name in ("absorption_chiller_efficiency", "existing_chiller_intensity", "new_chiller_intensity"):
            if not getattr(self, name) > 0:
                raise LoadModelError(f"{name} must be positive")
        if self.seasonal_chiller_cop is not None and not self.seasonal_chiller_cop > 0:
            raise LoadModelError("seasonal_chiller_cop must be positive")
        for k, v in self.cooling_attribution.items():
            if not 0 <= v <= 1:
                raise LoadModelError(f"cooling attribution for {k} must lie in [0, 1]")

    @property
    def chiller_cop(self) -> float:
        if self.seasonal_chiller_cop is not None:
            return self.seasonal_chiller_cop
        # kW of cooling per ton over kW of electricity per ton
        return TON_TO_KW / self.existing_chiller_intensity

    def attribution(self, building_type: str) -> float:
        return float(self.cooling_attribution.get(building_type, 1.0))


@dataclass(frozen=True)
class LoadProfile:
    values: np.ndarray
    mode: str
    provenance: str = "unscaled"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != HOURS_PER_YEAR:
            raise LoadModelError(f"profile must hold exactly {HOURS_PER_YEAR} hourly values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise LoadModelError("profile contains non-finite values")
        if np.any(v < 0):
            raise LoadModelError("profile values must be non-negative")
        if self.mode not in MODES:
            raise LoadModelError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.provenance not in ("unscaled", "scaled"):
            raise LoadModelError(f"unknown provenance {self.provenance!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def annual(self) -> float:
        return float(self.values.sum())

    @property
    def peak(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class BenchmarkTargets:
    annual_energy: float  # kWh/yr
    peak_load: float  # kW
    mode: str
    missing: tuple = ()

    def __post_init__(self):
        if self.annual_energy < 0 or self.peak_load < 0:
            raise LoadModelError("benchmark targets must be non-negative")
        if self.mode not in MODES:
            raise LoadModelError(f"mode must be one of {MODES}")

    @property
    def feasible(self) -> bool:
        return self.annual_energy <= HOURS_PER_YEAR * self.peak_load


@dataclass(frozen=True)
class ScalingSolution:
    k: float
    b: float
    residual: float
    clamped_hours: int
    achieved_annual: float
    achieved_peak: float

    def relative_errors(self, targets: BenchmarkTargets) -> tuple[float, float]:
        return (
            (self.achieved_annual - targets.annual_energy) / targets.annual_energy,
            (self.achieved_peak - targets.peak_load) / targets.peak_load,
        )


def derive_benchmarks(
    records: Sequence[BuildingRecord], params: BenchmarkParams | None = None
) -> tuple[BenchmarkTargets, BenchmarkTargets]:
    """Node-level heating and cooling targets from per-building metered data.

    Returns ``(heating, cooling)``. Buildings missing a field are skipped for
    the affected quantity and listed in each target's ``missing`` tuple as
    ``"<building>:<field>"``. Cooling energy uses ``cooling_electricity`` when
    supplied, otherwise whole-building electricity (flagged in ``missing`` as
    ``"<building>:cooling_electricity~inferred"``), times the per-type
    attribution fraction and the seasonal chiller COP.
    """
    params = params or BenchmarkParams()
    if not records:
        raise InsufficientDataError("insufficient metered data: no building records")

    div = params.diversity_coefficient
    sums = {"peak_heating": 0.0, "peak_cooling": 0.0, "annual_steam": 0.0, "cooling_elec": 0.0}
    have = {k: 0 for k in sums}
    miss_h: list[str] = []
    miss_c: list[str] = []
    for r in records:
        if r.peak_heating is None:
            miss_h.append(f"{r.name}:peak_heating")
        else:
            sums["peak_heating"] += r.peak_heating
            have["peak_heating"] += 1
        if r.annual_steam is None:
            miss_h.append(f"{r.name}:annual_steam")
        else:
            sums["annual_steam"] += r.annual_steam
            have["annual_steam"] += 1
        if r.peak_cooling is None:
            miss_c.append(f"{r.name}:peak_cooling")
        else:
            sums["peak_cooling"] += r.peak_cooling
            have["peak_cooling"] += 1
        share = params.attribution(r.building_type)
        if r.cooling_electricity is not None:
            sums["cooling_elec"] += share * r.cooling_electricity
            have["cooling_elec"] += 1
        elif r.annual_electricity is not None:
            sums["cooling_elec"] += share * r.annual_electricity
            have["cooling_elec"] += 1
            miss_c.append(f"{r.name}:cooling_electricity~inferred")
        else:
            miss_c.append(f"{r.name}:annual_electricity")

    absent = [k for k, n in have.items() if n == 0]
    if absent:
        names = ["annual_electricity" if k == "cooling_elec" else k for k in absent]
        raise InsufficientDataError("insufficient metered data: no record provides " + ", ".join(names))

    heat_energy = sums["annual_steam"] * (1 - params.steam_loss) * params.heating_system_efficiency * KBTU_TO_KWH
    cool_energy = sums["cooling_elec"] * params.chiller_cop
    heating = BenchmarkTargets(heat_energy, sums["peak_heating"] * KBTUH_TO_KW * div, "heating", tuple(miss_h))
    cooling = BenchmarkTargets(cool_energy, sums["peak_cooling"] * TON_TO_KW * div, "cooling", tuple(miss_c))
    for t in (heating, cooling):
        if t.missing:
            log.info("%s benchmark skipped %d fields: %s", t.mode, len(t.missing), ", ".join(t.missing))
    return heating, cooling


def combine_heating(space: LoadProfile, dhw: LoadProfile) -> LoadProfile:
    if space.mode != "heating" or dhw.mode != "heating":
        raise LoadModelError("space heating and DHW profiles must both be heating mode")
    if space.values.shape != dhw.values.shape:
        raise LoadModelError("profile length mismatch")
    prov = "scaled" if space.provenance == dhw.provenance == "scaled" else "unscaled"
    return LoadProfile(space.values + dhw.values, "heating", prov)


def _check_targets(targets: BenchmarkTargets):
    if targets.annual_energy == 0 or targets.peak_load == 0:
        raise DegenerateTargetError(
            f"degenerate {targets.mode} targets: annual={targets.annual_energy}, peak={targets.peak_load}"
        )


def eq1_objective(k: float, b: float, profile: LoadProfile | np.ndarray, targets: BenchmarkTargets) -> float:
    """Squared relative misfit of annual sum and peak for ``k * L + b`` (unclamped)."""
    _check_targets(targets)
    vals = profile.values if isinstance(profile, LoadProfile) else np.asarray(profile, dtype=np.float64)
    scaled = k * vals + b
    e, p = targets.annual_energy, targets.peak_load
    return ((scaled.sum() - e) / e) ** 2 + ((scaled.max() - p) / p) ** 2


def _solution(vals, k, b, targets) -> tuple[ScalingSolution, np.ndarray]:
    raw = k * vals + b
    clamped = int(np.count_nonzero(raw < 0))
    scaled = np.maximum(raw, 0.0)
    e, p = targets.annual_energy, targets.peak_load
    residual = ((scaled.sum() - e) / e) ** 2 + ((scaled.max() - p) / p) ** 2
    return ScalingSolution(float(k), float(b), float(residual), clamped, float(scaled.sum()), float(scaled.max())), scaled


def scale_profile(
    profile: LoadProfile, targets: BenchmarkTargets, *, xatol: float = 1e-12, maxiter: int = 20000
) -> tuple[ScalingSolution, LoadProfile]:
    """Fit ``max(k * L + b, 0)`` to the annual and peak targets.

    Nelder-Mead over ``(log(k / k0), b / P)`` with ``k0 = E / sum(L)``. Flat
    profiles have a one-parameter family of exact fits and are resolved with
    ``b = 0``. Infeasible targets (mean above peak) return the balanced
    compromise with its nonzero residual.
    """
    _check_targets(targets)
    if profile.mode != targets.mode:
        raise LoadModelError(f"profile mode {profile.mode} does not match targets mode {targets.mode}")
    vals = profile.values
    total = vals.sum()
    if total <= 0:
        raise UnscalableProfileError("cannot scale an all-zero profile")
    e, p = targets.annual_energy, targets.peak_load
    n = vals.shape[0]

    if vals.max() == vals.min():
        # the objective depends on k*c0 + b only; minimize over that level, set b = 0
        c0 = vals[0]
        wa, wp = (n / e) ** 2, (1.0 / p) ** 2
        level = (wa * e / n + wp * p) / (wa + wp)
        sol, scaled = _solution(vals, level / c0, 0.0, targets)
        return sol, LoadProfile(scaled, profile.mode, "scaled")

    k0 = e / total

    def fun(z):
        return eq1_objective(k0 * math.exp(z[0]), p * z[1], vals, targets)

    res = minimize(
        fun,
        np.array([0.0, 0.0]),
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": 1e-26, "maxiter": maxiter, "maxfev": 2 * maxiter,
                 "initial_simplex": np.array([[0.0, 0.0], [0.05, 0.0], [0.0, 0.05]])},
    )
    k, b = k0 * math.exp(res.x[0]), p * res.x[1]
    # an exact fit stalls on rounding noise before the simplex shrinks; accept it
    if not res.success and not res.fun <= EXACT_FIT_RESIDUAL:
        raise ScalingConvergenceError(
            f"profile scaling did not converge: {res.message}", k, b, float(res.fun)
        )
    sol, scaled = _solution(vals, k, b, targets)
    if sol.clamped_hours:
        log.info("%s profile: %d hours clamped at zero (b=%.4g)", profile.mode, sol.clamped_hours, b)
    return sol, LoadProfile(scaled, profile.mode, "scaled")


# --------------------------------------------------------------------------- I/O


def _num(cell: str | None) -> float | None:
    if cell is None:
        return None
    cell = cell.strip().replace(",", "")
    if cell in ("", "-"):
        return None
    return float(cell)


BUILDING_COLUMNS = {
    "name": ("name", "building name", "building_name"),
    "area": ("area", "building area (sqft)", "area_sqft"),
    "annual_electricity": ("annual_electricity", "annual electricity use (kwh/y)"),
    "annual_steam": ("annual_steam", "annual steam use (kbtu/y)"),
    "peak_heating": ("peak_heating", "peak heating (kbtu/h)"),
    "peak_cooling": ("peak_cooling", "peak cooling (tons)"),
    "building_type": ("building_type", "type"),
    "cooling_electricity": ("cooling_electricity", "cooling electricity (kwh/y)"),
}


def read_buildings(path: str | Path) -> list[BuildingRecord]:
    """Read building records; ``-`` or empty cells are treated as missing."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise LoadModelError(f"{path}: empty building file")
        lookup = {h.strip().lower(): h for h in reader.fieldnames}
        cols = {}
        for key, aliases in BUILDING_COLUMNS.items():
            for a in aliases:
                if a in lookup:
                    cols[key] = lookup[a]
                    break
        for req in ("name", "area"):
            if req not in cols:
                raise LoadModelError(f"{path}: missing column {req!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                kwargs = {"name": row[cols["name"]].strip(), "area": _num(row[cols["area"]])}
                for key in ("annual_electricity", "annual_steam", "peak_heating", "peak_cooling", "cooling_electricity"):
                    if key in cols:
                        kwargs[key] = _num(row[cols[key]])
                if "building_type" in cols and row[cols["building_type"]].strip():
                    kwargs["building_type"] = row[cols["building_type"]].strip()
                if kwargs["area"] is None:
                    raise LoadModelError("area is required")
                records.append(BuildingRecord(**kwargs))
            except (ValueError, TypeError) as exc:
                raise LoadModelError(f"{path}:{lineno}: {exc}") from exc
    return records


def read_profiles(path: str | Path, provenance: str = "unscaled") -> tuple[LoadProfile, LoadProfile]:
    """Read a ``hour,heating_kw,cooling_kw`` CSV; returns ``(heating, cooling)``."""
    path = Path(path)
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise LoadModelError(f"{path}: {exc}") from exc
    names = data.dtype.names or ()
    for col in ("hour", "heating_kw", "cooling_kw"):
        if col not in names:
            raise LoadModelError(f"{path}: missing column {col!r}")
    hours = data["hour"]
    if hours.shape[0] != HOURS_PER_YEAR or not np.array_equal(hours, np.arange(HOURS_PER_YEAR)):
        raise LoadModelError(f"{path}: expected hours 0..{HOURS_PER_YEAR - 1}")
    return (
        LoadProfile(data["heating_kw"], "heating", provenance),
        LoadProfile(data["cooling_kw"], "cooling", provenance),
    )


def write_profiles(path: str | Path, heating: LoadProfile, cooling: LoadProfile) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "heating_kw", "cooling_kw"])
        for h, (a, b) in enumerate(zip(heating.values, cooling.values)):
            w.writerow([h, repr(float(a)), repr(float(b))])


def records_from_rows(rows: Iterable[dict]) -> list[BuildingRecord]:
    return [BuildingRecord(**row) for row in rows]
