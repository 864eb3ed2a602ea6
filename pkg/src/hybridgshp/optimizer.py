"""Cost-optimal GSHP/ASHP split by a sweep over the cooling shave factor."""
from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .load_model import LoadProfile
from .sizing import BlockLoads, SizingError, SizingResult, SizingSetup, size_borefield

SWEEP_HEADER = ("alpha", "beta", "threshold_kw", "boreholes", "capital_usd", "opex_year1_usd", "npv_usd", "feasible")
ALPHA_GRID = tuple(i / 100 for i in range(101))


class OptimizerError(ValueError):
    pass


class DegenerateProfileError(OptimizerError):
    pass


class AllInfeasibleError(OptimizerError):
    pass


@dataclass(frozen=True)
class CostParams:
    ghx_unit_cost: float = 65.5  # $/m drilled
    heat_pump_unit_cost: float = 80.0  # $/kW, air-to-water unit
    electricity_price: float = 0.08  # $/kWh
    interest_rate: float = 0.08
    inflation_rate: float = 0.04
    horizon: int = 20
    #: GSHP machine rate; ``None`` uses ``heat_pump_unit_cost``
    gshp_unit_cost: float | None = None

    def __post_init__(self):
        for name in ("ghx_unit_cost", "heat_pump_unit_cost", "electricity_price"):
            if getattr(self, name) < 0:
                raise OptimizerError(f"{name} must be >= 0")
        for name in ("interest_rate", "inflation_rate"):
            if not 0 <= getattr(self, name) < 1:
                raise OptimizerError(f"{name} must lie in [0, 1)")
        if self.horizon < 1:
            raise OptimizerError("horizon must be >= 1 year")

    @property
    def gshp_rate(self) -> float:
        return self.heat_pump_unit_cost if self.gshp_unit_cost is None else self.gshp_unit_cost

    def scaled(self, factor: float) -> "CostParams":
        """All monetary unit costs multiplied by ``factor``."""
        return CostParams(
            self.ghx_unit_cost * factor, self.heat_pump_unit_cost * factor, self.electricity_price * factor,
            self.interest_rate, self.inflation_rate, self.horizon,
            None if self.gshp_unit_cost is None else self.gshp_unit_cost * factor,
        )


@dataclass(frozen=True)
class CopSet:
    ashp_heating: float = 2.5
    ashp_cooling: float = 4.5
    gshp_heating: float = 3.5
    gshp_cooling: float = 5.5

    def __post_init__(self):
        for name in ("ashp_heating", "ashp_cooling", "gshp_heating", "gshp_cooling"):
            if not getattr(self, name) > 1:
                raise OptimizerError(f"{name} must exceed 1")
        if self.gshp_heating < self.ashp_heating or self.gshp_cooling < self.ashp_cooling:
            warnings.warn("GSHP COP below ASHP COP in at least one mode", stacklevel=2)


@dataclass(frozen=True)
class ShaveFactors:
    alpha: float
    beta: float
    threshold: float  # kW

    def __post_init__(self):
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise OptimizerError("shave factors must lie in [0, 1]")
        if self.threshold < 0:
            raise OptimizerError("capacity threshold must be >= 0")


@dataclass(frozen=True)
class HybridDesign:
    shave: ShaveFactors
    sizing: SizingResult | None
    capital_cost: float
    annual_operating_cost_year1: float
    npv_total: float
    cash_flows: tuple = field(default=())
    gshp_kwh: float = 0.0
    ashp_kwh: float = 0.0
    infeasible_reason: str = ""

    @property
    def feasible(self) -> bool:
        return self.sizing is not None

    def row(self) -> dict:
        return {
            "alpha": f"{self.shave.alpha:.2f}",
            "beta": f"{self.shave.beta:.6f}",
            "threshold_kw": f"{self.shave.threshold:.6f}",
            "boreholes": str(self.sizing.borehole_count) if self.sizing else "",
            "capital_usd": f"{self.capital_cost:.2f}" if self.sizing else "",
            "opex_year1_usd": f"{self.annual_operating_cost_year1:.2f}",
            "npv_usd": f"{self.npv_total:.2f}" if self.sizing else "",
            "feasible": "true" if self.sizing else "false",
        }


def _values(profile) -> np.ndarray:
    return np.asarray(getattr(profile, "values", profile), dtype=np.float64)


def threshold_for_alpha(cooling: LoadProfile | np.ndarray, alpha: float) -> float:
    """Smallest capacity ``c`` whose base load ``min(L, c)`` covers ``alpha`` of the energy."""
    if not 0 <= alpha <= 1:
        raise OptimizerError("alpha must lie in [0, 1]")
    load = _values(cooling)
    peak = float(load.max())
    total = float(load.sum())
    if alpha == 0:
        return 0.0
    if total <= 0:
        raise DegenerateProfileError("cannot shave an all-zero profile with alpha > 0")
    if alpha == 1:
        return peak
    target = alpha * total
    lo, hi = 0.0, peak
    tol = 1e-6 * peak
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.minimum(load, mid).sum() >= target:
            hi = mid
        else:
            lo = mid
    return hi


def beta_from_alpha(heating: LoadProfile | np.ndarray, c: float) -> float:
    """Fraction of heating energy under the threshold ``c``."""
    load = _values(heating)
    total = float(load.sum())
    if total <= 0:
        return 0.0
    return float(np.minimum(load, c).sum() / total)


def annual_electricity_split(heating, cooling, c: float, cops: CopSet) -> tuple[float, float]:
    """``(gshp_kwh, ashp_kwh)`` when the GSHP carries loads up to ``c``."""
    h, cl = _values(heating), _values(cooling)
    hb, cb = np.minimum(h, c), np.minimum(cl, c)
    gshp = cb.sum() / cops.gshp_cooling + hb.sum() / cops.gshp_heating
    ashp = (cl - cb).sum() / cops.ashp_cooling + (h - hb).sum() / cops.ashp_heating
    return float(gshp), float(ashp)


def capital_cost(sizing: SizingResult | None, gshp_capacity: float, ashp_capacity: float, costs: CostParams) -> float:
    if gshp_capacity < 0 or ashp_capacity < 0:
        raise OptimizerError("capacities must be >= 0")
    drilled = sizing.total_drilled if sizing is not None else 0.0
    return drilled * costs.ghx_unit_cost + gshp_capacity * costs.gshp_rate + ashp_capacity * costs.heat_pump_unit_cost


def npv(cash_flows, rate: float) -> float:
    if rate <= -1:
        raise OptimizerError("interest rate must exceed -1")
    flows = np.asarray(cash_flows, dtype=np.float64)
    return float(np.sum(flows / (1.0 + rate) ** np.arange(flows.size)))


def build_cash_flows(capital: float, operating_year1: float, costs: CostParams) -> np.ndarray:
    t = np.arange(1, costs.horizon + 1)
    flows = np.empty(costs.horizon + 1)
    flows[0] = capital
    flows[1:] = operating_year1 * (1.0 + costs.inflation_rate) ** (t - 1)
    return flows


def evaluate_alpha(alpha: float, heating, cooling, setup: SizingSetup, costs: CostParams, cops: CopSet) -> HybridDesign:
    h, cl = _values(heating), _values(cooling)
    c = threshold_for_alpha(cl, alpha)
    beta = beta_from_alpha(h, c)
    gshp_kwh, ashp_kwh = annual_electricity_split(h, cl, c, cops)
    opex = (gshp_kwh + ashp_kwh) * costs.electricity_price
    shave = ShaveFactors(alpha, beta, c)
    try:
        sizing = size_borefield(BlockLoads.from_profiles(h, cl, c), setup) if c > 0 else None
    except SizingError as exc:
        return HybridDesign(shave, None, float("nan"), opex, float("nan"), (), gshp_kwh, ashp_kwh, str(exc))
    if sizing is None:
        sizing = SizingResult(0.0, 0.0, 0.0, 0.0, 0, setup.depth)
    gshp_cap = min(c, max(float(cl.max()), float(h.max())))
    ashp_cap = max(float(cl.max()) - c, float(h.max()) - c, 0.0)
    capital = capital_cost(sizing, gshp_cap, ashp_cap, costs)
    flows = build_cash_flows(capital, opex, costs)
    return HybridDesign(shave, sizing, capital, opex, npv(flows, costs.interest_rate), tuple(flows), gshp_kwh, ashp_kwh)


def _evaluate_packed(args):
    return evaluate_alpha(*args)


@dataclass(frozen=True)
class SweepResult:
    designs: tuple

    @property
    def optimum(self) -> HybridDesign:
        best = None
        for d in self.designs:
            if d.feasible and (best is None or d.npv_total < best.npv_total):
                best = d
        if best is None:
            raise AllInfeasibleError("every alpha candidate failed sizing")
        return best

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SWEEP_HEADER, lineterminator="\n")
        w.writeheader()
        for d in self.designs:
            w.writerow(d.row())
        return buf.getvalue()


def optimize(heating, cooling, setup: SizingSetup = SizingSetup(), costs: CostParams = CostParams(),
             cops: CopSet = CopSet(), *, alphas=ALPHA_GRID, jobs: int = 1, strict: bool = True) -> SweepResult:
    """Evaluate every alpha; ties in NPV go to the smaller alpha.

    With ``strict`` (the default) an all-infeasible sweep raises
    :class:`AllInfeasibleError`; otherwise the rows are returned as they are.
    """
    tasks = [(a, _values(heating), _values(cooling), setup, costs, cops) for a in alphas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            designs = tuple(pool.map(_evaluate_packed, tasks))
    else:
        designs = tuple(_evaluate_packed(t) for t in tasks)
    result = SweepResult(designs)
    if strict:
        result.optimum  # raises when nothing is feasible
    return result
