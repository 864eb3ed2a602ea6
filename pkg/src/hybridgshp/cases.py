"""Case-study harness: a reference scenario and a matrix of source options
and borefield sizes, run as independent jobs.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ground import BorefieldLayout, GroundProperties
from .heatpump import HeatPumpModel
from .plant import ControlConfig, PlantParams, SimulationResult, SourceConfig, build_ground_handle, simulate
from .sizing import BlockLoads, SizingSetup, size_borefield
from .synth import node_fixture, synthetic_weather


@dataclass(frozen=True)
class CaseSpec:
    name: str
    kind: str
    #: absolute borehole count; overrides ``size_factor`` when set
    boreholes: int | None = None
    #: multiple of the full-load sizing requirement
    size_factor: float | None = None
    force_assist: bool = False
    assist_fraction: float = 0.5


#: ten cases in the layout of a typical option-by-field-size study, plus a
#: heater run with forced engagement on a field large enough to stay in band
DEFAULT_MATRIX = (
    CaseSpec("case01", "ASHP-only"),
    CaseSpec("case02", "GSHP-only", size_factor=2.0),
    CaseSpec("case03", "GSHP-only", size_factor=1.2),
    CaseSpec("case04", "GSHP+ASHP", size_factor=1.2),
    CaseSpec("case05", "GSHP-only", size_factor=0.25),
    CaseSpec("case06", "GSHP+ElectricHeater", size_factor=0.25),
    CaseSpec("case07", "GSHP-only", size_factor=0.15),
    CaseSpec("case08", "GSHP+ASHP", size_factor=0.15),
    CaseSpec("case09", "GSHP-only", size_factor=0.1),
    CaseSpec("case10", "GSHP+ASHP", size_factor=0.1),
    CaseSpec("case11", "GSHP+ElectricHeater", size_factor=2.0, force_assist=True),
)


@dataclass
class Scenario:
    heating: np.ndarray  # kW hourly
    cooling: np.ndarray
    weather: np.ndarray  # degC hourly
    ground: GroundProperties = GroundProperties()
    sizing: SizingSetup = SizingSetup()
    controls: ControlConfig = ControlConfig()
    plant: PlantParams = PlantParams()
    gshp: HeatPumpModel | None = None
    ashp: HeatPumpModel | None = None
    cache_dir: str | None = None
    _required: int | None = field(default=None, repr=False)

    def required_boreholes(self) -> int:
        """Borehole count sized for the full (unshaved) loads."""
        if self._required is None:
            self._required = size_borefield(BlockLoads.from_profiles(self.heating, self.cooling), self.sizing).borehole_count
        return self._required

    def boreholes_for(self, case: CaseSpec) -> int:
        if case.kind == "ASHP-only":
            return 0
        if case.boreholes is not None:
            return int(case.boreholes)
        factor = 1.0 if case.size_factor is None else case.size_factor
        return max(1, int(round(factor * self.required_boreholes())))

    def layout(self, count: int) -> BorefieldLayout:
        return BorefieldLayout.near_square(count, self.sizing.spacing, depth=self.sizing.depth,
                                           borehole_radius=self.ground.borehole_radius)


def reference_scenario(seed: int = 0) -> Scenario:
    """Cooling-dominated node: summer-only cooling, year-round heating base, mild climate."""
    heating, cooling = node_fixture(seed)
    return Scenario(heating.values.copy(), cooling.values.copy(), synthetic_weather(seed=seed + 3))


def run_case(scenario: Scenario, case: CaseSpec) -> SimulationResult:
    count = scenario.boreholes_for(case)
    layout = scenario.layout(count) if count > 0 else None
    source = SourceConfig(case.kind, layout, assist_fraction=case.assist_fraction, force_assist=case.force_assist)
    handle = None
    if layout is not None:
        handle = build_ground_handle(layout, scenario.ground, scenario.plant.dt, scenario.plant.hours,
                                     cache_dir=scenario.cache_dir)
    result = simulate(scenario.heating, scenario.cooling, source, weather=scenario.weather,
                      controls=scenario.controls, gshp=scenario.gshp, ashp=scenario.ashp,
                      ground_handle=handle, ground=scenario.ground, params=scenario.plant)
    result.meta["case"] = case.name
    result.meta["option"] = case.kind
    return result


def _run_packed(args):
    return run_case(*args)


def run_cases(scenario: Scenario, cases, jobs: int = 1) -> list[SimulationResult]:
    """Results in the order of ``cases`` whatever the completion order."""
    scenario.required_boreholes()  # resolve once before fanning out
    tasks = [(scenario, c) for c in cases]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(_run_packed, tasks))
    return [run_case(scenario, c) for c in cases]


def summary_rows(cases, results) -> list[dict]:
    rows = []
    for case, res in zip(cases, results):
        rows.append({
            "case": case.name,
            "option": case.kind,
            "boreholes": res.meta.get("boreholes", 0),
            "electricity_kwh": f"{res.total_kwh:.3f}",
            "status": res.status if not res.failed else "failed",
            "reason": res.reason,
        })
    return rows


def relative_change(value: float, baseline: float) -> float:
    if baseline == 0:
        return math.nan
    return (value - baseline) / baseline
