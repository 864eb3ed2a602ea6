"""Command-line front end.

Every subcommand reads one YAML project config, writes into its output
directory and updates ``manifest.json`` there. Exit codes: 0 success,
2 input/config error, 3 infeasible design, 4 stale stage outputs.
"""
from __future__ import annotations

import csv
import functools
import json
import math
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .cases import DEFAULT_MATRIX, Scenario, reference_scenario, run_cases, summary_rows
from .config import STAGES, ConfigError, ProjectConfig, RunManifest, timestamp, write_json
from .heatpump import (
    HeatPumpError,
    fitted_model,
    generate_map_rows,
    read_map_csv,
    synthetic_ashp,
    synthetic_gshp,
    write_map_csv,
)
from .load_model import (
    KBTUH_TO_KW,
    TON_TO_KW,
    BenchmarkParams,
    BenchmarkTargets,
    LoadModelError,
    LoadProfile,
    derive_benchmarks,
    read_buildings,
    read_profiles,
    scale_profile,
    write_profiles,
)
from .optimizer import AllInfeasibleError, OptimizerError, optimize
from .plant import PlantError, read_weather, write_weather
from .sizing import (
    BlockLoads,
    SizingError,
    SizingInfeasibleError,
    borehole_resistance,
    ground_resistances,
    size_borefield,
)
from .synth import synthetic_weather

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_STALE = 0, 2, 3, 4
SCALED_PROFILES = "scaled_profiles.csv"
TIMESERIES_HEADER = ("hour", "indoor_c", "loop_supply_c", "loop_return_c", "loop_dt_k", "pumps_on",
                     "gshp_kw", "ashp_kw", "heater_kw", "pumps_kw")
SUMMARY_HEADER = ("case", "option", "boreholes", "electricity_kwh", "status", "reason")


class StageError(Exception):
    def __init__(self, message: str, code: int, **detail):
        super().__init__(message)
        self.code = code
        self.detail = detail


INPUT_ERRORS = (ConfigError, LoadModelError, HeatPumpError, PlantError, SizingError, OptimizerError,
                OSError, ValueError, KeyError, TypeError, csv.Error)


def _fail(code: int, exc: BaseException, **detail) -> None:
    record = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    path = getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path:
        record["path"] = str(path)
    record.update(detail)
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(code)


def guarded(fn):
    """Map known failures to exit codes and a one-line JSON error record on stderr."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError as exc:
            _fail(exc.code, exc, **exc.detail)
        except (AllInfeasibleError, SizingInfeasibleError) as exc:
            _fail(EXIT_INFEASIBLE, exc)
        except INPUT_ERRORS as exc:
            _fail(EXIT_INPUT, exc)
    return wrapper


def _fmt(x: float) -> str:
    return "" if not math.isfinite(x) else f"{x:.6f}"


# ------------------------------------------------------------------ plumbing


class Run:
    """A loaded config plus its output directory and manifest."""

    def __init__(self, config_path: str, overrides=()):
        self.cfg = ProjectConfig.load(config_path, overrides)
        self.out = self.cfg.output_dir
        self.digest = self.cfg.digest()
        self.manifest = RunManifest.load(self.out) if self.out.is_dir() else None

    def require(self, *stages: str) -> None:
        """Upstream stages must have completed under the current digest."""
        done = self.manifest.stages if self.manifest else {}
        absent = [s for s in stages if done.get(s, {}).get("status") != "completed"]
        if absent:
            raise StageError(f"missing upstream stage output(s): {', '.join(absent)}", EXIT_INPUT,
                             missing_stages=absent)
        stale = [s for s in self.manifest.stale_stages(self.digest, self.out) if s in stages]
        if stale:
            raise StageError(f"stale stage output(s) for the current config: {', '.join(stale)}", EXIT_STALE,
                             stale_stages=stale)

    def record(self, stage: str, outputs, extra=None, status: str = "completed") -> None:
        if self.manifest is None:
            self.manifest = RunManifest(self.digest, created=timestamp())
        self.manifest.record(stage, self.digest, self.out, outputs, status=status, overrides=self.cfg.overrides,
                             extra=extra)
        self.manifest.save(self.out)

    def scaled_profiles(self) -> tuple[LoadProfile, LoadProfile]:
        return read_profiles(self.out / SCALED_PROFILES, provenance="scaled")

    def weather(self) -> np.ndarray:
        if "weather" in self.cfg.paths:
            return read_weather(self.cfg.paths["weather"])
        return synthetic_weather(seed=self.cfg.seed + 3)

    def heat_pumps(self):
        p = self.cfg.paths
        rows = {k: read_map_csv(p[k]) if k in p else None
                for k in ("gshp_map_heating", "gshp_map_cooling", "ashp_map_heating", "ashp_map_cooling")}
        gshp = fitted_model(synthetic_gshp(), rows["gshp_map_heating"], rows["gshp_map_cooling"])
        ashp = fitted_model(synthetic_ashp(), rows["ashp_map_heating"], rows["ashp_map_cooling"])
        return gshp, ashp


def config_options(fn):
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                      help="Override one config key (dotted path); recorded in the manifest.")(fn)
    fn = click.argument("config", type=click.Path(dir_okay=False))(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="hybridgshp")
def main():
    """Hybrid GSHP/ASHP sizing, cost optimization and plant simulation."""


# ------------------------------------------------------------------ scale


def _targets(cfg: ProjectConfig) -> tuple[BenchmarkTargets, BenchmarkTargets, list]:
    if cfg.targets is not None:
        t = cfg.targets
        return (BenchmarkTargets(t.heating_annual, t.heating_peak, "heating"),
                BenchmarkTargets(t.cooling_annual, t.cooling_peak, "cooling"), [])
    heating, cooling = derive_benchmarks(read_buildings(cfg.paths["buildings"]), cfg.benchmark)
    return heating, cooling, sorted(set(heating.missing) | set(cooling.missing))


def _validation(sol, targets: BenchmarkTargets) -> dict:
    ea, ep = sol.relative_errors(targets)
    return {
        "k": sol.k, "b": sol.b, "residual": sol.residual, "clamped_hours": sol.clamped_hours,
        "target_annual_kwh": targets.annual_energy, "target_peak_kw": targets.peak_load,
        "achieved_annual_kwh": sol.achieved_annual, "achieved_peak_kw": sol.achieved_peak,
        "annual_rel_error": ea, "peak_rel_error": ep,
        "within_1pct": bool(abs(ea) < 0.01 and abs(ep) < 0.01),
    }


@main.command()
@config_options
@click.option("--dry-run", is_flag=True, help="Validate config and inputs; write nothing.")
@guarded
def scale(config, overrides, dry_run):
    """Fit the unscaled profiles to metered annual energy and peak."""
    run = Run(config, overrides)
    heating, cooling = read_profiles(run.cfg.paths["profiles"])
    t_h, t_c, missing = _targets(run.cfg)
    if dry_run:
        click.echo(json.dumps({"status": "ok", "dry_run": True, "config_digest": run.digest}, sort_keys=True))
        return
    sol_h, scaled_h = scale_profile(heating, t_h)
    sol_c, scaled_c = scale_profile(cooling, t_c)
    run.out.mkdir(parents=True, exist_ok=True)
    write_profiles(run.out / SCALED_PROFILES, scaled_h, scaled_c)
    report = {"heating": _validation(sol_h, t_h), "cooling": _validation(sol_c, t_c), "skipped_fields": missing}
    write_json(run.out / "scale.json", report)
    run.record("scale", [run.out / SCALED_PROFILES, run.out / "scale.json"])
    click.echo(f"scaled: heating {sol_h.achieved_annual:.1f} kWh / {sol_h.achieved_peak:.2f} kW, "
               f"cooling {sol_c.achieved_annual:.1f} kWh / {sol_c.achieved_peak:.2f} kW")


# ------------------------------------------------------------------ size


@main.command()
@config_options
@guarded
def size(config, overrides):
    """Size the borefield for the full (unshaved) scaled loads."""
    run = Run(config, overrides)
    run.require("scale")
    heating, cooling = run.scaled_profiles()
    setup = run.cfg.sizing
    loads = BlockLoads.from_profiles(heating, cooling)
    res = size_borefield(loads, setup)
    r_ga, r_gm, r_gd = ground_resistances(setup.ground, setup.pulses)
    out = {
        "block_loads": {"q_lc_kw": loads.q_lc, "q_lh_kw": loads.q_lh, "eflh_c": loads.eflh_c,
                        "eflh_h": loads.eflh_h, "plf_m_c": loads.plf_m_c, "plf_m_h": loads.plf_m_h},
        "resistances": {"r_b": borehole_resistance(setup.ground, setup.pipe, setup.r_b_override),
                        "r_ga": r_ga, "r_gm": r_gm, "r_gd": r_gd},
        "q_a_kw": res.q_a, "l_c_m": res.l_c, "l_h_m": res.l_h, "length_m": res.length,
        "borehole_count": res.borehole_count, "borehole_depth_m": res.borehole_depth,
        "total_drilled_m": res.total_drilled, "t_p_k": res.t_p, "iterations": res.iterations,
    }
    write_json(run.out / "size.json", out)
    run.record("size", [run.out / "size.json"])
    click.echo(f"sized: {res.borehole_count} boreholes x {res.borehole_depth:g} m (t_p {res.t_p:+.3f} K)")


# ------------------------------------------------------------------ optimize


@main.command("optimize")
@config_options
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(1, None))
@guarded
def optimize_cmd(config, overrides, jobs):
    """Sweep the cooling shave factor and pick the least-NPV split."""
    run = Run(config, overrides)
    run.require("scale")
    heating, cooling = run.scaled_profiles()
    sweep = optimize(heating, cooling, run.cfg.sizing, run.cfg.costs, run.cfg.cops, jobs=jobs, strict=False)
    (run.out / "sweep.csv").write_text(sweep.to_csv())
    feasible = [d.shave.alpha for d in sweep.designs if d.feasible]
    if not any(a > 0 for a in feasible):
        # only the no-ground-loop design survived: there is no hybrid to optimize
        run.record("optimize", [run.out / "sweep.csv"], status="infeasible")
        reasons = sorted({d.infeasible_reason for d in sweep.designs if not d.feasible})
        raise AllInfeasibleError("no design with a ground loop passed sizing: " + "; ".join(reasons))
    best = sweep.optimum
    out = {
        **best.row(),
        "interior": bool(min(feasible) < best.shave.alpha < max(feasible)),
        "gshp_capacity_kw": best.shave.threshold,
        "gshp_kwh": best.gshp_kwh, "ashp_kwh": best.ashp_kwh,
        "feasible_rows": len(feasible), "rows": len(sweep.designs),
    }
    write_json(run.out / "optimum.json", out)
    run.record("optimize", [run.out / "sweep.csv", run.out / "optimum.json"])
    click.echo(f"optimum: alpha={best.shave.alpha:.2f} beta={best.shave.beta:.3f} "
               f"threshold={best.shave.threshold:.1f} kW npv=${best.npv_total:,.0f}")


# ------------------------------------------------------------------ simulate


def _timeseries_csv(path: Path, res) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for h in range(res.indoor.size):
            w.writerow([h, _fmt(res.indoor[h]), _fmt(res.loop_supply[h]), _fmt(res.loop_return[h]),
                        _fmt(res.loop_dt[h]), int(res.active[h]),
                        *(_fmt(res.power[k][h]) for k in ("gshp", "ashp", "heater", "pumps"))])


def _case_summary(case, res, baseline: float | None) -> dict:
    out = {"case": case.name, "option": case.kind, "boreholes": res.meta.get("boreholes", 0),
           **res.summary(),
           "comfort_fraction_19_26": res.comfort_fraction() if res.indoor_steps.size else None,
           "mean_loop_dt_demand_k": res.mean_loop_dt("demand"),
           "mean_loop_dt_pumps_k": res.mean_loop_dt("pumps"),
           "loop_flow_kg_s": res.meta.get("loop_flow_kg_s")}
    if baseline:
        out["change_vs_ashp_only"] = (res.total_kwh - baseline) / baseline
    return out


@main.command()
@config_options
@click.option("--cases", "selector", default="all", show_default=True,
              help="'all' or a comma-separated list of case names.")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(1, None))
@guarded
def simulate(config, overrides, selector, jobs):
    """Run the case matrix; a failed case is a result, not an error."""
    run = Run(config, overrides)
    if selector.strip() == "all":
        cases = run.cfg.cases
    else:
        cases = tuple(run.cfg.case(n.strip()) for n in selector.split(",") if n.strip())
        if not cases:
            raise ConfigError("no case selected")
    run.require("scale")
    heating, cooling = run.scaled_profiles()
    gshp, ashp = run.heat_pumps()
    cfg = run.cfg
    scenario = Scenario(heating.values, cooling.values, run.weather(), cfg.ground, cfg.sizing, cfg.controls,
                        cfg.plant, gshp, ashp, cache_dir=str(run.out / ".gcache"))
    (run.out / ".gcache").mkdir(parents=True, exist_ok=True)
    results = run_cases(scenario, cases, jobs=jobs)
    sim_dir = run.out / "simulate"
    sim_dir.mkdir(exist_ok=True)
    baseline = next((r.total_kwh for c, r in zip(cases, results) if c.kind == "ASHP-only" and not r.failed), None)
    outputs = []
    for case, res in zip(cases, results):
        _timeseries_csv(sim_dir / f"{case.name}.csv", res)
        write_json(sim_dir / f"{case.name}.json", _case_summary(case, res, baseline))
        outputs += [sim_dir / f"{case.name}.csv", sim_dir / f"{case.name}.json"]
    with (run.out / "simulation_summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(summary_rows(cases, results))
    outputs.append(run.out / "simulation_summary.csv")
    run.record("simulate", outputs, extra={"cases": [c.name for c in cases],
                                           "required_boreholes": scenario.required_boreholes()})
    for row in summary_rows(cases, results):
        click.echo(f"{row['case']:>8} {row['option']:<20} {row['boreholes']:>5} {row['electricity_kwh']:>14} "
                   f"{row['status']}")


# ------------------------------------------------------------------ report


def _read_json(path: Path):
    return json.loads(path.read_text())


@main.command()
@config_options
@guarded
def report(config, overrides):
    """Collect stage outputs into report.json plus plot-ready CSVs."""
    run = Run(config, overrides)
    done = {s for s, rec in (run.manifest.stages if run.manifest else {}).items() if rec.get("status") == "completed"}
    present = [s for s in STAGES if s in done]
    missing = [s for s in STAGES if s not in done]
    if not present:
        raise StageError(f"no stage outputs found; absent stages: {', '.join(missing)}", EXIT_INPUT,
                         missing_stages=missing)
    stale = run.manifest.stale_stages(run.digest, run.out)
    if stale:
        raise StageError(f"stale stage output(s) for the current config: {', '.join(stale)}", EXIT_STALE,
                         stale_stages=stale)
    out, plots = run.out, run.out / "plots"
    plots.mkdir(exist_ok=True)
    sections: dict = {s: None for s in STAGES}
    written = []
    if "scale" in done:
        heating, cooling = run.scaled_profiles()
        sections["scale"] = _read_json(out / "scale.json")
        p = plots / "load_profiles.csv"
        h_sorted, c_sorted = np.sort(heating.values)[::-1], np.sort(cooling.values)[::-1]
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("hour", "heating_kw", "cooling_kw", "heating_sorted_kw", "cooling_sorted_kw"))
            for i in range(heating.values.size):
                w.writerow((i, _fmt(heating.values[i]), _fmt(cooling.values[i]), _fmt(h_sorted[i]),
                            _fmt(c_sorted[i])))
        written.append(p)
    if "size" in done:
        sections["size"] = _read_json(out / "size.json")
    if "optimize" in done:
        sections["optimize"] = _read_json(out / "optimum.json") if (out / "optimum.json").is_file() else None
        p = plots / "cost_vs_alpha.csv"
        with (out / "sweep.csv").open(newline="") as src, p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("alpha", "capital_usd", "operating_pv_usd", "total_npv_usd"))
            for row in csv.DictReader(src):
                if row["feasible"] != "true":
                    w.writerow((row["alpha"], "", "", ""))
                    continue
                cap, tot = float(row["capital_usd"]), float(row["npv_usd"])
                w.writerow((row["alpha"], f"{cap:.2f}", f"{tot - cap:.2f}", f"{tot:.2f}"))
        written.append(p)
    if "simulate" in done:
        names = run.manifest.stages["simulate"].get("cases", [])
        sections["simulate"] = [_read_json(out / "simulate" / f"{n}.json") for n in names]
        traces = {}
        for n in names:
            with (out / "simulate" / f"{n}.csv").open(newline="") as fh:
                traces[n] = list(csv.DictReader(fh))
        p = plots / "temperature_traces.csv"
        length = max((len(v) for v in traces.values()), default=0)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = [f"{n}_{c}" for n in names for c in ("indoor_c", "loop_supply_c", "loop_return_c")]
            w.writerow(("hour", *cols))
            for h in range(length):
                vals = []
                for n in names:
                    rows = traces[n]
                    r = rows[h] if h < len(rows) else {}
                    vals += [r.get("indoor_c", ""), r.get("loop_supply_c", ""), r.get("loop_return_c", "")]
                w.writerow((h, *vals))
        written.append(p)
    rep = {
        "artifact_version": __version__,
        "config_digest": run.digest,
        "manifest": "manifest.json",
        "sections": sections,
        "missing_sections": missing,
        "plots": sorted(str(p.relative_to(out)) for p in written),
    }
    write_json(out / "report.json", rep)
    run.record("report", [out / "report.json", *written])
    click.echo(f"report: {len(present)} of {len(STAGES)} sections" + (f" (missing: {', '.join(missing)})"
                                                                       if missing else ""))


# ------------------------------------------------------------------ synth-profile


def _demo_buildings(path: Path, heating: LoadProfile, cooling: LoadProfile, params: BenchmarkParams) -> None:
    """Building records whose benchmarks reproduce the fixture's annual totals and peaks."""
    shares = (("Admin", 0.4), ("Classroom", 0.3), ("Bioscience", 0.2), ("Residence", 0.1))
    steam_per_kwh = 1.0 / ((1 - params.steam_loss) * params.heating_system_efficiency * KBTUH_TO_KW)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("name", "type", "area", "annual_electricity", "annual_steam", "peak_heating", "peak_cooling",
                    "cooling_electricity"))
        for i, (kind, s) in enumerate(shares):
            cool_elec = s * cooling.annual / params.chiller_cop
            w.writerow((f"B{i + 1:02d}", kind, repr(round(s * 400000.0, 1)), repr(2.5 * cool_elec),
                        repr(s * heating.annual * steam_per_kwh), repr(s * heating.peak / KBTUH_TO_KW),
                        repr(s * cooling.peak / TON_TO_KW), repr(cool_elec)))


def _demo_config(seed: int) -> dict:
    return {
        "seed": seed,
        "output_dir": "out",
        "paths": {
            "buildings": "buildings.csv",
            "profiles": "profiles_unscaled.csv",
            "weather": "weather.csv",
            "gshp_map_heating": "gshp_map_heating.csv",
            "gshp_map_cooling": "gshp_map_cooling.csv",
            "ashp_map_heating": "ashp_map_heating.csv",
            "ashp_map_cooling": "ashp_map_cooling.csv",
        },
        "ground": {"undisturbed_temperature": 18.0, "conductivity": 2.42, "diffusivity": 0.08},
        "sizing": {"depth": 200.0, "spacing": 6.0, "cop_cooling": 5.5, "cop_heating": 3.5},
        "costs": {"ghx_unit_cost": 65.5, "heat_pump_unit_cost": 80.0, "electricity_price": 0.20,
                  "interest_rate": 0.08, "inflation_rate": 0.04, "horizon": 20},
        "controls": {"cool_on": 26.0, "cool_off": 21.0, "heat_on": 19.0, "heat_off": 24.0},
        "cases": [
            {k: v for k, v in (("name", c.name), ("kind", c.kind), ("size_factor", c.size_factor),
                               ("force_assist", c.force_assist)) if v is not None and v is not False}
            for c in DEFAULT_MATRIX
        ],
    }


@main.command("synth-profile")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@guarded
def synth_profile(out_dir, seed):
    """Write a deterministic demo project: profiles, buildings, weather, maps, config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = reference_scenario(seed)
    heating = LoadProfile(sc.heating, "heating")
    cooling = LoadProfile(sc.cooling, "cooling")
    # unscaled shapes: same hourly pattern, arbitrary gain and offset
    raw_h = LoadProfile(heating.values * (120.0 / heating.peak) + 5.0, "heating")
    raw_c = LoadProfile(cooling.values * (120.0 / cooling.peak) + 5.0, "cooling")
    write_profiles(out / "profiles_unscaled.csv", raw_h, raw_c)
    _demo_buildings(out / "buildings.csv", heating, cooling, BenchmarkParams())
    write_weather(out / "weather.csv", sc.weather)
    grids = {"heating": ((40.0, 45.0, 50.0, 55.0), (0.0, 5.0, 10.0, 15.0, 20.0)),
             "cooling": ((7.0, 10.0, 13.0), (15.0, 20.0, 25.0, 30.0, 35.0))}
    for name, model in (("gshp", synthetic_gshp()), ("ashp", synthetic_ashp())):
        for mode, (t_load, t_source) in grids.items():
            write_map_csv(out / f"{name}_map_{mode}.csv", generate_map_rows(model.mode(mode), t_load, t_source))
    (out / "config.yaml").write_text(yaml.safe_dump(_demo_config(seed), sort_keys=False))
    click.echo(f"wrote demo project to {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
