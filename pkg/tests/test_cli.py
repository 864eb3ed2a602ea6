import csv
import json

import pytest
import yaml
from click.testing import CliRunner

from hybridgshp.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_STALE, main

QUICK = ("--set", "plant.hours=240")


def _run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def _error(result) -> dict:
    return json.loads(result.stderr.strip().splitlines()[-1])


@pytest.fixture
def project(tmp_path, pinned_time):
    res = _run("synth-profile", tmp_path / "proj")
    assert res.exit_code == EXIT_OK, res.output
    return tmp_path / "proj"


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    """One full (short-horizon) pipeline shared by read-only checks."""
    mp = pytest.MonkeyPatch()
    mp.setenv("SOURCE_DATE_EPOCH", "1700000000")
    root = tmp_path_factory.mktemp("cli") / "proj"
    assert _run("synth-profile", root).exit_code == EXIT_OK
    cfg = root / "config.yaml"
    steps = [("scale",), ("size",), ("optimize",), ("simulate", "--cases", "case01,case02,case08"), ("report",)]
    codes = [_run(*step, cfg, *QUICK).exit_code for step in steps]
    mp.undo()
    return root, codes


def test_synth_profile_writes_project(project):
    names = {p.name for p in project.iterdir()}
    assert {"config.yaml", "profiles_unscaled.csv", "buildings.csv", "weather.csv",
            "gshp_map_heating.csv", "gshp_map_cooling.csv", "ashp_map_heating.csv", "ashp_map_cooling.csv"} <= names
    cfg = yaml.safe_load((project / "config.yaml").read_text())
    assert len(cfg["cases"]) == 11
    assert cfg["cases"][-1] == {"name": "case11", "kind": "GSHP+ElectricHeater", "size_factor": 2.0, "force_assist": True}
    header = (project / "weather.csv").read_text().splitlines()[0]
    assert header == "hour,outdoor_drybulb_c"


def test_full_pipeline_exit_codes(finished):
    _, codes = finished
    assert codes == [EXIT_OK] * 5


def test_scale_output(finished):
    root, _ = finished
    out = json.loads((root / "out" / "scale.json").read_text())
    for mode in ("heating", "cooling"):
        assert out[mode]["within_1pct"]
    with (root / "out" / "scaled_profiles.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 8761


def test_size_and_optimize_outputs(finished):
    root, _ = finished
    size = json.loads((root / "out" / "size.json").read_text())
    assert size["borehole_count"] == 487
    opt = json.loads((root / "out" / "optimum.json").read_text())
    assert opt["interior"] is True
    assert float(opt["alpha"]) == pytest.approx(0.39)
    sweep = (root / "out" / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "alpha,beta,threshold_kw,boreholes,capital_usd,opex_year1_usd,npv_usd,feasible"
    assert len(sweep) == 102


def test_simulate_outputs(finished):
    root, _ = finished
    sim = root / "out" / "simulate"
    for case in ("case01", "case02", "case08"):
        assert (sim / f"{case}.csv").exists() and (sim / f"{case}.json").exists()
    with (root / "out" / "simulation_summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["case"] for r in rows] == ["case01", "case02", "case08"]
    assert rows[0]["boreholes"] == "0"
    ts = (sim / "case02.csv").read_text().splitlines()
    assert ts[0].startswith("hour,indoor_c,loop_supply_c,loop_return_c,loop_dt_k")
    assert len(ts) == 241


def test_report_sections(finished):
    root, _ = finished
    rep = json.loads((root / "out" / "report.json").read_text())
    assert rep["missing_sections"] == []
    for name in ("load_profiles.csv", "cost_vs_alpha.csv", "temperature_traces.csv"):
        assert (root / "out" / "plots" / name).exists()
    manifest = json.loads((root / "out" / "manifest.json").read_text())
    assert set(manifest["stages"]) >= {"scale", "size", "optimize", "simulate", "report"}


def test_dry_run_writes_nothing(project):
    res = _run("scale", project / "config.yaml", "--dry-run")
    assert res.exit_code == EXIT_OK
    assert not (project / "out").exists()


def test_missing_input_file(project):
    (project / "profiles_unscaled.csv").unlink()
    res = _run("scale", project / "config.yaml")
    assert res.exit_code == EXIT_INPUT
    err = _error(res)
    assert err["exit_code"] == EXIT_INPUT
    assert "profiles_unscaled.csv" in err["message"]


def test_unknown_config_key(project):
    cfg = project / "config.yaml"
    data = yaml.safe_load(cfg.read_text())
    data["ground"]["colour"] = "brown"
    cfg.write_text(yaml.safe_dump(data))
    res = _run("scale", cfg)
    assert res.exit_code == EXIT_INPUT
    assert "colour" in _error(res)["message"]


def test_bad_profile_csv(project):
    (project / "profiles_unscaled.csv").write_text("hour,heating_kw\n0,abc\n")
    assert _run("scale", project / "config.yaml").exit_code == EXIT_INPUT


def test_stage_order_enforced(project):
    res = _run("size", project / "config.yaml")
    assert res.exit_code == EXIT_INPUT
    assert _error(res)["missing_stages"] == ["scale"]
    assert _run("report", project / "config.yaml").exit_code == EXIT_INPUT


def test_unknown_case(project):
    cfg = project / "config.yaml"
    assert _run("scale", cfg).exit_code == EXIT_OK
    assert _run("size", cfg).exit_code == EXIT_OK
    assert _run("simulate", cfg, "--cases", "case99", *QUICK).exit_code == EXIT_INPUT


def test_stale_manifest(project):
    cfg = project / "config.yaml"
    assert _run("scale", cfg).exit_code == EXIT_OK
    res = _run("size", cfg, "--set", "ground.conductivity=2.0")
    assert res.exit_code == EXIT_STALE
    assert _error(res)["stale_stages"] == ["scale"]
    assert _run("report", cfg, "--set", "ground.conductivity=2.0").exit_code == EXIT_STALE
    # touching an input file stales the stage as well
    with (project / "weather.csv").open("a") as fh:
        fh.write("")
    (project / "buildings.csv").write_text((project / "buildings.csv").read_text() + "\n")
    assert _run("size", cfg).exit_code == EXIT_STALE


def test_partial_report(project):
    cfg = project / "config.yaml"
    assert _run("scale", cfg).exit_code == EXIT_OK
    assert _run("size", cfg).exit_code == EXIT_OK
    res = _run("report", cfg)
    assert res.exit_code == EXIT_OK
    rep = json.loads((project / "out" / "report.json").read_text())
    assert rep["missing_sections"] == ["optimize", "simulate"]


def test_infeasible_optimization(project):
    cfg = project / "config.yaml"
    tight = ("--set", "design_temperatures.cooling_in=15", "--set", "design_temperatures.cooling_out=18")
    assert _run("scale", cfg, *tight).exit_code == EXIT_OK
    res = _run("optimize", cfg, *tight)
    assert res.exit_code == EXIT_INFEASIBLE
    assert _error(res)["exit_code"] == EXIT_INFEASIBLE
    manifest = json.loads((project / "out" / "manifest.json").read_text())
    assert manifest["stages"]["optimize"]["status"] == "infeasible"
    assert _run("size", cfg, *tight).exit_code == EXIT_INFEASIBLE


def test_rerun_is_byte_identical(project):
    cfg = project / "config.yaml"
    outputs = {}
    for attempt in range(2):
        for step in (("scale",), ("size",), ("optimize",)):
            assert _run(*step, cfg).exit_code == EXIT_OK
        outputs[attempt] = {p.name: p.read_bytes() for p in sorted((project / "out").glob("*.*"))}
    assert outputs[0] == outputs[1]
    assert "manifest.json" in outputs[0]


def test_help_lists_subcommands():
    res = _run("--help")
    for name in ("scale", "size", "optimize", "simulate", "report", "synth-profile"):
        assert name in res.output
