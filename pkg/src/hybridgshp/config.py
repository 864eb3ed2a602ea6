"""Project configuration (YAML), its digest and the run manifest.

A config file names the input files and every model parameter. Relative
paths resolve against the directory holding the config. The digest covers
the resolved parameters and the bytes of every referenced input file, so any
edit to either marks earlier stage outputs as stale.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .cases import DEFAULT_MATRIX, CaseSpec
from .ground import GroundProperties, PipeGeometry
from .load_model import BenchmarkParams
from .optimizer import CopSet, CostParams
from .plant import SOURCE_KINDS, ControlConfig, PlantParams
from .sizing import DesignTemperatures, PulseSchedule, SizingSetup

MANIFEST_NAME = "manifest.json"
STAGES = ("scale", "size", "optimize", "simulate")
PATH_KEYS = ("buildings", "profiles", "weather", "gshp_map_heating", "gshp_map_cooling",
             "ashp_map_heating", "ashp_map_cooling")


class ConfigError(ValueError):
    """Bad or inconsistent configuration; carries the offending path when there is one."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


def _build(cls, section: dict | None, name: str):
    section = dict(section or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from None


def _section(raw: dict, key: str) -> dict:
    val = raw.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    return val


@dataclass(frozen=True)
class ExplicitTargets:
    """Node targets given directly instead of derived from building records."""

    heating_annual: float
    heating_peak: float
    cooling_annual: float
    cooling_peak: float


@dataclass
class ProjectConfig:
    base_dir: Path
    output_dir: Path
    paths: dict
    benchmark: BenchmarkParams
    targets: ExplicitTargets | None
    ground: GroundProperties
    pulses: PulseSchedule
    design_temperatures: DesignTemperatures
    pipe: PipeGeometry
    sizing: SizingSetup
    costs: CostParams
    cops: CopSet
    controls: ControlConfig
    plant: PlantParams
    cases: tuple
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)
    overrides: tuple = ()

    # -------------------------------------------------------------- loading

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".", overrides=()) -> "ProjectConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        raw = copy.deepcopy(raw)
        for item in overrides:
            apply_override(raw, item)
        known = {"paths", "output_dir", "benchmark", "targets", "ground", "pulses", "design_temperatures",
                 "pipe", "sizing", "costs", "cops", "controls", "plant", "cases", "seed"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        base_dir = Path(base_dir).resolve()

        paths = {}
        for key, val in _section(raw, "paths").items():
            if key not in PATH_KEYS:
                raise ConfigError(f"unknown path key {key!r}")
            if val is None:
                continue
            p = (base_dir / str(val)).resolve()
            if not p.is_file():
                raise ConfigError(f"referenced file does not exist: {p}", str(p))
            paths[key] = p
        if "profiles" not in paths:
            raise ConfigError("paths.profiles is required")

        benchmark = _build(BenchmarkParams, _section(raw, "benchmark"), "benchmark")
        targets = _build(ExplicitTargets, raw["targets"], "targets") if raw.get("targets") else None
        if targets is None and "buildings" not in paths:
            raise ConfigError("either paths.buildings or a targets section is required")

        ground = _build(GroundProperties, _section(raw, "ground"), "ground")
        pulses = _build(PulseSchedule, _section(raw, "pulses"), "pulses")
        temps = _build(DesignTemperatures, _section(raw, "design_temperatures"), "design_temperatures")
        pipe = _build(PipeGeometry, _section(raw, "pipe"), "pipe")
        sz = dict(_section(raw, "sizing"))
        for k in ("ground", "pulses", "temps", "pipe"):
            if k in sz:
                raise ConfigError(f"sizing.{k} belongs in its own top-level section")
        sizing = _build(SizingSetup, {**sz, "ground": ground, "pulses": pulses, "temps": temps, "pipe": pipe},
                        "sizing")
        costs = _build(CostParams, _section(raw, "costs"), "costs")
        cops = _build(CopSet, _section(raw, "cops"), "cops")
        controls = _build(ControlConfig, _section(raw, "controls"), "controls")
        plant = _build(PlantParams, _section(raw, "plant"), "plant")
        cases = parse_cases(raw.get("cases"))
        try:
            seed = int(raw.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        out = (base_dir / str(raw.get("output_dir", "out"))).resolve()
        return cls(base_dir, out, paths, benchmark, targets, ground, pulses, temps, pipe, sizing, costs, cops,
                   controls, plant, cases, seed, raw=raw, overrides=tuple(overrides))

    @classmethod
    def load(cls, path: str | Path, overrides=()) -> "ProjectConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file does not exist: {path}", str(path))
        try:
            raw = yaml.safe_load(path.read_text())
        except (yaml.YAMLError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})", str(path)) from None
        return cls.from_dict(raw or {}, path.parent, overrides)

    # -------------------------------------------------------------- digest

    def resolved(self) -> dict:
        """Every parameter after defaults and overrides, as plain JSON types."""
        asdict = dataclasses.asdict
        sizing = asdict(self.sizing)
        for k in ("ground", "pulses", "temps", "pipe"):
            sizing.pop(k)
        return {
            "paths": {k: str(v.relative_to(self.base_dir)) if v.is_relative_to(self.base_dir) else str(v)
                      for k, v in sorted(self.paths.items())},
            "benchmark": asdict(self.benchmark),
            "targets": asdict(self.targets) if self.targets else None,
            "ground": asdict(self.ground),
            "pulses": asdict(self.pulses),
            "design_temperatures": asdict(self.design_temperatures),
            "pipe": asdict(self.pipe),
            "sizing": sizing,
            "costs": asdict(self.costs),
            "cops": asdict(self.cops),
            "controls": asdict(self.controls),
            "plant": asdict(self.plant),
            "cases": [asdict(c) for c in self.cases],
            "seed": self.seed,
        }

    def input_hashes(self) -> dict:
        return {k: file_sha256(p) for k, p in sorted(self.paths.items())}

    def digest(self) -> str:
        payload = {"config": self.resolved(), "inputs": self.input_hashes()}
        return hashlib.sha256(canonical_json(payload).encode()).hexdigest()

    def case(self, name: str) -> CaseSpec:
        for c in self.cases:
            if c.name == name:
                return c
        raise ConfigError(f"unknown case {name!r}; known: {', '.join(c.name for c in self.cases)}")


def parse_cases(raw) -> tuple:
    if raw is None:
        return DEFAULT_MATRIX
    if not isinstance(raw, list) or not raw:
        raise ConfigError("cases must be a non-empty list")
    cases = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"cases[{i}] must be a mapping")
        case = _build(CaseSpec, item, f"cases[{i}]")
        if case.kind not in SOURCE_KINDS:
            raise ConfigError(f"cases[{i}]: unknown source kind {case.kind!r}")
        cases.append(case)
    names = [c.name for c in cases]
    if len(set(names)) != len(names):
        raise ConfigError("case names must be unique")
    return tuple(cases)


def apply_override(raw: dict, item: str) -> None:
    """Apply ``a.b.c=value`` in place; the value is parsed as YAML."""
    key, sep, text = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {item!r}: {exc}") from None
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {item!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def timestamp() -> str:
    """UTC time, pinned by ``SOURCE_DATE_EPOCH`` when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    """Per-stage record of what ran, against which config digest, producing which files."""

    config_digest: str
    artifact_version: str = __version__
    created: str = ""
    overrides: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)

    @classmethod
    def load(cls, out_dir: Path) -> "RunManifest | None":
        path = Path(out_dir) / MANIFEST_NAME
        if not path.is_file():
            return None
        try:
            data = json.loads(path.read_text())
            return cls(data["config_digest"], data.get("artifact_version", ""), data.get("created", ""),
                       list(data.get("overrides", [])), dict(data.get("stages", {})))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: unreadable manifest ({exc})", str(path)) from None

    def save(self, out_dir: Path) -> None:
        write_json(Path(out_dir) / MANIFEST_NAME, dataclasses.asdict(self))

    def record(self, stage: str, digest: str, out_dir: Path, outputs, status: str = "completed",
               overrides=(), extra: dict | None = None) -> None:
        out_dir = Path(out_dir)
        self.config_digest = digest
        self.overrides = sorted(set(self.overrides) | set(overrides))
        self.stages[stage] = {
            "status": status,
            "config_digest": digest,
            "finished": timestamp(),
            "outputs": {str(Path(p).relative_to(out_dir)): file_sha256(p) for p in sorted(outputs)},
            **(extra or {}),
        }

    def stale_stages(self, digest: str, out_dir: Path) -> list[str]:
        """Stages run under a different digest or whose outputs changed since."""
        stale = []
        for name, rec in sorted(self.stages.items()):
            if rec.get("config_digest") != digest:
                stale.append(name)
                continue
            for rel, sha in rec.get("outputs", {}).items():
                p = Path(out_dir) / rel
                if not p.is_file() or file_sha256(p) != sha:
                    stale.append(name)
                    break
        return stale
