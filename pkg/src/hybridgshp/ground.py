"""Transient ground model: line-source responses, g-functions, temporal
superposition with load aggregation, and the borehole internal network.

Conventions: heat rates are positive when injected into the ground; the
borehole wall temperature rise is ``q' * g(t) / (2 pi k)`` for a step of
``q'`` W/m starting at ``t = 0``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicSpline
from scipy.special import erf

from . import _kernels

SECONDS_PER_DAY = 86400.0
WATER_CP = 4186.0  # J/(kg K)
WATER_RHO = 1000.0  # kg/m3


class GroundModelError(ValueError):
    pass


@dataclass(frozen=True)
class GroundProperties:
    undisturbed_temperature: float = 18.0  # degC
    conductivity: float = 2.42  # W/(m K)
    diffusivity: float = 0.08  # m2/day
    grout_conductivity: float = 1.4  # W/(m K)
    borehole_diameter: float = 0.127  # m
    #: carried for reporting; the homogeneous-ground model does not use it
    water_table_depth: float = 5.0  # m

    def __post_init__(self):
        if not self.conductivity > 0:
            raise GroundModelError("ground conductivity must be positive")
        if not self.diffusivity > 0:
            raise GroundModelError("ground diffusivity must be positive")
        if not self.borehole_diameter > 0:
            raise GroundModelError("borehole diameter must be positive")
        if not self.grout_conductivity > 0:
            raise GroundModelError("grout conductivity must be positive")

    @property
    def diffusivity_si(self) -> float:
        return self.diffusivity / SECONDS_PER_DAY

    @property
    def borehole_radius(self) -> float:
        return 0.5 * self.borehole_diameter


def exp_integral_E1(x):
    """E1(x) for scalar or array ``x > 0``."""
    if np.ndim(x) == 0:
        return _kernels.exp1(float(x))
    return _kernels.exp1_array(np.asarray(x, dtype=np.float64))


def ils_response(t, r, ground: GroundProperties):
    """Infinite line source temperature rise per unit heat rate, K/(W/m).

    Vanishes for ``t <= 0``.
    """
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise GroundModelError("radius must be positive")
    t, r = np.broadcast_arrays(t, r)
    out = np.zeros(t.shape)
    pos = t > 0
    if np.any(pos):
        x = r[pos] ** 2 / (4.0 * ground.diffusivity_si * t[pos])
        out[pos] = exp_integral_E1(x) / (4.0 * math.pi * ground.conductivity)
    return out if out.ndim else float(out)


def _ierf(x):
    return x * erf(x) - (1.0 - np.exp(-x * x)) / math.sqrt(math.pi)


def fls_gfunction(t, H: float, D: float, distance, ground: GroundProperties, *, image: bool = True):
    """Finite line source mean-wall response factor (dimensionless).

    Evaluated between two equal vertical line sources of length ``H`` buried
    at depth ``D`` at horizontal ``distance`` (the borehole radius for the
    self-response), with a mirror sink above the ground surface when
    ``image`` is set. Scalar ``t`` with scalar or array ``distance``.
    """
    dist = np.atleast_1d(np.asarray(distance, dtype=np.float64))
    if t <= 0:
        out = np.zeros(dist.shape)
        return out if np.ndim(distance) else 0.0
    s0 = 1.0 / math.sqrt(4.0 * ground.diffusivity_si * t)
    d2 = dist * dist

    def integrand(s):
        y = 2.0 * _ierf(H * s)
        if image:
            y = y + 2.0 * _ierf((H + 2 * D) * s) - _ierf(2 * D * s) - _ierf((2 * H + 2 * D) * s)
        return np.exp(-d2 * s * s) * y / (s * s)

    val, _ = quad_vec(integrand, s0, np.inf, epsabs=1e-13, epsrel=1e-10, limit=400)
    out = 0.5 / H * val
    return out if np.ndim(distance) else float(out[0])


@dataclass(frozen=True)
class BorefieldLayout:
    positions: tuple  # ((x, y), ...) in m
    depth: float = 200.0
    buried_depth: float = 5.0
    borehole_radius: float = 0.0635

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if pos.shape[0] == 0:
            raise GroundModelError("layout needs at least one borehole")
        if not self.depth > 0:
            raise GroundModelError("borehole depth must be positive")
        if pos.shape[0] > 1:
            d = _pair_distances(pos)
            if d.min() <= 2 * self.borehole_radius:
                raise GroundModelError("boreholes overlap or coincide (spacing <= 2 r_b)")
        object.__setattr__(self, "positions", tuple(map(tuple, pos.tolist())))

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def total_length(self) -> float:
        return self.count * self.depth

    @classmethod
    def rectangular(cls, nx: int, ny: int, spacing: float, **kw) -> "BorefieldLayout":
        xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="ij")
        return cls(tuple(zip(xs.ravel(), ys.ravel())), **kw)

    @classmethod
    def near_square(cls, n: int, spacing: float, **kw) -> "BorefieldLayout":
        """First ``n`` sites of a square-ish grid filled row by row."""
        if n < 1:
            raise GroundModelError("near-square layout needs n >= 1")
        cols = math.ceil(math.sqrt(n))
        pts = [((i % cols) * spacing, (i // cols) * spacing) for i in range(n)]
        return cls(tuple(pts), **kw)

    def fingerprint(self, ground: GroundProperties | None = None) -> str:
        payload = {
            "positions": [[round(x, 6), round(y, 6)] for x, y in sorted(self.positions)],
            "H": self.depth,
            "D": self.buried_depth,
            "rb": self.borehole_radius,
        }
        if ground is not None:
            payload["k"] = ground.conductivity
            payload["a"] = ground.diffusivity
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def distance_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique inter-borehole distances and their mean multiplicity per borehole."""
        pos = np.asarray(self.positions)
        n = pos.shape[0]
        if n == 1:
            return np.empty(0), np.empty(0)
        d = _pair_distances(pos)
        key = np.round(d, 9)
        uniq, counts = np.unique(key, return_counts=True)
        return uniq, 2.0 * counts / n


def _pair_distances(pos: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(pos.shape[0], k=1)
    return np.hypot(pos[i, 0] - pos[j, 0], pos[i, 1] - pos[j, 1])


@dataclass
class GFunctionTable:
    times: np.ndarray  # s
    values: np.ndarray
    fingerprint: str = ""
    _spline: CubicSpline | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise GroundModelError("g-function times and values must be 1-D and equal length")
        if np.any(np.diff(self.times) <= 0) or self.times[0] <= 0:
            raise GroundModelError("g-function times must be positive and strictly increasing")
        if len(self.times) >= 2:
            self._spline = CubicSpline(np.log(self.times), self.values)

    def __call__(self, t):
        """Interpolated g at ``t`` (s); zero for ``t <= 0``, linear in ``t`` below the table."""
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros(t.shape)
        t0, g0 = self.times[0], self.values[0]
        low = (t > 0) & (t < t0)
        out[low] = g0 * t[low] / t0
        mid = (t >= t0) & (t <= self.times[-1])
        if self._spline is not None:
            out[mid] = self._spline(np.log(t[mid]))
            high = t > self.times[-1]
            if np.any(high):
                slope = self._spline(np.log(self.times[-1]), 1)
                out[high] = self.values[-1] + slope * (np.log(t[high]) - np.log(self.times[-1]))
        else:
            out[t >= t0] = g0
        return out if out.ndim else float(out)

    def save(self, path: str | Path) -> None:
        """Write atomically, so concurrent runs never see a partial table."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(f"# fingerprint {self.fingerprint}\n")
            fh.write("# time_s g\n")
            for t, g in zip(self.times, self.values):
                fh.write(f"{float(t)!r} {float(g)!r}\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "GFunctionTable":
        path = Path(path)
        fp = ""
        rows = []
        for line in path.read_text().splitlines():
            if line.startswith("# fingerprint"):
                fp = line.split()[2] if len(line.split()) > 2 else ""
            elif line.strip() and not line.startswith("#"):
                t, g = line.split()
                rows.append((float(t), float(g)))
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], fp)


def borefield_gfunction(
    layout: BorefieldLayout, times, ground: GroundProperties, *, cache_dir: str | Path | None = None
) -> GFunctionTable:
    """Uniform-heat-rate field g-function: self FLS plus mean neighbour FLS sum."""
    times = np.asarray(times, dtype=np.float64)
    fp = layout.fingerprint(ground) + "-" + hashlib.sha256(times.tobytes()).hexdigest()[:8]
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / f"gfunc-{fp}.txt"
        if cache.exists():
            try:
                table = GFunctionTable.load(cache)
            except (ValueError, IndexError, GroundModelError):
                table = None  # unreadable cache entry; recompute and overwrite
            if table is not None and table.fingerprint == fp and np.array_equal(table.times, times):
                return table
    dists, weights = layout.distance_weights()
    all_d = np.concatenate(([layout.borehole_radius], dists))
    w = np.concatenate(([1.0], weights))
    vals = np.empty(times.shape)
    for i, t in enumerate(times):
        h = fls_gfunction(t, layout.depth, layout.buried_depth, all_d, ground)
        vals[i] = float(np.dot(w, h))
    table = GFunctionTable(times, vals, fp)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        table.save(cache)
    return table


def geometric_times(t_min: float, t_max: float, per_decade: int = 10) -> np.ndarray:
    n = max(2, int(math.ceil(per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, n)


@dataclass(frozen=True)
class StepResponse:
    """Wall temperature rise per W/m after ``n`` steps of length ``dt``: ``table[n]``."""

    dt: float
    table: np.ndarray

    @classmethod
    def from_gfunction(cls, g: GFunctionTable, dt: float, nsteps: int, ground: GroundProperties) -> "StepResponse":
        tab = np.asarray(g(np.arange(nsteps + 1) * dt), dtype=np.float64) / (2 * math.pi * ground.conductivity)
        tab[0] = 0.0
        return cls(float(dt), np.ascontiguousarray(tab))

    @property
    def nsteps(self) -> int:
        return self.table.shape[0] - 1


class AggregationState:
    """Load history compressed into blocks whose widths double every
    ``per_level`` blocks (newest first). Block contents are exact energy
    sums, so no heat is lost to aggregation.
    """

    def __init__(self, dt: float, per_level: int = 16, capacity: int | None = None):
        if per_level < 1:
            raise GroundModelError("per_level must be >= 1")
        self.dt = float(dt)
        self.per_level = int(per_level)
        cap = capacity or per_level * 70
        self.energy = np.zeros(cap)  # W/m x steps
        self.widths = np.zeros(cap, dtype=np.int64)
        self.nblocks = 0
        self.nsteps = 0
        self.injected = 0.0

    @property
    def time(self) -> float:
        return self.nsteps * self.dt

    def push(self, q: float) -> None:
        self.nblocks = _kernels.agg_push(self.energy, self.widths, self.nblocks, float(q), self.per_level)
        self.nsteps += 1
        self.injected += float(q)

    def aggregated_energy(self) -> float:
        return float(self.energy[: self.nblocks].sum())

    def temperature_rise(self, response: StepResponse) -> float:
        if response.dt != self.dt:
            raise GroundModelError(f"step response dt {response.dt} does not match aggregation dt {self.dt}")
        if self.nblocks == 0:
            return 0.0
        return _kernels.agg_temperature(self.energy, self.widths, self.nblocks, response.table)


def wall_temperature(load_history, response: StepResponse, agg: AggregationState, ground: GroundProperties) -> float:
    """Push ``load_history`` (W/m per step) into ``agg``; return the wall temperature after it."""
    for q in np.atleast_1d(np.asarray(load_history, dtype=np.float64)):
        agg.push(q)
    return ground.undisturbed_temperature + agg.temperature_rise(response)


def direct_wall_temperature(load_history, response: StepResponse, ground: GroundProperties) -> np.ndarray:
    """Unaggregated O(n^2) superposition; wall temperature after each step."""
    q = np.ascontiguousarray(load_history, dtype=np.float64)
    return ground.undisturbed_temperature + _kernels.direct_superposition(q, response.table)


# ----------------------------------------------------------------- U-tube internals


@dataclass(frozen=True)
class PipeGeometry:
    """Single U-tube. Defaults: 1.25 in SDR-11 HDPE, legs at +/- r_b / 2."""

    outer_diameter: float = 0.042164
    sdr: float = 11.0
    shank_spacing: float = 0.0635  # leg centre-to-centre, m
    conductivity: float = 0.4  # W/(m K)
    fluid_resistance: float = 0.0  # convective film, m K/W per pipe

    @property
    def outer_radius(self) -> float:
        return 0.5 * self.outer_diameter

    @property
    def inner_radius(self) -> float:
        return self.outer_radius * (1.0 - 2.0 / self.sdr)

    def wall_resistance(self) -> float:
        return math.log(self.outer_radius / self.inner_radius) / (2 * math.pi * self.conductivity) + self.fluid_resistance


def multipole_resistances(ground: GroundProperties, pipe: PipeGeometry) -> tuple[float, float]:
    """Zeroth-order multipole self and mutual resistances ``(R11, R12)`` for a symmetric U-tube."""
    rb = ground.borehole_radius
    rpo = pipe.outer_radius
    s = 0.5 * pipe.shank_spacing
    if not (rpo > 0 and pipe.inner_radius > 0):
        raise GroundModelError("pipe radii must be positive")
    if s + rpo >= rb:
        raise GroundModelError("pipe does not fit inside the borehole")
    if s < rpo:
        raise GroundModelError("U-tube legs overlap")
    kb, k = ground.grout_conductivity, ground.conductivity
    sigma = (kb - k) / (kb + k)
    c = 1.0 / (2 * math.pi * kb)
    r11 = pipe.wall_resistance() + c * (math.log(rb / rpo) + sigma * math.log(rb**2 / (rb**2 - s**2)))
    r12 = c * (math.log(rb / (2 * s)) + sigma * math.log(rb**2 / (rb**2 + s**2)))
    return r11, r12


def delta_resistances(ground: GroundProperties, pipe: PipeGeometry) -> tuple[float, float]:
    """Delta-network ``(pipe-to-wall, pipe-to-pipe)`` resistances, m K/W.

    The pipe-to-pipe value is ``inf`` when the multipole coupling is not
    positive.
    """
    r11, r12 = multipole_resistances(ground, pipe)
    r_wall = r11 + r12
    r_pp = (r11 * r11 - r12 * r12) / r12 if r12 > 0 else math.inf
    return r_wall, r_pp


@dataclass
class BoreholeInternalModel:
    """Axially discretized U-tube: 2N fluid cells coupled to the wall and each other."""

    depth: float
    segments: int = 8
    r_wall: float = 0.2  # pipe-to-wall, m K/W
    r_pipe: float = 1.0  # pipe-to-pipe, m K/W
    inner_radius: float = 0.01725
    temps: np.ndarray | None = None

    def __post_init__(self):
        if self.segments < 1:
            raise GroundModelError("need at least one axial segment")
        if not (self.r_wall > 0 and self.r_pipe > 0):
            raise GroundModelError("internal resistances must be positive")
        if self.temps is None:
            self.temps = np.zeros(2 * self.segments)
        self.temps = np.ascontiguousarray(self.temps, dtype=np.float64)

    @classmethod
    def from_geometry(cls, depth: float, ground: GroundProperties, pipe: PipeGeometry | None = None,
                      segments: int = 8, initial_temperature: float | None = None) -> "BoreholeInternalModel":
        pipe = pipe or PipeGeometry()
        r_wall, r_pp = delta_resistances(ground, pipe)
        t0 = ground.undisturbed_temperature if initial_temperature is None else initial_temperature
        return cls(depth, segments, r_wall, r_pp, pipe.inner_radius, np.full(2 * segments, float(t0)))

    @property
    def dz(self) -> float:
        return self.depth / self.segments

    @property
    def cell_capacity(self) -> float:
        return WATER_RHO * WATER_CP * math.pi * self.inner_radius**2 * self.dz

    def fluid_enthalpy(self) -> float:
        return self.cell_capacity * float(self.temps.sum())


def internal_step(model: BoreholeInternalModel, wall_temps, inlet: float, flow: float, dt: float):
    """Advance the network by ``dt``; returns ``(outlet, flux_w_per_m, model)``.

    ``wall_temps`` is a scalar or one value per segment; ``flux_w_per_m`` is the
    mean heat rate into the ground per metre of borehole.
    """
    if flow < 0:
        raise GroundModelError("flow must be non-negative")
    if not dt > 0:
        raise GroundModelError("dt must be positive")
    tb = np.array(np.broadcast_to(np.asarray(wall_temps, dtype=np.float64), (model.segments,)), dtype=np.float64)
    g_wall = model.dz / model.r_wall
    g_pp = 0.0 if math.isinf(model.r_pipe) else model.dz / model.r_pipe
    t_out, heat = _kernels.borehole_step(
        model.temps, tb, float(inlet), float(flow) * WATER_CP, g_wall, g_pp, model.cell_capacity, float(dt)
    )
    return t_out, heat / model.depth, model
