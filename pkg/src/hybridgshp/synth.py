"""Deterministic synthetic fixtures: load profiles, weather and heat-pump maps."""
from __future__ import annotations

import numpy as np

from .load_model import HOURS_PER_YEAR, LoadProfile

_HOURS = np.arange(HOURS_PER_YEAR)
_DAY = _HOURS / 24.0
_HOD = _HOURS % 24


def seasonal_profile(mode: str, peak: float, *, seed: int = 0, peak_day: float | None = None,
                     base_fraction: float = 0.1, daily_amplitude: float = 0.35, noise: float = 0.05,
                     season_power: float = 1.5) -> LoadProfile:
    """Sinusoid-plus-noise hourly profile with maximum ``peak`` kW.

    The seasonal envelope ``((1 + cos)/2)**season_power`` is centred on
    ``peak_day`` (default: day 200 for cooling, day 15 for heating) with a
    mid-afternoon (cooling) or early-morning (heating) daily swing.
    """
    if mode not in ("heating", "cooling"):
        raise ValueError(f"unknown mode {mode!r}")
    if peak < 0:
        raise ValueError("peak must be >= 0")
    if peak == 0:
        return LoadProfile(np.zeros(HOURS_PER_YEAR), mode)
    rng = np.random.default_rng(seed)
    if peak_day is None:
        peak_day = 200.0 if mode == "cooling" else 15.0
    season = (0.5 * (1.0 + np.cos(2 * np.pi * (_DAY - peak_day) / 365.0))) ** season_power
    hour_peak = 15.0 if mode == "cooling" else 7.0
    daily = 1.0 + daily_amplitude * np.cos(2 * np.pi * (_HOD - hour_peak) / 24.0)
    shape = (base_fraction + (1.0 - base_fraction) * season) * daily
    shape *= np.exp(noise * rng.standard_normal(HOURS_PER_YEAR))
    shape = np.clip(shape, 0.0, None)
    return LoadProfile(peak * shape / shape.max(), mode)


def synthetic_weather(*, seed: int = 0, mean: float = 14.0, seasonal: float = 4.0, daily: float = 4.0,
                      noise: float = 0.8) -> np.ndarray:
    """Mild coastal-climate dry-bulb series, degC (warmest near day 230)."""
    rng = np.random.default_rng(seed)
    t = (mean + seasonal * np.cos(2 * np.pi * (_DAY - 230.0) / 365.0)
         + daily * np.cos(2 * np.pi * (_HOD - 15.0) / 24.0))
    return t + noise * rng.standard_normal(HOURS_PER_YEAR)


def node_fixture(seed: int = 0, cooling_peak: float = 1000.0, heating_peak: float = 350.0):
    """Cooling-dominated node: ``(heating, cooling)`` profiles in kW.

    Cooling is confined to a sharp summer season; heating keeps a large
    year-round base (reheat and hot water), so annual rejection exceeds
    extraction while both modes share the base-load band.
    """
    heating = seasonal_profile("heating", heating_peak, seed=seed + 1, base_fraction=0.6)
    cooling = seasonal_profile("cooling", cooling_peak, seed=seed + 2, base_fraction=0.0, season_power=3.0)
    return heating, cooling
