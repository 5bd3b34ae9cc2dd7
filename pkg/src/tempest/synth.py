"""Synthetic multi-city weather with westerly advection.

Temperature at a city is ``base + diurnal sine + seasonal drift + fronts +
noise``. Fronts spawn at the westmost longitude at Poisson times and move
east at a fixed speed, so a city ``x`` miles east sees a front ``x / speed``
hours after it spawns. Upstream cities therefore carry information about a
downstream city's next-day temperature that its own history cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .ingest import CityId, RawObservation
from .rng import stream

MILES_PER_DEGREE = 69.17

# Nashville and nine neighbours; the target city comes first.
TENNESSEE = [
    CityId("nashville", 36.16, -86.78),
    CityId("knoxville", 35.96, -83.92),
    CityId("chattanooga", 35.05, -85.31),
    CityId("jackson", 35.61, -88.81),
    CityId("bowling_green", 36.99, -86.44),
    CityId("paducah", 37.08, -88.60),
    CityId("birmingham", 33.52, -86.80),
    CityId("atlanta", 33.75, -84.39),
    CityId("florence", 34.80, -87.68),
    CityId("tupelo", 34.26, -88.70),
]

CALM_DIRS = ("N", "NE", "E", "SE", "S", "Calm")
COLD_DIRS = ("NW", "WNW", "N")
WARM_DIRS = ("SW", "WSW", "S")


class BadConfig(ValueError):
    pass


@dataclass(frozen=True)
class Physics:
    base_temp_f: float = 78.0
    diurnal_amplitude_f: float = 9.0
    seasonal_drift_f_per_day: float = -0.08
    advection_speed_mph: float = 5.0
    front_rate_per_day: float = 0.5
    front_magnitude_f: float = 6.0
    front_rise_hours: float = 4.0
    front_decay_hours: float = 30.0
    noise_sigma_f: float = 2.5
    latitude_gradient_f_per_degree: float = -1.5


@dataclass(frozen=True)
class SynthConfig:
    cities: tuple[CityId, ...] = tuple(TENNESSEE)
    start: date = date(2018, 6, 23)
    days: int = 78
    seed: int = 2018
    physics: Physics = field(default_factory=Physics)
    dropout: float = 0.0
    # Fronts spawned this long before ``start`` are still active at the start.
    spinup_days: float = 10.0

    def validate(self) -> None:
        if self.days < 2:
            raise BadConfig("days must be >= 2")
        if not self.cities:
            raise BadConfig("at least one city is required")
        if len({c.name for c in self.cities}) != len(self.cities):
            raise BadConfig("city names must be unique")
        ph = self.physics
        if not ph.advection_speed_mph > 0:
            raise BadConfig("advection speed must be positive")
        if ph.noise_sigma_f < 0:
            raise BadConfig("noise sigma must be non-negative")
        if ph.front_rate_per_day < 0 or ph.front_rise_hours <= 0 or ph.front_decay_hours <= 0:
            raise BadConfig("front rate must be >= 0 and rise/decay times positive")
        if not 0.0 <= self.dropout < 1.0:
            raise BadConfig("dropout must be in [0, 1)")

    @property
    def hours(self) -> int:
        return self.days * 24

    @property
    def epoch(self) -> datetime:
        return datetime(self.start.year, self.start.month, self.start.day, tzinfo=timezone.utc)


@dataclass(frozen=True)
class Front:
    spawn_hour: float  # hours after the corpus start; may be negative
    magnitude: float  # signed, degrees F; negative is a cold front


def east_miles(cities) -> dict[str, float]:
    """Flat-earth east-west distance of each city from the westmost one."""
    lat0 = math.radians(sum(c.lat for c in cities) / len(cities))
    west = min(c.lon for c in cities)
    return {c.name: (c.lon - west) * MILES_PER_DEGREE * math.cos(lat0) for c in cities}


def front_schedule(cfg: SynthConfig) -> list[Front]:
    ph = cfg.physics
    rng = stream(cfg.seed, "synth-fronts")
    lo = -cfg.spinup_days * 24.0
    hi = float(cfg.hours)
    fronts = []
    if ph.front_rate_per_day == 0 or ph.front_magnitude_f == 0:
        return fronts
    mean_gap = 24.0 / ph.front_rate_per_day
    t = lo + rng.exponential(mean_gap)
    while t < hi:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        fronts.append(Front(t, sign * ph.front_magnitude_f * rng.uniform(0.6, 1.4)))
        t += rng.exponential(mean_gap)
    return fronts


def front_shape(tau: np.ndarray, rise: float, decay: float) -> np.ndarray:
    """Response to a unit front ``tau`` hours after arrival: linear ramp to 1, then exponential decay."""
    tau = np.asarray(tau, dtype=float)
    ramp = np.clip(tau / rise, 0.0, 1.0)
    return np.where(tau < 0, 0.0, ramp * np.exp(-np.maximum(tau - rise, 0.0) / decay))


def front_field(cfg: SynthConfig, fronts, city: str, hours: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Temperature perturbation, proximity (0..1) and signed proximity at ``city``."""
    ph = cfg.physics
    lag = east_miles(cfg.cities)[city] / ph.advection_speed_mph
    temp = np.zeros(len(hours))
    prox = np.zeros(len(hours))
    signed = np.zeros(len(hours))
    for f in fronts:
        tau = hours - (f.spawn_hour + lag)
        temp += f.magnitude * front_shape(tau, ph.front_rise_hours, ph.front_decay_hours)
        near = np.exp(-0.5 * (tau / 6.0) ** 2)
        prox += near * abs(f.magnitude) / ph.front_magnitude_f
        signed += near * math.copysign(1.0, f.magnitude)
    return temp, np.clip(prox, 0.0, 1.5), signed


def _baseline(cfg: SynthConfig, city: CityId, hours: np.ndarray) -> np.ndarray:
    ph = cfg.physics
    lat0 = sum(c.lat for c in cfg.cities) / len(cfg.cities)
    solar_hour = (hours + city.lon / 15.0) % 24.0
    diurnal = ph.diurnal_amplitude_f * np.sin(2 * math.pi * (solar_hour - 9.0) / 24.0)
    return (
        ph.base_temp_f
        + ph.latitude_gradient_f_per_degree * (city.lat - lat0)
        + diurnal
        + ph.seasonal_drift_f_per_day * hours / 24.0
    )


def clean_temperature(cfg: SynthConfig, city: str, hours: np.ndarray, fronts=None) -> np.ndarray:
    """Noise-free temperature: the closed form every observation is drawn around."""
    if fronts is None:
        fronts = front_schedule(cfg)
    cid = next(c for c in cfg.cities if c.name == city)
    return _baseline(cfg, cid, hours) + front_field(cfg, fronts, city, hours)[0]


def generate(cfg: SynthConfig) -> list[RawObservation]:
    """Deterministic corpus: every city at every hour, minus configured dropout."""
    cfg.validate()
    ph = cfg.physics
    fronts = front_schedule(cfg)
    hours = np.arange(cfg.hours, dtype=float)
    stamps = [cfg.epoch + timedelta(hours=h) for h in range(cfg.hours)]
    out = []
    for k, city in enumerate(cfg.cities):
        rng = stream(cfg.seed, "synth-city", k)
        perturb, prox, signed = front_field(cfg, fronts, city.name, hours)
        base = _baseline(cfg, city, hours)
        temp = base + perturb + rng.normal(0.0, ph.noise_sigma_f, cfg.hours) if ph.noise_sigma_f else base + perturb
        diurnal_phase = np.sin(2 * math.pi * ((hours + city.lon / 15.0) % 24.0 - 9.0) / 24.0)
        humidity = np.clip(68.0 - 18.0 * diurnal_phase + 20.0 * prox + rng.normal(0, 3.0, cfg.hours), 5.0, 100.0)
        dewpoint = temp - (100.0 - humidity) / 5.0
        pressure = 29.95 - 0.25 * prox + 0.08 * signed + rng.normal(0, 0.02, cfg.hours)
        wind = np.abs(5.0 + 9.0 * prox + rng.normal(0, 1.5, cfg.hours))
        keep = rng.random(cfg.hours) >= cfg.dropout
        calm_pick = rng.integers(0, len(CALM_DIRS), cfg.hours)
        front_pick = rng.integers(0, 3, cfg.hours)
        sky = rng.random(cfg.hours)
        for h in range(cfg.hours):
            if not keep[h]:
                continue
            if prox[h] > 0.35:
                wind_dir = (COLD_DIRS if signed[h] < 0 else WARM_DIRS)[front_pick[h]]
            else:
                wind_dir = CALM_DIRS[calm_pick[h]]
            if prox[h] > 0.7:
                condition = "Rain" if sky[h] < 0.7 else "Thunderstorm"
            elif prox[h] > 0.3:
                condition = "Cloudy" if sky[h] < 0.6 else "Partly Cloudy"
            else:
                condition = "Clear" if sky[h] < 0.75 else "Partly Cloudy"
            out.append(
                RawObservation(
                    city=city.name,
                    timestamp=stamps[h],
                    temp_f=round(float(temp[h]), 1),
                    dewpoint_f=round(float(dewpoint[h]), 1),
                    humidity_pct=round(float(humidity[h]), 1),
                    pressure_inhg=round(float(pressure[h]), 2),
                    wind_mph=round(float(wind[h]), 1),
                    wind_dir=wind_dir,
                    condition=condition,
                )
            )
    out.sort(key=lambda o: (o.timestamp, o.city))
    return out


@dataclass(frozen=True)
class Advantage:
    one_city_rmse: float
    multi_city_rmse: float

    @property
    def gap(self) -> float:
        """Relative RMSE reduction from seeing upstream cities."""
        if self.one_city_rmse == 0:
            return 0.0
        return 1.0 - self.multi_city_rmse / self.one_city_rmse


def oracle_advantage(
    cfg: SynthConfig,
    target_city: str | None = None,
    window: tuple[datetime, datetime] | None = None,
    horizon_hours: int = 24,
) -> Advantage:
    """Irreducible next-day error of ideal one-city and all-city forecasters.

    Both forecasters know the generator's closed form exactly. The one-city
    forecaster knows every front that has reached the target by time ``t``;
    the all-city forecaster knows every front that has reached any city, i.e.
    every front spawned by ``t`` when the westmost city sits on the spawn
    line. What neither can know is the remaining front contribution at
    ``t + horizon`` plus observation noise, so each RMSE is
    ``sqrt(mean(unseen**2) + sigma**2)`` over forecast times in ``window``.
    """
    ph = cfg.physics
    target = target_city or cfg.cities[0].name
    miles = east_miles(cfg.cities)
    lag = miles[target] / ph.advection_speed_mph
    # Earliest any configured city sees a front, relative to its spawn.
    first_seen = min(miles.values()) / ph.advection_speed_mph
    fronts = front_schedule(cfg)
    if window is None:
        times = np.arange(cfg.hours - horizon_hours, dtype=float)
    else:
        lo = (window[0] - cfg.epoch).total_seconds() / 3600.0
        hi = (window[1] - cfg.epoch).total_seconds() / 3600.0
        times = np.arange(math.ceil(lo), math.ceil(hi), dtype=float)
    later = times + horizon_hours
    unseen_one = np.zeros(len(times))
    unseen_multi = np.zeros(len(times))
    for f in fronts:
        contrib = f.magnitude * front_shape(later - (f.spawn_hour + lag), ph.front_rise_hours, ph.front_decay_hours)
        unseen_one += np.where(f.spawn_hour + lag > times, contrib, 0.0)
        unseen_multi += np.where(f.spawn_hour + first_seen > times, contrib, 0.0)
    noise = ph.noise_sigma_f**2
    return Advantage(
        one_city_rmse=float(np.sqrt(np.mean(unseen_one**2) + noise)),
        multi_city_rmse=float(np.sqrt(np.mean(unseen_multi**2) + noise)),
    )


def with_overrides(cfg: SynthConfig, **physics) -> SynthConfig:
    return replace(cfg, physics=replace(cfg.physics, **physics))
