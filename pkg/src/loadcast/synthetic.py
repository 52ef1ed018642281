"""Seeded synthetic booking corpus standing in for carrier reservation data.

The generator emits the same CSV schemas as real ingestion, so every
downstream stage is source-agnostic. Each flight yields 31 snapshots
(30 days before departure through departure day). Booking accumulation
follows route-shaped completion curves:

* direct short-haul routes book late (a surge in the final week),
* transit routes show a double-peak pattern (an early connection surge
  plus a late surge),
* long-haul routes book early and smoothly.

Demand per flight combines a seasonal cycle, a day-of-week cycle, a
holiday boost, and an idiosyncratic per-flight component that route
history cannot reveal. Churn adds three disturbances: a small random
walk on the whole curve, transient hold-and-release swings in the final
week that largely revert before departure, and a departure-day
settlement shock. A configurable share of domestic flights departs
nearly empty, giving the near-zero actuals that inflate percentage
errors on domestic routes.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .ingest import Airport, BookingSnapshot, HolidayCalendar, RouteMeta, route_distance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SNAPSHOT_DAYS = 31  # d = 30 .. 0

# Coordinates for the airports the built-in route templates use.
AIRPORTS = {
    "DAC": Airport("DAC", 23.8433, 90.3978),
    "CGP": Airport("CGP", 22.2496, 91.8133),
    "CXB": Airport("CXB", 21.4522, 91.9639),
    "ZYL": Airport("ZYL", 24.9632, 91.8668),
    "DXB": Airport("DXB", 25.2532, 55.3657),
    "KUL": Airport("KUL", 2.7456, 101.7099),
    "LHR": Airport("LHR", 51.4700, -0.4543),
    "JED": Airport("JED", 21.6796, 39.1565),
}

# (origin, destination, weekly_frequency, reach, service, haul,
#  aircraft, seats, curve shape)
ROUTE_TEMPLATES = [
    ("DAC", "CGP", 14, "domestic", "direct", "short", "B737", 162, "late"),
    ("DAC", "CXB", 4, "domestic", "direct", "short", "DH8", 74, "late"),
    ("DAC", "DXB", 7, "international", "direct", "mid", "B787", 271, "smooth"),
    ("DAC", "LHR", 3, "international", "transit", "long", "B777", 419, "double"),
    ("DAC", "ZYL", 12, "domestic", "direct", "short", "B737", 162, "late"),
    ("DAC", "KUL", 5, "international", "transit", "mid", "B787", 271, "double"),
    ("DAC", "JED", 4, "international", "direct", "long", "B777", 419, "smooth"),
]


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic corpus. Amplitudes live in [0, 1]."""

    routes: int = 4
    flights_per_route: int = 413
    start_date: date = date(2023, 1, 1)
    base_demand: float = 0.68
    holiday_boost: float = 0.22
    late_surge: float = 0.45
    double_peak: float = 0.5
    churn_rate: float = 0.5
    demand_trend: float = 0.12
    seasonal_amplitude: float = 0.16
    sparse_flight_share: float = 0.05
    flight_noise: float = 0.11
    clip_plf: bool = False

    def __post_init__(self) -> None:
        if self.routes <= 0:
            raise InvalidConfig("routes must be positive")
        if self.flights_per_route <= 0:
            raise InvalidConfig("flights_per_route must be positive")
        for name in ("base_demand", "holiday_boost", "late_surge", "double_peak",
                     "churn_rate", "demand_trend", "seasonal_amplitude",
                     "sparse_flight_share", "flight_noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def from_toml(cls, path: str | Path) -> "GeneratorConfig":
        with Path(path).open("rb") as handle:
            raw = tomllib.load(handle)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        if "start_date" in raw and isinstance(raw["start_date"], str):
            raw["start_date"] = date.fromisoformat(raw["start_date"])
        return cls(**raw)


def _route_table(config: GeneratorConfig) -> list[RouteMeta]:
    routes = []
    for index in range(config.routes):
        origin, dest, freq, reach, service, haul, _, _, _ = ROUTE_TEMPLATES[
            index % len(ROUTE_TEMPLATES)
        ]
        suffix = "" if index < len(ROUTE_TEMPLATES) else f"-{index // len(ROUTE_TEMPLATES)}"
        routes.append(
            RouteMeta(
                route_id=f"{origin}-{dest}{suffix}",
                origin=origin,
                destination=dest,
                distance_km=route_distance(AIRPORTS[origin], AIRPORTS[dest]),
                weekly_frequency=freq,
                reach=reach,
                service=service,
                haul=haul,
            )
        )
    return routes


def _holiday_calendar(start: date, span_days: int, rng: np.random.Generator) -> HolidayCalendar:
    """Fixed national dates plus two seeded movable festival blocks per year."""
    fixed = [(2, 21), (3, 26), (4, 14), (5, 1), (8, 15), (12, 16), (12, 25)]
    days: set[date] = set()
    first_year = start.year
    last_year = (start + timedelta(days=span_days)).year
    for year in range(first_year, last_year + 1):
        for month, day in fixed:
            days.add(date(year, month, day))
        for _ in range(2):
            anchor = date(year, 1, 1) + timedelta(days=int(rng.integers(0, 365)))
            for offset in range(3):
                days.add(anchor + timedelta(days=offset))
    return HolidayCalendar(frozenset(days))


def _completion_curve(shape: str, late_surge: float, double_peak: float) -> np.ndarray:
    """Cumulative booking fraction at d = 30..0, ending at exactly 1."""
    t = np.arange(SNAPSHOT_DAYS, dtype=np.float64)  # days since sale window opened
    base_rate = 0.35 + 0.65 * t / (SNAPSHOT_DAYS - 1)
    if shape == "late":
        rate = base_rate + 4.0 * late_surge * np.exp(-((30.0 - t) / 3.0) ** 2)
    elif shape == "double":
        early = np.exp(-((t - 6.0) / 3.5) ** 2)
        late = np.exp(-((30.0 - t) / 3.5) ** 2)
        rate = base_rate + 3.0 * double_peak * early + 2.5 * double_peak * late
    else:  # smooth advance-purchase accumulation
        rate = 1.2 - 0.4 * t / (SNAPSHOT_DAYS - 1)
    cumulative = np.cumsum(rate)
    cumulative /= cumulative[-1]
    return cumulative[::-1].copy()  # index by d: curve[d] is fraction booked at d days out


def _seasonal_factor(day: date, phase: float) -> float:
    year_pos = (day.timetuple().tm_yday / 365.25) * 2.0 * np.pi
    return float(np.sin(year_pos + phase))


def generate_synthetic(
    config: GeneratorConfig, seed: int
) -> tuple[list[BookingSnapshot], list[RouteMeta], HolidayCalendar]:
    """Build a deterministic corpus for the given seed.

    Returns snapshots sorted by (route_id, flight_date, days_before_
    departure), the route table, and the holiday calendar.
    """
    rng = np.random.default_rng(seed)
    routes = _route_table(config)

    max_interval = max(round(7 / meta.weekly_frequency) or 1 for meta in routes)
    span_days = config.flights_per_route * max_interval + SNAPSHOT_DAYS
    calendar = _holiday_calendar(config.start_date, span_days, rng)

    snapshots: list[BookingSnapshot] = []
    for meta in routes:
        template = ROUTE_TEMPLATES[
            [m.route_id for m in routes].index(meta.route_id) % len(ROUTE_TEMPLATES)
        ]
        aircraft, seats, shape = template[6], template[7], template[8]
        interval = max(1, round(7 / meta.weekly_frequency))
        curve = _completion_curve(shape, config.late_surge, config.double_peak)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        dow_weights = rng.uniform(-1.0, 1.0, size=7)
        alt_seats = int(round(seats * 1.3))

        for flight_no in range(config.flights_per_route):
            flight_date = config.start_date + timedelta(days=SNAPSHOT_DAYS + flight_no * interval)
            swap = rng.random() < 0.08
            capacity = alt_seats if swap else seats
            tail = f"{aircraft}X" if swap else aircraft

            is_holiday = any(
                (flight_date + timedelta(days=k)) in calendar for k in (-1, 0, 1)
            )
            span_position = flight_no / max(1, config.flights_per_route - 1)
            demand = (
                config.base_demand
                + config.demand_trend * span_position
                + config.seasonal_amplitude * _seasonal_factor(flight_date, phase)
                + 0.08 * dow_weights[flight_date.weekday()]
                + (config.holiday_boost if is_holiday else 0.0)
                + rng.normal(0.0, config.flight_noise)
            )
            if meta.reach == "domestic" and rng.random() < config.sparse_flight_share:
                demand = rng.uniform(0.01, 0.08)
            demand = float(np.clip(demand, 0.01, 1.12))

            # Curve shape depends on demand: sought-after flights fill
            # earlier, weak ones lean on late bookings, and holiday
            # flights bend further toward departure. Per-flight shape
            # variation means the route's average history alone cannot
            # place a snapshot on its own curve.
            bend = float(np.clip(1.0 - 1.6 * (demand - config.base_demand), 0.5, 2.1))
            if is_holiday:
                bend += 0.8 * config.holiday_boost
            flight_curve = curve**bend

            trend = demand * capacity * flight_curve

            # Random walk accumulates forward in time: index by d means
            # reversing the cumulative sum (d = 0 carries the full path).
            drift = np.cumsum(rng.normal(0.0, 0.6 * config.churn_rate, size=SNAPSHOT_DAYS))[::-1]

            # Transient group holds: unticketed blocks that appear one to
            # three weeks out, sit for a few days, and purge before
            # departure. They perturb observed counts without moving the
            # eventual outcome.
            transient = np.zeros(SNAPSHOT_DAYS)
            for _ in range(rng.poisson(8.0 * config.churn_rate)):
                start = int(rng.integers(3, 19))
                duration = 2 + int(rng.geometric(0.35))
                sign = 1.0 if rng.random() < 0.8 else -1.0
                size = sign * rng.uniform(0.16, 0.64) * capacity * config.churn_rate
                for d in range(start, max(0, start - duration), -1):
                    transient[d] += size

            swing = 0.0
            for d in range(7, 0, -1):  # final week swings, mean-reverting
                swing = 0.45 * swing + rng.normal(0.0, 0.13 * config.churn_rate * capacity)
                transient[d] += swing
            settle = rng.normal(0.0, 0.06 * config.churn_rate * capacity)

            booked = np.empty(SNAPSHOT_DAYS, dtype=np.int64)
            for d in range(SNAPSHOT_DAYS):
                value = trend[d] + drift[d] + transient[d]
                if d == 0:
                    value += settle
                booked[d] = int(round(max(0.0, value)))
            if config.clip_plf:
                booked = np.minimum(booked, capacity)

            for d in range(SNAPSHOT_DAYS - 1, -1, -1):
                snapshots.append(
                    BookingSnapshot(
                        route_id=meta.route_id,
                        flight_date=flight_date,
                        record_date=flight_date - timedelta(days=d),
                        booked_seats=int(booked[d]),
                        total_seats=capacity,
                        aircraft_type=tail,
                    )
                )

    snapshots.sort(key=lambda s: (s.route_id, s.flight_date, s.days_before_departure))
    return snapshots, routes, calendar
