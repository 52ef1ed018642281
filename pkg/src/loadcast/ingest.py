"""Reservation ingestion: snapshot records, leg aggregation, master data.

All readers accept the CSV schemas documented in the README. Dates are
ISO-8601 (YYYY-MM-DD). Rows that fail validation raise row-numbered
errors; row numbers are 1-based and count the header as row 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .errors import (
    BadDate,
    ConflictingAircraft,
    MissingColumn,
    NegativeSeats,
    UnknownRoute,
)

EARTH_RADIUS_KM = 6371.0

RESERVATION_COLUMNS = (
    "route_id",
    "flight_date",
    "record_date",
    "booked_seats",
    "total_seats",
    "aircraft_type",
)

CATEGORY_PAIRS = {
    "reach": ("domestic", "international"),
    "service": ("direct", "transit"),
    "frequency": ("high_freq", "low_freq"),
    "haul": ("short", "mid", "long"),
}

# Routes at or above this many departures per week are tagged high_freq.
HIGH_FREQUENCY_THRESHOLD = 7


@dataclass(frozen=True)
class BookingSnapshot:
    """One daily observation of one flight's booking state."""

    route_id: str
    flight_date: date
    record_date: date
    booked_seats: int
    total_seats: int
    aircraft_type: str

    @property
    def days_before_departure(self) -> int:
        return (self.flight_date - self.record_date).days

    @property
    def overbooked(self) -> bool:
        return self.booked_seats > self.total_seats


@dataclass(frozen=True)
class Airport:
    iata_code: str
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")


@dataclass(frozen=True)
class HolidayCalendar:
    dates: frozenset[date]

    def __contains__(self, day: date) -> bool:
        return day in self.dates


@dataclass(frozen=True)
class RouteMeta:
    """Route master record with its four category tags."""

    route_id: str
    origin: str
    destination: str
    distance_km: float
    weekly_frequency: int
    reach: str
    service: str
    haul: str

    def __post_init__(self) -> None:
        if self.distance_km <= 0:
            raise ValueError(f"{self.route_id}: distance must be positive")
        if self.weekly_frequency <= 0:
            raise ValueError(f"{self.route_id}: weekly frequency must be positive")
        if self.reach not in CATEGORY_PAIRS["reach"]:
            raise ValueError(f"{self.route_id}: bad reach tag {self.reach!r}")
        if self.service not in CATEGORY_PAIRS["service"]:
            raise ValueError(f"{self.route_id}: bad service tag {self.service!r}")
        if self.haul not in CATEGORY_PAIRS["haul"]:
            raise ValueError(f"{self.route_id}: bad haul tag {self.haul!r}")

    @property
    def frequency(self) -> str:
        if self.weekly_frequency >= HIGH_FREQUENCY_THRESHOLD:
            return "high_freq"
        return "low_freq"

    @property
    def category_tags(self) -> dict[str, str]:
        """One tag per category pair."""
        return {
            "reach": self.reach,
            "service": self.service,
            "frequency": self.frequency,
            "haul": self.haul,
        }


def route_distance(origin: Airport, destination: Airport) -> float:
    """Great-circle distance in km (haversine, Earth radius 6371.0 km)."""
    lat1 = math.radians(origin.latitude)
    lat2 = math.radians(destination.latitude)
    dlat = lat2 - lat1
    dlon = math.radians(destination.longitude - origin.longitude)
    a = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def _parse_date(text: str, row: int, column: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise BadDate(f"row {row}: unparseable {column} {text!r}") from None


def load_reservations(path: str | Path) -> list[BookingSnapshot]:
    """Read reservations.csv into validated snapshots.

    Rejects rows whose record_date falls after flight_date (negative
    booking lead), rows with negative booked seats, and rows with a
    non-positive capacity. Row numbers in diagnostics are 1-based data
    rows.
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in RESERVATION_COLUMNS:
            if column not in header:
                raise MissingColumn(f"{path.name}: missing column {column!r}")
        snapshots: list[BookingSnapshot] = []
        for row_no, row in enumerate(reader, start=1):
            flight_date = _parse_date(row["flight_date"], row_no, "flight_date")
            record_date = _parse_date(row["record_date"], row_no, "record_date")
            if record_date > flight_date:
                raise BadDate(
                    f"row {row_no}: record_date {record_date} after flight_date {flight_date}"
                )
            try:
                booked = int(row["booked_seats"])
                total = int(row["total_seats"])
            except ValueError:
                raise NegativeSeats(f"row {row_no}: non-integer seat count") from None
            if booked < 0:
                raise NegativeSeats(f"row {row_no}: negative booked_seats {booked}")
            if total <= 0:
                raise NegativeSeats(f"row {row_no}: non-positive total_seats {total}")
            snapshots.append(
                BookingSnapshot(
                    route_id=row["route_id"].strip(),
                    flight_date=flight_date,
                    record_date=record_date,
                    booked_seats=booked,
                    total_seats=total,
                    aircraft_type=row["aircraft_type"].strip(),
                )
            )
    return snapshots


def aggregate_legs(
    snapshots: list[BookingSnapshot], strict_aircraft: bool = False
) -> list[BookingSnapshot]:
    """Merge legs sharing (route_id, flight_date, record_date).

    Booked and total seats are summed. The first leg's aircraft type is
    kept; under strict_aircraft a disagreement raises ConflictingAircraft.
    Output is sorted by (route_id, flight_date, days_before_departure).
    """
    merged: dict[tuple[str, date, date], BookingSnapshot] = {}
    for snap in snapshots:
        key = (snap.route_id, snap.flight_date, snap.record_date)
        existing = merged.get(key)
        if existing is None:
            merged[key] = snap
            continue
        if strict_aircraft and existing.aircraft_type != snap.aircraft_type:
            raise ConflictingAircraft(
                f"{key}: {existing.aircraft_type!r} vs {snap.aircraft_type!r}"
            )
        merged[key] = BookingSnapshot(
            route_id=existing.route_id,
            flight_date=existing.flight_date,
            record_date=existing.record_date,
            booked_seats=existing.booked_seats + snap.booked_seats,
            total_seats=existing.total_seats + snap.total_seats,
            aircraft_type=existing.aircraft_type,
        )
    return sorted(
        merged.values(),
        key=lambda s: (s.route_id, s.flight_date, s.days_before_departure),
    )


def load_airports(path: str | Path) -> dict[str, Airport]:
    path = Path(path)
    airports: dict[str, Airport] = {}
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        for column in ("iata", "latitude", "longitude"):
            if column not in (reader.fieldnames or []):
                raise MissingColumn(f"{path.name}: missing column {column!r}")
        for row in reader:
            code = row["iata"].strip()
            airports[code] = Airport(code, float(row["latitude"]), float(row["longitude"]))
    return airports


def load_holidays(path: str | Path) -> HolidayCalendar:
    path = Path(path)
    days: set[date] = set()
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if "date" not in (reader.fieldnames or []):
            raise MissingColumn(f"{path.name}: missing column 'date'")
        for row_no, row in enumerate(reader, start=1):
            days.add(_parse_date(row["date"], row_no, "date"))
    return HolidayCalendar(frozenset(days))


def load_routes(path: str | Path, airports: dict[str, Airport]) -> dict[str, RouteMeta]:
    """Read routes.csv, deriving distances from the airport table."""
    path = Path(path)
    routes: dict[str, RouteMeta] = {}
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        needed = ("route_id", "origin", "destination", "weekly_frequency", "reach", "service", "haul")
        for column in needed:
            if column not in (reader.fieldnames or []):
                raise MissingColumn(f"{path.name}: missing column {column!r}")
        for row in reader:
            origin = row["origin"].strip()
            destination = row["destination"].strip()
            if origin not in airports:
                raise UnknownRoute(f"{row['route_id']}: unknown origin airport {origin!r}")
            if destination not in airports:
                raise UnknownRoute(f"{row['route_id']}: unknown destination airport {destination!r}")
            route_id = row["route_id"].strip()
            routes[route_id] = RouteMeta(
                route_id=route_id,
                origin=origin,
                destination=destination,
                distance_km=route_distance(airports[origin], airports[destination]),
                weekly_frequency=int(row["weekly_frequency"]),
                reach=row["reach"].strip(),
                service=row["service"].strip(),
                haul=row["haul"].strip(),
            )
    return routes


def write_reservations(path: str | Path, snapshots: list[BookingSnapshot]) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESERVATION_COLUMNS)
        for snap in snapshots:
            writer.writerow(
                [
                    snap.route_id,
                    snap.flight_date.isoformat(),
                    snap.record_date.isoformat(),
                    snap.booked_seats,
                    snap.total_seats,
                    snap.aircraft_type,
                ]
            )


def write_airports(path: str | Path, airports: dict[str, Airport]) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iata", "latitude", "longitude"])
        for code in sorted(airports):
            airport = airports[code]
            writer.writerow([airport.iata_code, airport.latitude, airport.longitude])


def write_holidays(path: str | Path, calendar: HolidayCalendar) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date"])
        for day in sorted(calendar.dates):
            writer.writerow([day.isoformat()])


def write_routes(path: str | Path, routes: dict[str, RouteMeta]) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["route_id", "origin", "destination", "weekly_frequency", "reach", "service", "haul"])
        for route_id in sorted(routes):
            meta = routes[route_id]
            writer.writerow(
                [
                    meta.route_id,
                    meta.origin,
                    meta.destination,
                    meta.weekly_frequency,
                    meta.reach,
                    meta.service,
                    meta.haul,
                ]
            )
