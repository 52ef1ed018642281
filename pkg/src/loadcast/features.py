"""Feature engineering: 39 candidate columns per booking snapshot.

The candidate roster is frozen (FEATURE_COLUMNS) and identical for
every row. It comprises nine operational and momentum quantities, and
fifteen calendar columns for each of flight date and record date (five
raw integers, holiday and weekend flags, and four sine-cosine pairs).

Each feature also carries a stream-eligibility tag reflecting its
temporal semantics: record-date calendar columns vary day to day within
one flight (horizontal), flight-date calendar columns vary across
flights of a route (vertical), and operational, momentum, and
holiday/weekend columns are meaningful in both streams.

DEFAULT_HORIZONTAL and DEFAULT_VERTICAL are the shipped stream
projections (8 and 9 columns); the selection pipeline can derive
corpus-specific alternatives.
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .errors import UnknownRoute, ZeroCapacity
from .ingest import BookingSnapshot, HolidayCalendar, RouteMeta

KEY_COLUMNS = ["route_id", "flight_date", "record_date"]

_CYCLIC_SPECS = [
    ("dow", "day_of_week", 7),
    ("month", "month", 12),
    ("day", "day", 31),
    ("week", "week", 52),
]


def _calendar_columns(prefix: str) -> list[str]:
    cols = [
        f"{prefix}_day",
        f"{prefix}_month",
        f"{prefix}_week",
        f"{prefix}_day_of_year",
        f"{prefix}_day_of_week",
        f"{prefix}_is_holiday",
        f"{prefix}_is_weekend",
    ]
    for short, _, _ in _CYCLIC_SPECS:
        cols.append(f"{prefix}_{short}_sin")
        cols.append(f"{prefix}_{short}_cos")
    return cols


FEATURE_COLUMNS: list[str] = (
    [
        "plf",
        "total_RPK",
        "total_ASK",
        "booked_seats",
        "total_seats",
        "distance_km",
        "rolling_avg_plf",
        "plf_historical",
        "days_before_departure",
    ]
    + _calendar_columns("flight_date")
    + _calendar_columns("record_date")
)

assert len(FEATURE_COLUMNS) == 39

# Stream eligibility: H (intra-flight), V (inter-flight), HV (both).
ELIGIBILITY: dict[str, str] = {}
for _name in FEATURE_COLUMNS:
    if _name.startswith("record_date"):
        ELIGIBILITY[_name] = "HV" if _name.endswith(("is_holiday", "is_weekend")) else "H"
    elif _name.startswith("flight_date"):
        ELIGIBILITY[_name] = "HV" if _name.endswith(("is_holiday", "is_weekend")) else "V"
    else:
        ELIGIBILITY[_name] = "HV"

DEFAULT_HORIZONTAL = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
    "record_date_day",
    "record_date_day_of_year",
    "flight_date_is_holiday",
]

DEFAULT_VERTICAL = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
    "flight_date_day",
    "flight_date_week",
    "flight_date_day_of_year",
    "flight_date_is_weekend",
]

SHARED_CORE = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
]

# Fri-Sat weekend (Python weekday numbering, Monday = 0).
DEFAULT_WEEKEND = (4, 5)
DEFAULT_ROLLING_WINDOW = 7

# Last-resort value for plf_historical when no prior flight exists at all.
COLD_START_PLF = 50.0


def compute_plf(booked: int, total: int) -> float:
    """Load factor in percentage points: 100 * booked / total."""
    if total == 0:
        raise ZeroCapacity("total seats is zero")
    return 100.0 * booked / total


def compute_rpk_ask(booked: int, total: int, distance_km: float) -> tuple[float, float]:
    """Revenue and available seat-kilometres for one snapshot."""
    return booked * distance_km, total * distance_km


def cyclic_encode(value: float, period: int) -> tuple[float, float]:
    """Map a periodic integer onto the unit circle."""
    angle = 2.0 * math.pi * value / period
    return math.sin(angle), math.cos(angle)


def rolling_avg_plf(plf_series: np.ndarray, window: int) -> np.ndarray:
    """Trailing inclusive mean over the last `window` values.

    Prefixes shorter than the window use every value available so far.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    series = pd.Series(plf_series, dtype=float)
    return series.rolling(window, min_periods=1).mean().to_numpy()


def _cyclic_frame(prefix: str, dates: pd.Series, holidays: HolidayCalendar,
                  weekend: tuple[int, ...]) -> pd.DataFrame:
    out = pd.DataFrame(index=dates.index)
    out[f"{prefix}_day"] = dates.dt.day.astype(float)
    out[f"{prefix}_month"] = dates.dt.month.astype(float)
    out[f"{prefix}_week"] = dates.dt.isocalendar().week.astype(float)
    out[f"{prefix}_day_of_year"] = dates.dt.dayofyear.astype(float)
    out[f"{prefix}_day_of_week"] = dates.dt.weekday.astype(float)
    holiday_set = pd.to_datetime(sorted(holidays.dates))
    out[f"{prefix}_is_holiday"] = dates.isin(holiday_set).astype(float)
    out[f"{prefix}_is_weekend"] = dates.dt.weekday.isin(weekend).astype(float)
    raw = {
        "dow": out[f"{prefix}_day_of_week"],
        "month": out[f"{prefix}_month"],
        "day": out[f"{prefix}_day"],
        "week": out[f"{prefix}_week"],
    }
    for short, _, period in _CYCLIC_SPECS:
        angle = 2.0 * np.pi * raw[short].to_numpy() / period
        out[f"{prefix}_{short}_sin"] = np.sin(angle)
        out[f"{prefix}_{short}_cos"] = np.cos(angle)
    return out


def _historical_plf(df: pd.DataFrame) -> tuple[np.ndarray, np.ndarray]:
    """Mean PLF over strictly earlier flights, with a fallback chain.

    Tier 0: same route, same days-before-departure position.
    Tier 1: same route, any position.
    Tier 2: any route, any position (strictly earlier flight dates).
    Tier 3: COLD_START_PLF constant.

    Every tier uses only flights departing strictly before the row's
    flight date, so no future information leaks into the column. The
    returned source array records which tier produced each value.
    """
    work = df[["route_id", "flight_date", "days_before_departure", "plf"]].copy()
    work["_row"] = np.arange(len(work))

    # Tier 0: expanding mean over prior flights at the same (route, d),
    # computed as (cumulative sum - own value) / (number of prior rows).
    ordered = work.sort_values(["route_id", "days_before_departure", "flight_date"])
    grouped = ordered.groupby(["route_id", "days_before_departure"], sort=False)["plf"]
    prior_sum = grouped.cumsum() - ordered["plf"]
    prior_cnt = grouped.cumcount()
    t0_sorted = np.where(prior_cnt > 0, prior_sum / prior_cnt.replace(0, 1), np.nan)
    t0 = pd.Series(t0_sorted, index=ordered.index).sort_index().to_numpy()

    # Tier 1: mean over all snapshots of the route's earlier flights.
    per_flight = (
        work.groupby(["route_id", "flight_date"], sort=True)["plf"]
        .agg(["sum", "count"])
        .reset_index()
    )
    per_flight["cum_sum"] = per_flight.groupby("route_id")["sum"].cumsum() - per_flight["sum"]
    per_flight["cum_cnt"] = per_flight.groupby("route_id")["count"].cumsum() - per_flight["count"]
    with np.errstate(invalid="ignore"):
        per_flight["route_prior"] = per_flight["cum_sum"] / per_flight["cum_cnt"]
    t1 = work.merge(
        per_flight[["route_id", "flight_date", "route_prior"]],
        on=["route_id", "flight_date"],
        how="left",
    ).sort_values("_row")["route_prior"].to_numpy()

    # Tier 2: mean over all snapshots with strictly earlier flight dates.
    per_date = work.groupby("flight_date", sort=True)["plf"].agg(["sum", "count"]).reset_index()
    per_date["cum_sum"] = per_date["sum"].cumsum() - per_date["sum"]
    per_date["cum_cnt"] = per_date["count"].cumsum() - per_date["count"]
    with np.errstate(invalid="ignore"):
        per_date["global_prior"] = per_date["cum_sum"] / per_date["cum_cnt"]
    t2 = work.merge(
        per_date[["flight_date", "global_prior"]], on="flight_date", how="left"
    ).sort_values("_row")["global_prior"].to_numpy()

    values = np.full(len(work), COLD_START_PLF)
    source = np.full(len(work), 3, dtype=np.int64)
    for tier, column in ((2, t2), (1, t1), (0, t0)):
        mask = ~np.isnan(column)
        values[mask] = column[mask]
        source[mask] = tier
    return values, source


def build_feature_rows(
    snapshots: list[BookingSnapshot],
    routes: dict[str, RouteMeta],
    holidays: HolidayCalendar,
    rolling_window: int = DEFAULT_ROLLING_WINDOW,
    weekend: tuple[int, ...] = DEFAULT_WEEKEND,
) -> pd.DataFrame:
    """Materialise the full candidate table, one row per snapshot.

    Rows are ordered by (route_id, flight_date, days_before_departure
    descending), i.e. chronologically within each flight. The result
    carries the three key columns, the 39 features, and the
    plf_historical_src provenance column.
    """
    for snap in snapshots:
        if snap.route_id not in routes:
            raise UnknownRoute(f"no route metadata for {snap.route_id!r}")

    df = pd.DataFrame(
        {
            "route_id": [s.route_id for s in snapshots],
            "flight_date": pd.to_datetime([s.flight_date for s in snapshots]),
            "record_date": pd.to_datetime([s.record_date for s in snapshots]),
            "booked_seats": [float(s.booked_seats) for s in snapshots],
            "total_seats": [float(s.total_seats) for s in snapshots],
        }
    )
    df["days_before_departure"] = (df["flight_date"] - df["record_date"]).dt.days.astype(float)
    df = df.sort_values(
        ["route_id", "flight_date", "days_before_departure"],
        ascending=[True, True, False],
    ).reset_index(drop=True)

    df["distance_km"] = df["route_id"].map({rid: meta.distance_km for rid, meta in routes.items()})
    df["plf"] = 100.0 * df["booked_seats"] / df["total_seats"]
    df["total_RPK"] = df["booked_seats"] * df["distance_km"]
    df["total_ASK"] = df["total_seats"] * df["distance_km"]

    df["rolling_avg_plf"] = (
        df.groupby(["route_id", "flight_date"], sort=False)["plf"]
        .rolling(rolling_window, min_periods=1)
        .mean()
        .reset_index(level=[0, 1], drop=True)
    )

    values, source = _historical_plf(df)
    df["plf_historical"] = values
    df["plf_historical_src"] = source

    df = pd.concat(
        [
            df,
            _cyclic_frame("flight_date", df["flight_date"], holidays, weekend),
            _cyclic_frame("record_date", df["record_date"], holidays, weekend),
        ],
        axis=1,
    )

    return df[KEY_COLUMNS + FEATURE_COLUMNS + ["plf_historical_src"]]


def write_features_csv(path, table: pd.DataFrame) -> None:
    out = table.copy()
    out["flight_date"] = out["flight_date"].dt.strftime("%Y-%m-%d")
    out["record_date"] = out["record_date"].dt.strftime("%Y-%m-%d")
    out.to_csv(path, index=False)


def read_features_csv(path) -> pd.DataFrame:
    table = pd.read_csv(path)
    table["flight_date"] = pd.to_datetime(table["flight_date"])
    table["record_date"] = pd.to_datetime(table["record_date"])
    return table
