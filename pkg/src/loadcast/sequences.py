"""Sequence assembly, chronological splitting, and standardisation.

A prediction instance for flight (route, t) observed d days before
departure pairs two tensors:

* horizontal (H, F_h): the flight's own snapshots at positions
  d+H-1, ..., d, oldest first. The current day's booking state is the
  newest row; the departure-day outcome is never part of the window
  for d >= 1.
* vertical (V, F_v): the V most recent flights of the same route that
  departed strictly before t and have a snapshot at exactly d, oldest
  first. With stride s > 1 every s-th qualifying flight is taken,
  counting back from the most recent. Vertical rows carry those
  historical flights' own feature values at position d (their eventual
  departure outcome is not used).

The regression target is the flight's load factor at its departure-day
snapshot (d = 0). The persistence value stored with each sample is the
newest horizontal row's raw load factor; it is the naive benchmark for
scaled errors.
"""

from __future__ import annotations

import json
import struct
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import EmptyPartition, InsufficientHistory
from .features import DEFAULT_HORIZONTAL, DEFAULT_VERTICAL

DEFAULT_D_RANGE = range(0, 22)
DEFAULT_RATIOS = (0.70, 0.15, 0.15)

CACHE_MAGIC = b"LCTC"
CACHE_VERSION = 1


@dataclass
class SequenceSample:
    route_id: str
    flight_date: pd.Timestamp
    days_before_departure: int
    horizontal: np.ndarray
    vertical: np.ndarray
    target_plf: float
    naive_plf: float


class FeatureIndex:
    """Lookup structures over a feature table for window construction."""

    def __init__(self, table: pd.DataFrame, horizontal_columns=None, vertical_columns=None):
        self.h_columns = list(horizontal_columns or DEFAULT_HORIZONTAL)
        self.v_columns = list(vertical_columns or DEFAULT_VERTICAL)
        self.h_matrix = table[self.h_columns].to_numpy(dtype=np.float64)
        self.v_matrix = table[self.v_columns].to_numpy(dtype=np.float64)
        self.plf = table["plf"].to_numpy(dtype=np.float64)

        routes = table["route_id"].to_numpy()
        dates = table["flight_date"].to_numpy()
        dvals = table["days_before_departure"].to_numpy(dtype=np.int64)

        self.flight_rows: dict[tuple, dict[int, int]] = {}
        for idx in range(len(table)):
            self.flight_rows.setdefault((routes[idx], dates[idx]), {})[int(dvals[idx])] = idx

        # (route, d) -> parallel lists of flight dates (sorted) and rows.
        vertical: dict[tuple, tuple[list, list[int]]] = {}
        for (route, date), by_d in self.flight_rows.items():
            for d, row in by_d.items():
                vertical.setdefault((route, d), ([], []))
                vertical[(route, d)][0].append(date)
                vertical[(route, d)][1].append(row)
        self.vertical_rows: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
        for key, (date_list, row_list) in vertical.items():
            order = np.argsort(np.asarray(date_list), kind="stable")
            self.vertical_rows[key] = (
                np.asarray(date_list)[order],
                np.asarray(row_list, dtype=np.int64)[order],
            )

        self.flights = sorted(self.flight_rows)

    def horizontal_rows(self, route_id, flight_date, d: int, h: int) -> np.ndarray:
        """Row indices at positions d+h-1 .. d, oldest first."""
        by_d = self.flight_rows.get((route_id, flight_date))
        if by_d is None:
            raise InsufficientHistory(f"no rows for flight ({route_id}, {flight_date})")
        rows = []
        for position in range(d + h - 1, d - 1, -1):
            row = by_d.get(position)
            if row is None:
                raise InsufficientHistory(
                    f"({route_id}, {flight_date}): missing snapshot at d={position}"
                )
            rows.append(row)
        return np.asarray(rows, dtype=np.int64)

    def vertical_flight_rows(self, route_id, flight_date, d: int, v: int, stride: int) -> np.ndarray:
        """Rows of the selected historical flights at position d, oldest first."""
        dates, rows = self.vertical_rows.get((route_id, d), (np.array([]), np.array([], dtype=np.int64)))
        prior = bisect_left(dates, flight_date)
        needed = (v - 1) * stride + 1
        if prior < needed:
            raise InsufficientHistory(
                f"({route_id}, d={d}): {prior} qualifying flights before {flight_date}, need {needed}"
            )
        picks = [prior - 1 - k * stride for k in range(v)]
        return rows[np.asarray(picks[::-1], dtype=np.int64)]


def build_horizontal(index: FeatureIndex, route_id, flight_date, d: int, h: int) -> np.ndarray:
    """(h, F_h) tensor of the flight's own snapshots, oldest first."""
    rows = index.horizontal_rows(route_id, flight_date, d, h)
    return index.h_matrix[rows]


def build_vertical(
    index: FeatureIndex, route_id, flight_date, d: int, v: int, stride: int = 1
) -> np.ndarray:
    """(v, F_v) tensor of historical same-route flights at position d."""
    rows = index.vertical_flight_rows(route_id, flight_date, d, v, stride)
    return index.v_matrix[rows]


def assemble_samples(
    table: pd.DataFrame,
    h: int = 3,
    v: int = 3,
    stride: int = 1,
    d_range=DEFAULT_D_RANGE,
    horizontal_columns=None,
    vertical_columns=None,
) -> tuple[list[SequenceSample], dict[str, int]]:
    """One sample per (flight, d) where both windows can be built.

    Instances that cannot be built are skipped and tallied by reason:
    missing_target (no departure-day snapshot), no_horizontal (a gap in
    the flight's own records), no_vertical (too little route history).
    """
    index = FeatureIndex(table, horizontal_columns, vertical_columns)
    skips = {"missing_target": 0, "no_horizontal": 0, "no_vertical": 0}
    samples: list[SequenceSample] = []
    for route_id, flight_date in index.flights:
        target_row = index.flight_rows[(route_id, flight_date)].get(0)
        if target_row is None:
            skips["missing_target"] += len(list(d_range))
            continue
        target = index.plf[target_row]
        for d in d_range:
            try:
                h_rows = index.horizontal_rows(route_id, flight_date, d, h)
            except InsufficientHistory:
                skips["no_horizontal"] += 1
                continue
            try:
                v_rows = index.vertical_flight_rows(route_id, flight_date, d, v, stride)
            except InsufficientHistory:
                skips["no_vertical"] += 1
                continue
            samples.append(
                SequenceSample(
                    route_id=route_id,
                    flight_date=pd.Timestamp(flight_date),
                    days_before_departure=int(d),
                    horizontal=index.h_matrix[h_rows],
                    vertical=index.v_matrix[v_rows],
                    target_plf=float(target),
                    naive_plf=float(index.plf[h_rows[-1]]),
                )
            )
    samples.sort(key=lambda s: (s.flight_date, s.route_id, s.days_before_departure))
    return samples, skips


@dataclass
class Scaler:
    """Per-feature standardisation fitted on the training partition."""

    h_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h_std: np.ndarray = field(default_factory=lambda: np.ones(0))
    v_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v_std: np.ndarray = field(default_factory=lambda: np.ones(0))

    def fit(self, h_stack: np.ndarray, v_stack: np.ndarray) -> "Scaler":
        def stats(stack):
            flat = stack.reshape(-1, stack.shape[-1])
            mean = flat.mean(axis=0)
            std = flat.std(axis=0)
            std[std == 0.0] = 1.0  # constant columns pass through centred
            return mean, std

        self.h_mean, self.h_std = stats(h_stack)
        self.v_mean, self.v_std = stats(v_stack)
        return self

    def transform(self, h_stack: np.ndarray, v_stack: np.ndarray):
        return (h_stack - self.h_mean) / self.h_std, (v_stack - self.v_mean) / self.v_std

    def inverse(self, h_stack: np.ndarray, v_stack: np.ndarray):
        return h_stack * self.h_std + self.h_mean, v_stack * self.v_std + self.v_mean


@dataclass
class Partition:
    h: np.ndarray
    v: np.ndarray
    y: np.ndarray
    naive: np.ndarray
    keys: pd.DataFrame

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class SplitCorpus:
    train: Partition
    validation: Partition
    test: Partition
    scaler: Scaler
    h_columns: list[str]
    v_columns: list[str]
    skips: dict[str, int] = field(default_factory=dict)

    def partitions(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


def _stack(samples: list[SequenceSample]) -> Partition:
    keys = pd.DataFrame(
        {
            "route_id": [s.route_id for s in samples],
            "flight_date": [s.flight_date for s in samples],
            "days_before_departure": [s.days_before_departure for s in samples],
        }
    )
    return Partition(
        h=np.stack([s.horizontal for s in samples]),
        v=np.stack([s.vertical for s in samples]),
        y=np.asarray([s.target_plf for s in samples]),
        naive=np.asarray([s.naive_plf for s in samples]),
        keys=keys,
    )


def chronological_split(
    samples: list[SequenceSample],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    horizontal_columns=None,
    vertical_columns=None,
    skips: dict[str, int] | None = None,
) -> SplitCorpus:
    """Split by flight date, snap boundaries to date edges, standardise.

    Samples sharing the boundary date all fall into the earlier
    partition, so partition date ranges never overlap. The scaler is
    fitted on the training tensors only and applied to all partitions;
    targets and persistence values stay in raw percentage points.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    ordered = sorted(samples, key=lambda s: (s.flight_date, s.route_id, s.days_before_departure))
    n = len(ordered)
    if n == 0:
        raise EmptyPartition("no samples to split")
    dates = [s.flight_date for s in ordered]

    def snap(cut: int) -> int:
        while 0 < cut < n and dates[cut] == dates[cut - 1]:
            cut += 1
        return cut

    cut1 = snap(int(n * ratios[0]))
    cut2 = snap(max(cut1, int(n * (ratios[0] + ratios[1]))))
    parts = {
        "train": ordered[:cut1],
        "validation": ordered[cut1:cut2],
        "test": ordered[cut2:],
    }
    for name, part in parts.items():
        if not part:
            raise EmptyPartition(f"{name} partition received zero samples")

    stacked = {name: _stack(part) for name, part in parts.items()}
    scaler = Scaler().fit(stacked["train"].h, stacked["train"].v)
    for part in stacked.values():
        part.h, part.v = scaler.transform(part.h, part.v)

    return SplitCorpus(
        train=stacked["train"],
        validation=stacked["validation"],
        test=stacked["test"],
        scaler=scaler,
        h_columns=list(horizontal_columns or DEFAULT_HORIZONTAL),
        v_columns=list(vertical_columns or DEFAULT_VERTICAL),
        skips=dict(skips or {}),
    )


def window_sweep(
    table: pd.DataFrame,
    sizes,
    architectures=("SLSTM-H", "SLSTM-V", "SLSTM-C", "DLSTM"),
    symmetric: bool = True,
    stride: int = 1,
    d_range=DEFAULT_D_RANGE,
    max_epochs: int = 8,
    seed: int = 0,
) -> pd.DataFrame:
    """Grid over window sizes, scoring each by best validation loss.

    Symmetric mode tries (k, k) for each candidate size; otherwise the
    full cross product is evaluated. Each cell trains on a budgeted
    epoch count with the architecture's stock configuration.
    """
    from .neural.models import ModelSpec
    from .training import TrainConfig, fit

    pairs = [(k, k) for k in sizes] if symmetric else [(a, b) for a in sizes for b in sizes]
    records = []
    for h, v in pairs:
        samples, skips = assemble_samples(table, h=h, v=v, stride=stride, d_range=d_range)
        corpus = chronological_split(samples, skips=skips)
        for arch in architectures:
            spec = ModelSpec.for_variant(arch, h=h, v=v)
            cfg = TrainConfig(
                optimizer=spec.optimizer,
                learning_rate=spec.learning_rate,
                max_epochs=max_epochs,
                seed=seed,
            )
            _, log = fit(spec, corpus, cfg)
            records.append(
                {
                    "architecture": arch,
                    "h": h,
                    "v": v,
                    "val_loss": min(log.val_losses),
                    "epochs_run": log.stopped_epoch,
                    "samples": len(samples),
                }
            )
    return pd.DataFrame.from_records(records)


def save_split(directory: str | Path, corpus: SplitCorpus, extra_meta: dict | None = None) -> None:
    """Persist a split as meta.json, samples.csv, and tensors.bin."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    frames = []
    for name, part in corpus.partitions().items():
        keys = part.keys.copy()
        keys["partition"] = name
        frames.append(keys)
    manifest = pd.concat(frames, ignore_index=True)
    manifest["flight_date"] = manifest["flight_date"].dt.strftime("%Y-%m-%d")
    skip_note = " ".join(f"{k}={v}" for k, v in sorted(corpus.skips.items()))
    with (directory / "samples.csv").open("w", newline="") as handle:
        handle.write(f"# skip_counts: {skip_note}\n")
        manifest.to_csv(handle, index=False)

    meta = {
        "h_columns": corpus.h_columns,
        "v_columns": corpus.v_columns,
        "skips": corpus.skips,
    }
    if extra_meta:
        meta.update(extra_meta)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    arrays: dict[str, np.ndarray] = {}
    for name, part in corpus.partitions().items():
        arrays[f"{name}_h"] = part.h
        arrays[f"{name}_v"] = part.v
        arrays[f"{name}_y"] = part.y
        arrays[f"{name}_naive"] = part.naive
    for name in ("h_mean", "h_std", "v_mean", "v_std"):
        arrays[f"scaler_{name}"] = getattr(corpus.scaler, name)
    write_tensor_file(directory / "tensors.bin", arrays)


def load_split(directory: str | Path) -> SplitCorpus:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    manifest = pd.read_csv(directory / "samples.csv", comment="#")
    manifest["flight_date"] = pd.to_datetime(manifest["flight_date"])
    arrays = read_tensor_file(directory / "tensors.bin")

    scaler = Scaler(
        h_mean=arrays["scaler_h_mean"],
        h_std=arrays["scaler_h_std"],
        v_mean=arrays["scaler_v_mean"],
        v_std=arrays["scaler_v_std"],
    )
    partitions = {}
    for name in ("train", "validation", "test"):
        keys = manifest[manifest["partition"] == name].drop(columns=["partition"]).reset_index(drop=True)
        partitions[name] = Partition(
            h=arrays[f"{name}_h"],
            v=arrays[f"{name}_v"],
            y=arrays[f"{name}_y"],
            naive=arrays[f"{name}_naive"],
            keys=keys,
        )
    return SplitCorpus(
        train=partitions["train"],
        validation=partitions["validation"],
        test=partitions["test"],
        scaler=scaler,
        h_columns=meta["h_columns"],
        v_columns=meta["v_columns"],
        skips=meta.get("skips", {}),
    )


def write_tensor_file(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Little-endian container: magic, version, then named float64 blobs.

    Entry layout: u16 name length, name bytes (utf-8), u8 ndim,
    ndim x u64 dims, then the row-major float64 payload.
    """
    with Path(path).open("wb") as handle:
        handle.write(CACHE_MAGIC)
        handle.write(struct.pack("<II", CACHE_VERSION, len(arrays)))
        for name, array in arrays.items():
            data = np.ascontiguousarray(array, dtype="<f8")
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<B", data.ndim))
            handle.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            handle.write(data.tobytes())


def read_tensor_file(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open("rb") as handle:
        magic = handle.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, count = struct.unpack("<II", handle.read(8))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", handle.read(2))
            name = handle.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", handle.read(1))
            dims = struct.unpack(f"<{ndim}Q", handle.read(8 * ndim)) if ndim else ()
            size = int(np.prod(dims)) if dims else 1
            payload = handle.read(8 * size)
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return arrays
