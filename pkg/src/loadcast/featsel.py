"""Seven-stage feature selection over windowed candidate columns.

The pipeline expands every candidate feature into its temporal
variants: suffix _Hk is the flight's own value k-1 days before the
prediction day (H1 is the prediction day itself), suffix _Vk the value
of the k-th most recent qualifying historical flight (V1 is the most
recent). Stages then run in order:

1. Pearson redundancy pruning at a fixed |r| threshold, keeping the
   higher domain-priority column of each correlated pair. Constant
   columns have no defined correlation and are dropped with a
   diagnostic.
2. Mutual information of each survivor with the departure load factor,
   estimated on an equal-frequency grid (deterministic, in nats).
3. Random forest importances (mean impurity reduction).
4. Sequential forward selection against a closed-form ridge regressor,
   scored on a chronological holdout.
5. Variance inflation factors, reported but never auto-dropped: the
   downstream networks tolerate multicollinearity, so strong momentum
   columns stay even with extreme VIF.
6. Deduplication of the columns selected across stages 2-4 back to
   base feature names, keeping each base's most frequently selected
   temporal variant (ties: smaller offset, then H before V).
7. Stream-specific final ranking by Borda count over the MI, RF, and
   SFS orderings, honouring each base feature's stream eligibility.

Every stage is a pure function of (data, config, seed); the full run
is captured in a SelectionReport that replays bit-identically.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConstantColumn
from .features import ELIGIBILITY, FEATURE_COLUMNS
from .forest import ForestConfig, RandomForestRegressor
from .sequences import DEFAULT_D_RANGE, FeatureIndex

_SUFFIX = re.compile(r"^(?P<base>.+)_(?P<stream>[HV])(?P<k>\d+)$")

# Domain priority for redundancy tie-breaks: the shipped stream columns
# first, then the remaining candidates in roster order.
PRIORITY_ORDER: list[str] = [
    "plf",
    "total_RPK",
    "rolling_avg_plf",
    "plf_historical",
    "days_before_departure",
    "record_date_day",
    "record_date_day_of_year",
    "flight_date_is_holiday",
    "flight_date_day",
    "flight_date_week",
    "flight_date_day_of_year",
    "flight_date_is_weekend",
]
PRIORITY_ORDER += [name for name in FEATURE_COLUMNS if name not in PRIORITY_ORDER]
_PRIORITY_RANK = {name: rank for rank, name in enumerate(PRIORITY_ORDER)}


def parse_suffix(name: str) -> tuple[str, str | None, int | None]:
    """Split 'base_Hk' / 'base_Vk' into parts; plain names pass through."""
    match = _SUFFIX.match(name)
    if match is None:
        return name, None, None
    return match.group("base"), match.group("stream"), int(match.group("k"))


def feature_priority(name: str) -> tuple[int, int, int]:
    """Sort key: priority rank of the base, then offset, then H before V."""
    base, stream, k = parse_suffix(name)
    rank = _PRIORITY_RANK.get(base, len(PRIORITY_ORDER))
    return rank, k or 0, 0 if stream in (None, "H") else 1


@dataclass(frozen=True)
class FeatselConfig:
    h: int = 3
    v: int = 3
    stride: int = 1
    d_min: int = 0
    d_max: int = 21
    pearson_threshold: float = 0.90
    mi_bins: int = 16
    method_top_k: int = 20
    sfs_max_k: int = 20
    sfs_ridge: float = 1.0
    sfs_min_gain: float = 1e-4
    vif_ridge: float = 1e-8
    vif_cap: float = 1e6
    train_fraction: float = 0.70
    holdout_fraction: float = 0.15
    horizontal_target: int = 8
    vertical_target: int = 9
    seed: int = 0


def build_selection_matrix(
    table: pd.DataFrame, config: FeatselConfig
) -> tuple[pd.DataFrame, np.ndarray, np.ndarray]:
    """Windowed design matrix over all candidates, plus target and dates.

    One row per (flight, d) instance with full horizontal and vertical
    windows; column order is every candidate's H offsets oldest-suffix
    last (H1..Hh), then its V offsets (V1..Vv).
    """
    index = FeatureIndex(table, FEATURE_COLUMNS, FEATURE_COLUMNS)
    h_rows, v_rows, targets, dates = [], [], [], []
    for route_id, flight_date in index.flights:
        target_row = index.flight_rows[(route_id, flight_date)].get(0)
        if target_row is None:
            continue
        for d in range(config.d_min, config.d_max + 1):
            try:
                h_idx = index.horizontal_rows(route_id, flight_date, d, config.h)
                v_idx = index.vertical_flight_rows(route_id, flight_date, d, config.v, config.stride)
            except Exception:
                continue
            h_rows.append(h_idx)
            v_rows.append(v_idx)
            targets.append(index.plf[target_row])
            dates.append(flight_date)

    h_block = index.h_matrix[np.asarray(h_rows)]  # (N, h, 39) oldest first
    v_block = index.v_matrix[np.asarray(v_rows)]
    columns: dict[str, np.ndarray] = {}
    for f_idx, name in enumerate(FEATURE_COLUMNS):
        for k in range(1, config.h + 1):
            columns[f"{name}_H{k}"] = h_block[:, config.h - k, f_idx]
        for k in range(1, config.v + 1):
            columns[f"{name}_V{k}"] = v_block[:, config.v - k, f_idx]
    matrix = pd.DataFrame(columns)
    order = np.argsort(np.asarray(dates), kind="stable")
    return (
        matrix.iloc[order].reset_index(drop=True),
        np.asarray(targets)[order],
        np.asarray(dates)[order],
    )


@dataclass
class DropRecord:
    feature: str
    stage: str
    rule: str
    detail: str


def stage1_pearson_prune(
    matrix: pd.DataFrame, threshold: float = 0.90
) -> tuple[list[str], list[DropRecord], pd.DataFrame]:
    """Drop the lower-priority member of each highly correlated pair."""
    if len(matrix) < 2:
        raise ValueError("need at least two rows for correlations")
    names = list(matrix.columns)
    values = matrix.to_numpy(dtype=np.float64)
    std = values.std(axis=0)

    drops: list[DropRecord] = []
    live = []
    for idx, name in enumerate(names):
        if std[idx] == 0.0:
            drops.append(DropRecord(name, "stage1", "constant",
                                    ConstantColumn(f"{name}: zero variance").args[0]))
        else:
            live.append(idx)

    centred = values[:, live] - values[:, live].mean(axis=0)
    normed = centred / std[live]
    corr = (normed.T @ normed) / len(matrix)
    live_names = [names[i] for i in live]
    corr_df = pd.DataFrame(corr, index=live_names, columns=live_names)

    kept: list[str] = []
    kept_pos: list[int] = []
    for name in sorted(live_names, key=feature_priority):
        pos = live_names.index(name)
        clash = None
        for other_pos in kept_pos:
            if abs(corr[pos, other_pos]) > threshold:
                clash = other_pos
                break
        if clash is None:
            kept.append(name)
            kept_pos.append(pos)
        else:
            drops.append(
                DropRecord(
                    name, "stage1", "correlated",
                    f"|r|={abs(corr[pos, clash]):.4f} with kept {live_names[clash]}",
                )
            )
    kept_in_input_order = [n for n in live_names if n in set(kept)]
    return kept_in_input_order, drops, corr_df


def _equal_frequency_bins(values: np.ndarray, bins: int) -> np.ndarray:
    edges = np.unique(np.quantile(values, np.linspace(0.0, 1.0, bins + 1)[1:-1]))
    return np.searchsorted(edges, values, side="right")


def stage2_mutual_information(
    matrix: pd.DataFrame, target: np.ndarray, bins: int = 16
) -> dict[str, float]:
    """Histogram MI (nats) between each column and the target."""
    target_bins = _equal_frequency_bins(np.asarray(target, dtype=np.float64), bins)
    n = len(target_bins)
    n_target = int(target_bins.max()) + 1
    scores: dict[str, float] = {}
    for name in matrix.columns:
        col_bins = _equal_frequency_bins(matrix[name].to_numpy(dtype=np.float64), bins)
        n_col = int(col_bins.max()) + 1
        joint = np.bincount(col_bins * n_target + target_bins, minlength=n_col * n_target)
        joint = joint.reshape(n_col, n_target) / n
        px = joint.sum(axis=1, keepdims=True)
        py = joint.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(joint > 0, joint / (px @ py), 1.0)
            scores[name] = float(np.sum(joint * np.log(ratio)))
    return scores


def stage3_rf_importance(
    matrix: pd.DataFrame, target: np.ndarray, forest_config: ForestConfig
) -> dict[str, float]:
    """Impurity-reduction importances from a seeded forest."""
    forest = RandomForestRegressor(forest_config)
    forest.fit(matrix.to_numpy(dtype=np.float64), np.asarray(target, dtype=np.float64))
    return {name: float(score) for name, score in zip(matrix.columns, forest.importances_)}


def stage4_sfs_ridge(
    matrix: pd.DataFrame,
    target: np.ndarray,
    train_rows: np.ndarray,
    val_rows: np.ndarray,
    max_k: int = 20,
    ridge_lambda: float = 1.0,
    min_gain: float = 1e-4,
) -> list[tuple[str, float]]:
    """Greedy forward selection maximising holdout R-squared.

    Columns are standardised on the training rows and the target is
    centred there, so the ridge solve needs no explicit intercept. The
    training Gram matrix is computed once; each candidate evaluation is
    then a small dense solve. Selection stops at max_k or when the best
    marginal gain drops below min_gain.
    """
    names = list(matrix.columns)
    values = matrix.to_numpy(dtype=np.float64)
    mean = values[train_rows].mean(axis=0)
    std = values[train_rows].std(axis=0)
    std[std == 0.0] = 1.0
    scaled = (values - mean) / std
    y = np.asarray(target, dtype=np.float64)
    y_offset = y[train_rows].mean()

    x_train, y_train = scaled[train_rows], y[train_rows] - y_offset
    x_val, y_val = scaled[val_rows], y[val_rows] - y_offset
    gram = x_train.T @ x_train
    moment = x_train.T @ y_train
    sst_val = float(np.sum((y_val - y_val.mean()) ** 2))

    def holdout_r2(cols: list[int]) -> float:
        system = gram[np.ix_(cols, cols)] + ridge_lambda * np.eye(len(cols))
        beta = np.linalg.solve(system, moment[cols])
        sse = float(np.sum((y_val - x_val[:, cols] @ beta) ** 2))
        return 1.0 - sse / sst_val if sst_val > 0 else 0.0

    selected: list[int] = []
    order: list[tuple[str, float]] = []
    best_score = -np.inf
    while len(selected) < min(max_k, len(names)):
        best_candidate = -1
        candidate_score = -np.inf
        for j in range(len(names)):
            if j in selected:
                continue
            score = holdout_r2(selected + [j])
            if score > candidate_score:
                candidate_score = score
                best_candidate = j
        gain = candidate_score - (best_score if np.isfinite(best_score) else 0.0)
        if best_candidate < 0 or (order and gain < min_gain):
            break
        selected.append(best_candidate)
        order.append((names[best_candidate], float(candidate_score)))
        best_score = candidate_score
    return order


def stage5_vif(matrix: pd.DataFrame, ridge: float = 1e-8, cap: float = 1e6) -> dict[str, float]:
    """Variance inflation factor of each column against the others."""
    names = list(matrix.columns)
    values = matrix.to_numpy(dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std[std == 0.0] = 1.0
    scaled = (values - mean) / std
    n, count = scaled.shape
    out: dict[str, float] = {}
    for j in range(count):
        others = np.delete(np.arange(count), j)
        if len(others) == 0:
            out[names[j]] = 1.0
            continue
        x = scaled[:, others]
        gram = x.T @ x + ridge * np.eye(len(others))
        beta = np.linalg.solve(gram, x.T @ scaled[:, j])
        sse = float(np.sum((scaled[:, j] - x @ beta) ** 2))
        sst = float(np.sum(scaled[:, j] ** 2))
        r2 = 1.0 - sse / sst if sst > 0 else 0.0
        out[names[j]] = cap if r2 >= 1.0 - 1e-6 else min(cap, 1.0 / (1.0 - r2))
    return out


def stage6_dedup(selected_names: list[str]) -> tuple[list[str], dict[str, str]]:
    """Consolidate suffixed selections to base features.

    Repeats across methods count as votes for a temporal variant; the
    winning variant per base is the most voted, breaking ties by
    smaller offset and then H before V. Names without a recognised
    suffix pass through as their own base.
    """
    votes: dict[str, dict[str, int]] = {}
    for name in selected_names:
        base, _, _ = parse_suffix(name)
        votes.setdefault(base, {})
        votes[base][name] = votes[base].get(name, 0) + 1

    kept_variant: dict[str, str] = {}
    for base, variants in votes.items():
        def tie_key(item):
            name, count = item
            _, stream, k = parse_suffix(name)
            return (-count, k or 0, 0 if stream in (None, "H") else 1)

        kept_variant[base] = sorted(variants.items(), key=tie_key)[0][0]
    bases = sorted(kept_variant, key=lambda b: _PRIORITY_RANK.get(b, len(PRIORITY_ORDER)))
    return bases, kept_variant


def borda_rank(
    pool: list[str],
    method_orders: dict[str, list[str]],
) -> list[tuple[str, int]]:
    """Aggregate method rankings by Borda count.

    Each method awards len(pool)-1-position points to the candidates it
    ranks; candidates a method leaves unranked receive zero from it.
    Final ordering is by total points, ties by name.
    """
    points = {name: 0 for name in pool}
    m = len(pool)
    for ranking in method_orders.values():
        for position, name in enumerate(ranking):
            if name in points:
                points[name] += max(0, m - 1 - position)
    return sorted(points.items(), key=lambda item: (-item[1], item[0]))


def stage7_final_split(
    pool: list[str],
    kept_variant: dict[str, str],
    mi_scores: dict[str, float],
    rf_importances: dict[str, float],
    sfs_order: list[tuple[str, float]],
    horizontal_target: int = 8,
    vertical_target: int = 9,
) -> tuple[list[str], list[str], list[tuple[str, int]]]:
    """Rank the deduped pool and fill the two stream lists.

    A base feature is scored through its kept variant. Eligibility
    tags decide which stream(s) a base may serve; underfull targets
    emit a warning and take everything eligible.
    """
    def method_order(scores: dict[str, float]) -> list[str]:
        scored = [(base, scores.get(kept_variant[base], -np.inf)) for base in pool]
        return [b for b, _ in sorted(scored, key=lambda item: (-item[1], item[0]))]

    sfs_positions: dict[str, int] = {}
    for position, (name, _) in enumerate(sfs_order):
        base, _, _ = parse_suffix(name)
        if base not in sfs_positions:
            sfs_positions[base] = position
    sfs_ranking = [b for b in sorted(sfs_positions, key=lambda b: sfs_positions[b]) if b in pool]

    ranked = borda_rank(
        pool,
        {
            "mi": method_order(mi_scores),
            "rf": method_order(rf_importances),
            "sfs": sfs_ranking,
        },
    )
    ordered = [name for name, _ in ranked]
    horizontal = [b for b in ordered if ELIGIBILITY.get(b, "HV") in ("H", "HV")][:horizontal_target]
    vertical = [b for b in ordered if ELIGIBILITY.get(b, "HV") in ("V", "HV")][:vertical_target]
    if len(horizontal) < horizontal_target or len(vertical) < vertical_target:
        warnings.warn(
            f"selection pool underfull: {len(horizontal)}/{horizontal_target} horizontal, "
            f"{len(vertical)}/{vertical_target} vertical",
            stacklevel=2,
        )
    return horizontal, vertical, ranked


@dataclass
class SelectionReport:
    config: FeatselConfig
    stage_sets: dict[str, list[str]] = field(default_factory=dict)
    drops: list[DropRecord] = field(default_factory=list)
    pearson: pd.DataFrame | None = None
    mi_scores: dict[str, float] = field(default_factory=dict)
    rf_importances: dict[str, float] = field(default_factory=dict)
    sfs_order: list[tuple[str, float]] = field(default_factory=list)
    vif_values: dict[str, float] = field(default_factory=dict)
    kept_variant: dict[str, str] = field(default_factory=dict)
    borda: list[tuple[str, int]] = field(default_factory=list)
    final_horizontal: list[str] = field(default_factory=list)
    final_vertical: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "config": {k: getattr(self.config, k) for k in self.config.__dataclass_fields__},
            "stage_sets": self.stage_sets,
            "drops": [vars(d) for d in self.drops],
            "pearson_features": list(self.pearson.columns) if self.pearson is not None else [],
            "pearson_matrix": self.pearson.to_numpy().round(6).tolist()
            if self.pearson is not None else [],
            "mi_scores": self.mi_scores,
            "rf_importances": self.rf_importances,
            "sfs_order": self.sfs_order,
            "vif_values": self.vif_values,
            "kept_variant": self.kept_variant,
            "borda": self.borda,
            "final_horizontal": self.final_horizontal,
            "final_vertical": self.final_vertical,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def run_selection_pipeline(table: pd.DataFrame, config: FeatselConfig | None = None,
                           stop_after: int | None = None) -> SelectionReport:
    """Execute the stages in order on one feature table.

    The set leaving each stage is recorded; scoring stages leave the
    set unchanged, stage 4 reduces it to the union of the columns the
    three scoring methods selected, stage 6 maps to base names, and
    stage 7 emits the stream lists.
    """
    config = config or FeatselConfig()
    report = SelectionReport(config=config)

    matrix, target, dates = build_selection_matrix(table, config)
    report.stage_sets["input"] = list(matrix.columns)

    survivors, drops, corr = stage1_pearson_prune(matrix, config.pearson_threshold)
    report.drops.extend(drops)
    report.pearson = corr
    report.stage_sets["stage1"] = survivors
    if stop_after == 1:
        return report

    n = len(matrix)
    train_end = int(n * config.train_fraction)
    val_end = int(n * (config.train_fraction + config.holdout_fraction))
    train_rows = np.arange(train_end)
    val_rows = np.arange(train_end, val_end)
    live = matrix[survivors]

    report.mi_scores = stage2_mutual_information(
        live.iloc[train_rows], target[train_rows], config.mi_bins
    )
    report.stage_sets["stage2"] = survivors
    if stop_after == 2:
        return report

    forest_config = ForestConfig(seed=config.seed)
    report.rf_importances = stage3_rf_importance(
        live.iloc[train_rows], target[train_rows], forest_config
    )
    report.stage_sets["stage3"] = survivors
    if stop_after == 3:
        return report

    report.sfs_order = stage4_sfs_ridge(
        live, target, train_rows, val_rows,
        max_k=config.sfs_max_k, ridge_lambda=config.sfs_ridge, min_gain=config.sfs_min_gain,
    )
    top_mi = [n for n, _ in sorted(report.mi_scores.items(), key=lambda i: (-i[1], i[0]))]
    top_rf = [n for n, _ in sorted(report.rf_importances.items(), key=lambda i: (-i[1], i[0]))]
    method_selected = (
        top_mi[: config.method_top_k]
        + top_rf[: config.method_top_k]
        + [name for name, _ in report.sfs_order]
    )
    union = sorted(set(method_selected), key=feature_priority)
    union_set = set(union)
    for name in survivors:
        if name not in union_set:
            report.drops.append(
                DropRecord(name, "stage4", "unselected", "chosen by none of MI, RF, SFS")
            )
    report.stage_sets["stage4"] = union
    if stop_after == 4:
        return report

    report.vif_values = stage5_vif(
        matrix[union].iloc[train_rows], config.vif_ridge, config.vif_cap
    )
    report.stage_sets["stage5"] = union
    if stop_after == 5:
        return report

    pool, kept_variant = stage6_dedup(method_selected)
    for name in union:
        base, _, _ = parse_suffix(name)
        if kept_variant.get(base) != name:
            report.drops.append(
                DropRecord(name, "stage6", "variant_consolidated",
                           f"base {base} keeps {kept_variant.get(base)}")
            )
    report.kept_variant = kept_variant
    report.stage_sets["stage6"] = pool
    if stop_after == 6:
        return report

    horizontal, vertical, ranked = stage7_final_split(
        pool, kept_variant, report.mi_scores, report.rf_importances, report.sfs_order,
        config.horizontal_target, config.vertical_target,
    )
    report.borda = ranked
    report.final_horizontal = horizontal
    report.final_vertical = vertical
    final_union = set(horizontal) | set(vertical)
    for base in pool:
        if base not in final_union:
            report.drops.append(
                DropRecord(base, "stage7", "below_cutoff", "rank outside both stream targets")
            )
    report.stage_sets["stage7_horizontal"] = horizontal
    report.stage_sets["stage7_vertical"] = vertical
    return report
