"""Metric suite, horizon and category breakdowns, and flat baselines.

All six metrics are computed against raw load-factor targets in
percentage points. The scaled error (MASE) divides the model's MAE by
the MAE of the persistence forecast: the newest raw load factor in the
sample's own horizontal window. Percentage errors exclude actuals
within 1e-6 of zero and report how many were excluded, since near-zero
actuals make the ratio meaningless.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import SingularSystem
from .forest import ForestConfig, RandomForestRegressor
from .ingest import RouteMeta
from .neural.models import Model, ModelSpec
from .sequences import Partition, SplitCorpus
from .training import TrainConfig, TrainLog, fit

MAPE_FLOOR = 1e-6

CATEGORY_PAIRS = ("reach", "service", "frequency", "haul")


@dataclass(frozen=True)
class MetricSet:
    mae: float
    mape: float
    mse: float
    rmse: float
    mase: float
    r2: float
    n: int
    mape_excluded: int

    def as_dict(self) -> dict[str, float]:
        return {
            "mae": self.mae,
            "mape": self.mape,
            "mse": self.mse,
            "rmse": self.rmse,
            "mase": self.mase,
            "r2": self.r2,
            "n": self.n,
            "mape_excluded": self.mape_excluded,
        }


def compute_metrics(pred: np.ndarray, actual: np.ndarray, naive: np.ndarray) -> MetricSet:
    """Six-way error summary of one prediction vector.

    Undefined quantities are reported as NaN markers: MASE when the
    persistence benchmark is already exact, R-squared when the actuals
    have zero variance.
    """
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    naive = np.asarray(naive, dtype=np.float64)
    if not (len(pred) == len(actual) == len(naive)) or len(pred) == 0:
        raise ValueError("pred, actual, naive must share a positive length")

    err = pred - actual
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    rmse = math.sqrt(mse)

    keep = np.abs(actual) > MAPE_FLOOR
    excluded = int(len(actual) - keep.sum())
    mape = float(np.mean(np.abs(err[keep]) / np.abs(actual[keep]))) if keep.any() else math.nan

    naive_mae = float(np.mean(np.abs(naive - actual)))
    mase = mae / naive_mae if naive_mae > 0.0 else math.nan

    sst = float(np.sum((actual - actual.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err**2)) / sst if sst > 0.0 else math.nan

    return MetricSet(mae, mape, mse, rmse, mase, r2, len(pred), excluded)


def _model_predictions(models: dict[str, Model], part: Partition) -> dict[str, np.ndarray]:
    return {name: model.predict(part.h, part.v) for name, model in models.items()}


def horizon_analysis(
    models: dict[str, Model],
    corpus: SplitCorpus,
    d_range=range(0, 22),
    include_naive: bool = True,
) -> pd.DataFrame:
    """Test metrics per (model, days-before-departure) cell.

    Cells with no samples are emitted with n = 0 and NaN metrics so the
    horizon stays rectangular.
    """
    test = corpus.test
    preds = _model_predictions(models, test)
    if include_naive:
        preds["naive"] = test.naive
    dvals = test.keys["days_before_departure"].to_numpy()
    records = []
    for name, pred in preds.items():
        for d in d_range:
            mask = dvals == d
            if mask.any():
                cell = compute_metrics(pred[mask], test.y[mask], test.naive[mask])
                row = {"model": name, "d": int(d), **cell.as_dict()}
            else:
                row = {"model": name, "d": int(d), "mae": math.nan, "mape": math.nan,
                       "mse": math.nan, "rmse": math.nan, "mase": math.nan,
                       "r2": math.nan, "n": 0, "mape_excluded": 0}
            records.append(row)
    return pd.DataFrame.from_records(records)


def category_report(
    models: dict[str, Model],
    corpus: SplitCorpus,
    routes: dict[str, RouteMeta],
    include_naive: bool = True,
) -> pd.DataFrame:
    """Test metrics per (category pair, tag, model).

    Within each pair the tag cells partition the test set; tags with no
    samples are marked empty (n = 0).
    """
    test = corpus.test
    preds = _model_predictions(models, test)
    if include_naive:
        preds["naive"] = test.naive
    route_ids = test.keys["route_id"].to_numpy()
    records = []
    for pair in CATEGORY_PAIRS:
        tag_of = {rid: meta.category_tags[pair] for rid, meta in routes.items()}
        tags = sorted({tag for tag in tag_of.values()})
        sample_tags = np.asarray([tag_of[rid] for rid in route_ids])
        for tag in tags:
            mask = sample_tags == tag
            for name, pred in preds.items():
                if mask.any():
                    cell = compute_metrics(pred[mask], test.y[mask], test.naive[mask])
                    row = {"pair": pair, "tag": tag, "model": name, **cell.as_dict()}
                else:
                    row = {"pair": pair, "tag": tag, "model": name, "mae": math.nan,
                           "mape": math.nan, "mse": math.nan, "rmse": math.nan,
                           "mase": math.nan, "r2": math.nan, "n": 0, "mape_excluded": 0}
                records.append(row)
    return pd.DataFrame.from_records(records)


def flatten_partition(part: Partition) -> np.ndarray:
    """Sequence tensors as one flat vector per sample (H*F_h + V*F_v)."""
    n = len(part)
    return np.concatenate(
        [part.h.reshape(n, -1), part.v.reshape(n, -1)], axis=1
    )


def baseline_fit_predict(
    kind: str, corpus: SplitCorpus, seed: int = 0
) -> tuple[MetricSet, np.ndarray]:
    """Fit a non-sequential baseline on flattened windows, score on test.

    Kinds: linear (least squares; falls back to a tiny ridge with a
    warning when the design is singular), ridge (lambda 1), random_forest
    (the selection-stage forest), naive (persistence, no fitting).
    """
    test = corpus.test
    if kind == "naive":
        pred = test.naive.copy()
        return compute_metrics(pred, test.y, test.naive), pred

    x_train = flatten_partition(corpus.train)
    y_train = corpus.train.y
    x_test = flatten_partition(test)

    if kind == "random_forest":
        forest = RandomForestRegressor(ForestConfig(seed=seed))
        forest.fit(x_train, y_train)
        pred = forest.predict(x_test)
        return compute_metrics(pred, test.y, test.naive), pred

    ones_train = np.column_stack([x_train, np.ones(len(x_train))])
    ones_test = np.column_stack([x_test, np.ones(len(x_test))])
    if kind == "linear":
        beta, _, rank, _ = np.linalg.lstsq(ones_train, y_train, rcond=None)
        if rank < ones_train.shape[1]:
            warnings.warn(
                SingularSystem("collinear design; refitting with ridge 1e-8").args[0],
                stacklevel=2,
            )
            beta = _ridge_solve(ones_train, y_train, 1e-8)
    elif kind == "ridge":
        beta = _ridge_solve(ones_train, y_train, 1.0)
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    pred = ones_test @ beta
    return compute_metrics(pred, test.y, test.naive), pred


def _ridge_solve(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    gram = x.T @ x + lam * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ y)


METRIC_NAMES = ("mae", "mape", "mse", "rmse", "mase", "r2")


def leaderboard(
    variants: list[str],
    corpus: SplitCorpus,
    seeds: list[int],
    train_config: TrainConfig | None = None,
    baselines: list[str] = (),
    h_features: int | None = None,
    v_features: int | None = None,
) -> tuple[pd.DataFrame, dict[tuple[str, int], TrainLog]]:
    """Mean and std of test metrics per variant across seeds.

    Each variant trains once per seed under its stock configuration
    (optionally overridden by train_config fields other than optimiser
    and learning rate). Baseline rows are appended after the variants.
    """
    fh = h_features or corpus.train.h.shape[2]
    fv = v_features or corpus.train.v.shape[2]
    rows = []
    logs: dict[tuple[str, int], TrainLog] = {}
    for variant in variants:
        per_seed = []
        for seed in seeds:
            spec = ModelSpec.for_variant(variant, h_features=fh, v_features=fv)
            cfg_kwargs = {
                "optimizer": spec.optimizer,
                "learning_rate": spec.learning_rate,
                "seed": seed,
            }
            if train_config is not None:
                cfg_kwargs.update(
                    batch_size=train_config.batch_size,
                    max_epochs=train_config.max_epochs,
                    early_stop_patience=train_config.early_stop_patience,
                    plateau_patience=train_config.plateau_patience,
                    plateau_factor=train_config.plateau_factor,
                    min_lr=train_config.min_lr,
                    improvement_threshold=train_config.improvement_threshold,
                )
            model, log = fit(spec, corpus, TrainConfig(**cfg_kwargs))
            logs[(variant, seed)] = log
            pred = model.predict(corpus.test.h, corpus.test.v)
            per_seed.append(compute_metrics(pred, corpus.test.y, corpus.test.naive))
        row = {"model": variant, "seeds": len(seeds)}
        for metric in METRIC_NAMES:
            values = np.asarray([getattr(m, metric) for m in per_seed])
            row[f"{metric}_mean"] = float(values.mean())
            row[f"{metric}_std"] = float(values.std())
        rows.append(row)
    for kind in baselines:
        metrics, _ = baseline_fit_predict(kind, corpus)
        row = {"model": kind, "seeds": 1}
        for metric in METRIC_NAMES:
            row[f"{metric}_mean"] = getattr(metrics, metric)
            row[f"{metric}_std"] = 0.0
        rows.append(row)
    return pd.DataFrame.from_records(rows), logs
