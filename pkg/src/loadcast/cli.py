"""Command-line pipeline: generate through predict.

Every subcommand validates its declared inputs, writes its outputs
under --out, and drops a manifest.json recording the tool version,
seed, configuration hash, and SHA-256 digests of inputs and outputs.
Exit codes: 0 success, 2 bad arguments, 3 missing input, 4 numeric
failure.

The seed resolves in order: --seed flag, LOADCAST_SEED environment
variable, 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, evaluation, features, ingest, manifest, plots, sequences
from .errors import DivergenceDetected, LoadcastError, MissingInput, NumericError
from .featsel import FeatselConfig, run_selection_pipeline
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.models import VARIANTS, ModelSpec
from .synthetic import GeneratorConfig, generate_synthetic
from .training import TrainConfig, fit, write_train_log_csv

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_MISSING_INPUT = 3
EXIT_NUMERIC = 4


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("LOADCAST_SEED")
    return int(env) if env else 0


def _require(paths: list[str | Path]) -> None:
    for path in paths:
        if not Path(path).exists():
            raise MissingInput(f"input not found: {path}")


def _out_dir(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommand implementations -------------------------------------------


def cmd_generate(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.config:
        _require([args.config])
        config = GeneratorConfig.from_toml(args.config)
    else:
        config = GeneratorConfig()
    out = _out_dir(args.out)
    snaps, routes, holidays = generate_synthetic(config, seed)
    ingest.write_reservations(out / "reservations.csv", snaps)
    ingest.write_airports(out / "airports.csv", dict(_used_airports(routes)))
    ingest.write_holidays(out / "holidays.csv", holidays)
    ingest.write_routes(out / "routes.csv", {r.route_id: r for r in routes})
    outputs = [out / n for n in ("reservations.csv", "airports.csv", "holidays.csv", "routes.csv")]
    manifest.write_manifest(out, "generate", seed, _config_dict(config),
                            [args.config] if args.config else [], outputs)
    print(f"generate: {len(snaps)} snapshots, {len(routes)} routes -> {out}")
    return EXIT_OK


def _used_airports(routes):
    from .synthetic import AIRPORTS

    for meta in routes:
        yield meta.origin, AIRPORTS[meta.origin]
        yield meta.destination, AIRPORTS[meta.destination]


def _config_dict(config) -> dict:
    return {k: getattr(config, k) for k in config.__dataclass_fields__}


def cmd_ingest(args) -> int:
    _require([args.reservations])
    out = _out_dir(args.out)
    snaps = ingest.load_reservations(args.reservations)
    merged = ingest.aggregate_legs(snaps, strict_aircraft=args.strict_aircraft)
    overbooked = sum(1 for s in merged if s.overbooked)
    ingest.write_reservations(out / "snapshots.csv", merged)
    manifest.write_manifest(out, "ingest", None, {"strict_aircraft": args.strict_aircraft},
                            [args.reservations], [out / "snapshots.csv"])
    print(f"ingest: {len(snaps)} rows -> {len(merged)} flight-date records "
          f"({overbooked} overbooked) -> {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    _require([args.snapshots, args.airports, args.holidays, args.routes])
    out = _out_dir(args.out)
    airports = ingest.load_airports(args.airports)
    holidays = ingest.load_holidays(args.holidays)
    routes = ingest.load_routes(args.routes, airports)
    snaps = ingest.load_reservations(args.snapshots)
    weekend = {"fri-sat": (4, 5), "sat-sun": (5, 6)}[args.weekend]
    table = features.build_feature_rows(
        snaps, routes, holidays, rolling_window=args.rolling_window, weekend=weekend
    )
    features.write_features_csv(out / "features.csv", table)
    manifest.write_manifest(
        out, "features", None,
        {"rolling_window": args.rolling_window, "weekend": args.weekend},
        [args.snapshots, args.airports, args.holidays, args.routes],
        [out / "features.csv"],
    )
    print(f"features: {len(table)} rows x {len(features.FEATURE_COLUMNS)} features -> {out}")
    return EXIT_OK


def cmd_select(args) -> int:
    _require([args.features])
    out = _out_dir(args.out)
    seed = _resolve_seed(args.seed)
    table = features.read_features_csv(args.features)
    config = FeatselConfig(h=args.h, v=args.v, stride=args.stride, seed=seed)
    report = run_selection_pipeline(table, config, stop_after=args.stage)
    report.save(out / "selection_report.json")
    manifest.write_manifest(out, "select", seed, _config_dict(config),
                            [args.features], [out / "selection_report.json"])
    if report.final_horizontal:
        print(f"select: horizontal={report.final_horizontal}")
        print(f"select: vertical={report.final_vertical}")
    else:
        print(f"select: stopped after stage {args.stage}")
    return EXIT_OK


def cmd_sequences(args) -> int:
    _require([args.features] + ([args.selection] if args.selection else []))
    out = _out_dir(args.out)
    table = features.read_features_csv(args.features)
    h_cols, v_cols = None, None
    if args.selection:
        report = json.loads(Path(args.selection).read_text())
        h_cols, v_cols = report["final_horizontal"], report["final_vertical"]
    ratios = tuple(float(r) for r in args.ratios.split(","))
    samples, skips = sequences.assemble_samples(
        table, h=args.h, v=args.v, stride=args.stride,
        d_range=range(args.d_min, args.d_max + 1),
        horizontal_columns=h_cols, vertical_columns=v_cols,
    )
    corpus = sequences.chronological_split(
        samples, ratios=ratios, horizontal_columns=h_cols, vertical_columns=v_cols, skips=skips
    )
    sequences.save_split(out, corpus, extra_meta={
        "h": args.h, "v": args.v, "stride": args.stride,
        "d_min": args.d_min, "d_max": args.d_max, "ratios": list(ratios),
    })
    outputs = [out / n for n in ("meta.json", "samples.csv", "tensors.bin")]
    manifest.write_manifest(
        out, "sequences", None,
        {"h": args.h, "v": args.v, "stride": args.stride,
         "d_min": args.d_min, "d_max": args.d_max, "ratios": args.ratios},
        [args.features], outputs,
    )
    print(f"sequences: {len(samples)} samples "
          f"(train {len(corpus.train)}/val {len(corpus.validation)}/test {len(corpus.test)}, "
          f"skipped {sum(skips.values())}) -> {out}")
    return EXIT_OK


def _train_config_for(spec: ModelSpec, args, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        optimizer=args.optimizer or spec.optimizer,
        learning_rate=args.learning_rate or spec.learning_rate,
        seed=seed,
    )


def cmd_train(args) -> int:
    _require([Path(args.sequences) / "tensors.bin"])
    seed = _resolve_seed(args.seed)
    corpus = sequences.load_split(args.sequences)
    spec = ModelSpec.for_variant(
        args.variant,
        h_features=corpus.train.h.shape[2],
        v_features=corpus.train.v.shape[2],
    )
    cfg = _train_config_for(spec, args, seed)
    model, log = fit(spec, corpus, cfg)
    run_dir = _out_dir(Path(args.out) / "runs" / args.variant / str(seed))
    save_checkpoint(run_dir / "best.ckpt", model)
    write_train_log_csv(run_dir / "train_log.csv", log)
    manifest.write_manifest(
        run_dir, "train", seed,
        {"variant": args.variant, **{k: getattr(cfg, k) for k in cfg.__dataclass_fields__}},
        [Path(args.sequences) / "tensors.bin"],
        [run_dir / "best.ckpt", run_dir / "train_log.csv"],
    )
    print(f"train: {args.variant} seed {seed}: best val {log.best_val_loss:.4f} "
          f"at epoch {log.best_epoch}/{log.stopped_epoch} -> {run_dir}")
    return EXIT_OK


def _leaderboard_task(payload):
    """Worker for parallel evaluation; loads the corpus from disk."""
    sequences_dir, variant, seed, cfg_fields = payload
    corpus = sequences.load_split(sequences_dir)
    spec = ModelSpec.for_variant(
        variant, h_features=corpus.train.h.shape[2], v_features=corpus.train.v.shape[2]
    )
    cfg = TrainConfig(**{**cfg_fields, "optimizer": spec.optimizer,
                         "learning_rate": spec.learning_rate, "seed": seed})
    model, _ = fit(spec, corpus, cfg)
    pred = model.predict(corpus.test.h, corpus.test.v)
    metrics = evaluation.compute_metrics(pred, corpus.test.y, corpus.test.naive)
    return variant, seed, metrics


def cmd_evaluate(args) -> int:
    _require([Path(args.sequences) / "tensors.bin"])
    out = _out_dir(args.out)
    corpus = sequences.load_split(args.sequences)
    variants = [v for v in args.variants.split(",") if v] if args.variants else []
    seeds = [int(s) for s in args.seeds.split(",")]
    baselines = [b for b in args.baselines.split(",") if b] if args.baselines else []

    rows = []
    if variants:
        cfg_fields = {"batch_size": args.batch_size, "max_epochs": args.max_epochs}
        tasks = [(args.sequences, v, s, cfg_fields) for v in variants for s in seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_leaderboard_task, tasks))
        else:
            results = [_leaderboard_task(t) for t in tasks]
        by_variant: dict[str, list] = {}
        for variant, seed, metrics in sorted(results, key=lambda r: (r[0], r[1])):
            by_variant.setdefault(variant, []).append(metrics)
        for variant in variants:
            per = by_variant[variant]
            row = {"model": variant, "seeds": len(per)}
            for metric in evaluation.METRIC_NAMES:
                vals = np.asarray([getattr(m, metric) for m in per])
                row[f"{metric}_mean"] = float(vals.mean())
                row[f"{metric}_std"] = float(vals.std())
            rows.append(row)
    for kind in baselines:
        metrics, _ = evaluation.baseline_fit_predict(kind, corpus, seed=_resolve_seed(args.seed))
        row = {"model": kind, "seeds": 1}
        for metric in evaluation.METRIC_NAMES:
            row[f"{metric}_mean"] = getattr(metrics, metric)
            row[f"{metric}_std"] = 0.0
        rows.append(row)

    board = pd.DataFrame.from_records(rows)
    board.to_csv(out / "leaderboard.csv", index=False)
    manifest.write_manifest(
        out, "evaluate", _resolve_seed(args.seed),
        {"variants": args.variants, "seeds": args.seeds, "baselines": args.baselines,
         "max_epochs": args.max_epochs, "batch_size": args.batch_size},
        [Path(args.sequences) / "tensors.bin"], [out / "leaderboard.csv"],
    )
    print(board.to_string(index=False))
    return EXIT_OK


def _load_models(checkpoints: list[str]) -> dict:
    models = {}
    for path in checkpoints:
        model = load_checkpoint(path)
        models[model.spec.variant] = model
    return models


def cmd_horizon(args) -> int:
    _require([Path(args.sequences) / "tensors.bin"] + args.checkpoint)
    out = _out_dir(args.out)
    corpus = sequences.load_split(args.sequences)
    models = _load_models(args.checkpoint)
    frame = evaluation.horizon_analysis(models, corpus, d_range=range(args.d_min, args.d_max + 1))
    frame.to_csv(out / "horizon.csv", index=False)
    d_values = sorted(frame["d"].unique())
    for metric in ("mae", "r2"):
        series = {}
        for name in frame["model"].unique():
            sub = frame[frame.model == name].set_index("d").reindex(d_values)
            series[name] = [float(v) for v in sub[metric]]
        plots.line_chart_svg(
            out / f"horizon_{metric}.svg",
            f"Test {metric.upper()} by days before departure",
            "days before departure", metric.upper(), d_values, series,
        )
    outputs = [out / "horizon.csv", out / "horizon_mae.svg", out / "horizon_r2.svg"]
    manifest.write_manifest(out, "horizon", None,
                            {"d_min": args.d_min, "d_max": args.d_max},
                            args.checkpoint, outputs)
    print(f"horizon: {len(frame)} cells -> {out}")
    return EXIT_OK


def cmd_categories(args) -> int:
    _require([Path(args.sequences) / "tensors.bin", args.routes, args.airports] + args.checkpoint)
    out = _out_dir(args.out)
    corpus = sequences.load_split(args.sequences)
    airports = ingest.load_airports(args.airports)
    routes = ingest.load_routes(args.routes, airports)
    models = _load_models(args.checkpoint)
    frame = evaluation.category_report(models, corpus, routes)
    frame.to_csv(out / "categories.csv", index=False)
    outputs = [out / "categories.csv"]
    for pair in evaluation.CATEGORY_PAIRS:
        sub = frame[frame.pair == pair]
        tags = sorted(sub.tag.unique())
        series = {}
        for name in sub["model"].unique():
            series[name] = [
                float(sub[(sub.tag == t) & (sub.model == name)]["mae"].iloc[0]) for t in tags
            ]
        path = out / f"categories_{pair}_mae.svg"
        plots.line_chart_svg(
            path, f"Test MAE by {pair} ({' / '.join(tags)})",
            f"{pair} tag index", "MAE", list(range(len(tags))), series,
        )
        outputs.append(path)
    manifest.write_manifest(out, "categories", None, {}, args.checkpoint, outputs)
    print(f"categories: {len(frame)} cells -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require([args.features])
    out = _out_dir(args.out)
    seed = _resolve_seed(args.seed)
    table = features.read_features_csv(args.features)
    sizes = [int(s) for s in args.sizes.split(",")]
    architectures = args.architectures.split(",")
    frame = sequences.window_sweep(
        table, sizes, architectures=architectures, symmetric=not args.asymmetric,
        stride=args.stride, max_epochs=args.max_epochs, seed=seed,
    )
    frame.to_csv(out / "sweep.csv", index=False)
    best = frame.loc[frame.groupby(["h", "v"])["val_loss"].transform("mean").idxmin()]
    (out / "best_window.toml").write_text(f"h = {int(best.h)}\nv = {int(best.v)}\n")
    manifest.write_manifest(
        out, "sweep", seed,
        {"sizes": args.sizes, "architectures": args.architectures,
         "asymmetric": args.asymmetric, "max_epochs": args.max_epochs},
        [args.features], [out / "sweep.csv", out / "best_window.toml"],
    )
    print(frame.to_string(index=False))
    print(f"sweep: best window h={int(best.h)} v={int(best.v)} -> {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    _require([args.checkpoint, Path(args.sequences) / "tensors.bin"])
    model = load_checkpoint(args.checkpoint)
    corpus = sequences.load_split(args.sequences)
    part = corpus.partitions()[args.partition]
    keys = part.keys.copy()
    mask = np.ones(len(part), dtype=bool)
    if args.route:
        mask &= (keys["route_id"] == args.route).to_numpy()
    if args.flight_date:
        mask &= (keys["flight_date"] == pd.Timestamp(args.flight_date)).to_numpy()
    if args.d is not None:
        mask &= (keys["days_before_departure"] == args.d).to_numpy()
    if not mask.any():
        raise MissingInput("no samples match the requested keys")
    preds = model.predict(part.h[mask], part.v[mask])
    frame = keys[mask].reset_index(drop=True)
    frame["plf_pred"] = preds
    if args.capacity is not None:
        frame["passengers"] = np.rint(preds / 100.0 * args.capacity).astype(int)
    frame["flight_date"] = frame["flight_date"].dt.strftime("%Y-%m-%d")
    if args.out:
        out = _out_dir(args.out)
        frame.to_csv(out / "predictions.csv", index=False)
        manifest.write_manifest(
            out, "predict", None,
            {"checkpoint": args.checkpoint, "partition": args.partition,
             "capacity": args.capacity},
            [args.checkpoint], [out / "predictions.csv"],
        )
    print(frame.to_string(index=False))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadcast",
        description="Flight load-factor forecasting pipeline",
    )
    parser.add_argument("--version", action="version", version=f"loadcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded synthetic booking corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="generator config TOML")
    p.add_argument("--seed", type=int, help="corpus seed (default LOADCAST_SEED or 0)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="validate and aggregate raw reservations")
    p.add_argument("--reservations", required=True, help="raw reservations CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--strict-aircraft", action="store_true",
                   help="error when merged legs disagree on aircraft type")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="build the 39-feature candidate table")
    p.add_argument("--snapshots", required=True, help="aggregated snapshots CSV")
    p.add_argument("--airports", required=True)
    p.add_argument("--holidays", required=True)
    p.add_argument("--routes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rolling-window", type=int, default=7)
    p.add_argument("--weekend", choices=("fri-sat", "sat-sun"), default="fri-sat")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select", help="run the seven-stage feature selection")
    p.add_argument("--features", required=True, help="features CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--stage", type=int, choices=range(1, 8),
                   help="stop after this stage (isolated runs)")
    p.add_argument("--h", type=int, default=3)
    p.add_argument("--v", type=int, default=3)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sequences", help="assemble, split, and standardise samples")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int, default=3)
    p.add_argument("--v", type=int, default=3)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--d-min", type=int, default=0)
    p.add_argument("--d-max", type=int, default=21)
    p.add_argument("--ratios", default="0.70,0.15,0.15")
    p.add_argument("--selection", help="selection_report.json with stream columns")
    p.set_defaults(func=cmd_sequences)

    p = sub.add_parser("train", help="train one variant on a sequences directory")
    p.add_argument("--sequences", required=True)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--optimizer", choices=("adam", "rmsprop"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="train variants over seeds, write leaderboard")
    p.add_argument("--sequences", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default="", help="comma-separated variant names")
    p.add_argument("--seeds", default="0")
    p.add_argument("--baselines", default="",
                   help="comma-separated: naive,linear,ridge,random_forest")
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--jobs", type=int, default=1, help="parallel model slots")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("horizon", help="per-horizon metrics and curves")
    p.add_argument("--sequences", required=True)
    p.add_argument("--checkpoint", action="append", required=True,
                   help="checkpoint path (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--d-min", type=int, default=0)
    p.add_argument("--d-max", type=int, default=21)
    p.set_defaults(func=cmd_horizon)

    p = sub.add_parser("categories", help="per-route-category metric tables")
    p.add_argument("--sequences", required=True)
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--routes", required=True)
    p.add_argument("--airports", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_categories)

    p = sub.add_parser("sweep", help="window-size grid search")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="3,6,9,12,15,18")
    p.add_argument("--architectures", default="SLSTM-H,SLSTM-V,SLSTM-C,DLSTM")
    p.add_argument("--asymmetric", action="store_true",
                   help="evaluate the full cross product of sizes")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="load a checkpoint and emit forecasts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequences", required=True)
    p.add_argument("--partition", choices=("train", "validation", "test"), default="test")
    p.add_argument("--route")
    p.add_argument("--flight-date")
    p.add_argument("--d", type=int)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--plf-only", action="store_true",
                       help="emit load factor only (default)")
    group.add_argument("--capacity", type=int,
                       help="also derive passenger counts for this capacity")
    p.add_argument("--out", help="write predictions.csv here instead of stdout only")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except FileNotFoundError as exc:
        print(f"error: input not found: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (NumericError, DivergenceDetected, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LoadcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
