"""Command-line interface: ``semcad <subcommand> ...``.

Failures print a single ``stage: message`` line on stderr and exit with 1.
Configuration precedence is flags > config file > defaults; the config file
defaults to ``$SEMCAD_CONFIG`` when that is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from semcad import baselines, evaluation, pca, plots, synth
from semcad.clustering import write_assignment_csv
from semcad.data_model import (
    ALL_FEATURES,
    DEFAULT_FEATURES,
    AlarmTypeMapping,
    VocabularyEncoder,
    fit_encoder,
    ingest_csv,
    random_split,
    temporal_split,
    transform,
    write_csv,
)
from semcad.feature_selection import rank_features, write_scores_csv
from semcad.pipeline import PipelineBundle, PipelineConfig, StageError, derive_seed, fit_semcad, rho_sweep

CONFIG_ENV = "SEMCAD_CONFIG"


class CliError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        self.message = message
        super().__init__(f"{stage}: {message}")


class _stage:
    """Re-raise anything escaping the block as a CliError for ``name``."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, CliError) or not isinstance(exc, Exception):
            return False
        if isinstance(exc, StageError):
            raise CliError(exc.stage, str(exc).split(": ", 1)[-1]) from exc
        raise CliError(self.name, " ".join(str(exc).split()) or type(exc).__name__) from exc


def _out(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _load_json_file(path: Optional[str]) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with _stage("config"):
        return json.loads(Path(path).read_text(encoding="utf-8"))


def _read_records(path, schema_path: Optional[str] = None, stage: str = "preprocess"):
    with _stage(stage):
        schema = json.loads(Path(schema_path).read_text(encoding="utf-8")) if schema_path else None
        return ingest_csv(path, schema)


def _mapping(path: Optional[str]) -> AlarmTypeMapping:
    with _stage("preprocess"):
        return AlarmTypeMapping.load(path) if path else AlarmTypeMapping()


def _csv_list(text: Optional[str]):
    return None if text is None else tuple(t.strip() for t in text.split(",") if t.strip())


def _labels(records) -> np.ndarray:
    return np.fromiter((r.label for r in records), dtype=np.int64, count=len(records))


def _sibling(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


def _pipeline_config(args) -> PipelineConfig:
    doc = _load_json_file(args.config)
    with _stage("config"):
        cfg = PipelineConfig.from_json(doc.get("pipeline", doc))
        train = cfg.train
        train_over = {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "class_weight": args.class_weight,
            "p_unknown": args.p_unknown,
            "hidden": _int_tuple(args.hidden),
            "embedding_dims": _int_tuple(args.embedding_dims),
        }
        train = replace(train, **{k: v for k, v in train_over.items() if v is not None})
        over = {
            "seed": args.seed,
            "features": _csv_list(args.features),
            "select_k": args.select_k,
            "severity_scale": _csv_list(args.severity_scale),
            "n_components": args.components,
            "variance_threshold": args.variance_threshold,
            "n_clusters": args.clusters,
            "rho": args.rho,
            "rho_rule": args.rho_rule,
        }
        cfg = replace(cfg, train=train, **{k: v for k, v in over.items() if v is not None})
        if args.no_standardize:
            cfg = replace(cfg, standardize=False)
        return cfg


def _int_tuple(text: Optional[str]):
    if text is None:
        return None
    return tuple(int(t) for t in text.split(",") if t.strip())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    with _stage("synth"):
        doc = _load_json_file(args.config)
        doc = doc.get("synth", doc)
        cfg = synth.SynthConfig.from_json(doc)
        over = {
            "n_rows": args.rows,
            "anomaly_rate": args.anomaly_rate,
            "strength": args.strength,
            "n_signatures": args.signatures,
            "seed": args.seed,
            "start": args.start,
            "end": args.end,
        }
        cfg = replace(cfg, **{k: v for k, v in over.items() if v is not None})
        records = synth.generate(cfg)
        write_csv(records, args.out)
        _out(f"wrote {len(records)} rows ({sum(r.label for r in records)} anomalies) to {args.out}")
        if args.split is not None:
            if args.split_mode == "temporal":
                train, test = temporal_split(records, args.split)
            else:
                train, test = random_split(records, args.split, derive_seed(cfg.seed, "split"))
            write_csv(train, _sibling(args.out, ".train.csv"))
            write_csv(test, _sibling(args.out, ".test.csv"))
            _out(f"split {len(train)} train / {len(test)} test ({args.split_mode})")
    return 0


def cmd_preprocess(args) -> int:
    records = _read_records(args.input, args.schema)
    with _stage("preprocess"):
        features = _csv_list(args.features) or DEFAULT_FEATURES
        scale = _csv_list(args.severity_scale)
        kwargs = {"severity_scale": scale} if scale else {}
        encoder = fit_encoder(records, _mapping(args.mapping), features=features, **kwargs)
        encoder.save(args.encoder_out)
        if args.encoded_out:
            data = transform(records, encoder)
            with open(args.encoded_out, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([*data.features, "label"])
                for row, y in zip(data.codes, data.labels):
                    w.writerow([*row.tolist(), int(y)])
        cards = ", ".join(f"{f}={c}" for f, c in zip(encoder.features, encoder.cardinalities))
        _out(f"encoded {len(records)} rows; cardinalities (incl. UNKNOWN): {cards}")
    return 0


def cmd_select_features(args) -> int:
    records = _read_records(args.input, args.schema)
    with _stage("select-features"):
        scale = _csv_list(args.severity_scale)
        kwargs = {"severity_scale": scale} if scale else {}
        features = _csv_list(args.features) or ALL_FEATURES
        encoder = fit_encoder(records, _mapping(args.mapping), features=features, **kwargs)
        scores = rank_features(transform(records, encoder), args.k)
        write_scores_csv(scores, args.out)
        for s in scores:
            _out(f"{'*' if s.selected else ' '} {s.feature:<18} U={s.theils_u:.4f} chi2={s.chi_square:.2f} dof={s.dof}")
    return 0


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    records = _read_records(args.input, args.schema)
    mapping = _mapping(args.mapping)
    t0 = time.perf_counter()
    with _stage("train"):
        bundle, art = fit_semcad(records, cfg, mapping, log=_out)
    with _stage("save"):
        bundle.save(args.out)
        pca.write_spectrum_csv(pca.variance_spectrum(bundle.pca, args.first_k), _sibling(args.out, ".spectrum.csv"))
        pca.write_projection_csv(art.points, art.labels, _sibling(args.out, ".scatter.csv"))
        write_assignment_csv(art.points, art.labels, art.clusters, bundle.labeling.flagged, _sibling(args.out, ".clusters.csv"))
        if art.feature_scores is not None:
            write_scores_csv(art.feature_scores, _sibling(args.out, ".features.csv"))
        Path(_sibling(args.out, ".config.json")).write_text(
            json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if args.svg:
            plots.write_scatter_svg(art.points, art.labels, _sibling(args.out, ".scatter.svg"))
    lab = bundle.labeling
    _out(f"embedding width D={bundle.embedding.width}; PCA kept {bundle.pca.n_components} components")
    for k in range(len(lab.anomaly_counts)):
        _out(
            f"cluster {k}: anomalies={lab.anomaly_counts[k]} normals={lab.normal_counts[k]} "
            f"fraction={lab.anomaly_fraction[k]:.3f}{' FLAGGED' if lab.flagged[k] else ''}"
        )
    _out(f"total: {time.perf_counter() - t0:.2f}s; bundle written to {args.out}")
    return 0


def _load_bundle(path) -> PipelineBundle:
    with _stage("load"):
        return PipelineBundle.load(path)


def cmd_classify(args) -> int:
    bundle = _load_bundle(args.bundle)
    records = _read_records(args.input, args.schema)
    with _stage("classify"):
        decisions = bundle.classify(records)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "decision"])
            for i, d in enumerate(decisions):
                w.writerow([i, "anomaly" if d else "normal"])
        _out(f"classified {len(records)} rows: {int(decisions.sum())} anomalies")
    return 0


def _evaluate_bundle(bundle: PipelineBundle, records, prefix: Path, target: float) -> evaluation.ClassReport:
    y = _labels(records)
    with _stage("evaluate"):
        points = bundle.project(records)
        clusters = bundle.clusters(records)
        pred = bundle.labeling.flagged[clusters].astype(np.int64)
        report = evaluation.precision_recall(pred, y, bundle.labeling.threshold, "SEMC-AD")
        sweep = []
        for rho, p in rho_sweep(bundle, records):
            r = evaluation.precision_recall(p, y, rho, "SEMC-AD")
            sweep.append((rho, r.anomaly.precision, r.anomaly.recall))
        with open(_with_suffix(prefix, ".rho_sweep.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "precision", "recall"])
            for rho, p, r in sweep:
                w.writerow([rho, "" if p is None else repr(p), "" if r is None else repr(r)])
        write_assignment_csv(points, y, clusters, bundle.labeling.flagged, _with_suffix(prefix, ".clusters.csv"))
        meets = [(r, p, rho) for rho, p, r in sweep if p is not None and p >= target]
        extra = {"config": bundle.config.to_json(), "target_precision": target}
        if meets:
            r, p, rho = max(meets, key=lambda t: (t[0], t[2]))
            extra["rho_at_target"] = {"rho": rho, "precision": p, "recall": r}
        return replace(report, extra=extra)


def _with_suffix(prefix: Path, suffix: str) -> Path:
    return prefix.with_name(prefix.name + suffix)


def _evaluate_scores(scores, y, method: str, target: float, prefix: Path, extra: dict) -> evaluation.ClassReport:
    with _stage("evaluate"):
        curve = evaluation.pr_curve(scores, y)
        evaluation.write_pr_csv(curve, _with_suffix(prefix, ".pr.csv"))
        _, report = evaluation.tune_threshold(scores, y, target, method)
        return replace(report, extra={**extra, "target_precision": target})


def cmd_evaluate(args) -> int:
    if bool(args.bundle) == bool(args.model):
        raise CliError("evaluate", "give exactly one of --bundle or --model")
    records = _read_records(args.input, args.schema)
    prefix = Path(args.out_prefix)
    if args.bundle:
        report = _evaluate_bundle(_load_bundle(args.bundle), records, prefix, args.target_precision)
    else:
        with _stage("load"):
            model, doc = baselines.load_model(args.model)
            encoder = VocabularyEncoder.from_json(doc["encoder"])
        with _stage("evaluate"):
            data = transform(records, encoder)
            scores = model.predict_proba(data.codes)
        report = _evaluate_scores(scores, data.labels, doc["method"], args.target_precision, prefix, {"config": doc["config"]})
    with _stage("report"):
        evaluation.write_report([report], _with_suffix(prefix, ".report.json"), _with_suffix(prefix, ".report.txt"))
    _out(evaluation.format_table([report]))
    return 0


def cmd_baseline(args) -> int:
    train_records = _read_records(args.train, args.schema)
    test_records = _read_records(args.test, args.schema)
    mapping = _mapping(args.mapping)
    with _stage("preprocess"):
        scale = _csv_list(args.severity_scale)
        kwargs = {"severity_scale": scale} if scale else {}
        encoder = fit_encoder(train_records, mapping, **kwargs)
        train = transform(train_records, encoder)
        test = transform(test_records, encoder)
    with _stage(args.method):
        if args.method == "rf":
            cfg = baselines.ForestConfig(
                n_trees=args.trees,
                max_depth=args.max_depth if args.max_depth is not None else 12,
                min_leaf=args.min_leaf if args.min_leaf is not None else 5,
                max_features=args.max_features,
                seed=derive_seed(args.seed, "rf"),
            )
            model = baselines.rf_fit(train, cfg)
        else:
            cfg = baselines.BoostConfig(
                rounds=args.rounds,
                max_depth=args.max_depth if args.max_depth is not None else 4,
                learning_rate=args.learning_rate,
                reg_lambda=args.reg_lambda,
                min_leaf=args.min_leaf if args.min_leaf is not None else 1,
                seed=derive_seed(args.seed, "gbt"),
            )
            model = baselines.gbt_fit(train, cfg)
    out = Path(args.out)
    with _stage("save"):
        baselines.save_model(model, out, {"encoder": encoder.to_json(), "seed": args.seed})
    scores = model.predict_proba(test.codes)
    prefix = out.with_suffix("")
    report = _evaluate_scores(scores, test.labels, args.method, args.target_precision, prefix, {"config": baselines.model_to_json(model)["config"]})
    with _stage("report"):
        evaluation.write_report([report], _with_suffix(prefix, ".report.json"), _with_suffix(prefix, ".report.txt"))
    _out(evaluation.format_table([report]))
    return 0


def cmd_pr_curve(args) -> int:
    with _stage("pr-curve"):
        scores, labels = [], []
        with open(args.input, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                scores.append(float(row[args.score_column]))
                labels.append(int(row[args.label_column]))
        curve = evaluation.pr_curve(scores, labels)
        evaluation.write_pr_csv(curve, args.out)
        _out(f"{len(curve)} operating points written to {args.out}")
        if args.target_precision is not None:
            thr, report = evaluation.tune_threshold(scores, labels, args.target_precision)
            _out(f"threshold {thr!r}: precision {report.anomaly.precision:.4f} recall {report.anomaly.recall:.4f}")
    return 0


def cmd_spectrum(args) -> int:
    bundle = _load_bundle(args.bundle)
    with _stage("spectrum"):
        ratios = pca.variance_spectrum(bundle.pca, args.first_k)
        pca.write_spectrum_csv(ratios, args.out)
        _out(f"{len(ratios)} variance ratios written to {args.out}; first two: {', '.join(f'{r:.4f}' for r in ratios[:2])}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common_input(p, name="--input"):
    p.add_argument(name, required=True, help="alarm CSV")
    p.add_argument("--schema", help="JSON file mapping record fields to CSV column names")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcad", description="Supervised embedding + clustering alarm anomaly detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic alarm log")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON SynthConfig")
    p.add_argument("--rows", type=int)
    p.add_argument("--anomaly-rate", type=float)
    p.add_argument("--strength", type=float)
    p.add_argument("--signatures", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--split", type=float, help="also write <out>.train.csv/<out>.test.csv with this train fraction")
    p.add_argument("--split-mode", choices=("temporal", "random"), default="temporal")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="fit the categorical encoder")
    _add_common_input(p)
    p.add_argument("--encoder-out", required=True)
    p.add_argument("--encoded-out", help="also write the integer-coded rows")
    p.add_argument("--mapping", help="alarm-type mapping rules file")
    p.add_argument("--severity-scale", help="comma-separated severities, lowest first")
    p.add_argument("--features", help="comma-separated feature list")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("select-features", help="rank features by Theil's U and chi-square")
    _add_common_input(p)
    p.add_argument("--out", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--mapping")
    p.add_argument("--severity-scale")
    p.add_argument("--features", help="candidate features (default: categorical + calendar)")
    p.set_defaults(func=cmd_select_features)

    p = sub.add_parser("train", help="fit the SEMC-AD pipeline and write a bundle")
    _add_common_input(p)
    p.add_argument("--out", required=True, help="bundle file")
    p.add_argument("--config", help="JSON PipelineConfig (default: $SEMCAD_CONFIG)")
    p.add_argument("--mapping")
    p.add_argument("--seed", type=int)
    p.add_argument("--features")
    p.add_argument("--select-k", type=int)
    p.add_argument("--severity-scale")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--class-weight", type=float)
    p.add_argument("--p-unknown", type=float)
    p.add_argument("--hidden", help="comma-separated hidden widths")
    p.add_argument("--embedding-dims", help="comma-separated per-feature embedding widths")
    p.add_argument("--components", type=int)
    p.add_argument("--variance-threshold", type=float)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--clusters", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--rho-rule", choices=("fraction", "odds"))
    p.add_argument("--first-k", type=int, default=50, help="spectrum entries to write")
    p.add_argument("--svg", action="store_true", help="also write an SVG scatter plot")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify alarms with a bundle")
    p.add_argument("--bundle", required=True)
    _add_common_input(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="per-class report for a bundle or baseline model")
    p.add_argument("--bundle")
    p.add_argument("--model", help="baseline model JSON")
    _add_common_input(p)
    p.add_argument("--target-precision", type=float, default=0.60)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="fit and evaluate a tree baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--schema")
    p.add_argument("--method", required=True, choices=("rf", "gbt"))
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--mapping")
    p.add_argument("--severity-scale")
    p.add_argument("--target-precision", type=float, default=0.60)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--max-features", type=int)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--reg-lambda", type=float, default=1.0)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pr-curve", help="precision-recall curve from a score CSV")
    p.add_argument("--input", required=True, help="CSV with score and label columns")
    p.add_argument("--out", required=True)
    p.add_argument("--score-column", default="score")
    p.add_argument("--label-column", default="label")
    p.add_argument("--target-precision", type=float)
    p.set_defaults(func=cmd_pr_curve)

    p = sub.add_parser("spectrum", help="explained-variance spectrum of a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--first-k", type=int, default=50)
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"{exc.stage}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
