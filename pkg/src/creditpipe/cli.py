"""Command-line entry point: ``creditpipe <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ensemble as ens
from .errors import CreditPipeError, InputError, PipelineError
from .evaluate import ConfusionMatrix, PayoffMatrix, profit, save_json
from .featsel import ClusterCut, cluster_features, correlation_matrix, pick_representatives, save_dendrogram, vif_prune
from .frame import Frame, IngestConfig, read_csv, write_csv
from .pipeline import MODES, PipelineConfig, _evaluate_model, _target, run_pipeline
from .preprocess import PreprocessModel, apply_preprocessor, fit_preprocessor
from .resample import AdasynConfig, adasyn, adasyn_multiclass
from .synthgen import GeneratorSpec, generate, write_ground_truth


def _read(path: str, label_column: str | None, id_columns=()) -> Frame:
    return read_csv(path, IngestConfig(label_column, "", tuple(id_columns)))


def _xy(args) -> tuple[Frame, np.ndarray]:
    """Feature frame plus integer targets, either derived by mode or read from a column."""
    if args.mode:
        frame = _read(args.input, args.label_column, args.id_columns)
        frame, labels = _target(frame, args.mode, args.label_column)
        return frame, labels.classes
    frame = _read(args.input, args.target_column, args.id_columns)
    if frame.column_mask(args.target_column).any():
        raise InputError(f"target column {args.target_column!r} has missing cells")
    y = frame.column(args.target_column)
    if not np.array_equal(y, np.round(y)):
        raise InputError(f"target column {args.target_column!r} must hold integer class ids")
    return frame, y.astype(np.int64)


def _add_target_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mode", choices=MODES, help="derive the target from the raw label column")
    g.add_argument("--target-column", help="column that already holds integer class ids")
    p.add_argument("--label-column", default="goodbad")
    p.add_argument("--id-columns", nargs="*", default=[])


def cmd_generate(args) -> int:
    spec = GeneratorSpec.from_dict(json.loads(Path(args.config).read_text())) if args.config else GeneratorSpec()
    overrides = {k: v for k, v in (("seed", args.seed), ("n_rows", args.rows), ("n_features", args.features)) if v is not None}
    spec = replace(spec, **overrides)
    frame, truth = generate(spec)
    write_csv(frame, args.out)
    truth_path = args.truth or str(Path(args.out).with_suffix(".truth.json"))
    write_ground_truth(truth, truth_path, spec)
    print(f"wrote {frame.n_rows} rows x {len(frame.feature_names)} features to {args.out}; ground truth in {truth_path}")
    return 0


def cmd_run(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, val in (("input_path", args.input), ("mode", args.mode), ("seed", args.seed),
                     ("out_dir", args.out_dir), ("n_jobs", args.jobs)):
        if val is not None:
            doc[key] = val
    if args.trials is not None:
        doc.setdefault("search", {})["trials"] = args.trials
    config = PipelineConfig.from_dict(doc)
    report = run_pipeline(config)
    for kind, entry in report.classifiers.items():
        line = f"{kind:18s} {report.objective}={entry['objective']:.4f} auc={entry['validation']['auc']:.4f}"
        if "profit" in entry:
            line += f" profit=${entry['profit']['dollars']}"
        print(line)
    print(f"best: {report.best_classifier}")
    if config.out_dir:
        print(f"report: {Path(config.out_dir) / 'report.json'}")
    else:
        sys.stdout.write(report.canonical() + "\n")
    return 0


def cmd_preprocess(args) -> int:
    frame = _read(args.input, args.label_column, args.id_columns)
    if args.apply:
        model = PreprocessModel.load(args.apply)
    else:
        model = fit_preprocessor(frame)
        model.save(args.model)
        print(f"kept {len(model.kept_columns)} columns, dropped {len(model.dropped_columns)}; model in {args.model}")
    write_csv(apply_preprocessor(model, frame), args.out)
    return 0


def cmd_select_features(args) -> int:
    frame = _read(args.input, args.label_column, args.id_columns)
    cut = ClusterCut(height=None, count=args.cut_count) if args.cut_count else ClusterCut(height=args.cut_height)
    names = frame.feature_names
    clustering = cluster_features(correlation_matrix(frame, names), cut, names)
    reps = pick_representatives(frame, clustering)
    trace = vif_prune(frame, args.vif_threshold, reps)
    selected = [n for n in reps if n in trace.kept]
    keep = [n for n in frame.names if n in selected or frame.meta(n).role != "feature"]
    write_csv(frame.select(keep), args.out)
    if args.report:
        save_json({"clusters": clustering.members(), "representatives": reps,
                   "vif": trace.to_json(), "selected": selected}, args.report)
    if args.dendrogram:
        save_dendrogram(clustering, args.dendrogram)
    print(f"{len(names)} features -> {clustering.n_clusters} clusters -> {len(selected)} after VIF")
    return 0


def cmd_resample(args) -> int:
    frame, y = _xy(args)
    names = frame.feature_names
    X = frame.feature_matrix(names)
    cfg = AdasynConfig(k_neighbors=args.k, beta=args.beta, seed=args.seed)
    if len(np.unique(y)) == 2:
        Xr, yr, rep = adasyn(X, y, cfg)
    else:
        Xr, yr, rep = adasyn_multiclass(X, y, cfg)
    cols = {n: Xr[:, i] for i, n in enumerate(names)}
    cols["target"] = yr.astype(np.float64)
    write_csv(Frame.from_columns(cols, roles={"target": "label"}), args.out)
    if args.report:
        rep.save(args.report)
    print(f"{len(X)} rows -> {len(Xr)} rows ({rep.generated} synthetic); class column 'target'")
    return 0


def cmd_train(args) -> int:
    frame, y = _xy(args)
    tree = ens.TreeParams(max_depth=args.max_depth,
                          split_mode="random_threshold" if args.kind == "extra_trees" else "exhaustive")
    params = ens.EnsembleParams(args.kind, args.n_estimators, tree, learning_rate=args.learning_rate,
                                l2_leaf_reg=args.l2_leaf_reg, seed=args.seed)
    model = ens.fit(frame.feature_matrix(), y, params, n_jobs=args.jobs)
    model.feature_names = frame.feature_names
    model.save(args.out)
    print(f"trained {args.kind} with {len(model.trees)} trees; model in {args.out}")
    return 0


def _model_matrix(model: ens.Ensemble, frame: Frame) -> np.ndarray:
    names = model.feature_names or frame.feature_names
    missing = [n for n in names if n not in frame]
    if missing:
        raise InputError(f"input lacks model features {missing[:5]}")
    return frame.feature_matrix(names)


def cmd_predict(args) -> int:
    model = ens.Ensemble.load(args.model)
    frame = _read(args.input, args.label_column if args.label_column in _header(args.input) else None, args.id_columns)
    P = ens.predict_proba(model, _model_matrix(model, frame))
    cols = {f"p_{c}": P[:, i] for i, c in enumerate(model.classes.tolist())}
    cols["predicted"] = ens.labels_from_proba(model.classes, P, args.threshold).astype(np.float64)
    write_csv(Frame.from_columns(cols), args.out)
    print(f"wrote {len(P)} probability rows to {args.out}")
    return 0


def _header(path: str) -> list[str]:
    with open(path) as fh:
        return fh.readline().strip().split(",")


def cmd_evaluate(args) -> int:
    model = ens.Ensemble.load(args.model)
    frame, y = _xy(args)
    classes = tuple(int(c) for c in model.classes)
    metrics, cm, (roc, _) = _evaluate_model(model, _model_matrix(model, frame), y, classes)
    save_json(metrics, args.out)
    if args.roc and roc is not None:
        roc.to_csv(args.roc)
    print(f"accuracy={metrics['accuracy']:.4f} auc={metrics['auc']:.4f}; metrics in {args.out}")
    return 0


def cmd_profit(args) -> int:
    doc = json.loads(Path(args.confusion).read_text())
    cm = ConfusionMatrix.from_json(doc.get("confusion", doc))
    payoff = PayoffMatrix.from_json(json.loads(Path(args.payoff).read_text())) if args.payoff else PayoffMatrix.risk_default()
    print(f"${profit(cm, payoff)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="creditpipe", description="Credit response/risk modelling pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset and its ground-truth sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--config", help="generator spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--features", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--input", help="raw CSV (default: synthetic data)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preprocess", help="fit (or apply) the cleaning chain")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="fit on --input and save the model here")
    g.add_argument("--apply", help="apply a saved model instead of fitting")
    p.add_argument("--label-column", default="goodbad")
    p.add_argument("--id-columns", nargs="*", default=[])
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("select-features", help="cluster representatives, then VIF pruning")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--dendrogram")
    p.add_argument("--cut-height", type=float, default=0.7)
    p.add_argument("--cut-count", type=int)
    p.add_argument("--vif-threshold", type=float, default=5.0)
    p.add_argument("--label-column", default="goodbad")
    p.add_argument("--id-columns", nargs="*", default=[])
    p.set_defaults(func=cmd_select_features)

    p = sub.add_parser("resample", help="ADASYN oversampling")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    _add_target_args(p)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("train", help="fit one ensemble")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=ens.KINDS, default="random_forest")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--n-estimators", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--l2-leaf-reg", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    _add_target_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="class probabilities for a feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--label-column", default="goodbad")
    p.add_argument("--id-columns", nargs="*", default=[])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics, AUC and ROC table for a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--roc")
    _add_target_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("profit", help="price a confusion matrix with a payoff matrix")
    p.add_argument("--confusion", required=True, help="JSON with classes and counts (or an evaluate output)")
    p.add_argument("--payoff", help="JSON payoff in dollars (default: risk payoff)")
    p.set_defaults(func=cmd_profit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if getattr(args, "out_dir", None) and exc.provenance:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            path = Path(args.out_dir) / "provenance.partial.json"
            path.write_text(json.dumps(exc.provenance, sort_keys=True, indent=1, default=str))
            print(f"partial provenance: {path}", file=sys.stderr)
        return 2
    except (CreditPipeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
