"""Config-driven orchestration: ingest through evaluation for the three model modes.

Stage order is fixed: ingest, labels, split, preprocess, cluster, vif,
resample, tune, train, evaluate. Every stage that learns anything sees the
training partition only.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
import os
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ensemble as ens
from .errors import ConfigError, CreditPipeError, PipelineError
from .evaluate import (
    ConfusionMatrix,
    PayoffMatrix,
    classification_metrics,
    confusion,
    multiclass_auc,
    profit,
    profit_cents,
    roc_auc,
)
from .featsel import ClusterCut, cluster_features, correlation_matrix, pick_representatives, vif_prune
from .frame import Frame, IngestConfig, derive_labels, read_csv, remap_response, stratified_split, subset_risk
from .preprocess import CodeRanges, apply_preprocessor, fit_preprocessor
from .resample import AdasynConfig, adasyn, adasyn_multiclass
from .synthgen import GeneratorSpec, generate

MODES = ("response", "risk", "response_risk")
STAGES = ("ingest", "labels", "split", "preprocess", "cluster", "vif", "resample", "tune", "train", "evaluate")
DEFAULT_OBJECTIVE = {"response": "recall", "risk": "specificity", "response_risk": "accuracy"}
OBJECTIVES = ("recall", "specificity", "accuracy", "precision")
REPORT_VERSION = 1


def stage_seed(master: int, stage: str) -> int:
    """Stable 63-bit seed for one stage; independent of every other stage name."""
    digest = hashlib.blake2b(f"{int(master)}/{stage}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def _domain(value, name: str) -> tuple[int, ...]:
    if isinstance(value, dict):
        lo, hi = int(value["min"]), int(value["max"])
        out = tuple(range(lo, hi + 1))
    else:
        out = tuple(int(v) for v in value)
    if not out:
        raise ConfigError(f"search domain {name} is empty")
    return tuple(sorted(set(out)))


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "random"
    max_depth: tuple[int, ...] = tuple(range(1, 51))
    n_estimators: tuple[int, ...] = tuple(range(10, 401))
    trials: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("random", "grid"):
            raise ConfigError(f"unknown search strategy {self.strategy!r}")
        object.__setattr__(self, "max_depth", _domain(self.max_depth, "max_depth"))
        object.__setattr__(self, "n_estimators", _domain(self.n_estimators, "n_estimators"))
        if min(self.max_depth) < 1:
            raise ConfigError("max_depth domain must be >= 1")
        if min(self.n_estimators) < 1:
            raise ConfigError("n_estimators domain must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def candidates(self) -> list[tuple[int, int]]:
        """(max_depth, n_estimators) pairs in evaluation order."""
        if self.strategy == "grid":
            return list(itertools.product(self.max_depth, self.n_estimators))
        rng = np.random.default_rng(self.seed)
        depths = rng.choice(np.array(self.max_depth), size=self.trials)
        counts = rng.choice(np.array(self.n_estimators), size=self.trials)
        return [(int(d), int(n)) for d, n in zip(depths, counts)]

    def to_json(self) -> dict:
        def compact(dom):
            if list(dom) == list(range(dom[0], dom[-1] + 1)):
                return {"min": dom[0], "max": dom[-1]}
            return list(dom)

        return {
            "strategy": self.strategy,
            "max_depth": compact(self.max_depth),
            "n_estimators": compact(self.n_estimators),
            "trials": self.trials,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str | None = None
    generator: GeneratorSpec | None = None  # used when input_path is None
    label_column: str = "goodbad"
    id_columns: tuple[str, ...] = ()
    mode: str = "response"
    classifiers: tuple[str, ...] = ens.KINDS
    train_fraction: float = 0.7
    code_ranges: CodeRanges = field(default_factory=CodeRanges)
    missing_drop_threshold: float = 0.5
    cluster_cut: ClusterCut = field(default_factory=ClusterCut)
    vif_threshold: float = 5.0
    adasyn: AdasynConfig = field(default_factory=AdasynConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    payoff: PayoffMatrix = field(default_factory=PayoffMatrix.risk_default)
    objective: str | None = None  # None = per-mode default
    learning_rate: float = 0.1
    l2_leaf_reg: float = 1.0
    min_child_weight: float = 1.0
    out_dir: str | None = None
    seed: int = 0
    n_jobs: int | None = None  # None = every available core; results do not depend on it

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.classifiers:
            raise ConfigError("at least one classifier is required")
        bad = [k for k in self.classifiers if k not in ens.KINDS]
        if bad:
            raise ConfigError(f"unknown classifiers {bad}")
        if len(set(self.classifiers)) != len(self.classifiers):
            raise ConfigError("classifier list has duplicates")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.vif_threshold <= 1.0:
            raise ConfigError("vif_threshold must exceed 1")
        obj = self.resolved_objective
        if obj not in OBJECTIVES:
            raise ConfigError(f"unknown objective {obj!r}")
        if obj == "specificity" and self.mode == "response_risk":
            raise ConfigError("specificity needs a binary mode")
        if self.n_jobs is not None and self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")

    @property
    def workers(self) -> int:
        return self.n_jobs or max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)

    @property
    def resolved_objective(self) -> str:
        return self.objective or DEFAULT_OBJECTIVE[self.mode]

    def to_json(self) -> dict:
        return {
            "input_path": self.input_path,
            "generator": None if self.generator is None else asdict(self.generator),
            "label_column": self.label_column,
            "id_columns": list(self.id_columns),
            "mode": self.mode,
            "classifiers": list(self.classifiers),
            "train_fraction": self.train_fraction,
            "code_ranges": [list(iv) for iv in self.code_ranges.intervals],
            "missing_drop_threshold": self.missing_drop_threshold,
            "cluster_cut": {"height": self.cluster_cut.height, "count": self.cluster_cut.count},
            "vif_threshold": self.vif_threshold,
            "adasyn": {"k_neighbors": self.adasyn.k_neighbors, "beta": self.adasyn.beta},
            "search": self.search.to_json(),
            "payoff": self.payoff.to_json(),
            "objective": self.resolved_objective,
            "learning_rate": self.learning_rate,
            "l2_leaf_reg": self.l2_leaf_reg,
            "min_child_weight": self.min_child_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("generator") is not None and not isinstance(d["generator"], GeneratorSpec):
            d["generator"] = GeneratorSpec.from_dict(d["generator"])
        if "code_ranges" in d and not isinstance(d["code_ranges"], CodeRanges):
            d["code_ranges"] = CodeRanges(tuple(tuple(iv) for iv in d["code_ranges"]))
        if "cluster_cut" in d and not isinstance(d["cluster_cut"], ClusterCut):
            cut = dict(d["cluster_cut"])
            if "count" in cut and cut["count"] is not None:
                cut.setdefault("height", None)
            d["cluster_cut"] = ClusterCut(**cut)
        if "adasyn" in d and not isinstance(d["adasyn"], AdasynConfig):
            d["adasyn"] = AdasynConfig(**d["adasyn"])
        if "search" in d and not isinstance(d["search"], SearchConfig):
            d["search"] = SearchConfig.from_dict(d["search"])
        if "payoff" in d and not isinstance(d["payoff"], PayoffMatrix):
            d["payoff"] = PayoffMatrix.from_json(d["payoff"])
        for key in ("classifiers", "id_columns"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# tuning ------------------------------------------------------------------


@dataclass
class TuneResult:
    best: ens.EnsembleParams
    objective: float
    trace: list[dict]
    model: ens.Ensemble  # fitted with ``best``

    def to_json(self) -> dict:
        return {
            "best": {"max_depth": self.best.tree.max_depth, "n_estimators": self.best.n_estimators},
            "objective": self.objective,
            "trace": self.trace,
        }


def _score(classes, P, y_valid, objective: str) -> float:
    pred = ens.labels_from_proba(classes, P)
    return classification_metrics(confusion(y_valid, pred, classes)).objective(objective)


def _round_depths(model: ens.Ensemble) -> np.ndarray:
    """Running maximum tree depth over boosting rounds."""
    K = model.trees_per_round
    per_tree = np.array([t.max_depth() for t in model.trees], dtype=np.int64)
    if per_tree.size == 0:
        return per_tree
    return np.maximum.accumulate(per_tree.reshape(-1, K).max(axis=1))


def tune(
    train: tuple[np.ndarray, np.ndarray],
    valid: tuple[np.ndarray, np.ndarray],
    kind: str,
    objective: str,
    search: SearchConfig | None = None,
    base: ens.EnsembleParams | None = None,
    n_jobs: int = 1,
) -> TuneResult:
    """Search (max_depth, n_estimators) by validation ``objective``.

    Every candidate is scored exactly as if fitted on its own. Forests are
    fitted once at the largest depth and size, and each candidate is read off
    as a truncation. A boosting run is shared by every candidate whose depth
    limit none of its first n rounds reached. Ties go to fewer estimators,
    then to smaller depth.
    """
    search = search or SearchConfig()
    if objective not in OBJECTIVES:
        raise ConfigError(f"unknown objective {objective!r}")
    Xt, yt = np.asarray(train[0], dtype=np.float64), np.asarray(train[1])
    Xv, yv = np.asarray(valid[0], dtype=np.float64), np.asarray(valid[1])
    base = base or ens.EnsembleParams(kind)
    if base.kind != kind:
        base = replace(base, kind=kind)
    if objective == "specificity" and len(np.unique(yt)) != 2:
        raise ConfigError("specificity objective needs a binary problem")
    cands = search.candidates()
    if not cands:
        raise ConfigError("empty search space")
    scores: dict[tuple[int, int], float] = {}
    sources: dict[tuple[int, int], ens.Ensemble] = {}

    if kind in ("random_forest", "extra_trees"):
        big = ens.fit(Xt, yt, base.with_(max_depth=max(d for d, _ in cands), n_estimators=max(n for _, n in cands)),
                      n_jobs=n_jobs)
        for d in sorted({d for d, _ in cands}):
            sums = ens.tree_sums(big, Xv, depth_limit=d)
            for c in sorted({c for c in cands if c[0] == d}):
                n = c[1]
                scores[c] = _score(big.classes, ens.forest_proba(sums[n - 1], n), yv, objective)
                sources[c] = big
    else:
        need: dict[int, int] = {}
        for d, n in cands:
            need[d] = max(need.get(d, 0), n)
        runs: list[tuple[int, ens.Ensemble, np.ndarray]] = []

        def covering(d: int, n: int):
            for depth, model, reach in runs:
                if depth >= d and model.params.n_estimators >= n and (n == 0 or reach[n - 1] <= d):
                    return model
            return None

        # deepest first, so shallower candidates can reuse a finished run
        pending = sorted(need, reverse=True)
        workers = max(1, int(n_jobs))
        running: dict = {}
        with ThreadPoolExecutor(workers) as pool:
            while pending or running:
                while pending and len(running) < workers:
                    d = pending.pop(0)
                    if covering(d, need[d]) is None:
                        params = base.with_(max_depth=d, n_estimators=need[d])
                        running[pool.submit(ens.fit, Xt, yt, params)] = d
                if running:
                    done, _ = wait(running, return_when=FIRST_COMPLETED)
                    for fut in sorted(done, key=lambda f: -running[f]):
                        d = running.pop(fut)
                        model = fut.result()
                        runs.append((d, model, _round_depths(model)))
        for d in sorted(need):
            model = covering(d, need[d])
            sums = ens.round_sums(model, Xv, need[d])
            F0 = np.tile(model.base_score, (len(Xv), 1))
            for c in sorted({c for c in cands if c[0] == d}):
                n = c[1]
                P = ens.scores_to_proba(model, F0 + sums[n - 1])
                scores[c] = _score(model.classes, P, yv, objective)
                sources[c] = model

    trace = [{"trial": i, "max_depth": d, "n_estimators": n, "objective": scores[(d, n)]} for i, (d, n) in enumerate(cands)]
    best_i = min(range(len(cands)), key=lambda i: (-scores[cands[i]], cands[i][1], cands[i][0], i))
    d, n = cands[best_i]
    model = ens.truncate(sources[(d, n)], max_depth=d, n_estimators=n)
    return TuneResult(model.params, scores[(d, n)], trace, model)


# run ---------------------------------------------------------------------


def canonical_json(doc: dict) -> str:
    """Sorted keys, compact separators, shortest round-trip float repr."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class RunReport:
    mode: str
    objective: str
    best_classifier: str
    classifiers: dict[str, dict]
    provenance: dict
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self, with_timings: bool = True) -> dict:
        doc = {
            "version": REPORT_VERSION,
            "mode": self.mode,
            "objective": self.objective,
            "best_classifier": self.best_classifier,
            "classifiers": self.classifiers,
            "provenance": self.provenance,
        }
        if with_timings:
            doc["timings"] = self.timings
        return doc

    def canonical(self) -> str:
        """Deterministic text: timings are left out."""
        return canonical_json(self.to_json(with_timings=False))

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))
        (out / "report.canonical.json").write_text(self.canonical())
        return out / "report.json"


class _Stages:
    """Runs named stages in order; failures surface as PipelineError with provenance so far."""

    def __init__(self, provenance: dict):
        self.provenance = provenance
        self.timings: dict[str, float] = {}
        self.log: list[str] = provenance.setdefault("stages", [])

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        self.log.append(name)
        try:
            yield
        except PipelineError:
            raise
        except (CreditPipeError, ValueError, OSError, np.linalg.LinAlgError) as exc:
            raise PipelineError(name, str(exc), dict(self.provenance)) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def _ingest(config: PipelineConfig) -> tuple[Frame, dict]:
    if config.input_path is not None:
        frame = read_csv(config.input_path, IngestConfig(config.label_column, "", tuple(config.id_columns)))
        return frame, {"source": "csv", "path": str(config.input_path)}
    spec = config.generator or GeneratorSpec(label_column=config.label_column)
    frame, _ = generate(spec)
    return frame, {"source": "generator", "spec": asdict(spec)}


def _target(frame: Frame, mode: str, label_column: str):
    tri = derive_labels(frame, label_column)
    if mode == "response":
        return frame, remap_response(tri)
    if mode == "risk":
        return subset_risk(frame, tri)
    return frame, tri


def _names_json(names: Sequence[str], values: np.ndarray) -> dict[str, float]:
    return {n: float(v) for n, v in zip(names, values)}


def _evaluate_model(model: ens.Ensemble, X: np.ndarray, y: np.ndarray, classes: tuple[int, ...]) -> tuple[dict, ConfusionMatrix, object]:
    P = ens.predict_proba(model, X)
    pred = ens.labels_from_proba(model.classes, P)
    cm = confusion(y, pred, classes)
    metrics = classification_metrics(cm).to_json()
    if len(classes) == 2:
        roc = roc_auc((y == classes[1]).astype(np.int64), P[:, 1])
        metrics["auc"] = roc.auc
    else:
        roc = None
        metrics["auc"] = multiclass_auc(y, P, list(model.classes))
    metrics["confusion"] = cm.to_json()
    return metrics, cm, (roc, P)


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Execute every stage for ``config.mode`` and return the report.

    When ``config.out_dir`` is set, the report, per-classifier model files,
    ROC tables and stage artifacts are written there.
    """
    objective = config.resolved_objective
    seeds = {s: stage_seed(config.seed, s) for s in ("split", "resample")}
    seeds.update({f"model:{k}": stage_seed(config.seed, f"model:{k}") for k in config.classifiers})
    seeds.update({f"search:{k}": stage_seed(config.seed, f"search:{k}:{config.search.seed}") for k in config.classifiers})
    prov: dict = {"config": config.to_json(), "seeds": seeds}
    st = _Stages(prov)
    out = Path(config.out_dir) if config.out_dir else None

    with st.stage("ingest"):
        frame, prov["input"] = _ingest(config)
        prov["input"].update({"rows": frame.n_rows, "features": len(frame.feature_names)})
    with st.stage("labels"):
        frame, labels = _target(frame, config.mode, config.label_column)
        y_all = labels.classes
        classes = tuple(int(c) for c in np.unique(y_all))
        if len(classes) < 2:
            raise ConfigError(f"mode {config.mode} needs at least two classes, found {list(classes)}")
        prov["labels"] = {"scheme": labels.scheme, "counts": {str(c): int(np.sum(y_all == c)) for c in classes}}
    with st.stage("split"):
        split = stratified_split(frame, labels, config.train_fraction, seeds["split"])
        train_raw, valid_raw = frame.take(split.train_indices), frame.take(split.valid_indices)
        y_train, y_valid = y_all[split.train_indices], y_all[split.valid_indices]
        valid_digest_at_split = valid_raw.digest()
        prov["split"] = {
            "train_rows": int(len(split.train_indices)),
            "valid_rows": int(len(split.valid_indices)),
            "class_counts": {str(k): list(v) for k, v in split.class_counts.items()},
            "valid_digest": valid_digest_at_split,
        }
    with st.stage("preprocess"):
        pre = fit_preprocessor(train_raw, config.code_ranges, config.missing_drop_threshold)
        train_clean = apply_preprocessor(pre, train_raw)
        valid_clean = apply_preprocessor(pre, valid_raw)
        prov["preprocess"] = {"dropped_columns": dict(sorted(pre.dropped_columns.items())),
                              "kept_columns": list(pre.kept_columns)}
    with st.stage("cluster"):
        corr = correlation_matrix(train_clean, list(pre.kept_columns))
        clustering = cluster_features(corr, config.cluster_cut, list(pre.kept_columns))
        reps = pick_representatives(train_clean, clustering)
        prov["cluster"] = {"n_clusters": clustering.n_clusters,
                           "clusters": clustering.members(), "representatives": reps}
    with st.stage("vif"):
        trace = vif_prune(train_clean, config.vif_threshold, reps)
        selected = [n for n in reps if n in trace.kept]
        prov["vif"] = trace.to_json()
        prov["selected_features"] = selected
    Xt = train_clean.feature_matrix(selected)
    Xv = valid_clean.feature_matrix(selected)
    valid_matrix_digest = hashlib.sha256(Xv.tobytes()).hexdigest()
    with st.stage("resample"):
        acfg = replace(config.adasyn, seed=seeds["resample"], target=None)
        if len(classes) == 2:
            Xr, yr, arep = adasyn(Xt, y_train, acfg)
        else:
            Xr, yr, arep = adasyn_multiclass(Xt, y_train, acfg)
        prov["resample"] = arep.to_json()
        prov["resample"].update({"input_rows": int(len(Xt)), "output_rows": int(len(Xr))})
    tuned: dict[str, TuneResult] = {}
    with st.stage("tune"):
        for kind in config.classifiers:
            base = ens.EnsembleParams(kind, seed=seeds[f"model:{kind}"], learning_rate=config.learning_rate,
                                      l2_leaf_reg=config.l2_leaf_reg, min_child_weight=config.min_child_weight)
            search = replace(config.search, seed=seeds[f"search:{kind}"])
            tuned[kind] = tune((Xr, yr), (Xv, y_valid), kind, objective, search, base, config.workers)
    models: dict[str, ens.Ensemble] = {}
    with st.stage("train"):
        # tuning already produced each winner exactly as a standalone fit would
        for kind in config.classifiers:
            models[kind] = replace(tuned[kind].model, feature_names=list(selected), _packed=None)
    results: dict[str, dict] = {}
    curves = {}
    with st.stage("evaluate"):
        if valid_raw.digest() != valid_digest_at_split or hashlib.sha256(Xv.tobytes()).hexdigest() != valid_matrix_digest:
            raise PipelineError("evaluate", "validation partition changed after the split", prov)
        pos_rate = float(np.mean(y_valid == classes[1])) if len(classes) == 2 else None
        for kind in config.classifiers:
            model = models[kind]
            train_metrics, _, _ = _evaluate_model(model, Xt, y_train, classes)
            valid_metrics, cm, (roc, P) = _evaluate_model(model, Xv, y_valid, classes)
            curves[kind] = (roc, P)
            imp = model.importances
            order = np.argsort(-imp, kind="stable")
            entry = {
                "params": model.params.to_json(),
                "tuning": tuned[kind].to_json(),
                "train": train_metrics,
                "validation": valid_metrics,
                "objective": classification_metrics(cm).objective(objective),
                "importances": _names_json(selected, imp),
                "top_features": [selected[i] for i in order[:10]],
                "model_file": f"models/{kind}.json",
                "roc_file": f"roc/{kind}.csv" if roc is not None else None,
            }
            if config.mode == "risk":
                entry["profit"] = {"dollars": str(profit(cm, config.payoff)),
                                   "cents": profit_cents(cm, config.payoff),
                                   "payoff": config.payoff.to_json()}
            results[kind] = entry
        best = min(config.classifiers, key=lambda k: (-results[k]["objective"], config.classifiers.index(k)))
        prov["leakage_guard"] = {
            "valid_digest_at_split": valid_digest_at_split,
            "valid_digest_at_evaluation": valid_raw.digest(),
            "valid_matrix_digest": valid_matrix_digest,
            "resampled_rows_from_train_only": int(len(Xt)) == prov["split"]["train_rows"],
        }
        prov["valid_positive_rate"] = pos_rate
    report = RunReport(config.mode, objective, best, results, prov, st.timings)
    if out is not None:
        _write_artifacts(out, report, models, curves, pre, clustering, trace)
    return report


def _write_artifacts(out: Path, report: RunReport, models, curves, pre, clustering, vtrace) -> None:
    from .featsel import save_dendrogram

    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "roc").mkdir(exist_ok=True)
    for kind, model in models.items():
        model.save(out / "models" / f"{kind}.json")
        roc, _ = curves[kind]
        if roc is not None:
            roc.to_csv(out / "roc" / f"{kind}.csv")
    pre.save(out / "preprocess.json")
    save_dendrogram(clustering, out / "dendrogram.json")
    vtrace.to_csv(out / "vif_trace.csv")
    report.save(out)
