"""Random Forest, Extra Trees and Newton-boosted trees on a shared CART core."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _treecore
from .errors import ConfigError, FitError, SchemaError

KINDS = ("random_forest", "extra_trees", "gradient_boosted")
MODEL_FORMAT = "creditpipe.ensemble"
MODEL_VERSION = 1
_SEED_SPACE = 2**63 - 1


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None  # None = grow until pure or minima bind
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    n_candidate_features: int | str | None = None  # None = per-kind default
    split_mode: str = "exhaustive"

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_samples_leaf < 1 or self.min_samples_split < 1:
            raise ConfigError("leaf/split minima must be >= 1")
        if self.split_mode not in ("exhaustive", "random_threshold"):
            raise ConfigError(f"unknown split_mode {self.split_mode!r}")


@dataclass(frozen=True)
class EnsembleParams:
    kind: str = "random_forest"
    n_estimators: int = 100
    tree: TreeParams = field(default_factory=TreeParams)
    learning_rate: float = 0.1
    l2_leaf_reg: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown ensemble kind {self.kind!r}")
        floor = 0 if self.kind == "gradient_boosted" else 1
        if self.n_estimators < floor:
            raise ConfigError(f"n_estimators must be >= {floor} for {self.kind}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    def with_(self, max_depth=None, n_estimators=None, seed=None) -> "EnsembleParams":
        tree = self.tree if max_depth is None else replace(self.tree, max_depth=max_depth)
        return replace(
            self,
            tree=tree,
            n_estimators=self.n_estimators if n_estimators is None else n_estimators,
            seed=self.seed if seed is None else seed,
        )

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "EnsembleParams":
        d = dict(d)
        d["tree"] = TreeParams(**d.get("tree", {}))
        return cls(**d)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs): class distribution or scaled leaf score
    weight: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def max_depth(self) -> int:
        """Depth of the deepest leaf, recomputed from the child links."""
        d = np.zeros(self.n_nodes, dtype=np.int64)
        best = 0
        for nd in range(self.n_nodes):
            if self.left[nd] >= 0:
                d[self.left[nd]] = d[nd] + 1
                d[self.right[nd]] = d[nd] + 1
            best = max(best, int(d[nd]))
        return best

    def truncate(self, max_depth: int) -> "Tree":
        """The tree a fit with this depth limit would have produced.

        Nodes are numbered level by level, so the shallower tree is an array
        prefix whose deepest nodes become leaves.
        """
        keep = int(np.count_nonzero(self.depth <= max_depth))
        t = Tree(*(a[:keep].copy() for a in (self.feature, self.threshold, self.left, self.right,
                                              self.depth, self.value, self.weight, self.n_samples, self.gain)))
        cut = t.depth == max_depth
        t.feature[cut] = -1
        t.threshold[cut] = 0.0
        t.left[cut] = -1
        t.right[cut] = -1
        t.gain[cut] = 0.0
        return t

    def raw_importance(self, n_features: int) -> np.ndarray:
        internal = self.left >= 0
        return np.bincount(self.feature[internal], weights=self.gain[internal], minlength=n_features)

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "weight": self.weight.tolist(),
            "n_samples": self.n_samples.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Tree":
        left = np.asarray(d["left"], dtype=np.int64)
        tree = cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=left,
            right=np.asarray(d["right"], dtype=np.int64),
            depth=np.zeros(len(left), dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64).reshape(len(left), -1),
            weight=np.asarray(d["weight"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            gain=np.asarray(d["gain"], dtype=np.float64),
        )
        for nd in range(len(left)):
            if left[nd] >= 0:
                tree.depth[left[nd]] = tree.depth[nd] + 1
                tree.depth[tree.right[nd]] = tree.depth[nd] + 1
        return tree


@dataclass
class Ensemble:
    kind: str
    params: EnsembleParams
    classes: np.ndarray
    n_features: int
    trees: list[Tree]
    importances: np.ndarray
    trees_per_round: int = 1
    base_score: np.ndarray = field(default_factory=lambda: np.zeros(1))
    loss_trace: list[float] = field(default_factory=list)
    feature_names: list[str] | None = None
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def packed(self):
        if self._packed is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            if self.trees:
                cat = lambda attr: np.concatenate([getattr(t, attr) for t in self.trees])
                self._packed = (offsets, cat("feature"), cat("threshold"), cat("left"), cat("right"),
                                np.vstack([t.value for t in self.trees]))
            else:
                self._packed = (offsets, np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64),
                                np.zeros(0, np.int64), np.zeros((0, 1)))
        return self._packed

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "params": self.params.to_json(),
            "classes": self.classes.tolist(),
            "n_features": self.n_features,
            "trees_per_round": self.trees_per_round,
            "base_score": self.base_score.tolist(),
            "importances": self.importances.tolist(),
            "loss_trace": list(self.loss_trace),
            "feature_names": None if self.feature_names is None else list(self.feature_names),
            "trees": [t.to_json() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, d: dict) -> "Ensemble":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise SchemaError("not a supported ensemble model document")
        return cls(
            kind=d["kind"],
            params=EnsembleParams.from_json(d["params"]),
            classes=np.asarray(d["classes"], dtype=np.int64),
            n_features=int(d["n_features"]),
            trees=[Tree.from_json(t) for t in d["trees"]],
            importances=np.asarray(d["importances"], dtype=np.float64),
            trees_per_round=int(d["trees_per_round"]),
            base_score=np.asarray(d["base_score"], dtype=np.float64),
            loss_trace=list(d["loss_trace"]),
            feature_names=d.get("feature_names"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Ensemble":
        return cls.from_json(json.loads(Path(path).read_text()))


# growing -----------------------------------------------------------------


def resolve_mtry(rule, n_features: int, kind: str = "random_forest") -> int:
    if rule is None:
        rule = "all" if kind == "gradient_boosted" else "sqrt"
    if rule == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if rule == "all":
        return n_features
    if isinstance(rule, int) and rule >= 1:
        return min(rule, n_features)
    raise ConfigError(f"bad n_candidate_features {rule!r}")


class Workspace:
    """Presorted feature order plus scratch buffers, built once per fit.

    Random-threshold trees never read the sorted lists, so they get
    placeholders.
    """

    def __init__(self, X: np.ndarray, random_split: bool):
        n, p = X.shape
        if random_split:
            self.srow = np.zeros((1, 1), dtype=np.int32)
            self.sval = np.zeros((1, 1))
            self.buf_row = np.zeros((2, 1, 1), dtype=np.int32)
            self.buf_val = np.zeros((2, 1, 1))
        else:
            self.srow = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
            self.sval = np.ascontiguousarray(np.take_along_axis(X.T, self.srow, axis=1))
            self.buf_row = np.empty((2, p, n), dtype=np.int32)
            self.buf_val = np.empty((2, p, n))

    def fork(self) -> "Workspace":
        """Same presorted lists, private scratch buffers (one per worker thread)."""
        other = object.__new__(Workspace)
        other.srow, other.sval = self.srow, self.sval
        other.buf_row = np.empty_like(self.buf_row)
        other.buf_val = np.empty_like(self.buf_val)
        return other


def _check_X(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise FitError("X must be a 2-D matrix")
    if X.shape[0] == 0:
        raise FitError("cannot fit on empty input")
    if not np.isfinite(X).all():
        raise FitError("X contains non-finite values")
    return X


def _grow(X, ws: Workspace, weight, y_idx, n_classes, tree: TreeParams, mtry, seed, random_split,
          newton=False, grad=None, hess=None, reg_lambda=1.0, learning_rate=1.0, min_child_weight=1.0):
    n, p = X.shape
    if grad is None:
        grad = np.zeros(n)
        hess = np.zeros(n)
    out = _treecore.build_tree(
        X, ws.srow, ws.sval, ws.buf_row, ws.buf_val, weight, y_idx, n_classes, grad, hess, newton,
        -1 if tree.max_depth is None else int(tree.max_depth),
        int(tree.min_samples_leaf), int(tree.min_samples_split),
        float(min_child_weight), float(reg_lambda), float(learning_rate),
        int(mtry), bool(random_split), np.uint64(seed),
    )
    feature, threshold, left, right, depth, value, node_weight, nrows, gain, row_leaf = out
    return Tree(feature, threshold, left, right, depth, value, node_weight, nrows, gain), row_leaf


def _encode(y):
    classes, y_idx = np.unique(np.asarray(y), return_inverse=True)
    return classes.astype(np.int64), y_idx.astype(np.int64)


def fit_tree(X, y, sample_weights=None, params: TreeParams | None = None, rng=None, n_classes=None) -> Tree:
    """Fit one Gini classification tree.

    ``y`` holds class indices ``0..n_classes-1``. ``rng`` (a numpy Generator)
    supplies the tree seed; candidate-feature and threshold draws are keyed on
    that seed and the node path.
    """
    params = params or TreeParams(n_candidate_features="all")
    X = _check_X(X)
    y = np.asarray(y, dtype=np.int64)
    if len(y) != len(X):
        raise FitError("X and y lengths differ")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    w = np.ones(len(y)) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    seed = int(rng.integers(0, _SEED_SPACE))
    mtry = resolve_mtry(params.n_candidate_features or "all", X.shape[1])
    random_split = params.split_mode == "random_threshold"
    tree, _ = _grow(X, Workspace(X, random_split), w, y, n_classes, params, mtry, seed, random_split)
    return tree


def _forest(X, y, params: EnsembleParams, bootstrap: bool, random_split: bool, n_jobs: int = 1) -> Ensemble:
    X = _check_X(X)
    classes, y_idx = _encode(y)
    if len(y_idx) != len(X):
        raise FitError("X and y lengths differ")
    n, p = X.shape
    mtry = resolve_mtry(params.tree.n_candidate_features, p, params.kind)
    ws = Workspace(X, random_split)

    def grow_range(lo: int, hi: int, w: Workspace) -> list[Tree]:
        out = []
        for t in range(lo, hi):
            rng = np.random.default_rng([params.seed, t])
            if bootstrap:
                weight = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
            else:
                weight = np.ones(n)
            seed = int(rng.integers(0, _SEED_SPACE))
            tree, _ = _grow(X, w, weight, y_idx, len(classes), params.tree, mtry, seed, random_split)
            out.append(tree)
        return out

    N = params.n_estimators
    jobs = max(1, min(int(n_jobs), N))
    if jobs == 1:
        trees = grow_range(0, N, ws)
    else:
        bounds = np.linspace(0, N, jobs + 1).astype(int)
        with ThreadPoolExecutor(jobs) as pool:
            parts = pool.map(lambda j: grow_range(bounds[j], bounds[j + 1], ws if j == 0 else ws.fork()), range(jobs))
            trees = [t for part in parts for t in part]
    return Ensemble(params.kind, params, classes, p, trees, _forest_importance(trees, p))


def _forest_importance(trees: list[Tree], p: int) -> np.ndarray:
    # per tree: impurity decrease weighted by node fraction; then averaged
    raw = np.zeros(p)
    for tree in trees:
        if tree.weight[0] > 0:
            raw += tree.raw_importance(p) / tree.weight[0]
    return _normalise(raw / max(1, len(trees)))


def _gbt_importance(trees: list[Tree], p: int) -> np.ndarray:
    raw = np.zeros(p)
    for tree in trees:
        raw += tree.raw_importance(p)
    return _normalise(raw)


def _normalise(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else np.zeros_like(v)


def fit_random_forest(X, y, params: EnsembleParams, n_jobs: int = 1) -> Ensemble:
    """Bootstrap-sampled trees with per-node feature subsets and exhaustive thresholds."""
    if params.kind != "random_forest":
        raise ConfigError("fit_random_forest needs kind='random_forest'")
    return _forest(X, y, params, bootstrap=True, random_split=False, n_jobs=n_jobs)


def fit_extra_trees(X, y, params: EnsembleParams, n_jobs: int = 1) -> Ensemble:
    """Full-sample trees; one uniform random threshold per candidate feature."""
    if params.kind != "extra_trees":
        raise ConfigError("fit_extra_trees needs kind='extra_trees'")
    return _forest(X, y, params, bootstrap=False, random_split=True, n_jobs=n_jobs)


# boosting ----------------------------------------------------------------


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(y, score):
    """Per-row binary log-loss of raw ``score`` against labels in {0, 1}."""
    score = np.asarray(score, dtype=np.float64)
    return np.logaddexp(0.0, score) - np.asarray(y, dtype=np.float64) * score


def logistic_grad_hess(y, score):
    p = sigmoid(score)
    return p - np.asarray(y, dtype=np.float64), p * (1.0 - p)


def softmax(F):
    F = F - F.max(axis=1, keepdims=True)
    E = np.exp(F)
    return E / E.sum(axis=1, keepdims=True)


_HESS_FLOOR = 1e-16


def fit_gbt(X, y, params: EnsembleParams, n_jobs: int = 1) -> Ensemble:
    """Second-order boosting: logistic loss for two classes, softmax otherwise.

    Each round fits a tree to the gradient/hessian of the current scores; leaf
    value is ``-sum(g) / (sum(h) + l2_leaf_reg)`` scaled by the learning rate.
    """
    if params.kind != "gradient_boosted":
        raise ConfigError("fit_gbt needs kind='gradient_boosted'")
    X = _check_X(X)
    classes, y_idx = _encode(y)
    if len(classes) < 2:
        raise FitError("boosting needs at least two classes")
    n, p = X.shape
    K = len(classes)
    mtry = resolve_mtry(params.tree.n_candidate_features, p, params.kind)
    random_split = params.tree.split_mode == "random_threshold"
    ws = Workspace(X, random_split)
    weight = np.ones(n)
    trees: list[Tree] = []
    trace: list[float] = []
    grow = dict(newton=True, reg_lambda=params.l2_leaf_reg, learning_rate=params.learning_rate,
                min_child_weight=params.min_child_weight)
    if K == 2:
        yb = y_idx.astype(np.float64)
        prior = yb.mean()
        base = np.array([math.log(prior / (1.0 - prior))])
        F = np.full(n, base[0])
        for r in range(params.n_estimators):
            g, h = logistic_grad_hess(yb, F)
            h = np.maximum(h, _HESS_FLOOR)
            seed = _round_seed(params.seed, r, 0)
            tree, leaf = _grow(X, ws, weight, y_idx, K, params.tree, mtry, seed, random_split,
                               grad=g, hess=h, **grow)
            F = F + tree.value[leaf, 0]
            trees.append(tree)
            trace.append(float(logistic_loss(yb, F).mean()))
    else:
        Y = np.eye(K)[y_idx]
        base = np.zeros(K)
        F = np.zeros((n, K))
        spaces = [ws] + [ws.fork() for _ in range(min(K, max(1, int(n_jobs))) - 1)]

        def class_tree(r, k, P, w):
            g = P[:, k] - Y[:, k]
            h = np.maximum(P[:, k] * (1.0 - P[:, k]), _HESS_FLOOR)
            return _grow(X, w, weight, y_idx, K, params.tree, mtry, _round_seed(params.seed, r, k),
                         random_split, grad=g, hess=h, **grow)

        pool = ThreadPoolExecutor(len(spaces)) if len(spaces) > 1 else None
        try:
            for r in range(params.n_estimators):
                P = softmax(F)
                if pool is None:
                    grown = [class_tree(r, k, P, ws) for k in range(K)]
                else:
                    grown = []
                    for lo in range(0, K, len(spaces)):
                        ks = range(lo, min(K, lo + len(spaces)))
                        grown += list(pool.map(lambda k: class_tree(r, k, P, spaces[k - lo]), ks))
                step = np.zeros_like(F)
                for k, (tree, leaf) in enumerate(grown):
                    step[:, k] = tree.value[leaf, 0]
                    trees.append(tree)
                F = F + step
                P = softmax(F)
                trace.append(float(-np.log(np.maximum(P[np.arange(n), y_idx], 1e-300)).mean()))
        finally:
            if pool is not None:
                pool.shutdown()
    return Ensemble(params.kind, params, classes, p, trees, _gbt_importance(trees, p),
                    trees_per_round=1 if K == 2 else K, base_score=base, loss_trace=trace)


def _round_seed(seed: int, rnd: int, k: int) -> int:
    return int(np.random.default_rng([seed, rnd, k]).integers(0, _SEED_SPACE))


FITTERS = {
    "random_forest": fit_random_forest,
    "extra_trees": fit_extra_trees,
    "gradient_boosted": fit_gbt,
}


def fit(X, y, params: EnsembleParams, n_jobs: int = 1) -> Ensemble:
    """Dispatch on ``params.kind``; ``n_jobs`` threads never change the result."""
    return FITTERS[params.kind](X, y, params, n_jobs=n_jobs)


def truncate(model: Ensemble, max_depth: int | None = None, n_estimators: int | None = None) -> Ensemble:
    """Cut a fitted model down to a smaller depth limit and/or estimator count.

    Forests: exact for both arguments, since per-tree streams and per-node
    draws do not depend on either. Boosting: exact for ``n_estimators``; a
    depth cut is exact only when no kept tree is deeper than ``max_depth``
    (checked, otherwise ConfigError).
    """
    params = model.params
    n_est = params.n_estimators if n_estimators is None else int(n_estimators)
    if n_est > params.n_estimators:
        raise ConfigError("cannot grow a model by truncation")
    old_depth = params.tree.max_depth
    if max_depth is not None and old_depth is not None and max_depth > old_depth:
        raise ConfigError("cannot deepen a model by truncation")
    new_params = params.with_(max_depth=max_depth, n_estimators=n_est)
    K = model.trees_per_round
    p = model.n_features
    if model.kind == "gradient_boosted":
        trees = model.trees[: n_est * K]
        if max_depth is not None and any(t.max_depth() > max_depth for t in trees):
            raise ConfigError("boosting rounds are path dependent; depth cut would not be exact")
        return Ensemble(model.kind, new_params, model.classes, p, list(trees), _gbt_importance(trees, p),
                        trees_per_round=K, base_score=model.base_score.copy(),
                        loss_trace=list(model.loss_trace[:n_est]))
    trees = model.trees[:n_est]
    if max_depth is not None:
        trees = [t.truncate(max_depth) for t in trees]
    return Ensemble(model.kind, new_params, model.classes, p, list(trees), _forest_importance(trees, p))


# inference ---------------------------------------------------------------


def _check_predict_X(model: Ensemble, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, got shape {X.shape}")
    return X


def tree_outputs(model: Ensemble, X, depth_limit: int | None = None, n_trees: int | None = None) -> np.ndarray:
    """Per-tree node values reached by each row: ``(n_trees, n_rows, n_outputs)``.

    ``depth_limit`` stops descent early, which reproduces a model fitted with
    that ``max_depth`` for forests (node draws are keyed on the node path).
    """
    X = _check_predict_X(model, X)
    offsets, feature, threshold, left, right, value = model.packed()
    if n_trees is not None:
        offsets = offsets[: n_trees + 1]
    nodes = _treecore.apply_trees(offsets, feature, threshold, left, right, X,
                                  -1 if depth_limit is None else int(depth_limit))
    return value[nodes]


def round_sums(model: Ensemble, X, n_rounds: int | None = None) -> np.ndarray:
    """Running sums of per-round leaf values: ``(n_rounds, n_rows, K)``.

    Entry ``r`` is what a model cut to ``r + 1`` rounds adds to the base
    score; prefixes computed this way match :func:`raw_scores` bit for bit.
    """
    K = model.trees_per_round
    n_rounds = len(model.trees) // K if n_rounds is None else n_rounds
    X = _check_predict_X(model, X)
    if n_rounds == 0:
        return np.zeros((0, len(X), K))
    vals = tree_outputs(model, X, n_trees=n_rounds * K)[:, :, 0]
    return np.cumsum(vals.reshape(n_rounds, K, len(X)).transpose(0, 2, 1), axis=0)


def raw_scores(model: Ensemble, X, n_rounds: int | None = None) -> np.ndarray:
    """Boosting margin: base score plus the sum of scaled leaf values."""
    X = _check_predict_X(model, X)
    F = np.tile(model.base_score, (len(X), 1))
    sums = round_sums(model, X, n_rounds)
    return F + sums[-1] if len(sums) else F


def scores_to_proba(model: Ensemble, F: np.ndarray) -> np.ndarray:
    if model.trees_per_round == 1 and len(model.classes) == 2:
        p1 = sigmoid(F[:, 0])
        return np.column_stack([1.0 - p1, p1])
    return softmax(F)


def tree_sums(model: Ensemble, X, depth_limit: int | None = None, n_trees: int | None = None) -> np.ndarray:
    """Running sums over forest trees of leaf class distributions."""
    return np.cumsum(tree_outputs(model, X, depth_limit, n_trees), axis=0)


def forest_proba(summed: np.ndarray, n_trees: int) -> np.ndarray:
    P = summed / n_trees
    return P / P.sum(axis=1, keepdims=True)


def predict_proba(model: Ensemble, X) -> np.ndarray:
    """Class probabilities; columns follow ``model.classes``."""
    if model.kind == "gradient_boosted":
        return scores_to_proba(model, raw_scores(model, X))
    return forest_proba(tree_sums(model, X)[-1], len(model.trees))


def labels_from_proba(classes: np.ndarray, P: np.ndarray, threshold: float | None = None) -> np.ndarray:
    if len(classes) == 2:
        t = 0.5 if threshold is None else threshold
        return np.where(P[:, 1] >= t, classes[1], classes[0])
    return classes[np.argmax(P, axis=1)]


def predict(model: Ensemble, X, threshold: float | None = None) -> np.ndarray:
    """Binary: class 1 iff its probability is at least ``threshold`` (0.5).
    Multiclass: argmax, ties to the smallest class id."""
    return labels_from_proba(model.classes, predict_proba(model, X), threshold)


def feature_importance(model: Ensemble) -> np.ndarray:
    return model.importances.copy()
