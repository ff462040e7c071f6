"""ADASYN oversampling with an exact, tie-stable k-nearest-neighbour search."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ResampleError


@dataclass(frozen=True)
class AdasynConfig:
    k_neighbors: int = 5
    beta: float = 1.0
    target: int | None = None  # minority class for binary input; None = smaller class
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")


@dataclass
class AdasynPass:
    minority_class: int
    n_minority: int
    n_majority: int
    requested: float
    ratios: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    generated: int

    def to_json(self) -> dict:
        return {
            "minority_class": self.minority_class,
            "n_minority": self.n_minority,
            "n_majority": self.n_majority,
            "requested": self.requested,
            "generated": self.generated,
            "r": self.ratios.tolist(),
            "r_hat": self.weights.tolist(),
            "g": self.counts.tolist(),
        }


@dataclass
class AdasynReport:
    passes: list[AdasynPass] = field(default_factory=list)

    @property
    def generated(self) -> int:
        return sum(p.generated for p in self.passes)

    def to_json(self) -> dict:
        return {"generated": self.generated, "passes": [p.to_json() for p in self.passes]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))


def _sq_dist(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = points - q
    return np.einsum("ij,ij->i", d, d)


def knn(points: np.ndarray, query_index: int, k: int, restrict: np.ndarray | None = None) -> np.ndarray:
    """The ``k`` rows nearest to row ``query_index`` (Euclidean, self excluded).

    ``restrict`` limits the candidate pool to the given row ids. Equal
    distances resolve to the smaller row id.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    pool = np.arange(len(points)) if restrict is None else np.unique(np.asarray(restrict, dtype=np.int64))
    pool = pool[pool != query_index]
    if k > len(pool):
        raise ResampleError(f"k={k} exceeds the {len(pool)} eligible rows")
    d = _sq_dist(points[pool], points[query_index])
    order = np.argsort(d, kind="stable")[:k]
    return pool[order]


def _knn_many(points: np.ndarray, queries: np.ndarray, k: int, pool: np.ndarray) -> np.ndarray:
    """Row-wise :func:`knn` for several queries against one sorted pool."""
    out = np.empty((len(queries), k), dtype=np.int64)
    P = points[pool]
    for qi, q in enumerate(queries):
        d = _sq_dist(P, points[q])
        d[pool == q] = np.inf
        order = np.argsort(d, kind="stable")
        picked = pool[order]
        picked = picked[picked != q][:k]
        out[qi] = picked
    return out


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        frac = raw - base
        # descending remainder, ascending index on ties
        order = np.lexsort((np.arange(len(frac)), -frac))
        base[order[:short]] += 1
    return base


def _adasyn_pass(X, y, minority: int, n_target: int, config: AdasynConfig, stream: int):
    minority_rows = np.flatnonzero(y == minority)
    m_min = len(minority_rows)
    if m_min < 2:
        raise ResampleError(f"class {minority} has {m_min} row(s); ADASYN needs at least 2")
    G = (n_target - m_min) * config.beta
    total = int(np.floor(G + 0.5))
    if total <= 0:
        empty = np.zeros(m_min)
        return np.zeros((0, X.shape[1])), AdasynPass(minority, m_min, n_target, G, empty, empty, empty.astype(np.int64), 0)
    everyone = np.arange(len(X))
    k_all = min(config.k_neighbors, len(X) - 1)
    neigh = _knn_many(X, minority_rows, k_all, everyone)
    ratios = (y[neigh] != minority).sum(axis=1) / k_all
    if ratios.sum() > 0:
        weights = ratios / ratios.sum()
    else:
        weights = np.full(m_min, 1.0 / m_min)
    counts = _largest_remainder(weights, total)

    k_min = min(config.k_neighbors, m_min - 1)
    synth = []
    for i, row in enumerate(minority_rows):
        g = int(counts[i])
        if g == 0:
            continue
        mates = _knn_many(X, np.array([row]), k_min, minority_rows)[0]
        rng = np.random.default_rng([config.seed, stream, int(row)])
        z = mates[rng.integers(0, k_min, size=g)]
        lam = rng.random(g)[:, None]
        a, b = X[row][None, :], X[z]
        pts = a + lam * (b - a)
        pts = np.clip(pts, np.minimum(a, b), np.maximum(a, b))
        synth.append(pts)
    new = np.vstack(synth) if synth else np.zeros((0, X.shape[1]))
    return new, AdasynPass(minority, m_min, n_target, G, ratios, weights, counts, len(new))


def adasyn(X: np.ndarray, y: np.ndarray, config: AdasynConfig | None = None):
    """Oversample a binary problem; synthetic rows are appended after the originals.

    Returns ``(X_augmented, y_augmented, report)``.
    """
    config = config or AdasynConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) != 2:
        raise ResampleError(f"binary ADASYN needs exactly two classes, got {labels.tolist()}")
    if config.target is None:
        minority = int(labels[np.argmin(counts)])
    else:
        minority = int(config.target)
    n_major = int(counts[labels != minority][0])
    new, info = _adasyn_pass(X, y, minority, n_major, config, stream=0)
    X_aug = np.vstack([X, new])
    y_aug = np.concatenate([y, np.full(len(new), minority, dtype=y.dtype)])
    return X_aug, y_aug, AdasynReport([info])


def adasyn_multiclass(X: np.ndarray, y: np.ndarray, config: AdasynConfig | None = None):
    """One pass per non-majority class, in ascending class id.

    Each pass grows its class toward the majority-class size, treats every
    other class as "majority" when computing neighbour ratios, and draws
    neighbours from original rows only.
    """
    config = config or AdasynConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) < 2:
        raise ResampleError("ADASYN needs at least two classes")
    n_major = int(counts.max())
    majority = int(labels[np.argmax(counts)])
    blocks_X, blocks_y, passes = [X], [y], []
    for cls in labels.tolist():
        if cls == majority:
            continue
        new, info = _adasyn_pass(X, y, int(cls), n_major, config, stream=int(cls) + 1)
        passes.append(info)
        blocks_X.append(new)
        blocks_y.append(np.full(len(new), cls, dtype=y.dtype))
    return np.vstack(blocks_X), np.concatenate(blocks_y), AdasynReport(passes)
