"""Feature reduction: variable clustering with cluster representatives, then VIF pruning."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, StatisticsError
from .frame import Frame

VIF_INF_R2 = 1.0 - 1e-12
RIDGE_JITTER = 1e-10


def correlation_matrix(frame: Frame, names: Sequence[str] | None = None) -> np.ndarray:
    """Pearson correlation between feature columns.

    Zero-variance columns get 0 off the diagonal; the diagonal is exactly 1.
    """
    X = frame.feature_matrix(names)
    return _corr(X)


def _corr(X: np.ndarray) -> np.ndarray:
    n, p = X.shape
    if n < 2:
        raise StatisticsError("correlation needs at least 2 rows")
    Xc = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", Xc, Xc)
    zero = ss == 0.0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-variance column(s); correlations set to 0", RuntimeWarning)
    norm = np.sqrt(np.where(zero, 1.0, ss))
    Z = Xc / norm
    C = Z.T @ Z
    C[zero, :] = 0.0
    C[:, zero] = 0.0
    C = np.clip(C, -1.0, 1.0)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass(frozen=True)
class ClusterCut:
    """Cut a dendrogram either at a merge height or at a cluster count."""

    height: float | None = 0.7
    count: int | None = None

    def __post_init__(self):
        if (self.height is None) == (self.count is None):
            raise ConfigError("specify exactly one of cut height or cut count")


@dataclass
class FeatureClustering:
    names: list[str]
    # (cluster_a, cluster_b, height, size); ids < n are leaves, n + k is merge k
    merges: list[tuple[int, int, float, int]]
    assignments: dict[str, int]
    cut: ClusterCut = field(default_factory=ClusterCut)

    @property
    def n_clusters(self) -> int:
        return len(set(self.assignments.values()))

    def members(self) -> list[list[str]]:
        groups: dict[int, list[str]] = {}
        for name in self.names:
            groups.setdefault(self.assignments[name], []).append(name)
        return [groups[k] for k in sorted(groups)]

    def dendrogram_json(self) -> dict:
        return {
            "labels": self.names,
            "merges": [{"a": a, "b": b, "height": h, "size": s} for a, b, h, s in self.merges],
            "cut": {"height": self.cut.height, "count": self.cut.count},
            "assignments": self.assignments,
        }


def cluster_features(corr: np.ndarray, cut: ClusterCut | None = None, names: Sequence[str] | None = None) -> FeatureClustering:
    """Average-linkage agglomerative clustering on ``1 - corr**2``.

    Each merge joins the closest pair of active clusters; ties go to the pair
    whose smallest member column indices are lexicographically smallest.
    """
    cut = cut or ClusterCut()
    corr = np.asarray(corr, dtype=np.float64)
    p = corr.shape[0]
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    if cut.count is not None and not 1 <= cut.count <= p:
        raise ConfigError(f"cut count {cut.count} outside [1, {p}]")
    D = 1.0 - corr**2
    np.fill_diagonal(D, np.inf)
    active = np.ones(p, dtype=bool)
    sizes = np.ones(p, dtype=np.int64)
    node_of = list(range(p))  # slot (= smallest member index) -> dendrogram node id
    members = {i: [i] for i in range(p)}
    merges: list[tuple[int, int, float, int]] = []
    for step in range(p - 1):
        sub = np.where(active[:, None] & active[None, :], D, np.inf)
        sub[np.tril_indices(p)] = np.inf
        flat = int(np.argmin(sub))
        i, j = divmod(flat, p)
        h = float(sub[i, j])
        merges.append((node_of[i], node_of[j], h, int(sizes[i] + sizes[j])))
        # average linkage update (Lance-Williams)
        new = (sizes[i] * D[i] + sizes[j] * D[j]) / (sizes[i] + sizes[j])
        D[i, :] = new
        D[:, i] = new
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
        members[i] = members[i] + members.pop(j)
        node_of[i] = p + step
    assignments = _cut_tree(p, merges, cut)
    return FeatureClustering(names, merges, {names[k]: v for k, v in enumerate(assignments)}, cut)


def _cut_tree(p: int, merges, cut: ClusterCut) -> list[int]:
    if cut.count is not None:
        n_apply = p - cut.count
    else:
        n_apply = sum(1 for m in merges if m[2] <= cut.height)
    parent = list(range(p + len(merges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k, (a, b, _, _) in enumerate(merges[:n_apply]):
        parent[find(a)] = p + k
        parent[find(b)] = p + k
    roots: dict[int, int] = {}
    out = []
    for i in range(p):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots)
        out.append(roots[r])
    return out


def own_cluster_r2(corr: np.ndarray, member_idx: Sequence[int]) -> np.ndarray:
    """Mean squared correlation of each member with the other members."""
    idx = np.asarray(member_idx)
    if len(idx) == 1:
        return np.ones(1)
    sub = corr[np.ix_(idx, idx)] ** 2
    return (sub.sum(axis=1) - np.diag(sub)) / (len(idx) - 1)


def pick_representatives(frame: Frame, clustering: FeatureClustering) -> list[str]:
    """One column per cluster: the member best explained by its co-members."""
    corr = correlation_matrix(frame, clustering.names)
    pos = {n: i for i, n in enumerate(clustering.names)}
    reps = []
    for group in clustering.members():
        idx = [pos[n] for n in group]
        r2 = own_cluster_r2(corr, idx)
        reps.append(group[int(np.argmax(r2))])
    return reps


def _vif_from_matrix(X: np.ndarray, target: int) -> float:
    y = X[:, target]
    others = np.delete(X, target, axis=1)
    yc = y - y.mean()
    sst = float(yc @ yc)
    if sst == 0.0:
        return float("inf")
    if others.shape[1] == 0:
        return 1.0
    Oc = others - others.mean(axis=0)
    A = Oc.T @ Oc
    b = Oc.T @ yc
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(A + RIDGE_JITTER * max(1.0, float(np.trace(A)) / len(A)) * np.eye(len(A)))
    beta = np.linalg.solve(L.T, np.linalg.solve(L, b))
    resid = yc - Oc @ beta
    r2 = 1.0 - float(resid @ resid) / sst
    if r2 >= VIF_INF_R2:
        return float("inf")
    return 1.0 / (1.0 - r2)


def vif(frame: Frame, target: str, names: Sequence[str] | None = None) -> float:
    """Variance inflation factor of ``target`` regressed on the other features.

    Returns ``inf`` when the regression explains the target to within 1e-12.
    A singular normal system is regularised with a ridge of 1e-10 times the
    mean Gram diagonal.
    """
    names = list(names) if names is not None else frame.feature_names
    if len(names) < 2:
        raise StatisticsError("VIF needs at least two feature columns")
    X = frame.feature_matrix(names)
    return _vif_from_matrix(X, names.index(target))


@dataclass
class VifTrace:
    threshold: float
    removals: list[tuple[str, float]]
    kept: dict[str, float]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "column", "vif"])
            for step, (name, v) in enumerate(self.removals, start=1):
                w.writerow([step, name, repr(v)])

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "removals": [{"column": n, "vif": v} for n, v in self.removals],
            "kept": self.kept,
        }


def vif_all(X: np.ndarray) -> np.ndarray:
    return np.array([_vif_from_matrix(X, j) for j in range(X.shape[1])])


def vif_prune(frame: Frame, threshold: float = 5.0, names: Sequence[str] | None = None) -> VifTrace:
    """Drop the highest-VIF column until every VIF is at most ``threshold``."""
    names = list(names) if names is not None else frame.feature_names
    if not names:
        raise StatisticsError("VIF pruning needs at least one feature column")
    X = frame.feature_matrix(names)
    cols = list(range(len(names)))
    removals: list[tuple[str, float]] = []
    values = np.array([1.0]) if len(cols) == 1 else vif_all(X)
    while len(cols) > 1:
        worst = int(np.argmax(values))
        if not values[worst] > threshold:
            break
        removals.append((names[cols[worst]], float(values[worst])))
        del cols[worst]
        values = np.array([1.0]) if len(cols) == 1 else vif_all(X[:, cols])
    kept = {names[c]: float(v) for c, v in zip(cols, values)}
    return VifTrace(threshold, removals, kept)


def save_dendrogram(clustering: FeatureClustering, path: str | Path) -> None:
    Path(path).write_text(json.dumps(clustering.dendrogram_json(), sort_keys=True, indent=1))
