"""Confusion matrices, classification rates, ROC/AUC and payoff-matrix profit."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

CENT = Decimal("0.01")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = actual class, columns = predicted class."""

    counts: np.ndarray
    classes: tuple[int, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if c.shape != (k, k):
            raise InputError(f"counts shape {c.shape} does not match {k} classes")
        if (c < 0).any():
            raise InputError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "classes", tuple(int(x) for x in self.classes))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)

    __hash__ = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise InputError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.classes)

    @classmethod
    def binary(cls, tp: int, fn: int, fp: int, tn: int) -> "ConfusionMatrix":
        """Build a 2x2 matrix over classes (0, 1) with 1 as the positive class."""
        return cls(np.array([[tn, fp], [fn, tp]]), (0, 1))

    def to_json(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ConfusionMatrix":
        return cls(np.asarray(doc["counts"], dtype=np.int64), tuple(doc["classes"]))


def confusion(y_true, y_pred, classes: Sequence[int]) -> ConfusionMatrix:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if len(y_true) != len(y_pred):
        raise InputError(f"length mismatch: {len(y_true)} actual vs {len(y_pred)} predicted")
    classes = tuple(int(c) for c in classes)
    pos = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    counts = np.zeros((k, k), dtype=np.int64)
    if len(y_true) == 0:
        return ConfusionMatrix(counts, classes)
    try:
        a = np.array([pos[int(v)] for v in y_true], dtype=np.int64)
        b = np.array([pos[int(v)] for v in y_pred], dtype=np.int64)
    except KeyError as exc:
        raise InputError(f"label {exc.args[0]} is not one of {list(classes)}") from None
    np.add.at(counts, (a, b), 1)
    return ConfusionMatrix(counts, classes)


@dataclass
class MetricsReport:
    classes: tuple[int, ...]
    accuracy: float
    precision: dict[int, float]
    recall: dict[int, float]
    support: dict[int, int]
    macro_precision: float
    macro_recall: float
    weighted_precision: float
    weighted_recall: float
    specificity: float | None = None  # binary only: recall of the negative class
    degenerate: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "classes": list(self.classes),
            "accuracy": self.accuracy,
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
            "support": {str(k): v for k, v in self.support.items()},
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "specificity": self.specificity,
            "degenerate": list(self.degenerate),
        }

    def objective(self, name: str) -> float:
        """Scalar used for model selection.

        ``recall`` and ``precision`` refer to the positive class for binary
        problems and to the macro average otherwise.
        """
        binary = len(self.classes) == 2
        if name == "accuracy":
            return self.accuracy
        if name == "recall":
            return self.recall[self.classes[1]] if binary else self.macro_recall
        if name == "precision":
            return self.precision[self.classes[1]] if binary else self.macro_precision
        if name == "specificity":
            if self.specificity is None:
                raise InputError("specificity is only defined for binary problems")
            return self.specificity
        raise InputError(f"unknown objective {name!r}")


def _rate(num: int, den: int, label: str, degenerate: list[str]) -> float:
    if den == 0:
        degenerate.append(label)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Rates from a confusion matrix; any 0/0 rate is 0 and named in ``degenerate``."""
    c = cm.counts
    total = cm.total
    if total == 0:
        raise InputError("classification metrics need at least one scored row")
    diag = np.diag(c)
    row = c.sum(axis=1)
    col = c.sum(axis=0)
    degenerate: list[str] = []
    precision = {k: _rate(int(diag[i]), int(col[i]), f"precision[{k}]", degenerate) for i, k in enumerate(cm.classes)}
    recall = {k: _rate(int(diag[i]), int(row[i]), f"recall[{k}]", degenerate) for i, k in enumerate(cm.classes)}
    support = {k: int(row[i]) for i, k in enumerate(cm.classes)}
    macro_p = float(np.mean(list(precision.values())))
    macro_r = float(np.mean(list(recall.values())))
    weights = row / total
    weighted_p = float(sum(w * precision[k] for w, k in zip(weights, cm.classes)))
    weighted_r = float(sum(w * recall[k] for w, k in zip(weights, cm.classes)))
    spec = recall[cm.classes[0]] if len(cm.classes) == 2 else None
    return MetricsReport(
        classes=cm.classes,
        accuracy=int(diag.sum()) / total,
        precision=precision,
        recall=recall,
        support=support,
        macro_precision=macro_p,
        macro_recall=macro_r,
        weighted_precision=weighted_p,
        weighted_recall=weighted_r,
        specificity=spec,
        degenerate=degenerate,
    )


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry is +inf: nothing predicted positive
    auc: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr", "threshold"])
            for a, b, t in zip(self.fpr, self.tpr, self.thresholds):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(t))])

    def to_json(self) -> dict:
        return {
            "auc": self.auc,
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "thresholds": [None if not np.isfinite(t) else float(t) for t in self.thresholds],
        }


def roc_auc(y_true, scores) -> RocCurve:
    """ROC curve over distinct scores (descending) and its trapezoid area.

    The area is accumulated in integers, so it equals the Mann-Whitney
    statistic with ties counted as one half exactly (up to the final division).
    """
    y = np.asarray(y_true).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(y) != len(s):
        raise InputError("labels and scores differ in length")
    values = set(np.unique(y).tolist())
    if not values <= {0, 1}:
        raise InputError(f"binary labels must be 0/1, got {sorted(values)}")
    pos = int(np.count_nonzero(y == 1))
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise InputError("AUC is undefined when only one class is present")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = np.cumsum(y_sorted == 1)[ends]
    fp = np.cumsum(y_sorted == 0)[ends]
    tp = np.r_[0, tp].astype(np.int64)
    fp = np.r_[0, fp].astype(np.int64)
    twice_area = sum(int(fp[i] - fp[i - 1]) * int(tp[i] + tp[i - 1]) for i in range(1, len(tp)))
    auc = float(Fraction(twice_area, 2 * pos * neg))
    return RocCurve(fp / neg, tp / pos, np.r_[np.inf, s_sorted[ends]], auc)


def multiclass_auc(y_true, proba, classes: Sequence[int] | None = None) -> float:
    """Unweighted mean of one-vs-rest AUCs over the classes present in ``y_true``.

    Column ``j`` of ``proba`` holds the score for ``classes[j]`` (default:
    ``0..K-1``).
    """
    y = np.asarray(y_true).ravel()
    P = np.asarray(proba, dtype=np.float64)
    if P.ndim != 2 or len(P) != len(y):
        raise InputError("proba must be an (n_rows, n_classes) matrix")
    classes = list(range(P.shape[1])) if classes is None else [int(c) for c in classes]
    present = [c for c in classes if np.any(y == c)]
    if len(present) < 2:
        raise InputError("multiclass AUC needs at least two classes present")
    aucs = [roc_auc((y == c).astype(np.int64), P[:, classes.index(c)]).auc for c in present]
    return float(np.mean(aucs))


def _to_cents(value) -> int:
    d = Decimal(str(value)) if not isinstance(value, Decimal) else value
    if not d.is_finite():
        raise InputError(f"payoff entry {value!r} is not finite")
    q = d.quantize(CENT, rounding=ROUND_HALF_EVEN)
    if q != d:
        raise InputError(f"payoff entry {value!r} is finer than one cent")
    return int(q * 100)


@dataclass(frozen=True)
class PayoffMatrix:
    """Per-cell dollar values, oriented like ConfusionMatrix; stored as integer cents."""

    cents: tuple[tuple[int, ...], ...]
    currency: str = "USD"

    @classmethod
    def from_dollars(cls, values, currency: str = "USD") -> "PayoffMatrix":
        rows = [list(r) for r in values]
        if not rows or any(len(r) != len(rows) for r in rows):
            raise InputError("payoff matrix must be square and non-empty")
        return cls(tuple(tuple(_to_cents(v) for v in r) for r in rows), currency)

    @classmethod
    def risk_default(cls) -> "PayoffMatrix":
        """Classes (good=0, delinquent=1): a booked good account earns $200,
        a booked delinquent costs $600, declined applicants are worth $0."""
        return cls.from_dollars([[200, 0], [-600, 0]])

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.cents), len(self.cents[0]))

    def dollars(self) -> list[list[str]]:
        return [[str(Decimal(c) / 100) for c in r] for r in self.cents]

    def to_json(self) -> dict:
        return {"currency": self.currency, "dollars": self.dollars()}

    @classmethod
    def from_json(cls, doc) -> "PayoffMatrix":
        if isinstance(doc, dict):
            return cls.from_dollars(doc["dollars"], doc.get("currency", "USD"))
        return cls.from_dollars(doc)


def profit_cents(cm: ConfusionMatrix, payoff: PayoffMatrix) -> int:
    k = len(cm.classes)
    if payoff.shape != (k, k):
        raise InputError(f"payoff shape {payoff.shape} does not match a {k}x{k} confusion matrix")
    return sum(int(cm.counts[i, j]) * payoff.cents[i][j] for i in range(k) for j in range(k))


def profit(cm: ConfusionMatrix, payoff: PayoffMatrix | None = None) -> Decimal:
    """Sum over cells of count times payoff, in dollars (exact, two decimals)."""
    payoff = payoff or PayoffMatrix.risk_default()
    return (Decimal(profit_cents(cm, payoff)) / 100).quantize(CENT)


def save_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))
