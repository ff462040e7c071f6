"""Synthetic stand-in for the proprietary credit-card campaign table.

The generator plants every structure the pipeline is meant to handle:
class imbalance in the three-way label, numeric missing-value codes,
correlated feature blocks, constant and mostly-missing columns, and a small
set of label-carrying features.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .frame import ColumnMeta, Frame, LabelVector

# Integer codes inside both default flagging ranges, [2, 9] and [92, 99999].
MISSING_CODES = (3.0, 5.0, 7.0, 93.0, 97.0, 995.0, 99998.0)
DEFAULT_PROPORTIONS = (0.156, 0.092, 0.752)


@dataclass(frozen=True)
class GeneratorSpec:
    n_rows: int = 5000
    n_features: int = 60
    class_proportions: tuple[float, float, float] = DEFAULT_PROPORTIONS
    n_correlated_blocks: int = 4
    block_size: int = 5
    missing_code_rate: float = 0.02
    n_constant_columns: int = 1
    n_high_missing_columns: int = 2
    signal_features: int = 8
    signal_shift: float = 0.6
    outlier_rate: float = 0.002
    label_column: str = "goodbad"
    seed: int = 0

    def validate(self) -> None:
        if self.n_rows < 10:
            raise ConfigError("n_rows must be at least 10")
        if len(self.class_proportions) != 3 or abs(sum(self.class_proportions) - 1.0) > 1e-9:
            raise ConfigError("class_proportions must be three values summing to 1")
        if min(self.class_proportions) < 0:
            raise ConfigError("class_proportions must be non-negative")
        if not 0.0 <= self.missing_code_rate < 1.0:
            raise ConfigError("missing_code_rate must lie in [0, 1)")
        used = (
            self.n_correlated_blocks * self.block_size
            + self.n_constant_columns
            + self.n_high_missing_columns
            + self.signal_features
        )
        if used > self.n_features:
            raise ConfigError(f"planted structure needs {used} columns but n_features={self.n_features}")
        if self.n_correlated_blocks and self.block_size < 2:
            raise ConfigError("correlated blocks need at least 2 members")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        if "class_proportions" in d:
            d["class_proportions"] = tuple(d["class_proportions"])
        return cls(**d)


@dataclass
class GroundTruth:
    labels: LabelVector
    signal_columns: list[str]
    block_assignments: dict[str, int]
    constant_columns: list[str]
    high_missing_columns: list[str]
    # (n_features, n_rows) cells that received a missing-value code
    missing_mask: np.ndarray = field(repr=False)
    feature_names: list[str] = field(default_factory=list)
    least_noise_members: dict[int, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        missing = {
            name: np.flatnonzero(self.missing_mask[i]).tolist()
            for i, name in enumerate(self.feature_names)
            if self.missing_mask[i].any()
        }
        return {
            "labels": self.labels.classes.tolist(),
            "signal_columns": self.signal_columns,
            "block_assignments": self.block_assignments,
            "least_noise_members": {str(k): v for k, v in self.least_noise_members.items()},
            "constant_columns": self.constant_columns,
            "high_missing_columns": self.high_missing_columns,
            "feature_names": self.feature_names,
            "missing_cells": missing,
        }

    @classmethod
    def from_json(cls, d: dict, n_rows: int | None = None) -> "GroundTruth":
        names = d["feature_names"]
        n_rows = len(d["labels"]) if n_rows is None else n_rows
        mask = np.zeros((len(names), n_rows), dtype=bool)
        for name, rows in d["missing_cells"].items():
            mask[names.index(name), rows] = True
        return cls(
            labels=LabelVector(np.asarray(d["labels"], dtype=np.int64), "tri"),
            signal_columns=list(d["signal_columns"]),
            block_assignments={k: int(v) for k, v in d["block_assignments"].items()},
            constant_columns=list(d["constant_columns"]),
            high_missing_columns=list(d["high_missing_columns"]),
            missing_mask=mask,
            feature_names=list(names),
            least_noise_members={int(k): v for k, v in d.get("least_noise_members", {}).items()},
        )


def generate(spec: GeneratorSpec | None = None) -> tuple[Frame, GroundTruth]:
    """Draw a dataset from ``spec``; identical specs give identical frames."""
    spec = spec or GeneratorSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, p = spec.n_rows, spec.n_features

    classes = rng.choice(3, size=n, p=np.asarray(spec.class_proportions, dtype=np.float64)).astype(np.int64)

    roles: list[tuple[str, int]] = []
    for b in range(spec.n_correlated_blocks):
        roles += [("block", b)] * spec.block_size
    roles += [("signal", -1)] * spec.signal_features
    roles += [("constant", -1)] * spec.n_constant_columns
    roles += [("high_missing", -1)] * spec.n_high_missing_columns
    roles += [("noise", -1)] * (p - len(roles))
    order = rng.permutation(p)
    roles = [roles[i] for i in order]
    names = [f"f{j:03d}" for j in range(p)]

    Z = np.empty((p, n))
    latents = rng.standard_normal((spec.n_correlated_blocks, n))
    noise_levels = np.linspace(0.1, 0.3, spec.block_size) if spec.block_size > 1 else np.array([0.1])
    block_seen: dict[int, int] = {}
    least_noise: dict[int, str] = {}
    signal_idx = 0
    for j, (role, b) in enumerate(roles):
        if role == "block":
            m = block_seen.get(b, 0)
            block_seen[b] = m + 1
            Z[j] = latents[b] + noise_levels[m] * rng.standard_normal(n)
            if m == 0:
                least_noise[b] = names[j]
        elif role == "signal":
            # even-numbered signals separate responders, odd ones separate delinquents
            means = np.array([1.0, 1.0, 0.0]) if signal_idx % 2 == 0 else np.array([0.0, 1.0, 0.0])
            sign = 1.0 if rng.random() < 0.5 else -1.0
            Z[j] = sign * spec.signal_shift * means[classes] + rng.standard_normal(n)
            signal_idx += 1
        else:
            Z[j] = rng.standard_normal(n)

    # per-column affine maps keep scales heterogeneous
    loc = rng.uniform(-3.0, 3.0, size=p)
    scale = rng.uniform(0.5, 4.0, size=p)
    values = loc[:, None] + scale[:, None] * Z

    if spec.outlier_rate > 0:
        hit = rng.random((p, n)) < spec.outlier_rate
        values = np.where(hit, loc[:, None] + scale[:, None] * 8.0 * Z, values)

    codes = np.asarray(MISSING_CODES)
    missing = rng.random((p, n)) < spec.missing_code_rate
    n_high = int(np.ceil(0.6 * n))
    for j, (role, _) in enumerate(roles):
        if role == "constant":
            values[j] = 1.5
        elif role == "high_missing":
            rows = rng.choice(n, size=n_high, replace=False)
            missing[j, rows] = True
    values = np.where(missing, codes[rng.integers(0, len(codes), size=(p, n))], values)

    label_vals = np.where(classes == 2, np.nan, classes.astype(np.float64))
    data = np.vstack([values, label_vals[None, :]])
    mask = np.zeros_like(data, dtype=bool)
    mask[-1] = classes == 2
    cols = [ColumnMeta(nm, "feature") for nm in names] + [ColumnMeta(spec.label_column, "label")]
    frame = Frame(cols, data, mask)

    truth = GroundTruth(
        labels=LabelVector(classes, "tri"),
        signal_columns=[names[j] for j, (r, _) in enumerate(roles) if r == "signal"],
        block_assignments={names[j]: b for j, (r, b) in enumerate(roles) if r == "block"},
        constant_columns=[names[j] for j, (r, _) in enumerate(roles) if r == "constant"],
        high_missing_columns=[names[j] for j, (r, _) in enumerate(roles) if r == "high_missing"],
        missing_mask=missing,
        feature_names=names,
        least_noise_members=least_noise,
    )
    return frame, truth


def write_ground_truth(truth: GroundTruth, path: str | Path, spec: GeneratorSpec | None = None) -> None:
    doc = truth.to_json()
    if spec is not None:
        doc["spec"] = asdict(spec)
    Path(path).write_text(json.dumps(doc, sort_keys=True))
