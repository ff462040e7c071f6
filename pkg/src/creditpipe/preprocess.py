"""Leakage-safe cleaning: code flagging, column drops, imputation, outlier clamp, scaling.

All statistics are fitted on the training partition once and then applied
unchanged to any other partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PipelineError, SchemaError
from .frame import Frame

MODEL_VERSION = 1


@dataclass(frozen=True)
class CodeRanges:
    intervals: tuple[tuple[int, int], ...] = ((2, 9), (92, 99999))

    def __post_init__(self):
        ivs = tuple((int(lo), int(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if lo > hi:
                raise SchemaError(f"malformed code range [{lo}, {hi}]")
        object.__setattr__(self, "intervals", ivs)

    def flags(self, values: np.ndarray) -> np.ndarray:
        """True where a value is integer-valued and inside any interval."""
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            integral = np.isfinite(values) & (np.floor(values) == values)
        hit = np.zeros(values.shape, dtype=bool)
        for lo, hi in self.intervals:
            hit |= (values >= lo) & (values <= hi)
        return integral & hit


@dataclass(frozen=True)
class ColumnStats:
    median: float
    mean: float
    std: float
    min: float
    max: float
    degenerate: bool = False


@dataclass(frozen=True)
class PreprocessModel:
    code_ranges: CodeRanges
    kept_columns: tuple[str, ...]
    stats: dict[str, ColumnStats]
    dropped_columns: dict[str, str] = field(default_factory=dict)
    missing_drop_threshold: float = 0.5

    def to_json(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "code_ranges": [list(iv) for iv in self.code_ranges.intervals],
            "missing_drop_threshold": self.missing_drop_threshold,
            "kept_columns": list(self.kept_columns),
            "dropped_columns": dict(self.dropped_columns),
            "stats": {
                name: {
                    "median": s.median,
                    "mean": s.mean,
                    "std": s.std,
                    "min": s.min,
                    "max": s.max,
                    "degenerate": s.degenerate,
                }
                for name, s in self.stats.items()
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PreprocessModel":
        if doc.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported preprocess model version {doc.get('version')!r}")
        return cls(
            code_ranges=CodeRanges(tuple(tuple(iv) for iv in doc["code_ranges"])),
            kept_columns=tuple(doc["kept_columns"]),
            stats={k: ColumnStats(**v) for k, v in doc["stats"].items()},
            dropped_columns=dict(doc["dropped_columns"]),
            missing_drop_threshold=doc["missing_drop_threshold"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "PreprocessModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def flag_missing_codes(frame: Frame, ranges: CodeRanges | None = None) -> Frame:
    """Mask feature cells that hold a missing-value code.

    Only integer-valued cells inside one of ``ranges`` are flagged; label and
    id columns are left alone.
    """
    ranges = ranges or CodeRanges()
    if frame.n_rows == 0:
        return frame
    mask = frame.mask.copy()
    for i, col in enumerate(frame.columns):
        if col.role == "feature":
            mask[i] |= ranges.flags(frame.data[i]) & ~frame.mask[i]
    return frame.with_mask(mask)


def _clamp(values: np.ndarray, st: ColumnStats) -> np.ndarray:
    return np.where(np.abs(values - st.mean) > 3.0 * st.std, st.median, values)


def fit_preprocessor(
    train: Frame,
    ranges: CodeRanges | None = None,
    missing_drop_threshold: float = 0.5,
) -> PreprocessModel:
    """Fit the cleaning chain on ``train``.

    Order: flag codes, drop columns (missing fraction above the threshold, or at
    most one distinct observed value), median over observed cells, mean and
    population std over the imputed column, min/max over the clamped column.
    """
    ranges = ranges or CodeRanges()
    if train.n_rows < 1:
        raise PipelineError("preprocess", "training frame has no rows")
    flagged = flag_missing_codes(train, ranges)
    dropped: dict[str, str] = {}
    stats: dict[str, ColumnStats] = {}
    kept: list[str] = []
    for name in flagged.feature_names:
        values = flagged.column(name)
        miss = flagged.column_mask(name)
        observed = values[~miss]
        if miss.mean() > missing_drop_threshold:
            dropped[name] = "high_missing"
            continue
        if np.unique(observed).size <= 1:
            dropped[name] = "single_unique"
            continue
        median = float(np.median(observed))
        imputed = np.where(miss, median, values)
        mean = float(imputed.mean())
        std = float(imputed.std())
        clamped = np.where(np.abs(imputed - mean) > 3.0 * std, median, imputed)
        lo, hi = float(clamped.min()), float(clamped.max())
        stats[name] = ColumnStats(median, mean, std, lo, hi, degenerate=hi == lo)
        kept.append(name)
    if not kept:
        raise PipelineError("preprocess", "no usable features")
    return PreprocessModel(ranges, tuple(kept), stats, dropped, missing_drop_threshold)


def apply_preprocessor(model: PreprocessModel, frame: Frame) -> Frame:
    """Transform ``frame`` with the fitted statistics; output has no missing cells.

    Non-feature columns are carried through untouched (label missingness is
    meaningful and stays masked).
    """
    missing = [n for n in model.kept_columns if n not in frame]
    if missing:
        raise SchemaError(f"frame lacks preprocessed columns: {missing[:5]}")
    out_names = [n for n in frame.names if n in model.stats or frame.meta(n).role != "feature"]
    cols, data, mask = [], [], []
    for name in out_names:
        meta = frame.meta(name)
        values = frame.column(name)
        miss = frame.column_mask(name)
        if meta.role != "feature":
            cols.append(meta)
            data.append(values)
            mask.append(miss)
            continue
        st = model.stats[name]
        miss = miss | model.code_ranges.flags(values)
        x = np.where(miss, st.median, values)
        x = _clamp(x, st)
        if st.degenerate:
            x = np.zeros_like(x)
        else:
            x = np.clip((x - st.min) / (st.max - st.min), 0.0, 1.0)
        cols.append(meta)
        data.append(x)
        mask.append(np.zeros_like(miss))
    n = frame.n_rows
    return Frame(cols, np.vstack(data) if data else np.zeros((0, n)), np.vstack(mask) if mask else None)
