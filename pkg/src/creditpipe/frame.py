"""Columnar numeric table, CSV ingestion, label schemes and stratified splits."""

from __future__ import annotations

import csv
import hashlib
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, IngestError, LabelDomainError, SchemaError

ROLES = ("feature", "label", "id")
SCHEMES = ("tri", "response_binary", "risk_binary")

_NUMERAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    role: str = "feature"

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column names must be non-empty")
        if self.role not in ROLES:
            raise SchemaError(f"unknown column role {self.role!r}")


@dataclass(frozen=True)
class IngestConfig:
    label_column: str | None = "goodbad"
    missing_token: str = ""
    id_columns: tuple[str, ...] = ()


class Frame:
    """Immutable column-major table of float64 values with a missingness mask.

    ``data`` and ``mask`` have shape ``(n_columns, n_rows)``. Masked cells hold
    an arbitrary stored value that no computation in this package reads.
    """

    __slots__ = ("columns", "data", "mask", "_index")

    def __init__(self, columns: Sequence[ColumnMeta], data: np.ndarray, mask: np.ndarray | None = None):
        columns = tuple(columns)
        data = np.array(data, dtype=np.float64, order="C", copy=True)
        if data.size == 0 and data.ndim < 2:
            data = data.reshape(len(columns), 0)
        if data.ndim != 2 or data.shape[0] != len(columns):
            raise SchemaError(f"data shape {data.shape} does not match {len(columns)} columns")
        if mask is None:
            mask = np.zeros(data.shape, dtype=bool)
        else:
            mask = np.array(mask, dtype=bool, order="C", copy=True)
        if mask.shape != data.shape:
            raise SchemaError("mask shape differs from data shape")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        if sum(c.role == "label" for c in columns) > 1:
            raise SchemaError("at most one label column is allowed")
        data.setflags(write=False)
        mask.setflags(write=False)
        self.columns = columns
        self.data = data
        self.mask = mask
        self._index = {n: i for i, n in enumerate(names)}

    # construction helpers -------------------------------------------------

    @classmethod
    def from_columns(
        cls,
        values: dict[str, Iterable[float]],
        roles: dict[str, str] | None = None,
        masks: dict[str, Iterable[bool]] | None = None,
    ) -> "Frame":
        roles = roles or {}
        masks = masks or {}
        names = list(values)
        cols = [ColumnMeta(n, roles.get(n, "feature")) for n in names]
        arrays = [np.asarray(list(values[n]) if not isinstance(values[n], np.ndarray) else values[n], dtype=np.float64)
                  for n in names]
        n_rows = len(arrays[0]) if arrays else 0
        data = np.vstack(arrays) if arrays else np.zeros((0, 0))
        mask = np.zeros((len(names), n_rows), dtype=bool)
        for i, n in enumerate(names):
            if n in masks:
                mask[i] = np.asarray(list(masks[n]), dtype=bool)
        return cls(cols, data, mask)

    @classmethod
    def from_matrix(cls, X: np.ndarray, names: Sequence[str]) -> "Frame":
        X = np.asarray(X, dtype=np.float64)
        return cls([ColumnMeta(n) for n in names], X.T)

    # basic accessors ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.data.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns if c.role == "feature"]

    @property
    def label_name(self) -> str | None:
        for c in self.columns:
            if c.role == "label":
                return c.name
        return None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __repr__(self) -> str:
        return f"Frame(n_rows={self.n_rows}, columns={len(self.columns)})"

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}") from None

    def meta(self, name: str) -> ColumnMeta:
        return self.columns[self.index_of(name)]

    def column(self, name: str) -> np.ndarray:
        return self.data[self.index_of(name)]

    def column_mask(self, name: str) -> np.ndarray:
        return self.mask[self.index_of(name)]

    def feature_matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Row-major ``(n_rows, n_features)`` copy; refuses masked cells."""
        names = self.feature_names if names is None else list(names)
        idx = [self.index_of(n) for n in names]
        if self.mask[idx].any():
            raise SchemaError("feature matrix requested but frame has missing cells")
        return np.ascontiguousarray(self.data[idx].T)

    # derived frames -------------------------------------------------------

    def take(self, rows: Sequence[int] | np.ndarray) -> "Frame":
        rows = np.asarray(rows, dtype=np.int64)
        return Frame(self.columns, self.data[:, rows], self.mask[:, rows])

    def select(self, names: Sequence[str]) -> "Frame":
        idx = [self.index_of(n) for n in names]
        return Frame([self.columns[i] for i in idx], self.data[idx], self.mask[idx])

    def drop(self, names: Iterable[str]) -> "Frame":
        gone = set(names)
        return self.select([n for n in self.names if n not in gone])

    def with_mask(self, mask: np.ndarray) -> "Frame":
        return Frame(self.columns, self.data, mask)

    def replace(self, data: np.ndarray | None = None, mask: np.ndarray | None = None) -> "Frame":
        return Frame(self.columns, self.data if data is None else data, self.mask if mask is None else mask)

    def equals(self, other: "Frame") -> bool:
        """Structural equality that ignores stored values under the mask."""
        if self.columns != other.columns or self.data.shape != other.data.shape:
            return False
        if not np.array_equal(self.mask, other.mask):
            return False
        keep = ~self.mask
        return bool(np.array_equal(self.data[keep], other.data[keep]))

    def digest(self) -> str:
        """SHA-256 over names, roles, mask and unmasked values."""
        h = hashlib.sha256()
        for c in self.columns:
            h.update(f"{c.name}\x00{c.role}\x01".encode())
        h.update(np.ascontiguousarray(self.mask).tobytes())
        h.update(np.where(self.mask, 0.0, self.data).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class LabelVector:
    classes: np.ndarray
    scheme: str = "tri"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown label scheme {self.scheme!r}")
        arr = np.asarray(self.classes, dtype=np.int64).copy()
        arr.setflags(write=False)
        allowed = {0, 1, 2} if self.scheme == "tri" else {0, 1}
        if arr.size and not set(np.unique(arr).tolist()) <= allowed:
            raise LabelDomainError(f"{self.scheme} labels must lie in {sorted(allowed)}")
        object.__setattr__(self, "classes", arr)

    def __len__(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class SplitResult:
    train_indices: np.ndarray
    valid_indices: np.ndarray
    seed: int
    class_counts: dict = field(default_factory=dict)


# CSV ---------------------------------------------------------------------


def _parse_rows(reader, header: list[str], missing: str, source: str):
    width = len(header)
    values: list[list[float]] = []
    masks: list[list[bool]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise IngestError(f"{source}: row {lineno} has {len(row)} fields, expected {width}")
        vals = []
        miss = []
        for name, raw in zip(header, row):
            tok = raw.strip()
            if tok == missing:
                vals.append(np.nan)
                miss.append(True)
            elif _NUMERAL.match(tok):
                vals.append(float(tok))
                miss.append(False)
            else:
                raise IngestError(f"{source}: row {lineno}, column {name!r}: non-numeric field {raw!r}")
        values.append(vals)
        masks.append(miss)
    return values, masks


def read_csv(path: str | Path, config: IngestConfig | None = None) -> Frame:
    """Read a numeric CSV with a mandatory header row.

    Empty fields (or ``config.missing_token``) become masked cells. Row numbers
    in error messages are 1-based file line numbers.
    """
    config = config or IngestConfig()
    path = Path(path)
    with open(path, newline="") as fh:
        return _read_stream(fh, config, str(path))


def read_csv_text(text: str, config: IngestConfig | None = None) -> Frame:
    return _read_stream(io.StringIO(text, newline=""), config or IngestConfig(), "<text>")


def _read_stream(fh, config: IngestConfig, source: str) -> Frame:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError(f"{source}: missing header row") from None
    seen = set()
    for h in header:
        if h in seen:
            raise SchemaError(f"{source}: duplicate header {h!r}")
        seen.add(h)
    values, masks = _parse_rows(reader, header, config.missing_token, source)
    roles = []
    for h in header:
        if h == config.label_column:
            roles.append("label")
        elif h in config.id_columns:
            roles.append("id")
        else:
            roles.append("feature")
    cols = [ColumnMeta(h, r) for h, r in zip(header, roles)]
    if values:
        data = np.array(values, dtype=np.float64).T
        mask = np.array(masks, dtype=bool).T
    else:
        data = np.zeros((len(header), 0))
        mask = np.zeros((len(header), 0), dtype=bool)
    return Frame(cols, data, mask)


def format_value(x: float) -> str:
    return repr(float(x))


def write_csv(frame: Frame, path: str | Path, missing_token: str = "") -> None:
    """Write ``frame`` so that :func:`read_csv` restores it exactly."""
    with open(path, "w", newline="") as fh:
        fh.write(to_csv_text(frame, missing_token))


def to_csv_text(frame: Frame, missing_token: str = "") -> str:
    out = [",".join(frame.names)]
    data = frame.data.T
    mask = frame.mask.T
    for vals, miss in zip(data, mask):
        out.append(",".join(missing_token if m else repr(float(v)) for v, m in zip(vals.tolist(), miss.tolist())))
    return "\n".join(out) + "\n"


# labels ------------------------------------------------------------------


def derive_labels(frame: Frame, label_column: str = "goodbad") -> LabelVector:
    """Three-way class per row: observed 0/1 kept, missing mapped to 2."""
    values = frame.column(label_column)
    missing = frame.column_mask(label_column)
    observed = values[~missing]
    bad = ~np.isin(observed, (0.0, 1.0))
    if bad.any():
        raise LabelDomainError(
            f"label column {label_column!r} holds values outside {{0, 1}}: {sorted(set(observed[bad].tolist()))[:5]}"
        )
    classes = np.full(frame.n_rows, 2, dtype=np.int64)
    classes[~missing] = observed.astype(np.int64)
    return LabelVector(classes, "tri")


def _require_tri(labels: LabelVector) -> None:
    if labels.scheme != "tri":
        raise SchemaError(f"expected tri labels, got {labels.scheme}")


def remap_response(labels: LabelVector) -> LabelVector:
    """Responders (classes 0 and 1) become 1, non-responders (class 2) become 0."""
    _require_tri(labels)
    return LabelVector((labels.classes != 2).astype(np.int64), "response_binary")


def subset_risk(frame: Frame, labels: LabelVector) -> tuple[Frame, LabelVector]:
    """Keep booked customers only; delinquent = 1, current = 0."""
    _require_tri(labels)
    rows = np.flatnonzero(labels.classes != 2)
    return frame.take(rows), LabelVector(labels.classes[rows], "risk_binary")


def risk_rows(labels: LabelVector) -> np.ndarray:
    _require_tri(labels)
    return np.flatnonzero(labels.classes != 2)


# split -------------------------------------------------------------------


def stratified_split(frame: Frame | None, labels: LabelVector, train_fraction: float = 0.7, seed: int = 0) -> SplitResult:
    """Per-class seeded shuffle, then ``floor(fraction * class_size)`` rows to train.

    Fractional remainders always go to validation, so each part deviates from
    the global class proportions by less than one row per class.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    y = labels.classes
    if frame is not None and frame.n_rows != len(y):
        raise SchemaError("label vector length differs from frame row count")
    rng = np.random.default_rng(seed)
    train_parts, valid_parts, counts = [], [], {}
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n_train = int(np.floor(train_fraction * len(idx) + 1e-9))
        train_parts.append(idx[:n_train])
        valid_parts.append(idx[n_train:])
        counts[int(cls)] = (n_train, len(idx) - n_train)
    train = np.concatenate(train_parts) if train_parts else np.zeros(0, dtype=np.int64)
    valid = np.concatenate(valid_parts) if valid_parts else np.zeros(0, dtype=np.int64)
    train = train[rng.permutation(len(train))]
    valid = valid[rng.permutation(len(valid))]
    return SplitResult(train.astype(np.int64), valid.astype(np.int64), int(seed), counts)
