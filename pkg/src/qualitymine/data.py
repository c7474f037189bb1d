"""Tabular data model, CSV ingestion, imputation and quality-score composition.

A :class:`Dataset` is an immutable collection of named continuous columns.
Each column carries a role (``input``, ``response`` or ``ignored``) and a
boolean missing mask. Masked cells hold ``nan`` and are never used by any
statistic computed in this package.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CellError,
    ImputationError,
    ParseError,
    ReferenceLookupError,
    SchemaError,
    ScoreRangeError,
    SpecError,
    SplitError,
)

ROLES = ("input", "response", "ignored")
IMPUTE_STRATEGIES = ("column-mean", "column-median", "reference-lookup")


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    role: str
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.missing_mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 1:
            raise SchemaError(f"column {self.name!r}: values and mask differ in length")
        values = np.where(mask, np.nan, values)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing_mask", _frozen(mask))

    @classmethod
    def from_values(cls, name, values, role="input"):
        """Build a column from floats, treating ``None`` and ``nan`` as missing."""
        raw = [np.nan if v is None else float(v) for v in values]
        arr = np.array(raw, dtype=float)
        return cls(name, role, arr, np.isnan(arr))

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def observed(self) -> np.ndarray:
        return self.values[~self.missing_mask]

    def __eq__(self, other):
        if not isinstance(other, Column):
            return NotImplemented
        return (
            self.name == other.name
            and self.role == other.role
            and np.array_equal(self.missing_mask, other.missing_mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of named columns sharing one row count."""

    name: str
    columns: tuple
    n_rows: int = field(default=-1)

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        n = self.n_rows
        if n < 0:
            n = len(cols[0].values) if cols else 0
            object.__setattr__(self, "n_rows", n)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {self.name!r}")
        for c in cols:
            if len(c.values) != n:
                raise SchemaError(
                    f"column {c.name!r} has {len(c.values)} rows, expected {n}"
                )
        if sum(c.role == "response" for c in cols) > 1:
            raise SchemaError("at most one column may have role 'response'")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.n_rows == other.n_rows and self.columns == other.columns

    __hash__ = None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def input_names(self) -> list[str]:
        return [c.name for c in self.columns if c.role == "input"]

    @property
    def response_name(self) -> str | None:
        for c in self.columns:
            if c.role == "response":
                return c.name
        return None

    @property
    def schema(self) -> dict[str, str]:
        return {c.name: c.role for c in self.columns}

    def __getitem__(self, name) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return any(c.name == name for c in self.columns)

    def n_missing(self) -> int:
        return sum(c.n_missing for c in self.columns)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack the named columns into an ``(n_rows, len(names))`` array."""
        return np.column_stack([self[n].values for n in names]) if names else np.empty(
            (self.n_rows, 0)
        )

    def response(self) -> np.ndarray:
        name = self.response_name
        if name is None:
            raise SchemaError(f"dataset {self.name!r} has no response column")
        return self[name].values

    def take(self, rows, name=None) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        cols = [Column(c.name, c.role, c.values[rows], c.missing_mask[rows]) for c in self.columns]
        return Dataset(name or self.name, cols, len(rows))

    def with_roles(self, roles: Mapping[str, str]) -> "Dataset":
        cols = [replace(c, role=roles.get(c.name, c.role)) for c in self.columns]
        return Dataset(self.name, cols, self.n_rows)

    def with_column(self, column: Column) -> "Dataset":
        if column.name in self:
            raise SchemaError(f"column {column.name!r} already exists")
        return Dataset(self.name, self.columns + (column,), self.n_rows)

    def row(self, i) -> dict[str, float]:
        return {c.name: float(c.values[i]) for c in self.columns}

    @classmethod
    def from_arrays(cls, name, data: Mapping[str, Iterable], roles: Mapping[str, str] | None = None):
        roles = roles or {}
        cols = [Column.from_values(k, v, roles.get(k, "input")) for k, v in data.items()]
        return cls(name, cols)


def load_table(source, schema: Mapping[str, str], *, missing_token: str = "",
               name: str = "table", comment: str | None = None) -> Dataset:
    """Parse delimiter-separated text into a :class:`Dataset`.

    Parameters
    ----------
    source : str, bytes or file-like
        Comma-separated UTF-8 text with a mandatory header row.
    schema : mapping
        Role for every header name.
    missing_token : str
        Cell text that marks a missing value in addition to the empty field.
    comment : str, optional
        Lines starting with this prefix are skipped before the header.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    lines = text.splitlines()
    offset = 0
    if comment:
        while offset < len(lines) and lines[offset].startswith(comment):
            offset += 1
    reader = csv.reader(lines[offset:])
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("missing header row", line=offset + 1) from None

    unknown = [k for k in schema if k not in header]
    if unknown:
        raise SchemaError(f"schema names unknown columns: {unknown}")
    unassigned = [h for h in header if h not in schema]
    if unassigned:
        raise SchemaError(f"no role assigned to columns: {unassigned}")
    if len(set(header)) != len(header):
        raise SchemaError("duplicate header names")

    values = [[] for _ in header]
    masks = [[] for _ in header]
    n = 0
    for lineno, fields in enumerate(reader, start=offset + 2):
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line=lineno)
        for j, cell in enumerate(fields):
            cell = cell.strip()
            if cell == "" or (missing_token and cell == missing_token):
                values[j].append(np.nan)
                masks[j].append(True)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise CellError(f"non-numeric cell {cell!r}", n, header[j]) from None
            values[j].append(v)
            masks[j].append(False)
        n += 1

    cols = [
        Column(h, schema[h], np.array(values[j], dtype=float), np.array(masks[j], dtype=bool))
        for j, h in enumerate(header)
    ]
    return Dataset(name, cols, n)


def dump_table(d: Dataset, *, missing_token: str = "") -> str:
    """Serialize a dataset to CSV text; the inverse of :func:`load_table`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(d.column_names)
    for i in range(d.n_rows):
        writer.writerow(
            missing_token if c.missing_mask[i] else repr(float(c.values[i]))
            for c in d.columns
        )
    return buf.getvalue()


def impute_missing(d: Dataset, strategy: str = "column-mean",
                   reference: Mapping[str, float] | None = None) -> Dataset:
    """Fill masked cells and return a dataset with no missing entries.

    Statistics are computed over observed entries only; observed values are
    left untouched.
    """
    if strategy not in IMPUTE_STRATEGIES:
        raise ImputationError(f"unknown strategy {strategy!r}")
    cols = []
    for c in d.columns:
        if not c.n_missing:
            cols.append(c)
            continue
        if strategy == "reference-lookup":
            if reference is None or c.name not in reference:
                raise ReferenceLookupError(f"no reference value for column {c.name!r}")
            fill = float(reference[c.name])
        else:
            obs = c.observed()
            if obs.size == 0:
                raise ImputationError(f"column {c.name!r} is entirely missing")
            fill = float(np.mean(obs) if strategy == "column-mean" else np.median(obs))
        values = np.where(c.missing_mask, fill, c.values)
        cols.append(Column(c.name, c.role, values, np.zeros(d.n_rows, dtype=bool)))
    return Dataset(d.name, cols, d.n_rows)


def load_reference(source) -> dict[str, float]:
    """Read a two-column ``variable,value`` reference file."""
    text = source.read() if hasattr(source, "read") else source
    out = {}
    for i, fields in enumerate(csv.reader(text.splitlines()), start=1):
        if not fields or fields[0].startswith("#"):
            continue
        if len(fields) != 2:
            raise ParseError("reference rows need exactly two fields", line=i)
        key, value = fields[0].strip(), fields[1].strip()
        if not out and key == "variable":
            continue
        try:
            out[key] = float(value)
        except ValueError:
            raise ParseError(f"non-numeric reference value {value!r}", line=i) from None
    return out


@dataclass(frozen=True)
class QualityScoreSpec:
    """Weighted components of a composite quality score.

    Weights are normalized to sum to one when the score is composed.
    """

    components: tuple
    output_name: str = "quality_score"

    def __post_init__(self):
        object.__setattr__(self, "components", tuple((str(n), float(w)) for n, w in self.components))

    @classmethod
    def equal_weights(cls, names, output_name="quality_score"):
        return cls(tuple((n, 1.0) for n in names), output_name)

    def normalized(self) -> list[tuple[str, float]]:
        if not self.components:
            raise SpecError("quality score needs at least one component")
        if any(w < 0 for _, w in self.components):
            raise SpecError("component weights must be nonnegative")
        total = sum(w for _, w in self.components)
        if total <= 0:
            raise SpecError("component weights sum to zero")
        return [(n, w / total) for n, w in self.components]


def compose_quality_score(d: Dataset, spec: QualityScoreSpec) -> Dataset:
    """Append the weighted mean of the component columns as the response."""
    weights = spec.normalized()
    if d.response_name is not None:
        raise SpecError(f"dataset already has response column {d.response_name!r}")
    score = np.zeros(d.n_rows)
    for name, w in weights:
        if name not in d:
            raise SpecError(f"component column {name!r} does not exist")
        c = d[name]
        if c.role != "input":
            raise SpecError(f"component column {name!r} has role {c.role!r}, expected 'input'")
        if c.n_missing:
            raise SpecError(f"component column {name!r} has missing entries; impute first")
        if np.any((c.values < 0) | (c.values > 1)):
            raise ScoreRangeError(f"component column {name!r} has values outside [0, 1]")
        score += w * c.values
    if len(weights) == 1:
        score = d[weights[0][0]].values.copy()
    col = Column(spec.output_name, "response", score, np.zeros(d.n_rows, dtype=bool))
    return d.with_column(col)


def split_indices(n_rows: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n_rows < 2:
        raise SplitError(f"need at least 2 rows to split, got {n_rows}")
    if not 0 < test_fraction < 1:
        raise SplitError("test_fraction must lie in (0, 1)")
    n_test = min(max(int(round(test_fraction * n_rows)), 1), n_rows - 1)
    perm = np.random.default_rng(seed).permutation(n_rows)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split_train_test(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test partition, reproducible for a fixed seed."""
    train, test = split_indices(d.n_rows, test_fraction, seed)
    return d.take(train, f"{d.name}/train"), d.take(test, f"{d.name}/test")
