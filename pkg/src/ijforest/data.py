"""Dataset container and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data violates the Dataset contract."""


@dataclass(frozen=True, eq=False)
class SplitRule:
    """``x[variable] <= cut`` routes left, everything else right."""

    variable: int
    cut: float

    def goes_left(self, x: Sequence[float]) -> bool:
        return x[self.variable] <= self.cut


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix plus response vector.

    Features are stored row-major as given; ``columns`` is a cached
    column-major copy that the split search reads from.
    """

    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...]
    response_name: str = "y"
    columns: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.response, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if y.shape[0] != n:
            raise DataError(f"response length {y.shape[0]} != feature rows {n}")
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise DataError("need at least 1 feature column")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature at row {r}, column {c}")
        if not np.all(np.isfinite(y)):
            r = int(np.argwhere(~np.isfinite(y))[0, 0])
            raise DataError(f"non-finite response at row {r}")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != p:
            raise DataError(f"{len(names)} column names for {p} feature columns")
        X.setflags(write=False)
        y.setflags(write=False)
        cols = np.ascontiguousarray(X.T)
        cols.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def with_response(self, response: np.ndarray) -> "Dataset":
        return Dataset(self.features, response, self.column_names, self.response_name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.column_names == other.column_names
            and self.response_name == other.response_name
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.response, other.response)
        )


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {text!r} as a real") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a CSV file.

    Row numbers in error messages are 1-based data rows (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for lineno, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(raw)} cells, expected {len(header)}")
            rows.append([_parse_cell(c.strip(), lineno, header[j]) for j, c in enumerate(raw)])
    table = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return header, table


def load_csv(path: str | Path, response_column: str) -> Dataset:
    """Read a numeric CSV with a header row.

    ``response_column`` is pulled out as the response; the remaining
    columns become features in file order.
    """
    header, table = read_table(path)
    if response_column not in header:
        raise DataError(f"{path}: response column {response_column!r} not in header {header}")
    if table.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {table.shape[0]}")
    r = header.index(response_column)
    keep = [j for j in range(len(header)) if j != r]
    if not keep:
        raise DataError(f"{path}: no feature columns besides the response")
    return Dataset(table[:, keep], table[:, r], tuple(header[j] for j in keep), response_column)


def format_real(value: float) -> str:
    """Shortest repr that round-trips exactly (never more than 17 digits)."""
    return repr(float(value))


def save_csv(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.column_names, dataset.response_name])
        for row, yv in zip(dataset.features, dataset.response):
            writer.writerow([*(format_real(v) for v in row), format_real(yv)])
