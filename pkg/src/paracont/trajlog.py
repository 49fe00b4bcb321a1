"""Column-oriented trajectory log with a lossless CSV form."""

from __future__ import annotations

import csv
import io
import os
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidInputError

PathLike = Union[str, os.PathLike]


def _fmt(v: float) -> str:
    # 17 significant digits round-trip any IEEE double
    return format(float(v), ".17g")


def indexed(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(count)]


def standard_columns(
    n: int,
    m: int,
    h: int = 0,
    q: int = 0,
    y: int | None = None,
    aux: Sequence[str] = (),
) -> list[str]:
    """``t, x1.., u1.., y1.., H1.., lambda, theta1.., aux..``."""
    cols = ["t"] + indexed("x", n) + indexed("u", m) + indexed("y", m if y is None else y)
    cols += indexed("H", h) + ["lambda"] + indexed("theta", q) + list(aux)
    return cols


class TrajectoryLog:
    """Append-only table of float rows keyed by strictly increasing ``t``.

    The first column must be ``t``.
    """

    def __init__(self, columns: Sequence[str]):
        columns = list(columns)
        if not columns or columns[0] != "t":
            raise InvalidInputError("the first column must be 't'")
        if len(set(columns)) != len(columns):
            raise InvalidInputError("duplicate column names")
        self.columns = columns
        self._index = {c: i for i, c in enumerate(columns)}
        self._rows: list[list[float]] = []

    def __len__(self) -> int:
        return len(self._rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryLog):
            return NotImplemented
        return self.columns == other.columns and self._rows == other._rows

    def append(self, values: Iterable[float]) -> None:
        row = [float(v) for v in values]
        if len(row) != len(self.columns):
            raise InvalidInputError(f"expected {len(self.columns)} values, got {len(row)}")
        if self._rows and not row[0] > self._rows[-1][0]:
            raise InvalidInputError(f"time must increase strictly (got {row[0]!r} after {self._rows[-1][0]!r})")
        self._rows.append(row)

    def record(self, **named: float) -> None:
        """Append a row given by column name; every column must be supplied."""
        missing = [c for c in self.columns if c not in named]
        extra = [k for k in named if k not in self._index]
        if missing or extra:
            raise InvalidInputError(f"missing columns {missing}, unknown columns {extra}")
        self.append(named[c] for c in self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self._index[name]
        except KeyError:
            raise InvalidInputError(f"no column named {name!r}") from None
        return np.array([r[j] for r in self._rows], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array(self._rows, dtype=float).reshape(len(self._rows), len(self.columns))

    @property
    def last(self) -> dict[str, float]:
        if not self._rows:
            raise InvalidInputError("log is empty")
        return dict(zip(self.columns, self._rows[-1]))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self._rows:
            w.writerow(_fmt(v) for v in r)
        return buf.getvalue()

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "TrajectoryLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise InvalidInputError("empty CSV")
        log = cls(rows[0])
        for r in rows[1:]:
            if r:
                log.append(float(v) for v in r)
        return log

    @classmethod
    def read_csv(cls, path: PathLike) -> "TrajectoryLog":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_csv_text(fh.read())
