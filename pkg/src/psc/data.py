"""Observed-data container and CSV input/output."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, NoOverlapError, SchemaError, ValidationError

MIN_ROWS = 20
_COVARIATE = re.compile(r"^x(\d+)$")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Treatment ``z``, post-treatment variable ``s``, outcome ``y`` and covariates ``x``."""

    z: np.ndarray
    s: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z)
        s = np.asarray(self.s, dtype=float)
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        n = s.shape[0]
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else np.zeros((n, 0))
        if z.shape != (n,) or y.shape != (n,) or x.shape[0] != n:
            raise ValidationError("z, s, y and x must have the same number of rows")
        bad = np.flatnonzero((z != 0) & (z != 1))
        if bad.size:
            raise ValidationError(f"z must be 0 or 1; offending rows: {(bad + 1).tolist()[:20]}")
        for name, arr in (("s", s), ("y", y), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"column {name} contains missing or non-finite values")
        object.__setattr__(self, "z", z.astype(np.int64))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def arm(self, z: int) -> np.ndarray:
        return self.z == z

    def take(self, idx) -> "Dataset":
        return Dataset(self.z[idx], self.s[idx], self.y[idx], self.x[idx])

    def validate(self, min_rows: int = MIN_ROWS) -> "Dataset":
        if self.n < min_rows:
            raise InsufficientDataError(f"need at least {min_rows} rows, got {self.n}")
        n1 = int(self.z.sum())
        if n1 == 0 or n1 == self.n:
            raise NoOverlapError("no overlap: data contain a single treatment arm")
        return self


def parse_dataset(path) -> Dataset:
    """Read a CSV with header ``z,s,y,x1,...,xk``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        for col in ("z", "s", "y"):
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        cov = sorted(
            ((int(m.group(1)), i) for i, h in enumerate(header) if (m := _COVARIATE.match(h))),
        )
        if [k for k, _ in cov] != list(range(1, len(cov) + 1)):
            raise SchemaError(f"{path}: covariate columns must be x1..xk without gaps")
        cols = [header.index("z"), header.index("s"), header.index("y")] + [i for _, i in cov]
        names = ["z", "s", "y"] + [f"x{k}" for k, _ in cov]
        rows = []
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for name, ci in zip(names, cols):
                cell = rec[ci].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: cannot parse value {cell!r} in row {lineno}, column {name!r}"
                    ) from None
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(names))
    z = arr[:, 0]
    bad = np.flatnonzero((z != 0) & (z != 1))
    if bad.size:
        raise ValidationError(f"{path}: z must be 0 or 1; offending rows: {(bad + 1).tolist()[:20]}")
    return Dataset(z.astype(np.int64), arr[:, 1], arr[:, 2], arr[:, 3:])


def write_dataset(data: Dataset, path) -> None:
    header = ["z", "s", "y"] + [f"x{j + 1}" for j in range(data.d)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            w.writerow([int(data.z[i]), repr(float(data.s[i])), repr(float(data.y[i]))]
                       + [repr(float(v)) for v in data.x[i]])
