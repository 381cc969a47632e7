"""Working models linear in their coefficients: ``f(s1, s0; eta) = eta @ g(s1, s0)``."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

_FACTOR = re.compile(r"^(s1|s0)(?:\^(\d+))?$")


def _parse_term(text: str) -> tuple[int, int]:
    text = text.replace(" ", "")
    if text == "1":
        return (0, 0)
    exps = {"s1": 0, "s0": 0}
    seen = set()
    for factor in text.split("*"):
        m = _FACTOR.match(factor)
        if m is None:
            raise ConfigError(f"cannot parse basis term {text!r}")
        var = m.group(1)
        if var in seen:
            raise ConfigError(f"variable {var} repeated in basis term {text!r}")
        seen.add(var)
        exps[var] = int(m.group(2) or 1)
    if exps["s1"] == 0 and exps["s0"] == 0:
        return (0, 0)
    return (exps["s1"], exps["s0"])


def term_name(term: tuple[int, int]) -> str:
    j, k = term
    parts = []
    for var, e in (("s1", j), ("s0", k)):
        if e == 1:
            parts.append(var)
        elif e > 1:
            parts.append(f"{var}^{e}")
    return "*".join(parts) or "1"


class UniformWeight:
    def __call__(self, s1, s0):
        return np.ones(np.broadcast_shapes(np.shape(s1), np.shape(s0)))

    def gradient(self, s1, s0):
        z = np.zeros(np.broadcast_shapes(np.shape(s1), np.shape(s0)))
        return z, z.copy()

    def __eq__(self, other):
        return isinstance(other, UniformWeight)

    def __hash__(self):
        return hash("uniform")

    def __repr__(self):
        return "uniform"


@dataclass(frozen=True, eq=False)
class TabulatedWeight:
    """Weight tabulated on a rectangular ``(s1, s0)`` grid.

    Bilinear inside the table and extended by the nearest edge value outside,
    so the weight is continuous everywhere; put zeros on the boundary rows to
    restrict the projection to the tabulated region.
    """

    s1: np.ndarray
    s0: np.ndarray
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.values.shape != (self.s1.size, self.s0.size):
            raise ConfigError("weight table shape does not match its axes")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ConfigError("tabulated weights must be finite and nonnegative")

    def _cell(self, s, axis):
        s = np.clip(s, axis[0], axis[-1])
        i = np.clip(np.searchsorted(axis, s, side="right") - 1, 0, axis.size - 2)
        width = axis[i + 1] - axis[i]
        return i, (s - axis[i]) / width, width

    def _corners(self, s1, s0):
        s1, s0 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s0, float))
        i, a, da = self._cell(s1, self.s1)
        j, b, db = self._cell(s0, self.s0)
        v = self.values
        return v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1], a, b, da, db, s1, s0

    def __call__(self, s1, s0):
        w00, w10, w01, w11, a, b, *_ = self._corners(s1, s0)
        return (1 - a) * (1 - b) * w00 + a * (1 - b) * w10 + (1 - a) * b * w01 + a * b * w11

    def gradient(self, s1, s0):
        """Partial derivatives of the interpolant (zero where the weight is extended)."""
        w00, w10, w01, w11, a, b, da, db, s1, s0 = self._corners(s1, s0)
        d1 = ((1 - b) * (w10 - w00) + b * (w11 - w01)) / da
        d0 = ((1 - a) * (w01 - w00) + a * (w11 - w10)) / db
        d1 = np.where((s1 < self.s1[0]) | (s1 > self.s1[-1]), 0.0, d1)
        d0 = np.where((s0 < self.s0[0]) | (s0 > self.s0[-1]), 0.0, d0)
        return d1, d0

    def __eq__(self, other):
        return (isinstance(other, TabulatedWeight)
                and np.array_equal(self.s1, other.s1)
                and np.array_equal(self.s0, other.s0)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.s1.tobytes(), self.s0.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"table:{self.source}" if self.source else "table"

    @classmethod
    def from_csv(cls, path) -> "TabulatedWeight":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        try:
            pts = np.array([[float(r["s1"]), float(r["s0"]), float(r["w"])] for r in rows])
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: weight table needs numeric columns s1,s0,w ({exc})") from None
        if pts.size == 0:
            raise ConfigError(f"{path}: weight table is empty")
        s1 = np.unique(pts[:, 0])
        s0 = np.unique(pts[:, 1])
        if s1.size < 2 or s0.size < 2 or pts.shape[0] != s1.size * s0.size:
            raise ConfigError(f"{path}: weight table must cover a full rectangular grid")
        vals = np.full((s1.size, s0.size), np.nan)
        vals[np.searchsorted(s1, pts[:, 0]), np.searchsorted(s0, pts[:, 1])] = pts[:, 2]
        if np.isnan(vals).any():
            raise ConfigError(f"{path}: weight table has duplicate or missing grid points")
        return cls(s1, s0, vals, str(path))


def parse_weight(spec: str | None):
    if spec is None or spec.strip().lower() in ("", "uniform", "1"):
        return UniformWeight()
    return TabulatedWeight.from_csv(spec)


@dataclass(frozen=True)
class WorkingModelSpec:
    """Basis terms ``s1^j * s0^k`` and a weight function over ``(s1, s0)``."""

    terms: tuple[tuple[int, int], ...]
    weight: object = field(default_factory=UniformWeight)

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ConfigError("working model needs at least one basis term")
        if len(set(self.terms)) != len(self.terms):
            raise ConfigError("basis terms must be distinct")
        if any(j < 0 or k < 0 for j, k in self.terms):
            raise ConfigError("basis exponents must be nonnegative")

    @classmethod
    def parse(cls, basis: str = "1,s1,s0", weight=None) -> "WorkingModelSpec":
        terms = tuple(_parse_term(t) for t in basis.split(",") if t.strip())
        w = parse_weight(weight) if weight is None or isinstance(weight, str) else weight
        return cls(terms, w)

    @property
    def q(self) -> int:
        return len(self.terms)

    @property
    def names(self) -> list[str]:
        return [term_name(t) for t in self.terms]

    @property
    def basis_string(self) -> str:
        return ",".join(self.names)


def basis_eval(spec: WorkingModelSpec, s1, s0) -> np.ndarray:
    """Basis vector ``g(s1, s0)``; broadcasts over array inputs, basis on the last axis."""
    s1, s0 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s0, float))
    out = np.empty(s1.shape + (spec.q,))
    for col, (j, k) in enumerate(spec.terms):
        out[..., col] = s1 ** j * s0 ** k
    return out


def basis_gradient(spec: WorkingModelSpec, s1, s0) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of ``g`` in ``s1`` and in ``s0``, shaped like :func:`basis_eval`."""
    s1, s0 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s0, float))
    d1 = np.zeros(s1.shape + (spec.q,))
    d0 = np.zeros(s1.shape + (spec.q,))
    for col, (j, k) in enumerate(spec.terms):
        if j:
            d1[..., col] = j * s1 ** (j - 1) * s0 ** k
        if k:
            d0[..., col] = k * s1 ** j * s0 ** (k - 1)
    return d1, d0
