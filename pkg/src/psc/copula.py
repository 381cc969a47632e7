"""Gaussian copula density and its log-derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import norm_pdf, norm_ppf

CDF_CLAMP = 1e-10
FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family and association parameter ``rho``."""

    family: str = "gaussian"
    rho: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unsupported copula family {self.family!r}")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho}")


def clamp_cdf(u):
    return np.clip(u, CDF_CLAMP, 1.0 - CDF_CLAMP)


def _check_unit(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u <= 0) | (u >= 1) | np.isnan(u)) or np.any((v <= 0) | (v >= 1) | np.isnan(v)):
        raise DomainError("copula arguments must lie strictly inside (0, 1)")
    return u, v


def density_from_normal_scores(rho: float, x, y):
    """Gaussian copula density at normal scores ``x = ppf(u)``, ``y = ppf(v)``."""
    if rho == 0.0:
        return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))
    r2 = rho * rho
    q = (r2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - r2))
    return np.exp(-q) / np.sqrt(1.0 - r2)


def scores_from_normal_scores(rho: float, x, y):
    """``(d log c / du, d log c / dv)`` at normal scores ``x``, ``y``."""
    if rho == 0.0:
        z = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
        return z, z.copy()
    k = rho / (1.0 - rho * rho)
    su = k * (y - rho * x) / norm_pdf(x)
    sv = k * (x - rho * y) / norm_pdf(y)
    return su, sv


def copula_density(spec: CopulaSpec, u, v):
    u, v = _check_unit(u, v)
    out = density_from_normal_scores(spec.rho, norm_ppf(u), norm_ppf(v))
    return float(out) if np.ndim(out) == 0 else out


def copula_scores(spec: CopulaSpec, u, v):
    u, v = _check_unit(u, v)
    su, sv = scores_from_normal_scores(spec.rho, norm_ppf(u), norm_ppf(v))
    if np.ndim(su) == 0:
        return float(su), float(sv)
    return su, sv
