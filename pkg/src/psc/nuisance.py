"""Nuisance models: treatment probability, outcome means and kernel conditional densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset
from .errors import InsufficientDataError, NoOverlapError, SeparationError
from .numerics import norm_cdf

DEFAULT_CLAMP = 0.01
DEFAULT_FLOOR = 1e-8
MIN_ARM_ROWS = 10
SUPPORT_QUANTILES = (0.001, 0.999)
SUPPORT_MARGIN = 3.0
# log-kernel below this underflows exp(); the query point has no covariate-kernel mass
_EXTRAPOLATION_LOG_MASS = -700.0


def as_rows(x, d: int) -> np.ndarray:
    """Covariates as an ``(m, d)`` array; a 1-d input is one row (or ``m`` rows when ``d == 1``)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x
    if d == 0:
        return np.zeros((1, 0))
    return x.reshape(-1, d)


def _design(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x])


@dataclass(frozen=True, eq=False)
class PropensityFit:
    coefficients: np.ndarray
    clamp: float = DEFAULT_CLAMP
    iterations: int = 0

    def raw(self, x) -> np.ndarray:
        x = as_rows(x, self.coefficients.size - 1)
        return special.expit(_design(x) @ self.coefficients)

    def __call__(self, x) -> np.ndarray:
        return np.clip(self.raw(x), self.clamp, 1.0 - self.clamp)

    def clamp_count(self, x) -> int:
        p = self.raw(x)
        return int(np.sum((p < self.clamp) | (p > 1.0 - self.clamp)))


def _loglik(X, z, beta):
    eta = X @ beta
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)))


def fit_treatment_model(data: Dataset, clamp: float = DEFAULT_CLAMP,
                        max_iter: int = 100, tol: float = 1e-8) -> PropensityFit:
    """Logistic regression of ``z`` on ``(1, x)`` by IRLS with step halving."""
    if not 0.0 <= clamp < 0.5:
        raise ValueError(f"clamp must lie in [0, 0.5), got {clamp}")
    z = data.z.astype(float)
    if z.sum() == 0 or z.sum() == data.n:
        raise NoOverlapError("no overlap: all units are in a single treatment arm")
    X = _design(data.x)
    if data.n <= X.shape[1]:
        raise InsufficientDataError(f"insufficient data: {data.n} rows for {X.shape[1]} coefficients")
    beta = np.zeros(X.shape[1])
    beta[0] = special.logit(z.mean())
    ll = _loglik(X, z, beta)
    for it in range(1, max_iter + 1):
        p = special.expit(X @ beta)
        grad = X.T @ (z - p)
        if np.max(np.abs(grad)) <= tol:
            break
        info = (X * (p * (1.0 - p))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("logistic fit failed: singular information matrix "
                                  "(separation or collinear covariates)") from None
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _loglik(X, z, cand)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if np.max(np.abs(X @ beta)) > 30.0:
            raise SeparationError("logistic fit diverged: treatment is (quasi-)separated by covariates")
    else:
        p = special.expit(X @ beta)
        if np.max(np.abs(X.T @ (z - p))) > max(tol, 1e-6):
            raise SeparationError("logistic fit did not converge in "
                                  f"{max_iter} iterations; possible separation")
        it = max_iter
    return PropensityFit(beta, clamp, it)


@dataclass(frozen=True, eq=False)
class OutcomeFit:
    """Linear outcome mean ``mu_z(s, x) = c0 + cs * s + x @ cx``."""

    arm: int
    coefficients: np.ndarray

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slope_s(self) -> float:
        return float(self.coefficients[1])

    def covariate_part(self, x) -> np.ndarray:
        x = as_rows(x, self.coefficients.size - 2)
        return self.coefficients[0] + x @ self.coefficients[2:]

    def __call__(self, s, x) -> np.ndarray:
        return self.covariate_part(x) + self.coefficients[1] * np.asarray(s, dtype=float)

    def on_nodes(self, nodes, x) -> np.ndarray:
        """``mu_z(node_j, x_i)`` as an ``(len(x), len(nodes))`` array."""
        return self.covariate_part(x)[:, None] + self.coefficients[1] * np.asarray(nodes)[None, :]


def fit_outcome_model(data: Dataset, z: int) -> OutcomeFit:
    mask = data.arm(z)
    X = np.column_stack([np.ones(mask.sum()), data.s[mask], data.x[mask]])
    if X.shape[0] <= X.shape[1]:
        raise InsufficientDataError(
            f"insufficient data: arm {z} has {X.shape[0]} rows for {X.shape[1]} coefficients")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise InsufficientDataError(f"outcome design for arm {z} is rank deficient")
    coef, *_ = np.linalg.lstsq(X, data.y[mask], rcond=None)
    return OutcomeFit(z, coef)


def rule_of_thumb(values: np.ndarray, n: int, d: int) -> float:
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    if sd == 0.0:
        sd = 1.0
    return 1.06 * sd * n ** (-1.0 / (d + 5))


@dataclass(frozen=True, eq=False)
class DensityFit:
    """Gaussian-kernel estimate of the density and CDF of ``S`` given ``X`` in one arm.

    The CDF replaces the density kernel by its integral, so it is exactly the
    antiderivative of the (unfloored) density in ``s``.
    """

    arm: int
    s: np.ndarray
    x: np.ndarray
    h_s: float
    h_x: np.ndarray
    floor: float = DEFAULT_FLOOR

    @property
    def n(self) -> int:
        return self.s.size

    def support(self, quantiles=SUPPORT_QUANTILES, margin=SUPPORT_MARGIN) -> tuple[float, float]:
        qlo, qhi = np.quantile(self.s, quantiles)
        return float(qlo - margin * self.h_s), float(qhi + margin * self.h_s)

    def covariate_weights(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Normalised covariate-kernel weights ``(m, n_z)`` and an extrapolation mask ``(m,)``."""
        x = as_rows(x, self.x.shape[1])
        if self.x.shape[1] == 0:
            w = np.full((x.shape[0], self.n), 1.0 / self.n)
            return w, np.zeros(x.shape[0], dtype=bool)
        logk = np.zeros((x.shape[0], self.n))
        for j in range(self.x.shape[1]):
            u = (x[:, j, None] - self.x[None, :, j]) / self.h_x[j]
            logk -= 0.5 * u * u
        top = logk.max(axis=1, keepdims=True)
        w = np.exp(logk - top)
        w /= w.sum(axis=1, keepdims=True)
        return w, top[:, 0] < _EXTRAPOLATION_LOG_MASS

    def _kernel(self, s, cumulative: bool):
        u = (np.asarray(s, dtype=float)[..., None] - self.s) / self.h_s
        if cumulative:
            return norm_cdf(u)
        return np.exp(-0.5 * u * u) / (np.sqrt(2.0 * np.pi) * self.h_s)

    def on_nodes(self, nodes, x, weights=None) -> tuple[np.ndarray, np.ndarray]:
        """Density and CDF at every ``(x_i, node_j)`` pair, each of shape ``(m, G)``."""
        w = self.covariate_weights(x)[0] if weights is None else weights
        nodes = np.asarray(nodes, dtype=float)
        return w @ self._kernel(nodes, False).T, w @ self._kernel(nodes, True).T

    def at_points(self, s, x, weights=None) -> tuple[np.ndarray, np.ndarray]:
        """Density and CDF at paired points ``(s_i, x_i)``."""
        w = self.covariate_weights(x)[0] if weights is None else weights
        s = np.asarray(s, dtype=float).reshape(-1)
        return (np.sum(w * self._kernel(s, False), axis=1),
                np.sum(w * self._kernel(s, True), axis=1))

    def density(self, s, x, floor: bool = False):
        p = self.at_points(np.broadcast_to(s, (np.atleast_2d(x).shape[0],)), x)[0]
        if floor:
            p = np.maximum(p, self.floor)
        return float(p[0]) if np.ndim(s) == 0 and p.size == 1 else p

    def cdf(self, s, x):
        F = self.at_points(np.broadcast_to(s, (np.atleast_2d(x).shape[0],)), x)[1]
        return float(F[0]) if np.ndim(s) == 0 and F.size == 1 else F


def fit_conditional_density(data: Dataset, z: int, bandwidth_s: float | None = None,
                            bandwidth_x=None, floor: float = DEFAULT_FLOOR) -> DensityFit:
    """Product Gaussian kernel conditional density with rule-of-thumb bandwidths.

    ``bandwidth_s`` is absolute; ``bandwidth_x`` is on the standardised
    covariate scale (scalar or one value per covariate).
    """
    mask = data.arm(z)
    s, x = data.s[mask], data.x[mask]
    n, d = s.size, data.d
    if n < MIN_ARM_ROWS:
        raise InsufficientDataError(f"insufficient data: arm {z} has {n} rows, need {MIN_ARM_ROWS}")
    h_s = rule_of_thumb(s, n, d) if bandwidth_s is None else float(bandwidth_s)
    sd = np.std(x, axis=0, ddof=1) if d else np.zeros(0)
    sd = np.where(sd > 0, sd, 1.0)
    if bandwidth_x is None:
        h_x = 1.06 * sd * n ** (-1.0 / (d + 5))
    else:
        h_x = sd * np.broadcast_to(np.asarray(bandwidth_x, dtype=float), (d,))
    if h_s <= 0 or np.any(h_x <= 0):
        raise ValueError("bandwidths must be positive")
    return DensityFit(z, s.copy(), x.copy(), float(h_s), np.asarray(h_x, dtype=float), floor)


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    propensity: PropensityFit
    outcome1: OutcomeFit
    outcome0: OutcomeFit
    density1: DensityFit
    density0: DensityFit

    def outcome(self, z: int) -> OutcomeFit:
        return self.outcome1 if z == 1 else self.outcome0

    def density(self, z: int) -> DensityFit:
        return self.density1 if z == 1 else self.density0


def fit_nuisance(data: Dataset, clamp: float = DEFAULT_CLAMP, bandwidth_s=None,
                 bandwidth_x=None) -> NuisanceFit:
    return NuisanceFit(
        fit_treatment_model(data, clamp),
        fit_outcome_model(data, 1),
        fit_outcome_model(data, 0),
        fit_conditional_density(data, 1, bandwidth_s, bandwidth_x),
        fit_conditional_density(data, 0, bandwidth_s, bandwidth_x),
    )
