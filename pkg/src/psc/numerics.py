"""Normal distribution helpers, Gauss-Legendre grids and small dense solves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import legendre
from scipy import special

from .errors import DomainError, NumericalError, UnidentifiedModelError

DEFAULT_NODES = 48
MIN_NODES, MAX_NODES = 16, 128
COND_CAP = 1e12

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf(x):
    return special.ndtr(x)


def norm_ppf(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0) | np.isnan(p)):
        raise DomainError("normal quantile requires arguments strictly inside (0, 1)")
    return special.ndtri(p)


def std_normal(kind: str, x):
    """Evaluate the standard normal ``pdf``, ``cdf`` or ``quantile`` at ``x``."""
    if kind == "pdf":
        return norm_pdf(x)
    if kind == "cdf":
        return norm_cdf(x)
    if kind == "quantile":
        return norm_ppf(x)
    raise ValueError(f"unknown kind {kind!r}; expected pdf, cdf or quantile")


@dataclass(frozen=True, eq=False)
class QuadratureGrid1D:
    """Gauss-Legendre rule on ``[lo, hi]``, optionally in a coordinate that clusters nodes at the ends.

    With ``order = m > 0`` the rule is applied in ``t`` where
    ``s = lo + (hi - lo) * I_t(m, m)`` (regularised incomplete beta), so an
    integrand behaving like ``(hi - s)^a`` near an end becomes
    ``(1 - t)^(m a + m - 1)`` and Gauss-Legendre recovers fast convergence.
    """

    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float
    order: int = 0
    _cumulative: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def gauss_legendre(cls, lo: float, hi: float, n: int = DEFAULT_NODES,
                       order: int = 0) -> "QuadratureGrid1D":
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise DomainError(f"invalid integration interval [{lo}, {hi}]")
        if not MIN_NODES // 4 <= n <= MAX_NODES * 4:
            raise DomainError(f"node count {n} out of range")
        if order < 0:
            raise DomainError(f"clustering order must be nonnegative, got {order}")
        xi, w = legendre.leggauss(n)
        if order == 0:
            nodes = 0.5 * (hi - lo) * xi + 0.5 * (hi + lo)
            jac = np.full(n, 0.5 * (hi - lo))
        else:
            tt = 0.5 * (xi + 1.0)
            nodes = lo + (hi - lo) * special.betainc(order, order, tt)
            # ds/dxi = (hi - lo) * beta_pdf(t) / 2
            jac = 0.5 * (hi - lo) * tt ** (order - 1) * (1 - tt) ** (order - 1) / special.beta(order, order)
        weights = w * jac
        # Row l of this matrix maps nodal values to the (scaled) Legendre
        # coefficient l of the integrand in the reference coordinate, so the
        # antiderivative of the interpolant is cheap to evaluate.
        vander = legendre.legvander(xi, n - 1)
        cumulative = 0.5 * (vander * w[:, None]).T * jac[None, :]
        for arr in (nodes, weights, cumulative):
            arr.setflags(write=False)
        return cls(nodes, weights, float(lo), float(hi), int(order), cumulative)

    @classmethod
    def clustered(cls, lo: float, hi: float, n: int = DEFAULT_NODES, order: int = 3):
        return cls.gauss_legendre(lo, hi, n, order)

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(np.asarray(values, dtype=float), self.weights, axes=([-1], [0]))

    def reference(self, s) -> np.ndarray:
        """Reference coordinate in ``[-1, 1]`` of points ``s`` (clipped to ``[lo, hi]``)."""
        frac = np.clip((np.asarray(s, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        if self.order:
            frac = special.betaincinv(self.order, self.order, frac)
        return 2.0 * frac - 1.0

    def partial_weights(self, upper) -> np.ndarray:
        """Weights for ``int_lo^upper`` of the polynomial interpolant of nodal values.

        Returns an array of shape ``(len(upper), size)``.  Upper limits outside
        ``[lo, hi]`` are clipped, so the weights vanish below ``lo`` and equal
        ``self.weights`` above ``hi``.
        """
        xi = np.atleast_1d(self.reference(upper))
        n = self.size
        pv = legendre.legvander(xi, n)
        # int_{-1}^{x} P_l = (P_{l+1} - P_{l-1}) / (2l + 1), and x + 1 for l = 0
        antider = np.empty((xi.size, n))
        antider[:, 0] = xi + 1.0
        ell = np.arange(1, n)
        antider[:, 1:] = (pv[:, 2:] - pv[:, :-2]) / (2 * ell + 1)
        antider *= 2 * np.arange(n) + 1
        return antider @ self._cumulative


@dataclass(frozen=True)
class QuadratureGrid2D:
    axis1: QuadratureGrid1D
    axis0: QuadratureGrid1D

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.axis1.weights, self.axis0.weights)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis1.nodes, self.axis0.nodes, indexing="ij")


def integrate_2d(f: Callable, grid: QuadratureGrid2D) -> float:
    """Tensor-product quadrature of ``f(s1, s0)``; ``f`` must accept arrays."""
    s1, s0 = grid.mesh()
    vals = np.broadcast_to(np.asarray(f(s1, s0), dtype=float), s1.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        j, k = np.argwhere(bad)[0]
        raise NumericalError(
            f"integrand is not finite at node (s1={s1[j, k]:.6g}, s0={s0[j, k]:.6g})"
        )
    return float(np.sum(grid.weights * vals))


def solve_dense(M, b, cond_cap: float = COND_CAP, what: str = "working model") -> np.ndarray:
    """Solve ``M eta = b`` and check the residual.

    Raises :class:`UnidentifiedModelError` when ``M`` is singular or its
    condition number exceeds ``cond_cap``.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or b.shape[0] != M.shape[0]:
        raise ValueError(f"incompatible shapes {M.shape} and {b.shape}")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite entries in linear system")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_cap:
        raise UnidentifiedModelError(
            f"{what} is not identified on the fitted support (condition number {cond:.3g})"
        )
    eta = np.linalg.solve(M, b)
    resid = np.max(np.abs(M @ eta - b)) if b.size else 0.0
    if resid > 1e-10 * (1.0 + np.max(np.abs(b))):
        # one step of iterative refinement before giving up
        eta = eta + np.linalg.solve(M, b - M @ eta)
        resid = np.max(np.abs(M @ eta - b))
        if resid > 1e-10 * (1.0 + np.max(np.abs(b))):
            raise NumericalError(f"linear solve residual {resid:.3g} exceeds tolerance")
    return eta
