"""Principal density ``e(s1, s0, x) = c(F1, F0) p1 p0`` and the score corrections ``r_u``, ``r_v``.

Both arm-specific conditional densities are truncated to their integration
support and renormalised there, so the CDFs run from exactly 0 to 1 over
the quadrature interval and the copula margins stay uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copula import CopulaSpec, clamp_cdf, density_from_normal_scores, scores_from_normal_scores
from .nuisance import DensityFit, as_rows
from .numerics import DEFAULT_NODES, QuadratureGrid1D, QuadratureGrid2D, norm_ppf

# The truncated CDFs reach 0 and 1 inside the grid, where a non-trivial Gaussian
# copula behaves like a fractional power of F; clustering nodes at the ends
# restores fast convergence. Under independence the integrands are smooth and
# plain Gauss-Legendre nodes are used.
GRID_CLUSTERING = 3


@dataclass(frozen=True, eq=False)
class ArmSlices:
    """Truncated density/CDF of one arm evaluated for a block of covariate rows."""

    p_nodes: np.ndarray      # (m, G)
    F_nodes: np.ndarray      # (m, G)
    p_points: np.ndarray | None  # (m,)
    F_points: np.ndarray | None  # (m,)
    extrapolated: np.ndarray     # (m,) bool


@dataclass(frozen=True, eq=False)
class PrincipalDensityModel:
    copula: CopulaSpec
    fit1: DensityFit
    fit0: DensityFit
    x_rows: np.ndarray
    support1: tuple[float, float]
    support0: tuple[float, float]

    @classmethod
    def build(cls, copula: CopulaSpec, fit1: DensityFit, fit0: DensityFit,
              x_rows) -> "PrincipalDensityModel":
        x_rows = as_rows(x_rows, fit1.x.shape[1])
        return cls(copula, fit1, fit0, x_rows, fit1.support(), fit0.support())

    def with_rho(self, rho: float) -> "PrincipalDensityModel":
        return PrincipalDensityModel(CopulaSpec(self.copula.family, rho), self.fit1, self.fit0,
                                     self.x_rows, self.support1, self.support0)

    def fit(self, z: int) -> DensityFit:
        return self.fit1 if z == 1 else self.fit0

    def support(self, z: int) -> tuple[float, float]:
        return self.support1 if z == 1 else self.support0

    def grid(self, nodes: int = DEFAULT_NODES, nodes0: int | None = None,
             order: int | None = None) -> QuadratureGrid2D:
        if order is None:
            order = 0 if self.copula.rho == 0.0 else GRID_CLUSTERING
        return QuadratureGrid2D(
            QuadratureGrid1D.gauss_legendre(*self.support1, nodes, order),
            QuadratureGrid1D.gauss_legendre(*self.support0, nodes0 or nodes, order),
        )

    # -- marginals ------------------------------------------------------------

    def slices(self, z: int, x, nodes, points=None) -> ArmSlices:
        """Truncated ``p_z``/``F_z`` on ``nodes`` (and at paired ``points``) for each row of ``x``."""
        fit = self.fit(z)
        lo, hi = self.support(z)
        w, extrap = fit.covariate_weights(x)
        p, F = fit.on_nodes(nodes, x, weights=w)
        _, Fb = fit.on_nodes(np.array([lo, hi]), x, weights=w)
        mass = Fb[:, 1] - Fb[:, 0]
        p_nodes = p / mass[:, None]
        F_nodes = np.clip((F - Fb[:, :1]) / mass[:, None], 0.0, 1.0)
        p_pts = F_pts = None
        if points is not None:
            pp, Fp = fit.at_points(points, x, weights=w)
            inside = (points >= lo) & (points <= hi)
            p_pts = np.where(inside, pp / mass, 0.0)
            F_pts = np.clip((Fp - Fb[:, 0]) / mass, 0.0, 1.0)
        return ArmSlices(p_nodes, F_nodes, p_pts, F_pts, extrap)

    def marginal(self, z: int, s, x) -> tuple[np.ndarray, np.ndarray]:
        """Truncated density and CDF of arm ``z`` at ``s`` for every row of ``x``."""
        x = as_rows(x, self.x_rows.shape[1])
        s = np.broadcast_to(np.asarray(s, dtype=float), (x.shape[0],))
        sl = self.slices(z, x, np.zeros(1), points=np.ascontiguousarray(s))
        return sl.p_points, sl.F_points

    # -- principal density ---------------------------------------------------

    def principal_density_at(self, s1, s0, x):
        p1, F1 = self.marginal(1, s1, x)
        p0, F0 = self.marginal(0, s0, x)
        c = density_from_normal_scores(self.copula.rho, norm_ppf(clamp_cdf(F1)),
                                       norm_ppf(clamp_cdf(F0)))
        out = c * p1 * p0
        return float(out[0]) if np.ndim(x) == 1 else out

    def ratio_given_s1(self, s1, s0, x):
        """``e(s1, s0, x) / p1(s1, x)`` computed as ``c * p0`` without division."""
        _, F1 = self.marginal(1, s1, x)
        p0, F0 = self.marginal(0, s0, x)
        c = density_from_normal_scores(self.copula.rho, norm_ppf(clamp_cdf(F1)),
                                       norm_ppf(clamp_cdf(F0)))
        out = c * p0
        return float(out[0]) if np.ndim(x) == 1 else out

    def ratio_given_s0(self, s1, s0, x):
        """``e(s1, s0, x) / p0(s0, x)`` computed as ``c * p1``."""
        p1, F1 = self.marginal(1, s1, x)
        _, F0 = self.marginal(0, s0, x)
        c = density_from_normal_scores(self.copula.rho, norm_ppf(clamp_cdf(F1)),
                                       norm_ppf(clamp_cdf(F0)))
        out = c * p1
        return float(out[0]) if np.ndim(x) == 1 else out

    def marginal_density(self, s1, s0) -> float:
        return float(np.mean(self.principal_density_at(s1, s0, self.x_rows)))

    def r_terms(self, s1, s0, s_obs, x):
        """``(r_u, r_v)`` at stratum ``(s1, s0)`` for an observation with ``S = s_obs``."""
        _, F1 = self.marginal(1, s1, x)
        _, F0 = self.marginal(0, s0, x)
        su, sv = scores_from_normal_scores(self.copula.rho, norm_ppf(clamp_cdf(F1)),
                                           norm_ppf(clamp_cdf(F0)))
        r_u = 1.0 - su * ((np.asarray(s_obs) <= s1) - F1)
        r_v = 1.0 - sv * ((np.asarray(s_obs) <= s0) - F0)
        if np.ndim(x) == 1:
            return float(r_u[0]), float(r_v[0])
        return r_u, r_v
