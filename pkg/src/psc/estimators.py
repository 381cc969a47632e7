"""Estimators of the projection coefficients for linear-in-eta working models.

Three estimators are provided for each arm ``z``:

``pd_om``
    principal density + outcome mean; averages ``mu_z`` over the principal density.
``tp_pd``
    treatment probability + principal density; weights observed outcomes.
``eif``
    solves the empirical mean of the efficient influence function; doubly
    robust in the treatment-probability and outcome-mean models.

All three reduce to linear systems ``(sum_i A_mat_i) eta = sum_i A_vec_i``.
The per-observation pieces are assembled in one pass over blocks of
observations and cached on :class:`EstimationInputs`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .copula import CDF_CLAMP, clamp_cdf, density_from_normal_scores
from .data import Dataset
from .errors import ConfigError, UnidentifiedModelError
from .nuisance import NuisanceFit
from .numerics import QuadratureGrid2D, norm_ppf, solve_dense
from .principal_density import PrincipalDensityModel
from .working_model import WorkingModelSpec, basis_eval, basis_gradient

ESTIMATORS = ("pd_om", "tp_pd", "eif")
BLOCK = 256


@dataclass
class EstimateReport:
    estimator: str
    arm: object
    eta_hat: np.ndarray
    names: list[str]
    vcov: np.ndarray | None = None
    ci: np.ndarray | None = None
    level: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray | None:
        if self.vcov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def to_dict(self) -> dict:
        def _vec(v):
            return None if v is None else dict(zip(self.names, (float(a) for a in v)))

        ci = None
        if self.ci is not None:
            ci = {nm: [float(lo), float(hi)] for nm, (lo, hi) in zip(self.names, self.ci)}
        return {
            "eta_hat": _vec(self.eta_hat),
            "se": _vec(self.se),
            "ci": ci,
            "level": self.level,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class Assembly:
    """Per-observation estimating-equation pieces for one arm."""

    arm: int
    vec: dict      # estimator -> (n, q)
    mat: dict      # estimator -> (n, q, q)
    diagnostics: dict


@dataclass(eq=False)
class EstimationInputs:
    data: Dataset
    nuisance: NuisanceFit
    pd_model: PrincipalDensityModel
    wm1: WorkingModelSpec
    wm0: WorkingModelSpec
    grid: QuadratureGrid2D
    block: int = BLOCK
    _cache: dict = field(default_factory=dict, repr=False)

    def wm(self, z: int) -> WorkingModelSpec:
        return self.wm1 if z == 1 else self.wm0

    def assembly(self, z: int) -> Assembly:
        if z not in self._cache:
            self._cache[z] = assemble(self, z)
        return self._cache[z]


def _ppf(F):
    Fc = clamp_cdf(F)
    return norm_ppf(Fc), int(np.sum((F < CDF_CLAMP) | (F > 1.0 - CDF_CLAMP)))


def assemble(inputs: EstimationInputs, z: int) -> Assembly:
    """Build the per-observation vectors and matrices of all three estimators for arm ``z``."""
    if z not in (0, 1):
        raise ValueError(f"arm must be 0 or 1, got {z!r}")
    data, nf, pdm, grid = inputs.data, inputs.nuisance, inputs.pd_model, inputs.grid
    wm = inputs.wm(z)
    rho = pdm.copula.rho
    t1, t0 = grid.axis1.nodes, grid.axis0.nodes
    wq1, wq0 = grid.axis1.weights, grid.axis0.weights
    G1, G0, q = t1.size, t0.size, wm.q

    wfun = wm.weight
    wgrid = wfun(t1[:, None], t0[None, :])
    if not np.any(wgrid > 0):
        raise UnidentifiedModelError("weight function vanishes on the fitted support")
    base = grid.weights * wgrid                                    # (G1, G0)
    gflat = basis_eval(wm, t1[:, None], t0[None, :]).reshape(G1 * G0, q)
    ggflat = (gflat[:, :, None] * gflat[:, None, :]).reshape(G1 * G0, q * q)
    outcome = nf.outcome(z)

    # derivatives of w g and w g g' along each margin, for the score corrections
    gg = gflat.reshape(G1, G0, q)
    wg = wgrid[:, :, None] * gg
    wgflat = wg.reshape(-1, q)
    dwg, dwgg = {}, {}
    if rho != 0.0:
        dw = wfun.gradient(t1[:, None], t0[None, :])
        dg = basis_gradient(wm, t1[:, None], t0[None, :])
        for arm, axis in ((1, 0), (0, 1)):
            dw_a, dg_a = dw[axis][:, :, None], dg[axis]
            dwg[arm] = (dw_a * gg + wgrid[:, :, None] * dg_a).reshape(-1, q)
            dwgg[arm] = (dw_a[..., None] * gg[..., :, None] * gg[..., None, :]
                         + wgrid[:, :, None, None] * (dg_a[..., :, None] * gg[..., None, :]
                                                      + gg[..., :, None] * dg_a[..., None, :])
                         ).reshape(-1, q * q)
    sup1, sup0 = (grid.axis1.lo, grid.axis1.hi), (grid.axis0.lo, grid.axis0.hi)

    n = data.n
    pi = nf.propensity(data.x)
    vec = {k: np.empty((n, q)) for k in ESTIMATORS}
    mat = {k: np.empty((n, q, q)) for k in ESTIMATORS}
    cdf_clamped = 0
    extrapolated = 0

    for start in range(0, n, inputs.block):
        sl = slice(start, min(start + inputs.block, n))
        X, S, Y = data.x[sl], data.s[sl], data.y[sl]
        Zb = data.z[sl].astype(bool)
        B = S.size
        ipw1 = np.where(Zb, 1.0 / pi[sl], 0.0)
        ipw0 = np.where(Zb, 0.0, 1.0 / (1.0 - pi[sl]))

        a1 = pdm.slices(1, X, t1, points=S)
        a0 = pdm.slices(0, X, t0, points=S)
        extrapolated += int(np.sum(a1.extrapolated | a0.extrapolated))
        x1, k1 = _ppf(a1.F_nodes)
        y0, k0 = _ppf(a0.F_nodes)
        xs, ks1 = _ppf(a1.F_points)
        ys, ks0 = _ppf(a0.F_points)
        cdf_clamped += k1 + k0 + ks1 + ks0

        X1, Y0 = x1[:, :, None], y0[:, None, :]
        cop = density_from_normal_scores(rho, X1, Y0)
        phi = cop * a1.p_nodes[:, :, None] * a0.p_nodes[:, None, :] * base   # w * e * quad weights

        if z == 1:
            mu_grid = outcome.on_nodes(t1, X)[:, :, None]
        else:
            mu_grid = outcome.on_nodes(t0, X)[:, None, :]
        mu_obs = outcome(S, X)

        # l1: integral of w g e (mu, g')
        l1_vec = (phi * mu_grid).reshape(B, -1) @ gflat
        l1_mat = (phi.reshape(B, -1) @ ggflat).reshape(B, q, q)

        def arm_slice(arm, pts, scores):
            """``iint K e / p_arm`` at ``s_arm = pts``: ``(g, g mu, g g')`` integrated over the other margin."""
            if arm == 1:
                g = basis_eval(wm, pts[:, None], t0[None, :])                # (B, G0, q)
                k = (wq0 * wfun(pts[:, None], t0[None, :])
                     * density_from_normal_scores(rho, scores[:, None], y0) * a0.p_nodes)
            else:
                g = basis_eval(wm, t1[None, :], pts[:, None])                # (B, G1, q)
                k = (wq1 * wfun(t1[None, :], pts[:, None])
                     * density_from_normal_scores(rho, x1, scores[:, None]) * a1.p_nodes)
            one = np.einsum("bk,bkq->bq", k, g)
            if arm == z:
                muv = one * outcome(pts, X)[:, None]
            else:
                mu_other = mu_grid[:, 0, :] if z == 0 else mu_grid[:, :, 0]
                muv = np.einsum("bk,bkq,bk->bq", k, g, mu_other)
            return one, muv, np.einsum("bk,bkq,bkr->bqr", k, g, g)

        # slices at s1 = S_i (e / p1 = c p0) and at s0 = S_i (e / p0 = c p1)
        one_s1, mu_s1, mat_s1 = arm_slice(1, S, xs)
        one_s0, mu_s0, mat_s0 = arm_slice(0, S, ys)
        if z == 1:
            resid_part = ipw1[:, None] * one_s1 * (Y - mu_obs)[:, None]
            tp_vec = ipw1[:, None] * one_s1 * Y[:, None]
            tp_mat = ipw1[:, None, None] * mat_s1
        else:
            resid_part = ipw0[:, None] * one_s0 * (Y - mu_obs)[:, None]
            tp_vec = ipw0[:, None] * one_s0 * Y[:, None]
            tp_mat = ipw0[:, None, None] * mat_s0

        # The score corrections are integrated by parts in their own margin.
        # With C = c(F1, F0) and K = w g mu (or w g g'), for a treated row
        #   iint w g e mu r_u = K C p0 |_{s1=S} + iint C (dK/ds1) (1(S <= s1) - F1) p0,
        # since the truncated CDF runs from 0 to 1 over the support. The copula
        # score itself diverges like a power of F at the support ends and
        # never appears. The indicator goes through the interpolant so the jump
        # at S is resolved exactly rather than to node spacing.
        if rho != 0.0:
            ind1 = 1.0 - grid.axis1.partial_weights(S) / wq1
            ind0 = 1.0 - grid.axis0.partial_weights(S) / wq0
            # boundary term at S clipped to the support (equal to the slice at S inside it)
            edge = {}
            for arm, (lo, hi), base_sl, scores in ((1, sup1, (mu_s1, mat_s1), xs),
                                                     (0, sup0, (mu_s0, mat_s0), ys)):
                Sc = np.clip(S, lo, hi)
                edge[arm] = base_sl if np.array_equal(Sc, S) else arm_slice(arm, Sc, scores)[1:]
            r_vec = np.empty((B, q))
            r_mat = np.empty((B, q, q))
            for rows, arm in ((Zb, 1), (~Zb, 0)):
                if not rows.any():
                    continue
                if arm == 1:
                    T = (cop[rows] * a0.p_nodes[rows][:, None, :]
                         * (ind1 - a1.F_nodes)[rows][:, :, None] * grid.weights)
                else:
                    T = (cop[rows] * a1.p_nodes[rows][:, :, None]
                         * (ind0 - a0.F_nodes)[rows][:, None, :] * grid.weights)
                m = int(rows.sum())
                mu_r = np.broadcast_to(mu_grid[rows], T.shape).reshape(m, -1)
                Tf = T.reshape(m, -1)
                jv = (Tf * mu_r) @ dwg[arm]
                if arm == z:
                    jv += outcome.coefficients[1] * (Tf @ wgflat)
                jm = (Tf @ dwgg[arm]).reshape(m, q, q)
                sv_, sm_ = edge[arm]
                sv_, sm_ = sv_[rows], sm_[rows]
                r_vec[rows] = sv_ + jv
                r_mat[rows] = sm_ + jm
        else:
            r_vec, r_mat = l1_vec, l1_mat

        eif_vec = (ipw1[:, None] * (mu_s1 - r_vec) + ipw0[:, None] * (mu_s0 - r_vec)
                   + l1_vec + resid_part)
        eif_mat = (ipw1[:, None, None] * (mat_s1 - r_mat) + ipw0[:, None, None] * (mat_s0 - r_mat)
                   + l1_mat)

        vec["pd_om"][sl], mat["pd_om"][sl] = l1_vec, l1_mat
        vec["tp_pd"][sl], mat["tp_pd"][sl] = tp_vec, tp_mat
        vec["eif"][sl], mat["eif"][sl] = eif_vec, eif_mat

    diagnostics = {
        "n": n,
        "grid_nodes": [G1, G0],
        "support1": [grid.axis1.lo, grid.axis1.hi],
        "support0": [grid.axis0.lo, grid.axis0.hi],
        "propensity_clamped": nf.propensity.clamp_count(data.x),
        "cdf_clamped": cdf_clamped,
        "extrapolated_rows": extrapolated,
        "rho": rho,
    }
    return Assembly(z, vec, mat, diagnostics)


def _solve(inputs: EstimationInputs, estimator: str, z: int) -> EstimateReport:
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    asm = inputs.assembly(z)
    M = asm.mat[estimator].sum(axis=0)
    b = asm.vec[estimator].sum(axis=0)
    eta = solve_dense(M, b, what=f"working model for arm {z} ({estimator})")
    diag = dict(asm.diagnostics)
    diag["condition_number"] = float(np.linalg.cond(M))
    diag["residual"] = float(np.max(np.abs(M @ eta - b)))
    return EstimateReport(estimator, z, eta, inputs.wm(z).names, diagnostics=diag)


def estimate_pd_om(inputs: EstimationInputs, z: int) -> EstimateReport:
    return _solve(inputs, "pd_om", z)


def estimate_tp_pd(inputs: EstimationInputs, z: int) -> EstimateReport:
    return _solve(inputs, "tp_pd", z)


def estimate_eif(inputs: EstimationInputs, z: int, level: float = 0.95) -> EstimateReport:
    rep = _solve(inputs, "eif", z)
    rep.vcov = plugin_variance(inputs, z, rep.eta_hat)
    rep.ci = wald_interval(rep.eta_hat, rep.se, level)
    rep.level = level
    return rep


def estimate(inputs: EstimationInputs, estimator: str, arm, level: float = 0.95) -> EstimateReport:
    if arm == "tau":
        return estimate_tau(inputs, estimator, level)
    if estimator == "eif":
        return estimate_eif(inputs, arm, level)
    return _solve(inputs, estimator, arm)


def wald_interval(eta, se, level: float) -> np.ndarray:
    zq = stats.norm.ppf(0.5 + level / 2.0)
    return np.column_stack([eta - zq * se, eta + zq * se])


def projection_hessian(inputs: EstimationInputs, z: int) -> np.ndarray:
    """``H = int int w g g' e(s1, s0)``, with ``e`` the covariate-averaged principal density."""
    return inputs.assembly(z).mat["pd_om"].mean(axis=0)


def eif_numerators(inputs: EstimationInputs, z: int, eta_hat) -> np.ndarray:
    asm = inputs.assembly(z)
    return asm.vec["eif"] - asm.mat["eif"] @ np.asarray(eta_hat, dtype=float)


def _sandwich(H, D) -> np.ndarray:
    n = D.shape[0]
    Hinv = np.linalg.inv(H)
    meat = D.T @ D / n
    V = Hinv @ meat @ Hinv.T / n
    return 0.5 * (V + V.T)


def plugin_variance(inputs: EstimationInputs, z: int, eta_hat) -> np.ndarray:
    """Plug-in variance of the EIF estimator: ``n^-1 H^-1 (mean D D') H^-T``."""
    H = projection_hessian(inputs, z)
    if np.linalg.cond(H) > 1e12:
        raise UnidentifiedModelError(f"projection Hessian for arm {z} is singular")
    return _sandwich(H, eif_numerators(inputs, z, eta_hat))


def estimate_tau(inputs: EstimationInputs, estimator: str = "eif",
                 level: float = 0.95) -> EstimateReport:
    """Coefficients of the projected effect surface, ``eta_1 - eta_0``."""
    if inputs.wm1 != inputs.wm0:
        raise ConfigError("tau projection requires identical basis and weight in both arms")
    r1 = _solve(inputs, estimator, 1)
    r0 = _solve(inputs, estimator, 0)
    rep = EstimateReport(estimator, "tau", r1.eta_hat - r0.eta_hat, inputs.wm1.names,
                         diagnostics={"arm1": r1.diagnostics, "arm0": r0.diagnostics})
    if estimator == "eif":
        H = projection_hessian(inputs, 1)
        D = eif_numerators(inputs, 1, r1.eta_hat) - eif_numerators(inputs, 0, r0.eta_hat)
        rep.vcov = _sandwich(H, D)
        rep.ci = wald_interval(rep.eta_hat, rep.se, level)
        rep.level = level
    return rep
