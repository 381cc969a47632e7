"""Simulation regimes, analytic projection truth and the Monte Carlo study driver."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from ._parallel import pmap, sub_seed
from .data import Dataset
from .errors import ConfigError, EstimationError, PSCError
from .estimators import ESTIMATORS, _solve
from .pipeline import PipelineConfig, fit_pipeline
from .working_model import UniformWeight, WorkingModelSpec, basis_eval

FAILURE_LIMIT = 0.10
CSV_COLUMNS = ("regime", "rho", "n", "estimator", "coefficient", "bias", "rmse",
               "replicates", "failures", "sd")


@dataclass(frozen=True)
class DgpConfig:
    regime: int = 1
    n: int = 500
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.regime not in (1, 2, 3):
            raise ConfigError(f"regime must be 1, 2 or 3, got {self.regime}")
        if self.n < 20:
            raise ConfigError(f"n must be at least 20, got {self.n}")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True, eq=False)
class SimulatedData:
    data: Dataset
    s1: np.ndarray
    s0: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    pi: np.ndarray


def transformed_covariate(x):
    return ((x + 0.25) ** 2 - 1.0) / np.sqrt(2.0)


def _latent(rng: np.random.Generator, n: int, rho: float):
    x = rng.standard_normal((n, 2))
    e_shared, e1, e0 = rng.standard_normal((3, n))
    # noise correlation rho; negative rho flips the shared component in S0
    a = np.sqrt(abs(rho))
    b = np.sqrt(1.0 - abs(rho))
    s1 = 0.6 * x[:, 0] + 0.8 * (a * e_shared + b * e1)
    s0 = 0.6 * x[:, 1] + 0.8 * (np.sign(rho) * a * e_shared + b * e0)
    return x, s1, s0


def outcome_means(regime: int, s1, s0, x):
    if regime == 3:
        xt = transformed_covariate(x)
        return s1 + 2.0 * np.sqrt(2.0) * xt[:, 0], s0 + 2.0 * np.sqrt(2.0) * xt[:, 1]
    return s1 + x[:, 0], s0 + x[:, 1]


def treatment_probability(regime: int, x):
    if regime == 2:
        xt = transformed_covariate(x)
        return special.expit(0.5 * (xt[:, 0] + xt[:, 1]))
    return np.full(x.shape[0], 0.5)


def generate_dgp(cfg: DgpConfig) -> SimulatedData:
    rng = np.random.default_rng(cfg.seed)
    x, s1, s0 = _latent(rng, cfg.n, cfg.rho)
    pi = treatment_probability(cfg.regime, x)
    z = (rng.random(cfg.n) < pi).astype(np.int64)
    m1, m0 = outcome_means(cfg.regime, s1, s0, x)
    y1 = m1 + rng.standard_normal(cfg.n)
    y0 = m0 + rng.standard_normal(cfg.n)
    s = np.where(z == 1, s1, s0)
    y = np.where(z == 1, y1, y0)
    return SimulatedData(Dataset(z, s, y, x), s1, s0, y1, y0, pi)


# -- truth ---------------------------------------------------------------------

_LINEAR_TERMS = {(0, 0): 0, (1, 0): 1, (0, 1): 2}


def linear_surface(regime: int, rho: float, arm: int) -> np.ndarray:
    """Coefficients ``(const, s1, s0)`` of the part of ``m_arm(s1, s0)`` in span{1, s1, s0}.

    ``(X_j, S1, S0)`` are jointly Gaussian with ``Var(S_z) = 1`` and
    ``Cov(S1, S0) = 0.64 rho``, so ``E[X_arm | s1, s0]`` is linear.  In
    regime 3 the outcome is quadratic in ``X``; its conditional mean adds a
    quadratic in ``(s1, s0)`` whose centred part is orthogonal to every
    linear function under the Gaussian law, leaving the constant 0.125.
    """
    r = 0.64 * rho
    own = 0.6 / (1.0 - r * r)
    cross = -0.6 * r / (1.0 - r * r)
    const = 0.125 if regime == 3 else 0.0
    if arm == 1:
        return np.array([const, 1.0 + own, cross])
    return np.array([const, cross, 1.0 + own])


def true_eta(regime: int, rho: float, wm: WorkingModelSpec, arm=1) -> np.ndarray:
    """Projection coefficients of ``m_arm`` (or of the effect surface for ``arm='tau'``)."""
    if arm == "tau":
        return true_eta(regime, rho, wm, 1) - true_eta(regime, rho, wm, 0)
    if any(t not in _LINEAR_TERMS for t in wm.terms):
        raise ConfigError("analytic truth is available only for bases built from 1, s1, s0; "
                          "supply the truth numerically (see projection_oracle)")
    if not isinstance(wm.weight, UniformWeight):
        raise ConfigError("analytic truth assumes the uniform weight")
    r = 0.64 * rho
    second = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, r], [0.0, r, 1.0]])
    idx = [_LINEAR_TERMS[t] for t in wm.terms]
    coef = linear_surface(regime, rho, arm)
    gram = second[np.ix_(idx, idx)]
    rhs = second[idx] @ coef
    return np.linalg.solve(gram, rhs)


def projection_oracle(regime: int, rho: float, wm: WorkingModelSpec, arm: int = 1,
                      draws: int = 10_000_000, seed: int = 20240101,
                      chunk: int = 1_000_000) -> np.ndarray:
    """Least-squares projection of ``mu_arm(S1, S0, X)`` on the basis over simulated units."""
    rng = np.random.default_rng(seed)
    q = wm.q
    xtx = np.zeros((q, q))
    xty = np.zeros(q)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        x, s1, s0 = _latent(rng, m, rho)
        mu1, mu0 = outcome_means(regime, s1, s0, x)
        target = mu1 if arm == 1 else mu0
        g = basis_eval(wm, s1, s0) * np.sqrt(wm.weight(s1, s0))[:, None]
        xtx += g.T @ g
        xty += g.T @ (target * np.sqrt(wm.weight(s1, s0)))
        done += m
    return np.linalg.solve(xtx, xty)


# -- Monte Carlo study -----------------------------------------------------------

@dataclass(frozen=True)
class McStudyConfig:
    dgp: DgpConfig = field(default_factory=DgpConfig)
    reps: int = 500
    estimators: tuple[str, ...] = ESTIMATORS
    basis: str = "1,s1,s0"
    nodes: int = 48
    arm: int = 1
    truth: tuple[float, ...] | None = None
    clamp: float = 0.01
    bandwidth_s: float | None = None
    bandwidth_x: float | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("replications must be at least 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}")
        if self.arm not in (0, 1):
            raise ConfigError("arm must be 0 or 1")
        if self.truth is not None and len(self.truth) != self.working_model().q:
            raise ConfigError("truth dimension must equal the number of basis terms")

    def working_model(self) -> WorkingModelSpec:
        return WorkingModelSpec.parse(self.basis)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(rho=self.dgp.rho, basis=self.basis, nodes=self.nodes,
                              clamp=self.clamp, bandwidth_s=self.bandwidth_s,
                              bandwidth_x=self.bandwidth_x)


@dataclass
class McResult:
    config: McStudyConfig
    truth: np.ndarray
    names: list[str]
    estimates: dict            # estimator -> (R, q) array with NaN rows for failures
    failures: dict             # estimator -> Counter of messages

    def rows(self) -> list[dict]:
        out = []
        d = self.config.dgp
        for est in self.config.estimators:
            draws = self.estimates[est]
            ok = draws[~np.isnan(draws).any(axis=1)]
            err = ok - self.truth
            for j, name in enumerate(self.names):
                if ok.shape[0]:
                    bias = float(np.mean(err[:, j]))
                    rmse = float(np.sqrt(np.mean(err[:, j] ** 2)))
                    sd = float(np.std(ok[:, j], ddof=1)) if ok.shape[0] > 1 else 0.0
                else:
                    bias = rmse = sd = float("nan")
                out.append({
                    "regime": d.regime, "rho": d.rho, "n": d.n, "estimator": est,
                    "coefficient": name, "bias": bias, "rmse": rmse,
                    "replicates": int(ok.shape[0]),
                    "failures": int(sum(self.failures[est].values())), "sd": sd,
                })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in CSV_COLUMNS)])
        return buf.getvalue()


def replicate_seed(seed: int, r: int) -> int:
    return sub_seed(seed, r)


def _run_replicate(args):
    cfg, r = args
    sim = generate_dgp(replace(cfg.dgp, seed=replicate_seed(cfg.dgp.seed, r)))
    out = {}
    try:
        inputs = fit_pipeline(sim.data, cfg.pipeline())
    except PSCError as exc:
        return {est: f"{type(exc).__name__}: {exc}" for est in cfg.estimators}
    for est in cfg.estimators:
        try:
            out[est] = _solve(inputs, est, cfg.arm).eta_hat
        except PSCError as exc:
            out[est] = f"{type(exc).__name__}: {exc}"
    return out


def run_mc_study(cfg: McStudyConfig, workers: int | None = None) -> McResult:
    wm = cfg.working_model()
    truth = (np.asarray(cfg.truth, dtype=float) if cfg.truth is not None
             else true_eta(cfg.dgp.regime, cfg.dgp.rho, wm, cfg.arm))
    results = pmap(_run_replicate, [(cfg, r) for r in range(cfg.reps)], workers)
    estimates = {est: np.full((cfg.reps, wm.q), np.nan) for est in cfg.estimators}
    failures = {est: Counter() for est in cfg.estimators}
    for r, res in enumerate(results):
        for est in cfg.estimators:
            val = res[est]
            if isinstance(val, str):
                failures[est][val.split(" (")[0]] += 1
            else:
                estimates[est][r] = val
    for est, cnt in failures.items():
        total = sum(cnt.values())
        if total > FAILURE_LIMIT * cfg.reps:
            causes = "; ".join(f"{m} x{k}" for m, k in cnt.most_common(5))
            raise EstimationError(f"{est}: {total} of {cfg.reps} replicates failed ({causes})")
    return McResult(cfg, truth, wm.names, estimates, failures)
