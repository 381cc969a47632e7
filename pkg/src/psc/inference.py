"""Nonparametric bootstrap intervals and the EIF plug-in variance."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._parallel import pmap, sub_seed
from .data import Dataset
from .errors import ConfigError, EstimationError, PSCError
from .estimators import ESTIMATORS, EstimateReport, _solve, estimate, plugin_variance
from .pipeline import PipelineConfig, build_inputs, fit_nuisances
from .working_model import WorkingModelSpec

FAILURE_LIMIT = 0.10
ARMS = (1, 0, "tau")

__all__ = ["BootstrapConfig", "BootstrapDraws", "bootstrap_ci", "bootstrap_draws",
           "percentile_interval", "plugin_variance"]


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 500
    seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 2:
            raise ConfigError(f"bootstrap replicates must be an integer >= 2, got {self.B}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"confidence level must lie in (0, 1), got {self.level}")


def percentile_interval(draws: np.ndarray, level: float) -> np.ndarray:
    """Per-column ``[lo, hi]`` order statistics of bootstrap draws ``(B, q)``."""
    alpha = 1.0 - level
    qs = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method="inverted_cdf")
    return qs.T.copy()


def _coefficients(inputs, estimator, arm) -> np.ndarray:
    if arm == "tau":
        return _solve(inputs, estimator, 1).eta_hat - _solve(inputs, estimator, 0).eta_hat
    return _solve(inputs, estimator, arm).eta_hat


def _replicate(args):
    data, cfg, seed, b, rhos, estimators, arms = args
    rng = np.random.default_rng(sub_seed(seed, b))
    idx = rng.integers(0, data.n, data.n)
    boot = data.take(np.sort(idx))
    out = {}
    try:
        nuis = fit_nuisances(boot, cfg)
    except PSCError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return {(r, e, a): msg for r in rhos for e in estimators for a in arms}
    for r in rhos:
        inputs = build_inputs(boot, nuis, cfg.with_rho(r))
        for e in estimators:
            for a in arms:
                try:
                    out[(r, e, a)] = _coefficients(inputs, e, a)
                except PSCError as exc:
                    out[(r, e, a)] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class BootstrapDraws:
    """Replicate coefficient draws keyed by ``(rho, estimator, arm)``; failed rows are NaN."""

    draws: dict
    failures: dict
    B: int

    def summary(self, key, level: float) -> tuple[np.ndarray, int]:
        d = self.draws[key]
        ok = d[~np.isnan(d).any(axis=1)]
        nfail = int(sum(self.failures[key].values()))
        if nfail > FAILURE_LIMIT * self.B:
            causes = "; ".join(f"{m} x{k}" for m, k in self.failures[key].most_common(5))
            rho, est, arm = key
            raise EstimationError(f"bootstrap for {est} arm {arm} at rho={rho}: "
                                  f"{nfail} of {self.B} replicates failed ({causes})")
        return percentile_interval(ok, level), nfail


def bootstrap_draws(data: Dataset, cfg: PipelineConfig, bcfg: BootstrapConfig,
                    estimators=ESTIMATORS, arms=ARMS, rhos=None,
                    workers: int | None = None) -> BootstrapDraws:
    """Resample rows, refit nuisances once per replicate and evaluate every requested
    estimator, arm and sensitivity value on that refit."""
    rhos = tuple(rhos) if rhos is not None else (cfg.rho,)
    estimators, arms = tuple(estimators), tuple(arms)
    items = [(data, cfg, bcfg.seed, b, rhos, estimators, arms) for b in range(bcfg.B)]
    results = pmap(_replicate, items, workers)
    keys = [(r, e, a) for r in rhos for e in estimators for a in arms]
    q = WorkingModelSpec.parse(cfg.basis, cfg.weight).q
    draws = {k: np.full((bcfg.B, q), np.nan) for k in keys}
    failures = {k: Counter() for k in keys}
    for b, res in enumerate(results):
        for k in keys:
            v = res[k]
            if isinstance(v, str):
                failures[k][v.split(" (")[0]] += 1
            else:
                draws[k][b] = v
    return BootstrapDraws(draws, failures, bcfg.B)


def bootstrap_ci(data: Dataset, cfg: PipelineConfig, estimator: str, arm,
                 bcfg: BootstrapConfig, workers: int | None = None) -> EstimateReport:
    """Point estimate on the original data with a percentile bootstrap interval."""
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}")
    nuis = fit_nuisances(data, cfg)
    inputs = build_inputs(data, nuis, cfg)
    rep = estimate(inputs, estimator, arm)
    boot = bootstrap_draws(data, cfg, bcfg, (estimator,), (arm,), workers=workers)
    ci, nfail = boot.summary((cfg.rho, estimator, arm), bcfg.level)
    ok = boot.draws[(cfg.rho, estimator, arm)]
    ok = ok[~np.isnan(ok).any(axis=1)]
    rep.ci, rep.level = ci, bcfg.level
    if rep.vcov is None:
        # plug-in variance exists only for eif; otherwise report the bootstrap spread
        rep.vcov = np.atleast_2d(np.cov(ok, rowvar=False, ddof=1))
    rep.diagnostics = dict(rep.diagnostics, bootstrap_replicates=bcfg.B,
                           bootstrap_failures=nfail, interval="percentile")
    return rep
