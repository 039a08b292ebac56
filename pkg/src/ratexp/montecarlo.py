"""Simulation designs and the power-curve / tuning harness.

Replication ``r`` at grid point ``k`` uses the seed sequence
``(master_seed, k, r)``, both for the simulated data and for the bootstrap,
so a curve does not depend on how replications are scheduled.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .engine import TestConfig, run_test, worker_count
from .oracle import TAIL_PROB, ZETA_MEAN, ZETA_SD
from .sample_io import PooledSample
from .variants import (LinkedSample, direct_test, naive_mean_test, test_with_selection,
                       test_with_shocks, variance_test)

KINDS = ("no_covariates", "with_covariates", "meas_error", "shock_demo", "selection_demo")


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "no_covariates"
    rho: float = 1.0
    n: int = 800
    seed: int = 0
    zeta_sd: float = ZETA_SD
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.n < 4:
            raise ValueError("n must be at least 4")

    def param(self, name, default):
        return self.params.get(name, default)


def two_point_noise(rng: np.random.Generator, n: int, zeta_sd: float = ZETA_SD) -> np.ndarray:
    """``zeta * (-1{U <= .1} + 1{U >= .9})`` with ``zeta ~ N(2, zeta_sd^2)``."""
    u = rng.random(n)
    zeta = rng.normal(ZETA_MEAN, zeta_sd, n)
    sign = (u >= 1 - TAIL_PROB).astype(float) - (u <= TAIL_PROB)
    return zeta * sign


def _beta(rng, a, b, n):
    # gamma-ratio construction
    g1 = rng.standard_gamma(a, n)
    g2 = rng.standard_gamma(b, n)
    return g1 / (g1 + g2)


def generate(spec: DgpSpec) -> PooledSample:
    rng = np.random.default_rng(spec.seed)
    n, rho = spec.n, spec.rho
    if spec.kind == "no_covariates":
        psi = rng.normal(size=n)
        y = rho * rng.normal(size=n) + two_point_noise(rng, n, spec.zeta_sd)
        return PooledSample.from_arrays(y, psi)
    if spec.kind == "with_covariates":
        a, b = spec.param("beta_a", 0.1), spec.param("beta_b", 10.0)
        x_psi = _beta(rng, a, b, n)
        psi = rng.normal(size=n)
        x_y = _beta(rng, a, b, n)
        y = rho * rng.normal(size=n) + np.sqrt(x_y) * two_point_noise(rng, n, spec.zeta_sd)
        return PooledSample.from_arrays(y, psi, x_y, x_psi)
    if spec.kind == "meas_error":
        # RE holds; beliefs carry classical noise smaller (in the SOSD sense) than the shock
        xi, eps = spec.param("xi_sd", 0.5), spec.param("eps_sd", 1.0)
        psi_hat = rng.normal(size=n) + xi * rng.normal(size=n)
        y = rng.normal(size=n) + eps * rng.normal(size=n)
        return PooledSample.from_arrays(y, psi_hat)
    if spec.kind == "shock_demo":
        c0 = spec.param("c0", 1.05)
        mu, sd, eps = spec.param("mu", 10.0), spec.param("sd", 2.0), spec.param("eps_sd", 1.0)
        psi = mu + sd * rng.normal(size=n)
        y = c0 * (mu + sd * rng.normal(size=n) + eps * rng.normal(size=n))
        return PooledSample.from_arrays(y, psi)
    if spec.kind == "selection_demo":
        # D depends on X; (Y, psi) independent of D given X with E[Y | psi, X] = psi
        slope = spec.param("slope", 1.0)
        m = 2 * n
        x = rng.normal(size=m)
        d = (rng.random(m) < 1 / (1 + np.exp(-slope * x))).astype(np.int8)
        psi = x + rng.normal(size=m)
        y = psi + rng.normal(size=m)
        return PooledSample(d=d, y=np.where(d == 1, y, psi), x=x[:, None], weight=None)
    raise ValueError(spec.kind)


def generate_linked(spec: DgpSpec) -> LinkedSample:
    """Jointly observed pairs for the measurement-error design."""
    if spec.kind != "meas_error":
        raise ValueError("linked pairs are generated for the meas_error design only")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1,)))
    xi, eps = spec.param("xi_sd", 0.5), spec.param("eps_sd", 1.0)
    psi = rng.normal(size=spec.n)
    y = psi + eps * rng.normal(size=spec.n)
    return LinkedSample(y, psi + xi * rng.normal(size=spec.n))


def write_survey_like(path, n: int = 600, seed: int = 0, groups=("all", "young", "old"),
                      c0: float = 1.03) -> None:
    """Synthetic survey-shaped pooled file: skewed positive values, weights, groups.

    Each group gets ``n`` belief rows and ``n`` outcome rows; outcomes are
    ``c0`` times a mean-preserving spread of the beliefs plus a few large
    outliers that winsorization should remove.
    """
    rng = np.random.default_rng(seed)
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["D", "value", "w", "group", "x1"])
        for g in groups:
            psi = rng.lognormal(1.0, 0.4, n)
            y = c0 * (psi * rng.lognormal(-0.02, 0.2, n))
            y[rng.random(n) < 0.01] *= 50
            for d, vals in ((0, psi), (1, y)):
                w = rng.uniform(0.5, 2.0, n)
                x = rng.random(n)
                for v, wi, xi in zip(vals, w, x):
                    wr.writerow([d, repr(float(v)), repr(float(wi)), g, repr(float(xi))])


# ---------------------------------------------------------------------------
# deciders: (spec, cfg) -> reject?


def _full(spec, cfg):
    return run_test(generate(spec), cfg).reject


def _shock(spec, cfg):
    return test_with_shocks(generate(spec), cfg, "multiplicative").reject


def _naive(spec, cfg):
    return naive_mean_test(generate(spec)).p_value <= cfg.alpha


def _variance(spec, cfg):
    return variance_test(generate(spec)).p_value <= cfg.alpha


def _direct(spec, cfg):
    return direct_test(generate_linked(spec)).p_value <= cfg.alpha


def _selection(spec, cfg):
    # covariates only drive the propensity; the moments are the reweighted marginals
    return test_with_selection(generate(spec), None, replace(cfg, r_max=0)).reject


DECIDERS: dict[str, Callable[[DgpSpec, TestConfig], bool]] = {
    "full": _full,
    "shock": _shock,
    "naive": _naive,
    "variance": _variance,
    "direct": _direct,
    "selection": _selection,
}


def replication_seed(master: int, k: int, r: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(k, r)).generate_state(1)[0])


@dataclass
class PowerCurve:
    rho_grid: np.ndarray
    n: int
    reps: int
    n_boot: int
    rejection_rate: np.ndarray
    se: np.ndarray
    test: str = "full"
    kind: str = "no_covariates"

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["rho", "n", "reps", "reject_rate", "se"])
            for rho, r, s in zip(self.rho_grid, self.rejection_rate, self.se):
                wr.writerow([repr(float(rho)), self.n, self.reps, repr(float(r)), repr(float(s))])


def rejection_rate(spec: DgpSpec, reps: int, cfg: TestConfig, test: str = "full",
                   grid_index: int = 0, workers: int | None = None) -> float:
    decide = DECIDERS[test]

    def one(r):
        s = replication_seed(spec.seed, grid_index, r)
        return decide(replace(spec, seed=s), replace(cfg, seed=s, threads=1))

    w = min(worker_count(workers), reps)
    if w > 1:
        with ThreadPoolExecutor(w) as pool:
            hits = list(pool.map(one, range(reps)))
    else:
        hits = [one(r) for r in range(reps)]
    return float(np.mean(hits))


def power_curve(spec: DgpSpec, rho_grid, reps: int, cfg: TestConfig | None = None,
                test: str = "full", workers: int | None = None) -> PowerCurve:
    """Rejection frequency at each ``rho`` (``spec.rho`` is ignored)."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    cfg = cfg or TestConfig(n_boot=200)
    grid = np.asarray(rho_grid, dtype=float)
    rates = np.array([rejection_rate(replace(spec, rho=float(rho)), reps, cfg, test, k, workers)
                      for k, rho in enumerate(grid)])
    se = np.sqrt(rates * (1 - rates) / reps)
    return PowerCurve(grid, spec.n, reps, cfg.n_boot, rates, se, test, spec.kind)


@dataclass
class SweepRow:
    b0: float
    kappa: float
    null_rate: float
    alt_rate: float
    admissible: bool


@dataclass
class SweepTable:
    rows: list
    best: SweepRow | None

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["b0", "kappa", "null_rate", "alt_rate", "admissible", "best"])
            for r in self.rows:
                wr.writerow([r.b0, r.kappa, r.null_rate, r.alt_rate, int(r.admissible), int(r is self.best)])


def tuning_sweep(b0_grid, kappa_grid, null_spec: DgpSpec, alt_spec: DgpSpec, reps: int,
                 cfg: TestConfig | None = None, test: str = "full", size_slack: float = 0.0,
                 workers: int | None = None) -> SweepTable:
    """Null and alternative rejection rates for every ``(b0, kappa)``.

    A cell is admissible when its null rate is at most ``alpha + size_slack``;
    the best cell maximizes power among admissible cells (ties: first in grid order).
    Every cell reuses the same replication seeds (common random numbers).
    """
    if not len(b0_grid) or not len(kappa_grid):
        raise ValueError("grids must be nonempty")
    cfg = cfg or TestConfig(n_boot=200)
    rows = []
    for b0 in b0_grid:
        for kappa in kappa_grid:
            c = replace(cfg, b0=float(b0), kappa=float(kappa))
            null = rejection_rate(null_spec, reps, c, test, 0, workers)
            alt = rejection_rate(alt_spec, reps, c, test, 1, workers)
            rows.append(SweepRow(float(b0), float(kappa), null, alt, null <= cfg.alpha + size_slack))
    admissible = [r for r in rows if r.admissible]
    best = max(admissible, key=lambda r: r.alt_rate) if admissible else None
    return SweepTable(rows, best)


def mc_se(rate: float, reps: int) -> float:
    return math.sqrt(rate * (1 - rate) / reps)
