"""Sup-statistic, GMS bootstrap and critical values for the spread restrictions.

Bootstrap replication ``b`` draws its resample from its own generator seeded
by ``(seed, b)``, and replications are evaluated in fixed-size chunks, so the
draws do not depend on how many worker threads process the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .errors import DegenerateSampleError
from .instruments import InstrumentSet, default_r_max, enumerate_instruments, standardize_covariates
from .moments import MomentConfig, MomentField, MomentKernel
from .sample_io import PooledSample

CHUNK = 32


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    b0: float = 0.3
    kappa: float = 0.001
    p: float = 0.05
    epsilon: float = 0.05
    eta: float = 1e-6
    grid_len: int = 100
    n_boot: int = 500
    r_max: int | str = "auto"  # 0 ignores covariates
    seed: int = 0
    max_degenerate_redraws: int = 100
    use_weights: bool = False
    threads: int | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 0.5]")
        for name in ("b0", "kappa", "epsilon", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.grid_len < 2:
            raise ValueError("grid_len must be at least 2")
        if self.n_boot < 1:
            raise ValueError("n_boot must be at least 1")
        if self.r_max != "auto" and (not isinstance(self.r_max, int) or self.r_max < 0):
            raise ValueError("r_max must be 'auto' or a nonnegative integer")

    @property
    def moment_config(self) -> MomentConfig:
        return MomentConfig(self.epsilon, self.p, self.use_weights)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d


@dataclass
class TestReport:
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    boot_draws: np.ndarray
    config: dict
    diagnostics: dict = field(default_factory=dict)

    __test__ = False

    def to_dict(self, emit_draws: bool = False) -> dict:
        out = {
            "statistic": float(self.statistic),
            "critical_value": float(self.critical_value),
            "p_value": float(self.p_value),
            "reject": bool(self.reject),
            "config": self.config,
            "diagnostics": self.diagnostics,
        }
        if emit_draws:
            out["boot_draws"] = [float(v) for v in self.boot_draws]
        return out


def y_grid(sample: PooledSample, grid_len: int = 100) -> np.ndarray:
    if grid_len < 2:
        raise ValueError("grid_len must be at least 2")
    lo, hi = float(sample.y.min()), float(sample.y.max())
    if lo == hi:
        raise DegenerateSampleError("all pooled values are equal; the grid is empty")
    return np.linspace(lo, hi, grid_len)


def gms_constants(n: int, b0: float, kappa: float) -> tuple[float, float]:
    """``(B_n, kappa_n)``; needs ``n >= 3`` so that ``ln ln n > 0``."""
    if n < 3:
        raise DegenerateSampleError("GMS constants need n >= 3")
    ln = math.log(n)
    return math.sqrt(b0 * ln / math.log(ln)), math.sqrt(kappa * ln)


def gms_slackness(fld: MomentField, cfg: TestConfig) -> np.ndarray:
    """Shift for the inequality moments; the equality component is never shifted."""
    b_n, k_n = gms_constants(fld.n, cfg.b0, cfg.kappa)
    sd = np.sqrt(fld.s11)
    slack = math.sqrt(fld.n) * fld.m1 / (k_n * sd) > 1
    return np.where(slack, sd * b_n, 0.0)


def sup_statistic(z_ineq, z_eq, cell_weights, w_ineq: float, w_eq: float, z_extra=None,
                  w_extra: float | None = None):
    """Core of ``T``: ``max_y sum_cells q [w_ineq (-z1)^+^2 + w_eq z2^2]`` (+ y-free extras).

    ``z_ineq`` has shape ``(..., cells, grid)`` and ``z_eq`` ``(..., cells)``;
    returns ``(T, argmax grid index)`` over the leading axes.
    """
    ineq = np.maximum(-np.asarray(z_ineq), 0.0) ** 2
    per_y = w_ineq * np.einsum("...cg,c->...g", ineq, cell_weights)
    if w_eq:
        per_y = per_y + (w_eq * (np.asarray(z_eq) ** 2) @ cell_weights)[..., None]
    if z_extra is not None:
        w = w_ineq if w_extra is None else w_extra
        per_y = per_y + (w * np.sum(np.maximum(-np.asarray(z_extra), 0.0) ** 2, axis=-1))[..., None]
    k = np.argmax(per_y, axis=-1)
    return np.take_along_axis(per_y, k[..., None], axis=-1)[..., 0], k


def statistic_with_covariates(fld: MomentField, instruments: InstrumentSet | None = None,
                              p: float = 0.05) -> float:
    if instruments is not None and instruments.n_cells != fld.n_cells:
        raise ValueError("field and instrument set disagree on the number of cells")
    rn = math.sqrt(fld.n)
    t, _ = sup_statistic(rn * fld.m1 / np.sqrt(fld.s11), rn * fld.m2 / np.sqrt(fld.s22),
                         fld.cell_weights, 1 - p, p)
    return float(t)


def statistic_no_covariates(fld: MomentField, p: float = 0.05) -> tuple[float, float]:
    """``T`` for the constant instrument, with the maximizing grid point."""
    if fld.n_cells != 1:
        raise ValueError("expected a field built on the constant instrument")
    rn = math.sqrt(fld.n)
    t, k = sup_statistic(rn * fld.m1 / np.sqrt(fld.s11), rn * fld.m2 / np.sqrt(fld.s22),
                         np.ones(1), 1 - p, p)
    return float(t), float(fld.y_grid[int(k)])


def critical_value(boot, alpha: float, eta: float) -> float:
    """Order statistic of rank ``ceil(B(1 - alpha + eta))`` of ``T* + eta``."""
    draws = np.sort(np.asarray(boot, dtype=float).ravel()) + eta
    b = draws.size
    if b == 0:
        raise ValueError("no bootstrap draws")
    rank = min(max(math.ceil(b * (1 - alpha + eta)), 1), b)
    return float(draws[rank - 1])


def p_value(statistic: float, boot, eta: float) -> float:
    draws = np.asarray(boot, dtype=float).ravel() + eta
    return float(min(1.0, eta + np.count_nonzero(draws >= statistic) / draws.size))


# ---------------------------------------------------------------------------
# bootstrap plumbing


def replicate_rng(seed: int, b: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b, stream)))


def draw_counts(rng: np.random.Generator, d: np.ndarray, y: np.ndarray, max_redraws: int):
    """Multiplicities of an n-out-of-n resample; redraws one-armed or constant resamples."""
    n = d.size
    for redraws in range(max_redraws + 1):
        counts = np.bincount(rng.integers(0, n, n), minlength=n)
        picked = counts > 0
        d_pick = d[picked]
        if d_pick.min() != d_pick.max() and np.ptp(y[picked]) > 0:
            return counts, redraws
    raise DegenerateSampleError(
        f"bootstrap resample degenerate after {max_redraws} redraws; the sample is too unbalanced"
    )


def worker_count(cfg_threads: int | None = None) -> int:
    if cfg_threads:
        return max(1, int(cfg_threads))
    env = os.environ.get("RE_TEST_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


ChunkFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def run_bootstrap(d, y, cfg: TestConfig, chunk_fn: ChunkFn) -> tuple[np.ndarray, int]:
    """Evaluate ``chunk_fn(counts, replicate_ids)`` over all replications.

    Returns the ``T*`` draws in replication order and the total redraw count.
    """
    d = np.asarray(d)
    y = np.asarray(y)
    chunks = [np.arange(s, min(s + CHUNK, cfg.n_boot)) for s in range(0, cfg.n_boot, CHUNK)]

    def work(ids):
        counts = np.empty((ids.size, d.size))
        redraws = 0
        for j, b in enumerate(ids):
            counts[j], r = draw_counts(replicate_rng(cfg.seed, int(b)), d, y,
                                       cfg.max_degenerate_redraws)
            redraws += r
        return np.asarray(chunk_fn(counts, ids), dtype=float), redraws

    workers = min(worker_count(cfg.threads), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    return np.concatenate([r[0] for r in results]), sum(r[1] for r in results)


class ExtraMoments(Protocol):
    """Y-free inequality moments appended to the statistic (``E h >= 0``)."""

    n: int

    def base(self) -> tuple[np.ndarray, np.ndarray]: ...

    def boot(self, counts: np.ndarray, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class Shock:
    """Per-resample re-estimated outcome transform (additive or multiplicative)."""

    kind: str
    weights: np.ndarray | None  # survey weights for the mean estimates

    def estimate(self, counts, d, y) -> np.ndarray:
        counts = np.atleast_2d(counts)
        w = counts if self.weights is None else counts * self.weights
        mean1 = (w[:, d == 1] @ y[d == 1]) / w[:, d == 1].sum(axis=1)
        mean0 = (w[:, d == 0] @ y[d == 0]) / w[:, d == 0].sum(axis=1)
        if self.kind == "additive":
            return mean1 - mean0
        if self.kind == "multiplicative":
            if np.any(np.abs(mean0) < 1e-12):
                raise DegenerateSampleError("belief mean is zero; multiplicative shock undefined")
            return mean1 / mean0
        raise ValueError(f"unknown shock kind {self.kind!r}")

    def transform(self, c_hat):
        """``(shift, scale)`` arguments of :meth:`MomentKernel.evaluate`."""
        c_hat = np.asarray(c_hat, dtype=float)
        if self.kind == "additive":
            return c_hat, None
        if np.any(c_hat <= 0):
            raise DegenerateSampleError("multiplicative shock estimate must be positive")
        return None, c_hat


@dataclass
class MomentProblem:
    """Everything needed to evaluate ``T`` and its bootstrap counterpart."""

    sample: PooledSample
    kernel: MomentKernel
    instruments: InstrumentSet
    cfg: TestConfig
    equality: bool = True
    shock: Shock | None = None
    extra: ExtraMoments | None = None

    def __post_init__(self):
        self.c_hat = None
        shift = scale = None
        if self.shock is not None:
            self.c_hat = float(self.shock.estimate(np.ones(self.sample.n), self.sample.d, self.sample.y)[0])
            shift, scale = self.shock.transform([self.c_hat])
        batch = self.kernel.evaluate(np.ones((1, self.sample.n)), shift, scale)
        if batch.var_ytilde[0] <= 0:
            raise DegenerateSampleError("pooled values have zero variance")
        self.field = batch.field(0, self.kernel.y_grid, self.kernel.cell_weights)
        self.phi = gms_slackness(self.field, self.cfg)
        self.b_n, self.kappa_n = gms_constants(self.field.n, self.cfg.b0, self.cfg.kappa)
        if self.extra is not None:
            self.extra_m, self.extra_s = self.extra.base()
            b_n, k_n = gms_constants(self.extra.n, self.cfg.b0, self.cfg.kappa)
            sd = np.sqrt(self.extra_s)
            self.extra_phi = np.where(math.sqrt(self.extra.n) * self.extra_m / (k_n * sd) > 1,
                                      sd * b_n, 0.0)

    @property
    def weights(self) -> tuple[float, float]:
        p = self.cfg.p
        return (1 - p, p) if self.equality else (1.0, 0.0)

    def statistic(self) -> tuple[float, int, int]:
        """``(T, argmax grid index, binding cell)``."""
        f = self.field
        rn = math.sqrt(f.n)
        z1 = rn * f.m1 / np.sqrt(f.s11)
        z2 = rn * f.m2 / np.sqrt(f.s22)
        z_extra = None
        if self.extra is not None:
            z_extra = math.sqrt(self.extra.n) * self.extra_m / np.sqrt(self.extra_s)
        w_in, w_eq = self.weights
        t, k = sup_statistic(z1, z2, f.cell_weights, w_in, w_eq, z_extra)
        contrib = f.cell_weights * (w_in * np.maximum(-z1[:, int(k)], 0) ** 2 + w_eq * z2 ** 2)
        return float(t), int(k), int(np.argmax(contrib))

    def boot_chunk(self, counts: np.ndarray, ids: np.ndarray) -> np.ndarray:
        shift = scale = None
        if self.shock is not None:
            shift, scale = self.shock.transform(self.shock.estimate(counts, self.sample.d, self.sample.y))
        bt = self.kernel.evaluate(counts, shift, scale)
        rn = math.sqrt(self.field.n)
        z1 = (rn * (bt.m1 - self.field.m1) + self.phi) / np.sqrt(bt.s11)
        z2 = rn * (bt.m2 - self.field.m2) / np.sqrt(bt.s22)
        z_extra = None
        if self.extra is not None:
            m, s = self.extra.boot(counts, ids)
            z_extra = (math.sqrt(self.extra.n) * (m - self.extra_m) + self.extra_phi) / np.sqrt(s)
        w_in, w_eq = self.weights
        t, _ = sup_statistic(z1, z2, self.field.cell_weights, w_in, w_eq, z_extra)
        return t

    def run(self, variant: str = "base", extra_diag: dict | None = None) -> TestReport:
        t, k, cell = self.statistic()
        draws, redraws = run_bootstrap(self.sample.d, self.sample.y, self.cfg, self.boot_chunk)
        c_star = critical_value(draws, self.cfg.alpha, self.cfg.eta)
        diag = {
            "variant": variant,
            "n": self.sample.n,
            "n1": self.sample.n1,
            "n0": self.sample.n0,
            "r_max": self.instruments.r_max,
            "n_cells": self.instruments.n_cells,
            "B_n": self.b_n,
            "kappa_n": self.kappa_n,
            "argmax_y": float(self.field.y_grid[k]),
            "binding_cell": cell,
            "degenerate_redraws": redraws,
            "var_ytilde": self.field.var_ytilde,
        }
        if self.c_hat is not None:
            diag["shock"] = self.shock.kind
            diag["c_hat"] = self.c_hat
        if extra_diag:
            diag.update(extra_diag)
        return TestReport(t, c_star, p_value(t, draws, self.cfg.eta), bool(t > c_star),
                          draws + self.cfg.eta, self.cfg.to_dict(), diag)


def build_instruments(sample: PooledSample, cfg: TestConfig):
    """Instrument set and unit-cube covariates (``None`` for the constant instrument)."""
    if sample.d_x == 0 or cfg.r_max == 0:
        return InstrumentSet.constant(), None
    std = standardize_covariates(sample.x)
    r_max = default_r_max(sample.n, sample.d_x) if cfg.r_max == "auto" else int(cfg.r_max)
    return enumerate_instruments(r_max, sample.d_x), std.x


def make_problem(sample: PooledSample, cfg: TestConfig, *, equality: bool = True,
                 shock: Shock | None = None, extra: ExtraMoments | None = None,
                 base_weight=None, grid=None) -> MomentProblem:
    instruments, x01 = build_instruments(sample, cfg)
    if grid is None:
        if shock is None:
            grid = y_grid(sample, cfg.grid_len)
        else:
            # grid spans the shock-adjusted pooled values
            c = float(shock.estimate(np.ones(sample.n), sample.d, sample.y)[0])
            adj = sample.with_values(np.where(sample.d == 1, _apply(shock.kind, sample.y, c), sample.y))
            grid = y_grid(adj, cfg.grid_len)
    kernel = MomentKernel.for_sample(sample, instruments, grid, cfg.moment_config, x01=x01,
                                     base_weight=base_weight)
    return MomentProblem(sample, kernel, instruments, cfg, equality, shock, extra)


def _apply(kind: str, y, c: float):
    return y - c if kind == "additive" else y / c


def bootstrap_distribution(sample: PooledSample, instruments: InstrumentSet | None,
                           cfg: TestConfig) -> np.ndarray:
    """``T*`` draws of the base test (instruments are rebuilt from ``cfg``)."""
    prob = make_problem(sample, cfg)
    if instruments is not None and instruments.n_cells != prob.instruments.n_cells:
        raise ValueError("instrument set does not match the configuration")
    return run_bootstrap(sample.d, sample.y, cfg, prob.boot_chunk)[0]


def run_test(sample: PooledSample, cfg: TestConfig | None = None) -> TestReport:
    cfg = cfg or TestConfig()
    return make_problem(sample, cfg).run("base")


def with_config(cfg: TestConfig, **changes) -> TestConfig:
    return replace(cfg, **changes)


__all__ = [
    "TestConfig", "TestReport", "y_grid", "gms_constants", "gms_slackness",
    "statistic_no_covariates", "statistic_with_covariates", "sup_statistic",
    "critical_value", "p_value", "bootstrap_distribution", "run_test", "make_problem",
    "MomentProblem", "Shock", "run_bootstrap", "replicate_rng",
]
