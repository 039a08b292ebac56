"""Hypercube instrumental functions on the unit cube.

Covariates are whitened and pushed through the standard normal cdf so that
they live in ``(0, 1)^d``. Each level ``r`` splits every axis into ``2r``
half-open intervals ``((a-1)/2r, a/2r]``; the product cells are indexed by
``a in {1..2r}^d``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConditioningError


@dataclass(frozen=True)
class StandardizedCovariates:
    x: np.ndarray
    mean: np.ndarray
    inv_sqrt_cov: np.ndarray

    def transform(self, raw) -> np.ndarray:
        """Apply the stored whitening to new raw covariates."""
        raw = np.asarray(raw, dtype=float).reshape(-1, self.mean.size)
        return norm.cdf((raw - self.mean) @ self.inv_sqrt_cov)


def standardize_covariates(raw, cond_tol: float = 1e-10) -> StandardizedCovariates:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    n, dx = raw.shape
    if n < 2:
        raise ValueError("need at least two rows to standardize covariates")
    mean = raw.mean(axis=0)
    cov = np.atleast_2d(np.cov(raw, rowvar=False))
    evals, evecs = np.linalg.eigh(cov)
    if evals.max() <= 0 or evals.min() < cond_tol * evals.max():
        raise ConditioningError(
            "covariate covariance is singular or nearly so; drop a constant or collinear covariate"
        )
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    return StandardizedCovariates(norm.cdf((raw - mean) @ inv_sqrt), mean, inv_sqrt)


def cube_indicator(a, r: int, x) -> int:
    a = np.atleast_1d(np.asarray(a))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    side = 2 * r
    inside = ((a - 1) / side < x) & (x <= a / side)
    return int(inside.all())


def cell_coordinates(x, r: int) -> np.ndarray:
    """Per-axis cell coordinate ``a`` (1-based) of every row of ``x``.

    Consistent with :func:`cube_indicator`: ``(a-1)/2r < x <= a/2r``.
    Points at 0 (impossible after the normal cdf) go to the first cell.
    """
    x = np.asarray(x, dtype=float)
    side = 2 * r
    a = np.ceil(x * side).astype(np.int64)
    a = np.clip(a, 1, side)
    # undo floating point overshoot of x * side so membership matches the division test
    a = np.where(((a - 1) / side >= x) & (a > 1), a - 1, a)
    a = np.where((x > a / side) & (a < side), a + 1, a)
    return a


@dataclass(frozen=True)
class InstrumentSet:
    """All cells for levels ``1..r_max`` with their statistic weights.

    ``levels[k]`` is the level of cell ``k`` and ``coords[k]`` its ``a`` vector;
    cells are ordered lexicographically in ``(r, a)``. The constant instrument
    (no covariates) is the special case ``r_max == 0`` with one cell of weight 1.
    """

    r_max: int
    d_x: int
    levels: np.ndarray
    coords: tuple
    weights: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.levels.size)

    @property
    def is_constant(self) -> bool:
        return self.r_max == 0

    @classmethod
    def constant(cls) -> "InstrumentSet":
        return cls(0, 0, np.zeros(1, dtype=np.int64), ((),), np.ones(1))

    def level_slices(self):
        """Yield ``(r, slice)`` with the contiguous cell block of each level."""
        if self.is_constant:
            yield 0, slice(0, 1)
            return
        start = 0
        for r in range(1, self.r_max + 1):
            count = (2 * r) ** self.d_x
            yield r, slice(start, start + count)
            start += count

    def cell_ids(self, x) -> list[np.ndarray]:
        """For each level, the within-level linear cell index of every row."""
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return [np.zeros(x.shape[0], dtype=np.int64)]
        out = []
        for r, _ in self.level_slices():
            a = cell_coordinates(x, r) - 1
            side = 2 * r
            idx = np.zeros(x.shape[0], dtype=np.int64)
            for u in range(self.d_x):  # first axis most significant
                idx = idx * side + a[:, u]
            out.append(idx)
        return out

    def membership(self, x) -> np.ndarray:
        """Dense ``(n_rows, n_cells)`` 0/1 matrix; meant for small problems and checks."""
        x = np.asarray(x, dtype=float)
        g = np.zeros((x.shape[0], self.n_cells), dtype=np.int8)
        for (r, sl), ids in zip(self.level_slices(), self.cell_ids(x)):
            g[np.arange(x.shape[0]), sl.start + ids] = 1
        return g


def level_weight(r: int, d_x: int) -> float:
    return 1.0 / ((r * r + 100.0) * (2.0 * r) ** d_x)


def enumerate_instruments(r_max: int, d_x: int) -> InstrumentSet:
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    if d_x < 1:
        raise ValueError(f"d_x must be >= 1, got {d_x}")
    levels, coords, weights = [], [], []
    for r in range(1, r_max + 1):
        q = level_weight(r, d_x)
        for a in itertools.product(range(1, 2 * r + 1), repeat=d_x):
            levels.append(r)
            coords.append(a)
            weights.append(q)
    return InstrumentSet(r_max, d_x, np.array(levels), tuple(coords), np.array(weights))


def default_r_max(n: int, d_x: int) -> int:
    """Largest ``r >= 1`` with ``(2r)^d_x <= sqrt(n)``."""
    if n < 2 or d_x < 1:
        raise ValueError("need n >= 2 and d_x >= 1")
    r = math.floor(n ** (1.0 / (2 * d_x)) / 2 + 1e-12)
    while r > 1 and (2 * r) ** d_x > math.sqrt(n) + 1e-9:
        r -= 1
    return max(1, r)
