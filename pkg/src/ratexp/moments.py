"""Sample moments of the mean-preserving-spread restrictions.

For every grid point ``y`` and instrument cell ``g`` the two row moments are

    m1_i = w_i * (y - Y_i)^+ * g(X_i)      (inequality, E >= 0)
    m2_i = w_i * Y_i * g(X_i)              (equality,   E == 0)

with signed weights ``w_i = n/n1`` on outcome rows and ``-n/n0`` on belief rows.

The fast path never loops over rows. Rows are sorted once per instrument level
by ``(cell, arm, value)``; a weighted sum of ``(y - Y_i)^+`` over a cell is then
``y * S0 - S1`` where ``S0, S1`` are prefix sums read at a binary-searched
position. Bootstrap replications only change the per-row multiplicities, so a
whole batch of replications is a batch of cumulative sums over the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateSampleError
from .instruments import InstrumentSet
from .sample_io import PooledSample


@dataclass(frozen=True)
class MomentConfig:
    epsilon: float = 0.05
    p: float = 0.05
    use_weights: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")


@dataclass(frozen=True)
class MomentField:
    """Moments on a ``(cell, y)`` lattice; ``m2``/``s22`` do not depend on ``y``."""

    y_grid: np.ndarray
    cell_weights: np.ndarray
    m1: np.ndarray  # (cells, grid)
    m2: np.ndarray  # (cells,)
    s11: np.ndarray  # (cells, grid), regularized
    s22: np.ndarray  # (cells,), regularized
    n: int
    var_ytilde: float

    @property
    def n_cells(self) -> int:
        return self.m1.shape[0]

    @property
    def m2_grid(self) -> np.ndarray:
        return np.broadcast_to(self.m2[:, None], self.m1.shape)


@dataclass(frozen=True)
class MomentBatch:
    """Moments for a batch of resampled datasets (leading axis = replication)."""

    m1: np.ndarray  # (B, cells, grid)
    m2: np.ndarray  # (B, cells)
    s11: np.ndarray
    s22: np.ndarray
    var_ytilde: np.ndarray  # (B,)
    n: int

    def field(self, b: int, y_grid, cell_weights) -> MomentField:
        return MomentField(np.asarray(y_grid), np.asarray(cell_weights), self.m1[b], self.m2[b],
                           self.s11[b], self.s22[b], self.n, float(self.var_ytilde[b]))


def signed_weight(d_i: int, n1: int, n0: int, n: int) -> float:
    if n1 < 1 or n0 < 1:
        raise DegenerateSampleError(f"both subsamples must be nonempty (n1={n1}, n0={n0})")
    return n / n1 if d_i == 1 else -n / n0


def moment_row(d_i, y_tilde: float, w: float, g_value: int, y: float) -> tuple[float, float]:
    return w * max(y - y_tilde, 0.0) * g_value, w * y_tilde * g_value


class MomentKernel:
    """Precomputed layout of one pooled dataset against fixed instruments and grid.

    ``evaluate(counts)`` returns moments of the datasets in which row ``i``
    appears ``counts[b, i]`` times. Outcome-arm values can additionally be
    mapped through ``(Y - shift) / scale`` per replication (aggregate shocks).

    Rows are binned by (cell, grid interval). Without a transform, the sums
    over rows below each grid point are cumulative sums of a sparse histogram
    of the weighted rows. Transformed outcome rows move relative to the grid,
    so for them the rows are sorted by (cell, value) and the thresholds located
    by binary search on an exact integer key ``segment*(n+1) + rank``.
    """

    def __init__(self, y, d, cell_ids, n_cells, y_grid, cell_weights,
                 base_weight=None, epsilon: float = 0.05):
        self.y = np.asarray(y, dtype=float)
        self.d = np.asarray(d).astype(np.int64)
        self.n = n = self.y.size
        self.y_grid = np.asarray(y_grid, dtype=float)
        self.cell_weights = np.asarray(cell_weights, dtype=float)
        self.epsilon = float(epsilon)
        self.omega = None if base_weight is None else np.asarray(base_weight, dtype=float)
        self._layout = (cell_ids, n_cells)
        # a common center keeps the sums well conditioned for large-valued data
        self.center = float(self.y.mean())
        self.y_centered = self.y - self.center
        G = self.y_grid.size
        bins = np.searchsorted(self.y_grid, self.y, side="right")
        self.y_sorted_all = np.sort(self.y)
        rank = np.searchsorted(self.y_sorted_all, self.y, side="left")
        self.levels = []
        offset = 0
        for ids, count in zip(cell_ids, n_cells):
            ids = np.asarray(ids, dtype=np.int64)
            hist = sparse.csr_matrix((np.ones(n), (ids * (G + 1) + bins, np.arange(n))),
                                     shape=(count * (G + 1), n))
            seg = 2 * ids + self.d
            keys = seg * (n + 1) + rank
            order = np.argsort(keys, kind="stable")
            seg_sorted = seg[order]
            segs = np.arange(2 * count)
            self.levels.append(dict(
                hist=hist,
                order=order,
                keys=keys[order],
                start=np.searchsorted(seg_sorted, segs, side="left"),
                end=np.searchsorted(seg_sorted, segs, side="right"),
                offset=offset,
                count=count,
            ))
            offset += count
        self.n_cells_total = offset

    def with_values(self, y) -> "MomentKernel":
        """Same rows, cells, grid and weights with new pooled values."""
        cell_ids, n_cells = self._layout
        return MomentKernel(y, self.d, cell_ids, n_cells, self.y_grid, self.cell_weights,
                            base_weight=self.omega, epsilon=self.epsilon)

    @classmethod
    def for_sample(cls, sample: PooledSample, instruments: InstrumentSet, y_grid,
                   cfg: MomentConfig | None = None, x01=None, base_weight=None):
        """Build from a pooled sample. ``x01`` are covariates already mapped to the unit cube."""
        cfg = cfg or MomentConfig()
        if instruments.is_constant:
            cell_ids = [np.zeros(sample.n, dtype=np.int64)]
        else:
            if x01 is None:
                raise ValueError("instrument cells need covariates mapped to the unit cube")
            cell_ids = instruments.cell_ids(x01)
        counts = [sl.stop - sl.start for _, sl in instruments.level_slices()]
        if base_weight is None and cfg.use_weights:
            base_weight = sample.weight
        return cls(sample.y, sample.d, cell_ids, counts, y_grid, instruments.weights,
                   base_weight=base_weight, epsilon=cfg.epsilon)

    def evaluate(self, counts, shift=None, scale=None) -> MomentBatch:
        counts = np.atleast_2d(np.asarray(counts, dtype=float))
        B = counts.shape[0]
        G = self.y_grid.size
        C = self.n_cells_total
        shocked = shift is not None or scale is not None
        a = np.zeros(B) if shift is None else np.broadcast_to(np.asarray(shift, float), (B,))
        s = np.ones(B) if scale is None else np.broadcast_to(np.asarray(scale, float), (B,))
        if np.any(s <= 0):
            raise ValueError("outcome scale must be positive")

        out = self.d == 1
        cw = counts if self.omega is None else counts * self.omega
        n_tot = counts.sum(axis=1)
        norm1, norm0 = cw[:, out].sum(axis=1), cw[:, ~out].sum(axis=1)
        if np.any(norm1 <= 0) or np.any(norm0 <= 0):
            raise DegenerateSampleError("a resampled dataset has an empty subsample")
        # signed weight per row divided by n: +1/N1 outcomes, -1/N0 beliefs (times omega)
        sw = np.where(out, (1 / norm1)[:, None], -(1 / norm0)[:, None])
        if self.omega is not None:
            sw = sw * self.omega
        u1 = counts * sw  # rows of m = sum u1 * value
        u2 = counts * sw * sw * n_tot[:, None]  # rows of the second moment
        yc = self.y_centered

        var_y = self._pooled_variance(counts, n_tot, a, s)

        m1 = np.zeros((C, G, B))
        sq1 = np.zeros((C, G, B))
        m2 = np.zeros((C, B))
        sq2 = np.zeros((C, B))
        mask = (~out).astype(float) if shocked else 1.0
        cols = np.concatenate([(u1 * mask).T, (u1 * mask * yc).T, (u2 * mask).T,
                               (u2 * mask * yc).T, (u2 * mask * yc * yc).T], axis=1)  # (n, 5B)
        t = (self.y_grid - self.center)[:, None]
        for lev in self.levels:
            count = lev["count"]
            cells = slice(lev["offset"], lev["offset"] + count)
            h = np.cumsum((lev["hist"] @ cols).reshape(count, G + 1, 5, B), axis=1)
            below = h[:, :G]
            m1[cells] += t * below[:, :, 0] - below[:, :, 1]
            sq1[cells] += t * (t * below[:, :, 2] - 2 * below[:, :, 3]) + below[:, :, 4]
            tot = h[:, G]
            m2[cells] += tot[:, 1] + self.center * tot[:, 0]
            sq2[cells] += tot[:, 4] + 2 * self.center * tot[:, 3] + self.center ** 2 * tot[:, 2]
            if shocked:
                self._shifted_outcomes(lev, u1, u2, a, s, m1, sq1, m2, sq2)

        m1 = m1.transpose(2, 0, 1)
        sq1 = sq1.transpose(2, 0, 1)
        m2, sq2 = m2.T, sq2.T
        reg = (self.epsilon * var_y)[:, None]
        s11 = np.maximum(sq1 - m1 ** 2, 0.0) + reg[:, :, None]
        s22 = np.maximum(sq2 - m2 ** 2, 0.0) + reg
        return MomentBatch(np.ascontiguousarray(m1), m2, s11, s22, var_y, self.n)

    def _pooled_variance(self, counts, n_tot, a, s):
        """Variance of the pooled transformed values under the multiplicities."""
        out = self.d == 1
        yc = self.y_centered
        # transformed outcome minus center: (yc + delta) / s
        delta = self.center - a - self.center * s
        c1, c0 = counts[:, out], counts[:, ~out]
        g0, g1, g2 = c1.sum(axis=1), c1 @ yc[out], c1 @ (yc[out] ** 2)
        e1 = (g1 + delta * g0) / s + c0 @ yc[~out]
        e2 = (g2 + 2 * delta * g1 + delta ** 2 * g0) / s ** 2 + c0 @ (yc[~out] ** 2)
        e1 /= n_tot
        e2 /= n_tot
        return np.maximum(e2 - e1 ** 2, 0.0)

    def _shifted_outcomes(self, lev, u1, u2, a, s, m1, sq1, m2, sq2):
        B, n, G = u1.shape[0], self.n, self.y_grid.size
        order = lev["order"]
        yc = self.y_centered[order]
        w1, w2 = u1[:, order], u2[:, order]
        Z = np.zeros((B, n + 1, 5))
        np.cumsum(np.stack([w1, w1 * yc, w2, w2 * yc, w2 * yc * yc], axis=-1), axis=1, out=Z[:, 1:])
        Zflat = Z.reshape(B * (n + 1), 5)
        stride = np.arange(B)[None, :, None] * (n + 1)
        sg = s[:, None]
        thr = self.y_grid[None, :] * sg + a[:, None]  # raw-unit thresholds, (B, G)
        below = np.searchsorted(self.y_sorted_all, thr, side="left")
        t = (thr - self.center) / sg
        dg = ((self.center - a) / s)[:, None]
        count = lev["count"]
        block = max(1, int(2e5 // max(B * G, 1)))
        for k0 in range(0, count, block):
            ks = np.arange(k0, min(k0 + block, count))
            segs = 2 * ks + 1
            lo, hi = lev["start"][segs], lev["end"][segs]
            pos = np.searchsorted(lev["keys"], segs[:, None, None] * (n + 1) + below[None])
            S = Zflat[pos + stride] - Z[:, lo, :].transpose(1, 0, 2)[:, :, None, :]  # (k, B, G, 5)
            S = S.transpose(0, 2, 1, 3)  # (k, G, B, 5)
            tt = t.T
            ss = s[None, :]
            cells = lev["offset"] + ks
            m1[cells] += tt * S[..., 0] - S[..., 1] / ss
            sq1[cells] += (tt * (tt * S[..., 2] - 2 * S[..., 3] / ss) + S[..., 4] / ss ** 2)
            tot = (Z[:, hi, :] - Z[:, lo, :]).transpose(1, 0, 2)  # (k, B, 5)
            m2[cells] += (tot[..., 1] / ss + dg.T * tot[..., 0])
            sq2[cells] += (tot[..., 4] / ss ** 2 + 2 * dg.T * tot[..., 3] / ss + dg.T ** 2 * tot[..., 2])


def moment_field(sample: PooledSample, instruments: InstrumentSet, y_grid,
                 cfg: MomentConfig | None = None, x01=None, base_weight=None) -> MomentField:
    """Sample moments and regularized variances over ``cells x y_grid`` (1/n variances)."""
    cfg = cfg or MomentConfig()
    var_y = float(np.var(sample.y))
    if var_y == 0:
        raise DegenerateSampleError("pooled values have zero variance")
    kernel = MomentKernel.for_sample(sample, instruments, y_grid, cfg, x01=x01,
                                     base_weight=base_weight)
    batch = kernel.evaluate(np.ones((1, sample.n)))
    return batch.field(0, kernel.y_grid, kernel.cell_weights)
