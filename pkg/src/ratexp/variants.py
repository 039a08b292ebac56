"""Test variants (aggregate shocks, rounded beliefs, selection, linked data) and classic benchmarks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chi2, norm

from .engine import (MomentProblem, Shock, TestConfig, TestReport, build_instruments, make_problem,
                     replicate_rng, sup_statistic, y_grid)
from .errors import DegenerateSampleError, NumericalError, ValidationError
from .moments import MomentKernel
from .sample_io import PooledSample, weighted_mean

SHOCK_KINDS = ("none", "additive", "multiplicative")


# ---------------------------------------------------------------------------
# aggregate shocks


@dataclass(frozen=True)
class ShockForm:
    kind: str = "none"
    c_hat: float = 0.0

    def __post_init__(self):
        if self.kind not in SHOCK_KINDS:
            raise ValueError(f"shock kind must be one of {SHOCK_KINDS}")
        if not math.isfinite(self.c_hat):
            raise ValueError("shock estimate must be finite")

    def q(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "additive":
            return y - self.c_hat
        if self.kind == "multiplicative":
            return y / self.c_hat
        return y


def _arm_means(sample: PooledSample, use_weights: bool) -> tuple[float, float]:
    w = sample.weight if use_weights else np.ones(sample.n)
    out = sample.d == 1
    return (weighted_mean(sample.y[out], w[out]), weighted_mean(sample.y[~out], w[~out]))


def estimate_shock(sample: PooledSample, kind: str, use_weights: bool | None = None) -> float:
    """Mean difference (additive) or ratio (multiplicative) of outcomes over beliefs."""
    use_weights = sample.has_weights if use_weights is None else use_weights
    m_y, m_psi = _arm_means(sample, use_weights)
    if kind == "additive":
        return m_y - m_psi
    if kind == "multiplicative":
        if abs(m_psi) < 1e-12:
            raise ZeroDivisionError("belief mean is zero; multiplicative shock undefined")
        return m_y / m_psi
    if kind == "none":
        return 0.0
    raise ValueError(f"shock kind must be one of {SHOCK_KINDS}")


def apply_shock(sample: PooledSample, shock: ShockForm) -> PooledSample:
    if shock.kind == "none":
        return sample
    y = np.where(sample.d == 1, shock.q(sample.y), sample.y)
    out = sample.with_values(y)
    out.extra["shock"] = {"kind": shock.kind, "c_hat": shock.c_hat}
    return out


def _shock(sample: PooledSample, kind: str) -> Shock | None:
    if kind == "none":
        return None
    if kind not in SHOCK_KINDS:
        raise ValueError(f"shock kind must be one of {SHOCK_KINDS}")
    return Shock(kind, sample.weight if sample.has_weights else None)


def test_with_shocks(sample: PooledSample, cfg: TestConfig | None = None,
                     kind: str = "multiplicative") -> TestReport:
    """Inequality-only test on ``q(Y, c_hat)``; ``c_hat`` is re-estimated in every resample."""
    if kind == "none":
        raise ValueError("use run_test when there is no shock")
    cfg = cfg or TestConfig()
    return make_problem(sample, cfg, equality=False, shock=_shock(sample, kind)).run(f"shock:{kind}")


test_with_shocks.__test__ = False


# ---------------------------------------------------------------------------
# rounded beliefs


def candidate_belief(psi_lo, psi_hi, b):
    """``psi_hi`` where ``psi_hi < b``, else ``max(b, psi_lo)``; works elementwise."""
    lo = np.asarray(psi_lo, dtype=float)
    hi = np.asarray(psi_hi, dtype=float)
    if np.any(lo > hi):
        raise ValidationError("psi_lo must not exceed psi_hi")
    out = np.where(hi < b, hi, np.maximum(b, lo))
    return float(out) if out.ndim == 0 else out


@dataclass
class BoundarySolution:
    status: str  # "ok" | "fails_mean_bracket"
    b_star: float
    candidate: np.ndarray
    bracket: tuple[float, float]
    mean_y: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _solve_b(lo, hi, w, mean_y, rel_tol=1e-9):
    """Bisection for ``mean(psi^b) = mean_y``; returns ``(b, inside_bracket)``."""
    lo_mean, hi_mean = np.dot(w, lo), np.dot(w, hi)
    a, b = float(lo.min()), float(hi.max())
    span = max(b - a, 1e-300)
    tol = 1e-12 * max(1.0, abs(lo_mean), abs(hi_mean))
    if mean_y < lo_mean - tol:
        return a, False
    if mean_y > hi_mean + tol:
        return b, False
    for _ in range(200):
        if b - a <= rel_tol * span:
            break
        mid = 0.5 * (a + b)
        if np.dot(w, candidate_belief(lo, hi, mid)) < mean_y:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b), True


def solve_boundary(sample: PooledSample, use_weights: bool = False) -> BoundarySolution:
    """Boundary ``b*`` at which the candidate beliefs match the outcome mean.

    Candidate means are continuous and nondecreasing in ``b``, so bisection over
    ``[min psi_lo, max psi_hi]`` finds it whenever the outcome mean lies in the
    bracket ``[mean psi_lo, mean psi_hi]``.
    """
    if not sample.has_bounds:
        raise ValidationError("belief bounds are required")
    bel = sample.d == 0
    w_all = sample.weight if use_weights else np.ones(sample.n)
    lo, hi = sample.psi_lo[bel], sample.psi_hi[bel]
    w = w_all[bel] / w_all[bel].sum()
    mean_y = weighted_mean(sample.y[~bel], w_all[~bel])
    b, inside = _solve_b(lo, hi, w, mean_y)
    return BoundarySolution("ok" if inside else "fails_mean_bracket", b,
                            candidate_belief(lo, hi, b), (float(w @ lo), float(w @ hi)), mean_y)


class _PooledMeanGaps:
    """``mean(Y) - mean(psi_lo) >= 0`` and ``mean(psi_hi) - mean(Y) >= 0`` as y-free moments."""

    def __init__(self, sample: PooledSample, values: np.ndarray, omega, epsilon: float):
        self.d = sample.d
        self.n = sample.n
        self.epsilon = epsilon
        self.omega = np.ones(sample.n) if omega is None else omega
        out = self.d == 1
        self.values = values
        self.v_lo = np.where(out, sample.y, np.nan_to_num(sample.psi_lo))
        self.v_hi = np.where(out, sample.y, np.nan_to_num(sample.psi_hi))
        self.value_fn = None  # per-resample pooled values for the regularizer

    def _eval(self, counts, values):
        counts = np.atleast_2d(counts)
        out = self.d == 1
        cw = counts * self.omega
        n_tot = counts.sum(axis=1, keepdims=True)
        f = np.where(out, n_tot / cw[:, out].sum(axis=1, keepdims=True),
                     -n_tot / cw[:, ~out].sum(axis=1, keepdims=True))
        rows = np.stack([f * self.omega * self.v_lo, -f * self.omega * self.v_hi], axis=1)
        m = np.einsum("bn,bkn->bk", counts, rows) / n_tot
        sq = np.einsum("bn,bkn->bk", counts, rows ** 2) / n_tot
        values = np.atleast_2d(values)
        mu = (counts * values).sum(axis=1, keepdims=True) / n_tot
        var = (counts * (values - mu) ** 2).sum(axis=1, keepdims=True) / n_tot
        return m, np.maximum(sq - m ** 2, 0.0) + self.epsilon * var

    def base(self):
        m, s = self._eval(np.ones(self.n), self.values)
        return m[0], s[0]

    def boot(self, counts, ids):
        values = np.stack([self.value_fn(c) for c in counts])
        return self._eval(counts, values)


class _RoundingProblem(MomentProblem):
    """Rounded-belief test: ``b*`` is re-solved on every resample (plug-in, like ``c_hat``)."""

    def boot_chunk(self, counts, ids):
        rn = math.sqrt(self.field.n)
        values = np.stack([self.extra.value_fn(c) for c in counts])
        m_extra, s_extra = self.extra._eval(counts, values)
        z_extra = (math.sqrt(self.extra.n) * (m_extra - self.extra_m) + self.extra_phi) / np.sqrt(s_extra)
        out = np.empty(counts.shape[0])
        for j, c in enumerate(counts):
            bt = self.kernel.with_values(values[j]).evaluate(c[None])
            z1 = (rn * (bt.m1[0] - self.field.m1) + self.phi) / np.sqrt(bt.s11[0])
            z2 = rn * (bt.m2[0] - self.field.m2) / np.sqrt(bt.s22[0])
            out[j] = sup_statistic(z1, z2, self.field.cell_weights, 1.0, 0.0, z_extra[j])[0]
        return out


def test_with_rounding(sample: PooledSample, cfg: TestConfig | None = None) -> TestReport:
    """Test for interval-reported beliefs.

    Beliefs are replaced by the candidate values ``psi^{b*}``; the statistic
    keeps the inequality moments and adds the two mean-bracket inequalities.
    When the sample outcome mean falls outside the bracket, ``b*`` is clamped
    to the bracket end and the report is flagged; the bracket moments then
    carry the evidence against the null.
    """
    cfg = cfg or TestConfig()
    if not sample.has_bounds:
        raise ValidationError("belief bounds are required for the rounding test")
    sol = solve_boundary(sample, cfg.use_weights)
    bel = sample.d == 0
    values = sample.y.copy()
    values[bel] = sol.candidate
    adj = sample.with_values(values)
    omega = sample.weight if cfg.use_weights else None
    lo, hi = sample.psi_lo[bel], sample.psi_hi[bel]
    w_bel = (omega if omega is not None else np.ones(sample.n))[bel]
    w_out = (omega if omega is not None else np.ones(sample.n))[~bel]

    def value_fn(c):
        wb = c[bel] * w_bel
        wo = c[~bel] * w_out
        if wb.sum() <= 0 or wo.sum() <= 0:
            raise DegenerateSampleError("resample without beliefs or outcomes")
        b, _ = _solve_b(lo, hi, wb / wb.sum(), float(wo @ sample.y[~bel] / wo.sum()))
        v = sample.y.copy()
        v[bel] = candidate_belief(lo, hi, b)
        return v

    gaps = _PooledMeanGaps(sample, values, omega, cfg.epsilon)
    gaps.value_fn = value_fn
    instruments, x01 = build_instruments(adj, cfg)
    grid = y_grid(adj, cfg.grid_len)
    kernel = MomentKernel.for_sample(adj, instruments, grid, cfg.moment_config, x01=x01)
    prob = _RoundingProblem(adj, kernel, instruments, cfg, equality=False, extra=gaps)
    m, s = prob.extra_m, prob.extra_s
    t_ratio = (math.sqrt(sample.n) * m / np.sqrt(s)).tolist()
    return prob.run("rounding", {
        "b_star": sol.b_star,
        "bracket": list(sol.bracket),
        "outcome_mean": sol.mean_y,
        "bracket_violated": not sol.ok,
        "bracket_t_ratios": t_ratio,
        "construction": "plug-in boundary re-solved per bootstrap resample",
    })


test_with_rounding.__test__ = False


# ---------------------------------------------------------------------------
# selection on observables


def trim_propensity(p_x, p_min: float = 0.01) -> tuple[np.ndarray, int]:
    p = np.asarray(p_x, dtype=float)
    if not 0 < p_min < 0.5:
        raise ValueError("p_min must lie in (0, 0.5)")
    clipped = np.clip(p, p_min, 1 - p_min)
    return clipped, int(np.count_nonzero(clipped != p))


def propensity_weight(d, p_x, p_min: float = 0.01):
    """``d/p - (1-d)/(1-p)`` with ``p`` clamped to ``[p_min, 1-p_min]``."""
    p, _ = trim_propensity(p_x, p_min)
    d = np.asarray(d, dtype=float)
    out = d / p - (1 - d) / (1 - p)
    return float(out) if out.ndim == 0 else out


def fit_propensity(x, d, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Logistic regression of ``d`` on ``(1, x)`` by iteratively reweighted least squares."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.column_stack([np.ones(x.shape[0]), x])
    d = np.asarray(d, dtype=float)
    beta = np.zeros(z.shape[1])
    for _ in range(max_iter):
        eta = np.clip(z @ beta, -35, 35)
        p = 1 / (1 + np.exp(-eta))
        w = np.maximum(p * (1 - p), 1e-12)
        step = np.linalg.lstsq(z * np.sqrt(w)[:, None], (d - p) / np.sqrt(w), rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol * (1 + np.max(np.abs(beta))):
            return 1 / (1 + np.exp(-np.clip(z @ beta, -35, 35)))
    raise NumericalError("propensity IRLS did not converge (separation?)")


def test_with_selection(sample: PooledSample, propensities=None, cfg: TestConfig | None = None,
                        p_min: float = 0.01) -> TestReport:
    """Test under selection on observables via inverse-propensity weights.

    Rows get base weights ``1/p(x)`` (outcomes) and ``1/(1-p(x))`` (beliefs),
    normalized within each arm, so constant propensities reproduce the
    unweighted test exactly.
    """
    cfg = cfg or TestConfig()
    fitted = propensities is None
    if fitted:
        if sample.d_x == 0:
            raise ValidationError("propensity fit needs covariates")
        propensities = fit_propensity(sample.x, sample.d)
    p, n_trim = trim_propensity(np.asarray(propensities, dtype=float).ravel(), p_min)
    if p.size != sample.n:
        raise ValidationError("one propensity per row is required")
    omega = np.where(sample.d == 1, 1 / p, 1 / (1 - p))
    if cfg.use_weights:
        omega = omega * sample.weight
    prob = make_problem(sample, cfg, base_weight=omega)
    return prob.run("selection", {"propensity_fitted": fitted, "propensity_trimmed": n_trim,
                                  "p_min": p_min})


test_with_selection.__test__ = False


# ---------------------------------------------------------------------------
# classic benchmarks


@dataclass(frozen=True)
class ClassicResult:
    statistic: float
    p_value: float
    estimate: float


def _weighted_moments(v, w):
    a = w / w.sum()
    mu = float(a @ v)
    return mu, a


def naive_mean_test(sample: PooledSample, use_weights: bool | None = None) -> ClassicResult:
    """Two-sided Welch z-test of equal outcome and belief means."""
    use_weights = sample.has_weights if use_weights is None else use_weights
    if min(sample.n1, sample.n0) < 2:
        raise DegenerateSampleError("each subsample needs at least two rows")
    w = sample.weight if use_weights else np.ones(sample.n)
    out = sample.d == 1
    mus, vs = [], []
    for mask in (out, ~out):
        mu, a = _weighted_moments(sample.y[mask], w[mask])
        mus.append(mu)
        vs.append(float(np.sum(a ** 2 * (sample.y[mask] - mu) ** 2)))
    gap = mus[0] - mus[1]
    se = math.sqrt(vs[0] + vs[1])
    if se == 0:
        return ClassicResult(0.0 if gap == 0 else math.copysign(math.inf, gap),
                             1.0 if gap == 0 else 0.0, gap)
    z = gap / se
    return ClassicResult(z, float(2 * norm.sf(abs(z))), gap)


def variance_test(sample: PooledSample, shock_kind: str = "none",
                  use_weights: bool | None = None) -> ClassicResult:
    """One-sided test of ``V(q(Y, c_hat)) >= V(psi)`` by the delta method (p = Phi(z))."""
    use_weights = sample.has_weights if use_weights is None else use_weights
    if min(sample.n1, sample.n0) < 2:
        raise DegenerateSampleError("each subsample needs at least two rows")
    if shock_kind != "none":
        sample = apply_shock(sample, ShockForm(shock_kind, estimate_shock(sample, shock_kind, use_weights)))
    w = sample.weight if use_weights else np.ones(sample.n)
    out = sample.d == 1
    var, se2 = [], 0.0
    for mask in (out, ~out):
        v = sample.y[mask]
        mu, a = _weighted_moments(v, w[mask])
        dev2 = (v - mu) ** 2
        s2 = float(a @ dev2)
        var.append(s2)
        se2 += float(np.sum(a ** 2 * (dev2 - s2) ** 2))
    gap = var[0] - var[1]
    if se2 == 0:
        return ClassicResult(0.0 if gap == 0 else math.copysign(math.inf, gap),
                             0.5 if gap == 0 else float(gap > 0), gap)
    z = gap / math.sqrt(se2)
    return ClassicResult(z, float(norm.cdf(z)), gap)


@dataclass(frozen=True, eq=False)
class LinkedSample:
    """Jointly observed outcome/belief pairs."""

    y_hat: np.ndarray
    psi_hat: np.ndarray
    weight: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y_hat, dtype=float).ravel()
        p = np.asarray(self.psi_hat, dtype=float).ravel()
        if y.size != p.size:
            raise ValidationError("y and psi columns differ in length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
            raise ValidationError("linked values must be finite")
        object.__setattr__(self, "y_hat", y)
        object.__setattr__(self, "psi_hat", p)
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=float).ravel()
            if w.size != y.size or np.any(~np.isfinite(w) | (w <= 0)):
                raise ValidationError("linked weights must be positive and one per pair")
            object.__setattr__(self, "weight", w)

    @property
    def n(self) -> int:
        return self.y_hat.size

    def w(self) -> np.ndarray:
        return np.ones(self.n) if self.weight is None else self.weight

    @classmethod
    def from_csv(cls, path) -> "LinkedSample":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in ("y", "psi"):
                if col not in header:
                    from .errors import SchemaError
                    raise SchemaError(f"linked file lacks column {col!r}")
            ys, ps, ws = [], [], []
            for i, rec in enumerate(reader):
                try:
                    ys.append(float(rec["y"]))
                    ps.append(float(rec["psi"]))
                    if "w" in header:
                        ws.append(float(rec["w"]))
                except ValueError as exc:
                    from .errors import ParseError
                    raise ParseError(str(exc), row=i) from None
        return cls(np.array(ys), np.array(ps), np.array(ws) if "w" in header else None)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["y", "psi", "w"])
            for a, b, c in zip(self.y_hat, self.psi_hat, self.w()):
                wr.writerow([repr(float(a)), repr(float(b)), repr(float(c))])


@dataclass(frozen=True)
class DirectResult:
    beta: float
    intercept: float
    wald: float
    p_value: float


def direct_test(linked: LinkedSample) -> DirectResult:
    """(W)LS of ``y`` on ``(1, psi)``; robust (HC1) Wald test of ``(0, 1)``."""
    n = linked.n
    if n < 3:
        raise DegenerateSampleError("direct test needs at least three pairs")
    if np.ptp(linked.psi_hat) == 0:
        raise DegenerateSampleError("beliefs are constant; the regression is not identified")
    z = np.column_stack([np.ones(n), linked.psi_hat])
    w = linked.w()
    zw = z * w[:, None]
    bread = np.linalg.inv(z.T @ zw)
    coef = bread @ (zw.T @ linked.y_hat)
    resid = linked.y_hat - z @ coef
    meat = (zw * resid[:, None]).T @ (zw * resid[:, None])
    cov = bread @ meat @ bread * n / (n - 2)
    diff = coef - np.array([0.0, 1.0])
    if np.allclose(diff, 0.0, atol=1e-12 * (1 + np.abs(coef).max())):
        return DirectResult(float(coef[1]), float(coef[0]), 0.0, 1.0)
    try:
        wald = float(diff @ np.linalg.solve(cov, diff))
    except np.linalg.LinAlgError:
        wald = math.inf
    return DirectResult(float(coef[1]), float(coef[0]), wald, float(chi2.sf(wald, 2)))


def beta_lower_bound(lambda_lower: float) -> float:
    if lambda_lower < 0:
        raise ValueError("lambda_lower must be nonnegative")
    return 1.0 - 1.0 / (1.0 + lambda_lower)


@dataclass
class RegressionBound:
    beta_min: float
    h: np.ndarray
    mean: float
    variance: float


def _bound_moment(y, psi, w, beta_min, epsilon):
    a = w / w.sum()
    psi_bar = a @ psi
    h = (y - beta_min * psi) * (psi - psi_bar)
    m = float(a @ h)
    v = float(a @ (h - m) ** 2)
    # regularize in the units of h: product of the two sample variances
    reg = float(a @ (y - a @ y) ** 2) * float(a @ (psi - psi_bar) ** 2)
    return h, m, v + epsilon * reg


def regression_bound_moment(linked: LinkedSample, lambda_lower: float,
                            epsilon: float = 0.05) -> RegressionBound:
    """Per-pair moment ``(y - b psi)(psi - mean psi)``, nonnegative in mean iff slope >= b."""
    b = beta_lower_bound(lambda_lower)
    h, m, v = _bound_moment(linked.y_hat, linked.psi_hat, linked.w(), b, epsilon)
    return RegressionBound(b, h, m, v)


class _LinkedBound:
    """Slope lower bound as an extra inequality; pairs are resampled on their own stream."""

    def __init__(self, linked, lambda_lower, cfg: TestConfig, shock=None, pooled=None):
        self.linked = linked
        self.n = linked.n
        self.beta_min = beta_lower_bound(lambda_lower)
        self.cfg = cfg
        self.shock = shock
        self.pooled = pooled

    def _y(self, c_hat):
        if self.shock is None:
            return self.linked.y_hat
        return self.linked.y_hat - c_hat if self.shock.kind == "additive" else self.linked.y_hat / c_hat

    def _c(self, counts):
        if self.shock is None:
            return np.zeros(np.atleast_2d(counts).shape[0])
        return self.shock.estimate(counts, self.pooled.d, self.pooled.y)

    def base(self):
        c = self._c(np.ones(self.pooled.n))[0]
        _, m, v = _bound_moment(self._y(c), self.linked.psi_hat, self.linked.w(), self.beta_min,
                                self.cfg.epsilon)
        return np.array([m]), np.array([v])

    def boot(self, counts, ids):
        cs = self._c(counts)
        ms, vs = np.empty((len(ids), 1)), np.empty((len(ids), 1))
        for j, b in enumerate(ids):
            rng = replicate_rng(self.cfg.seed, int(b), stream=1)
            for _ in range(self.cfg.max_degenerate_redraws + 1):
                k = np.bincount(rng.integers(0, self.n, self.n), minlength=self.n)
                if np.ptp(self.linked.psi_hat[k > 0]) > 0:
                    break
            else:
                raise DegenerateSampleError("linked resamples keep collapsing")
            _, m, v = _bound_moment(self._y(cs[j]), self.linked.psi_hat, self.linked.w() * k,
                                    self.beta_min, self.cfg.epsilon)
            ms[j, 0], vs[j, 0] = m, v
        return ms, vs


def combined_test(sample: PooledSample, linked: LinkedSample, lambda_lower: float,
                  cfg: TestConfig | None = None, shock_kind: str = "multiplicative") -> TestReport:
    """Marginal test plus the linked-data slope lower bound as one extra inequality."""
    cfg = cfg or TestConfig()
    if linked.n < 3:
        raise DegenerateSampleError("linked data needs at least three pairs")
    shock = _shock(sample, shock_kind)
    extra = _LinkedBound(linked, lambda_lower, cfg, shock, sample)
    prob = make_problem(sample, cfg, equality=shock is None, shock=shock, extra=extra)
    variant = "combined" if shock is None else f"combined:shock:{shock_kind}"
    return prob.run(variant, {"lambda_lower": lambda_lower, "beta_min": extra.beta_min,
                              "n_pairs": linked.n,
                              "bound_t_ratio": float(math.sqrt(linked.n) * prob.extra_m[0]
                                                     / math.sqrt(prob.extra_s[0]))})


combined_test.__test__ = False


# ---------------------------------------------------------------------------
# threshold (survival) beliefs


@dataclass
class ThresholdReport:
    thresholds: np.ndarray
    results: list = field(default_factory=list)  # ClassicResult per threshold
    bonferroni_p: float = 1.0

    def reject(self, alpha: float) -> bool:
        return self.bonferroni_p <= alpha


def threshold_belief_tests(realized, thresholds, survival_beliefs, tol: float = 1e-9) -> ThresholdReport:
    """One naive mean test per threshold on ``1{Y > y_k}`` against the stated ``P(Y > y_k)``."""
    y = np.asarray(realized, dtype=float).ravel()
    t = np.asarray(thresholds, dtype=float).ravel()
    s = np.asarray(survival_beliefs, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[1] != t.size:
        raise ValidationError("one survival belief per threshold is required")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("thresholds must be strictly increasing")
    if np.any((s < -tol) | (s > 1 + tol)):
        raise ValidationError("survival beliefs must lie in [0, 1]")
    bad = np.flatnonzero(np.any(np.diff(s, axis=1) > tol, axis=1))
    if bad.size:
        raise ValidationError("survival beliefs must be nonincreasing in the threshold", row=int(bad[0]))
    results = []
    for k, yk in enumerate(t):
        pooled = PooledSample.from_arrays((y > yk).astype(float), s[:, k])
        results.append(naive_mean_test(pooled, use_weights=False))
    p_min = min(r.p_value for r in results)
    return ThresholdReport(t, results, min(1.0, t.size * p_min))
