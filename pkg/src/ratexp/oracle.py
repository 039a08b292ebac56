"""Exact population-level tools for the mean-preserving-spread characterization.

``F_Y`` is a mean-preserving spread of ``F_psi`` iff the means agree and

    Delta(y) = E(y - Y)^+ - E(y - psi)^+ >= 0   for every y,

iff there is a coupling ``(Y', psi')`` with those marginals and
``E[Y' | psi'] = psi'``. For finite supports the first form is checked at the
knots of the piecewise-linear ``Delta`` and the second by a small linear program,
which gives two independent routes to the same verdict.

The second half of the module computes population rejection thresholds for the
Gaussian simulation designs, using the closed form of the normal partial
expectation (or a trapezoid rule, kept as a cross-check).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse
from scipy.integrate import trapezoid
from scipy.special import roots_jacobi
from scipy.stats import norm

from .errors import NumericalError, ValidationError

# zeta ~ N(2, .) in the simulation design; sd 0.1 is the reading that reproduces
# the published variance-test threshold (see montecarlo.ZETA_SD)
ZETA_MEAN = 2.0
ZETA_SD = 0.1
TAIL_PROB = 0.1


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float).ravel()
        m = np.asarray(self.mass, dtype=float).ravel()
        if s.size == 0 or s.size != m.size:
            raise ValidationError("support and mass must be nonempty and of equal length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(m))):
            raise ValidationError("support and mass must be finite")
        if np.any(np.diff(s) <= 0):
            raise ValidationError("support must be strictly increasing")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12 * max(1, s.size):
            raise ValidationError("masses must be nonnegative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "mass", m)

    @classmethod
    def point(cls, c: float) -> "DiscreteDist":
        return cls(np.array([float(c)]), np.array([1.0]))

    @classmethod
    def from_atoms(cls, values, weights=None, merge_tol: float = 1e-12) -> "DiscreteDist":
        """Sort, merge (near-)duplicate atoms and normalize the weights."""
        v = np.asarray(values, dtype=float).ravel()
        w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
        if v.size != w.size or v.size == 0:
            raise ValidationError("values and weights must be nonempty and of equal length")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be nonnegative with positive total")
        order = np.argsort(v, kind="stable")
        v, w = v[order], w[order]
        new = np.ones(v.size, dtype=bool)
        new[1:] = np.diff(v) > merge_tol * np.maximum(1.0, np.abs(v[1:]))
        group = np.cumsum(new) - 1
        mass = np.bincount(group, weights=w)
        return cls(v[new], mass / mass.sum())

    @property
    def mean(self) -> float:
        return float(self.mass @ self.support)

    @property
    def variance(self) -> float:
        return float(self.mass @ (self.support - self.mean) ** 2)

    def partial_expectation(self, y) -> np.ndarray:
        """``E(y - X)^+`` for each entry of ``y``."""
        y = np.asarray(y, dtype=float)
        return np.maximum(y[..., None] - self.support, 0.0) @ self.mass

    def shift(self, c: float) -> "DiscreteDist":
        return DiscreteDist(self.support + c, self.mass)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["support", "mass"])
            for s, m in zip(self.support, self.mass):
                wr.writerow([repr(float(s)), repr(float(m))])

    @classmethod
    def from_csv(cls, path) -> "DiscreteDist":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            s = [float(r["support"]) for r in rows]
            m = [float(r["mass"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad distribution file {path}: {exc}") from exc
        return cls(np.array(s), np.array(m))


@dataclass(frozen=True, eq=False)
class MartingaleCoupling:
    """Joint law of ``(psi', Y')`` (rows = belief atoms, columns = outcome atoms)."""

    row_dist: DiscreteDist
    col_dist: DiscreteDist
    joint: np.ndarray

    def martingale_residual(self) -> float:
        j = self.joint
        r = j @ self.col_dist.support - self.row_dist.support * j.sum(axis=1)
        return float(np.max(np.abs(r)))


@dataclass(frozen=True)
class MpsVerdict:
    status: str  # "holds" | "fails_mean" | "fails_inequality"
    y: float | None = None
    gap: float = 0.0

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def integrated_cdf_gap(f_y: DiscreteDist, f_psi: DiscreteDist, y) -> np.ndarray | float:
    out = f_y.partial_expectation(y) - f_psi.partial_expectation(y)
    return float(out) if np.ndim(out) == 0 else out


def check_mps(f_y: DiscreteDist, f_psi: DiscreteDist, tol: float = 1e-9) -> MpsVerdict:
    """Is ``f_y`` a mean-preserving spread of ``f_psi``?

    ``Delta`` is piecewise linear with kinks at the atoms, so its minimum over
    the real line is attained at an atom or in the limit ``y -> inf`` where it
    equals the mean gap.
    """
    mean_gap = f_psi.mean - f_y.mean
    if abs(mean_gap) > tol:
        return MpsVerdict("fails_mean", None, mean_gap)
    knots = np.union1d(f_y.support, f_psi.support)
    gaps = integrated_cdf_gap(f_y, f_psi, knots)
    k = int(np.argmin(gaps))
    if gaps[k] < -tol:
        return MpsVerdict("fails_inequality", float(knots[k]), float(gaps[k]))
    return MpsVerdict("holds", None, float(gaps[k]))


def construct_martingale_coupling(f_psi: DiscreteDist, f_y: DiscreteDist,
                                  tol: float = 1e-7) -> MartingaleCoupling | None:
    """Find a martingale coupling or return ``None`` when none exists.

    Phase-one LP: marginal constraints are exact, each martingale constraint
    gets a pair of slacks and the total slack is minimized; the problem is
    feasible iff the optimum is (numerically) zero.
    """
    psi, y = f_psi.support, f_y.support
    m, k = psi.size, y.size
    scale = max(1.0, float(np.max(np.abs(np.concatenate([psi, y])))))
    nv = m * k
    rows_a = sparse.kron(sparse.eye(m), np.ones((1, k)))
    cols_a = sparse.kron(np.ones((1, m)), sparse.eye(k))
    mart = sparse.lil_matrix((m, nv))
    for i in range(m):
        mart[i, i * k:(i + 1) * k] = (y - psi[i]) / scale
    slack = sparse.hstack([sparse.eye(m), -sparse.eye(m)])
    a_eq = sparse.vstack([
        sparse.hstack([rows_a, sparse.csr_matrix((m, 2 * m))]),
        sparse.hstack([cols_a, sparse.csr_matrix((k, 2 * m))]),
        sparse.hstack([mart.tocsr(), slack]),
    ]).tocsc()
    b_eq = np.concatenate([f_psi.mass, f_y.mass, np.zeros(m)])
    cost = np.concatenate([np.zeros(nv), np.ones(2 * m)])
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise NumericalError(f"coupling LP failed: {res.message}")
    if res.fun > tol:
        return None
    joint = np.maximum(res.x[:nv].reshape(m, k), 0.0)
    return MartingaleCoupling(f_psi, f_y, joint)


def convolve(a: DiscreteDist, b: DiscreteDist) -> DiscreteDist:
    """Law of ``A + B`` for independent ``A ~ a`` and ``B ~ b``."""
    values = (a.support[:, None] + b.support[None, :]).ravel()
    weights = (a.mass[:, None] * b.mass[None, :]).ravel()
    return DiscreteDist.from_atoms(values, weights)


def check_binary_reduction(p_y: float, f_psi: DiscreteDist, tol: float = 1e-9) -> bool:
    """For a binary outcome, equal means alone imply the spread condition.

    Returns the truth value of "mean(f_psi) == p_y implies check_mps holds";
    with unequal means the implication is vacuous and ``True`` is returned.
    """
    if not 0 <= p_y <= 1:
        raise ValidationError("p_y must lie in [0, 1]")
    if f_psi.support[0] < -tol or f_psi.support[-1] > 1 + tol:
        raise ValidationError("belief support must lie in [0, 1]")
    if abs(f_psi.mean - p_y) > tol:
        return True
    bern = DiscreteDist.from_atoms([0.0, 1.0], [1 - p_y, p_y])
    return check_mps(bern, f_psi, tol).holds


# ---------------------------------------------------------------------------
# Gaussian mixtures and population thresholds


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of normals (``sd == 0`` components are point masses)."""

    weight: np.ndarray
    mean: np.ndarray
    sd: np.ndarray

    def partial_expectation(self, y, method: str = "exact", nodes: int = 4001) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if method == "exact":
            dy = y[..., None] - self.mean
            point = self.sd == 0
            s = np.where(point, 1.0, self.sd)
            z = dy / s
            smooth = dy * norm.cdf(z) + s * norm.pdf(z)
            return np.where(point, np.maximum(dy, 0.0), smooth) @ self.weight
        if method != "trapezoid":
            raise ValueError(f"unknown method {method!r}")
        out = np.zeros_like(y)
        for w, mu, s in zip(self.weight, self.mean, self.sd):
            if s == 0:
                out += w * np.maximum(y - mu, 0.0)
                continue
            t = np.linspace(mu - 8 * s, mu + 8 * s, nodes)
            dens = norm.pdf(t, mu, s)
            dens /= trapezoid(dens, t)
            out += w * trapezoid(np.maximum(y[..., None] - t, 0.0) * dens, t, axis=-1)
        return out

    @property
    def total_mean(self) -> float:
        return float(self.weight @ self.mean)

    @property
    def variance(self) -> float:
        m = self.total_mean
        return float(self.weight @ (self.sd ** 2 + (self.mean - m) ** 2))


def simulation_outcome_law(rho: float, noise_scale: float = 1.0, zeta_sd: float = ZETA_SD,
                           zeta_mean: float = ZETA_MEAN, tail: float = TAIL_PROB) -> GaussianMixture:
    """Law of ``rho*psi + s*zeta*S`` with ``psi ~ N(0,1)``, ``S`` in {-1,0,1}."""
    s = noise_scale
    side_sd = math.sqrt(rho ** 2 + (s * zeta_sd) ** 2)
    return GaussianMixture(
        np.array([tail, 1 - 2 * tail, tail]),
        np.array([-s * zeta_mean, 0.0, s * zeta_mean]),
        np.array([side_sd, abs(rho), side_sd]),
    )


STANDARD_NORMAL = GaussianMixture(np.array([1.0]), np.array([0.0]), np.array([1.0]))


def _min_over_line(fun, lo: float, hi: float, mesh: int = 2001) -> tuple[float, float]:
    """Minimize a 1-d function by mesh search plus bounded local refinement."""
    ys = np.linspace(lo, hi, mesh)
    vals = fun(ys)
    k = int(np.argmin(vals))
    a, b = ys[max(k - 1, 0)], ys[min(k + 1, mesh - 1)]
    res = optimize.minimize_scalar(lambda t: float(fun(np.array([t]))[0]), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-10})
    if res.fun < vals[k]:
        return float(res.x), float(res.fun)
    return float(ys[k]), float(vals[k])


def _bisect_boundary(violated, lo: float, hi: float, xtol: float, max_iter: int = 200) -> float:
    """Largest point of ``[lo, hi]`` where ``violated`` holds, assuming it is a lower set."""
    if not violated(lo):
        return lo
    if violated(hi):
        return hi
    for _ in range(max_iter):
        if hi - lo <= xtol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if violated(mid):
            lo = mid
        else:
            hi = mid
    raise NumericalError("bisection did not converge")


@dataclass(frozen=True)
class ThresholdResult:
    rho_star: float
    rho_var: float
    tail_rho: float
    binding_y: float
    zeta_sd: float
    method: str


def min_spread_gap(outcome: GaussianMixture, belief: GaussianMixture = STANDARD_NORMAL,
                   method: str = "exact", mesh: int = 2001) -> tuple[float, float]:
    """``min_y E(y-Y)^+ - E(y-psi)^+`` over the merged +-8 sd range; returns ``(y, gap)``."""
    spread = 8 * max(np.max(outcome.sd), np.max(belief.sd), 1e-12)
    lo = min(outcome.mean.min(), belief.mean.min()) - spread
    hi = max(outcome.mean.max(), belief.mean.max()) + spread

    def gap(y):
        return (outcome.partial_expectation(y, method) - belief.partial_expectation(y, method))
    return _min_over_line(gap, lo, hi, mesh)


def population_threshold_no_covariates(zeta_sd: float = ZETA_SD, noise_scale: float = 1.0,
                                       method: str = "exact", mesh: int = 2001,
                                       xtol: float = 1e-6, detect_tol: float = 1e-5) -> ThresholdResult:
    """Largest ``rho`` at which ``rho*psi + eps`` is detectably not a spread of ``psi``.

    Whenever ``rho^2 + (s*zeta_sd)^2 < 1`` the outer normal components of ``Y``
    have thinner tails than ``psi`` and ``Delta`` dips below zero far out, by
    amounts of order 1e-7 or less; ``tail_rho`` is that strict boundary. Such
    deficits are not detectable at any realistic sample size, so ``rho_star``
    only counts gaps below ``-detect_tol`` (in units of the belief sd).
    """
    def violated(rho):
        return min_spread_gap(simulation_outcome_law(rho, noise_scale, zeta_sd), method=method,
                              mesh=mesh)[1] < -detect_tol

    rho_star = _bisect_boundary(violated, 0.0, 1.0, xtol)
    y_bind = min_spread_gap(simulation_outcome_law(max(rho_star - xtol, 0.0), noise_scale, zeta_sd),
                            method=method, mesh=mesh)[0]
    noise_var = 2 * TAIL_PROB * noise_scale ** 2 * (ZETA_MEAN ** 2 + zeta_sd ** 2)
    rho_var = math.sqrt(max(1.0 - noise_var, 0.0))
    tail_rho = math.sqrt(max(1.0 - (noise_scale * zeta_sd) ** 2, 0.0))
    return ThresholdResult(rho_star, rho_var, tail_rho, y_bind, zeta_sd, method)


def beta_quadrature(a: float = 0.1, b: float = 10.0, nodes: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes/weights for ``E f(X)``, ``X ~ Beta(a, b)``."""
    t, w = roots_jacobi(nodes, b - 1, a - 1)  # weight (1-t)^(b-1) (1+t)^(a-1)
    x = (1 + t) / 2
    return x, w / w.sum()


def covariate_mixture(rho: float, x_nodes, x_weights, zeta_sd: float = ZETA_SD) -> GaussianMixture:
    """Law of ``Y = rho*psi + sqrt(X)*eps`` with ``X`` integrated out by quadrature."""
    parts = [simulation_outcome_law(rho, math.sqrt(x), zeta_sd) for x in x_nodes]
    return GaussianMixture(np.concatenate([w * m.weight for w, m in zip(x_weights, parts)]),
                           np.concatenate([m.mean for m in parts]),
                           np.concatenate([m.sd for m in parts]))


def covariate_outcome_partial_expectation(rho: float, x_nodes, x_weights, y,
                                          zeta_sd: float = ZETA_SD) -> np.ndarray:
    """``E(y - Y)^+`` for ``Y = rho*psi + sqrt(X)*eps`` after integrating ``X`` out."""
    return covariate_mixture(rho, x_nodes, x_weights, zeta_sd).partial_expectation(y)


def population_threshold_covariate_design(beta_a: float = 0.1, beta_b: float = 10.0,
                                          zeta_sd: float = ZETA_SD, nodes: int = 100,
                                          xtol: float = 1e-5, detect_tol: float = 1e-5,
                                          x_probe=None) -> dict:
    """Thresholds for ``Y = rho*psi + sqrt(X)*eps`` with ``X ~ Beta(beta_a, beta_b)``.

    ``without_x``: the unconditional outcome law (X integrated out) against N(0,1).
    ``with_x``: the conditional restriction binds if it fails at some X value;
    it is the largest per-x threshold over the probe points (Beta quantiles).
    """
    xs, ws = beta_quadrature(beta_a, beta_b, nodes)
    lo, hi = -8.0 - 8 * ZETA_MEAN, 8.0 + 8 * ZETA_MEAN

    def violated_marginal(rho):
        law = covariate_mixture(rho, xs, ws, zeta_sd)

        def gap(y):
            return law.partial_expectation(y) - STANDARD_NORMAL.partial_expectation(y)
        return _min_over_line(gap, lo, hi, 801)[1] < -detect_tol

    without_x = _bisect_boundary(violated_marginal, 0.0, 1.0, xtol)
    if x_probe is None:
        from scipy.stats import beta as beta_dist
        x_probe = beta_dist.ppf([0.01, 0.1, 0.5, 0.9, 0.99], beta_a, beta_b)
    per_x = [population_threshold_no_covariates(zeta_sd, math.sqrt(x), xtol=xtol,
                                                detect_tol=detect_tol).rho_star for x in x_probe]
    return {"without_x": without_x, "with_x": max(per_x), "per_x": dict(zip(map(float, x_probe), per_x))}


@dataclass(frozen=True)
class TwoPointResult:
    a_star: float
    var_eta: float


def population_threshold_two_point_bias(sigma_eps: float = 1.0, tail: float = TAIL_PROB,
                                        xtol: float = 1e-7, a_max: float = 10.0) -> TwoPointResult:
    """Smallest deviation size ``a`` at which N(0, sigma^2) no longer dominates ``a*S``.

    ``S`` takes values -1, 0, 1 with probabilities ``tail, 1-2*tail, tail``.
    """
    eps = GaussianMixture(np.array([1.0]), np.array([0.0]), np.array([sigma_eps]))

    def fails(a):
        eta = GaussianMixture(np.array([tail, 1 - 2 * tail, tail]), np.array([-a, 0.0, a]),
                              np.zeros(3))
        return min_spread_gap(eps, eta, mesh=4001)[1] < -1e-12

    # dominance fails for large a: the failing set is an upper set, so bisect on -a
    lo, hi = 0.0, a_max
    if fails(lo) or not fails(hi):
        raise NumericalError("two-point threshold not bracketed")
    for _ in range(200):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if fails(mid):
            hi = mid
        else:
            lo = mid
    a_star = 0.5 * (lo + hi)
    return TwoPointResult(a_star, 2 * tail * a_star ** 2)
