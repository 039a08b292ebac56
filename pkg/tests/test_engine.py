import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratexp.engine import (TestConfig, bootstrap_distribution, critical_value, gms_constants,
                           gms_slackness, p_value, run_test, statistic_no_covariates,
                           statistic_with_covariates, y_grid)
from ratexp.errors import DegenerateSampleError
from ratexp.instruments import InstrumentSet, enumerate_instruments
from ratexp.moments import MomentField, moment_field
from ratexp.sample_io import PooledSample


def test_y_grid():
    s = PooledSample.from_arrays([0.0, 1.0], [0.5])
    assert y_grid(s, 3).tolist() == [0.0, 0.5, 1.0]
    s = PooledSample.from_arrays([-2.0, 2.0], [0.0])
    assert y_grid(s, 5).tolist() == [-2, -1, 0, 1, 2]
    with pytest.raises(DegenerateSampleError):
        y_grid(PooledSample.from_arrays([1.0], [1.0]), 4)


def test_identical_subsamples_give_zero(rng):
    v = rng.normal(size=40)
    s = PooledSample.from_arrays(v, v)
    f = moment_field(s, InstrumentSet.constant(), y_grid(s))
    # zero up to summation rounding in the equality moment
    assert statistic_no_covariates(f)[0] == pytest.approx(0.0, abs=1e-12)
    assert statistic_with_covariates(f) == pytest.approx(0.0, abs=1e-12)


def test_covariate_statistic_reduces_to_constant(rng):
    s = PooledSample.from_arrays(rng.normal(size=50), rng.normal(0.2, 0.8, 60))
    f = moment_field(s, InstrumentSet.constant(), y_grid(s))
    assert statistic_with_covariates(f) == pytest.approx(statistic_no_covariates(f)[0], rel=1e-12)


def test_hand_built_covariate_statistic():
    # cell (0, .5]: outcomes {1, 3} vs beliefs {2, 2}; cell (.5, 1]: {5, 5} vs {2, 2}
    s = PooledSample.from_arrays([1.0, 3.0, 5.0, 5.0], [2.0, 2.0, 2.0, 2.0])
    x01 = np.array([[0.2], [0.3], [0.7], [0.9], [0.1], [0.4], [0.6], [0.8]])
    inst = enumerate_instruments(1, 1)
    grid = y_grid(s, 3)  # 1, 3, 5
    f = moment_field(s, inst, grid, x01=x01)

    n, eps, p, q = 8, 0.05, 0.05, 1 / 202
    w = np.where(s.d == 1, 2.0, -2.0)
    var_y = np.var(s.y)
    per_y = np.zeros(3)
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        g = ((x01[:, 0] > lo) & (x01[:, 0] <= hi)).astype(float)
        r2 = w * s.y * g
        z2 = math.sqrt(n) * r2.mean() / math.sqrt(r2.var() + eps * var_y)
        for k, y in enumerate(grid):
            r1 = w * np.maximum(y - s.y, 0) * g
            z1 = math.sqrt(n) * r1.mean() / math.sqrt(r1.var() + eps * var_y)
            per_y[k] += q * ((1 - p) * max(-z1, 0) ** 2 + p * z2 ** 2)
    assert f.m2.tolist() == [0.0, 1.5]
    assert statistic_with_covariates(f, inst) == pytest.approx(per_y.max(), rel=1e-12)


def field_with(m1, s11, n=100):
    m1 = np.atleast_2d(m1)
    return MomentField(np.arange(m1.shape[1], dtype=float), np.ones(1), m1, np.zeros(1),
                       np.atleast_2d(s11), np.ones(1), n, 1.0)


def test_gms_slackness():
    assert np.all(gms_slackness(field_with([-1.0, 0.0, -0.3], [1.0, 1.0, 1.0]), TestConfig()) == 0)
    cfg = TestConfig()
    b_n, k_n = gms_constants(100, cfg.b0, cfg.kappa)
    m1 = 10 * k_n * 2.0 / math.sqrt(100)  # sqrt(n) m1 / sqrt(s11) = 10 kappa_n
    phi = gms_slackness(field_with([m1], [4.0]), cfg)
    assert phi[0, 0] == pytest.approx(2.0 * b_n)
    with pytest.raises(DegenerateSampleError):
        gms_constants(2, 0.3, 0.001)


def test_critical_value_rules():
    assert critical_value(np.full(10, 0.7), 0.05, 1e-6) == 0.7 + 1e-6
    draws = np.arange(100.0)[::-1]
    assert critical_value(draws, 0.05, 1e-6) == 95 + 1e-6  # 96th order statistic
    assert critical_value([3.0], 0.05, 1e-6) == 3.0 + 1e-6
    assert critical_value(draws, 0.0, 1e-6) == 99 + 1e-6


def test_p_value_convention():
    draws = np.array([0.0, 1.0, 2.0, 3.0])
    assert p_value(2.0, draws, 0.0) == 0.5
    assert p_value(10.0, draws, 1e-6) == pytest.approx(1e-6)
    assert p_value(0.0, draws, 1e-6) == 1.0


def test_canonical_sample_not_rejected(canonical):
    r = run_test(canonical, TestConfig(n_boot=50))
    assert r.statistic == 0.0 and not r.reject and r.p_value == 1.0


def test_gross_mean_mismatch_rejected():
    rng = np.random.default_rng(0)
    s = PooledSample.from_arrays(10 + 0.01 * rng.normal(size=100), 0.01 * rng.normal(size=100))
    r = run_test(s, TestConfig(n_boot=200))
    assert r.reject and r.p_value <= 0.05


def test_alpha_zero_uses_max_draw(rng):
    s = PooledSample.from_arrays(rng.normal(size=60), rng.normal(size=60))
    r = run_test(s, TestConfig(alpha=0.0, n_boot=40))
    assert r.critical_value == pytest.approx(r.boot_draws.max())


def test_golden_single_draw():
    rng = np.random.default_rng(2024)
    s = PooledSample.from_arrays(rng.normal(size=300), rng.normal(size=300))
    draws = bootstrap_distribution(s, None, TestConfig(n_boot=1, seed=7))
    assert draws[0] == pytest.approx(0.09655557680885807, rel=1e-12)


def test_identical_subsample_draws_nonnegative(rng):
    v = rng.normal(size=80)
    draws = bootstrap_distribution(PooledSample.from_arrays(v, v), None, TestConfig(n_boot=64))
    assert np.all(np.isfinite(draws)) and np.all(draws >= 0)


def test_single_outcome_row_reports_redraws():
    r = run_test(PooledSample.from_arrays([5.0], np.arange(30.0)), TestConfig(n_boot=50))
    assert r.diagnostics["degenerate_redraws"] > 0


@pytest.mark.parametrize("threads", [1, 2, 5])
def test_thread_count_does_not_change_results(threads, monkeypatch):
    rng = np.random.default_rng(5)
    s = PooledSample.from_arrays(rng.normal(size=150), rng.normal(size=140), rng.random(150),
                                 rng.random(140))
    cfg = TestConfig(n_boot=100, seed=3, r_max=2)
    base = run_test(s, cfg.__class__(**{**cfg.to_dict(), "threads": 1}))
    monkeypatch.setenv("RE_TEST_THREADS", str(threads))
    again = run_test(s, cfg)
    assert again.statistic == base.statistic
    assert again.critical_value == base.critical_value
    assert again.p_value == base.p_value
    assert np.array_equal(again.boot_draws, base.boot_draws)


@given(st.floats(0.01, 100.0), st.integers(0, 2 ** 16))
def test_scale_equivariance(c, seed):
    rng = np.random.default_rng(seed)
    s = PooledSample.from_arrays(rng.normal(size=30), rng.normal(0.3, 1.4, 25))
    f1 = moment_field(s, InstrumentSet.constant(), y_grid(s))
    s2 = s.with_values(c * s.y)
    f2 = moment_field(s2, InstrumentSet.constant(), y_grid(s2))
    assert statistic_no_covariates(f2)[0] == pytest.approx(statistic_no_covariates(f1)[0],
                                                           rel=1e-9, abs=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        TestConfig(alpha=0.7)
    with pytest.raises(ValueError):
        TestConfig(r_max=-1)
    with pytest.raises(ValueError):
        TestConfig(n_boot=0)
