import csv
import math

import numpy as np
import pytest

from ratexp.engine import TestConfig
from ratexp.montecarlo import (DgpSpec, generate, generate_linked, mc_se, power_curve,
                               rejection_rate, tuning_sweep, two_point_noise)
from ratexp.variants import variance_test


def test_same_seed_same_sample():
    for kind in ("no_covariates", "with_covariates", "meas_error", "shock_demo", "selection_demo"):
        a, b = generate(DgpSpec(kind, 0.5, 50, 11)), generate(DgpSpec(kind, 0.5, 50, 11))
        assert a.equals(b)


def test_two_point_noise_moments():
    rng = np.random.default_rng(1)
    e = two_point_noise(rng, 100_000)
    assert np.mean(e == 0) == pytest.approx(0.8, abs=0.02)
    assert abs(e.mean()) < 0.01
    assert e.var() == pytest.approx(0.2 * (4 + 0.1 ** 2), abs=0.01)
    e = two_point_noise(rng, 100_000, zeta_sd=math.sqrt(0.1))
    assert e.var() == pytest.approx(0.82, abs=0.01)


def test_design_shapes():
    s = generate(DgpSpec("with_covariates", 0.5, 40, 3))
    assert s.n1 == s.n0 == 40 and s.d_x == 1
    assert np.all((s.x > 0) & (s.x < 1))
    sel = generate(DgpSpec("selection_demo", 1.0, 40, 3))
    assert sel.n == 80 and sel.d_x == 1
    assert generate_linked(DgpSpec("meas_error", n=30, seed=2)).n == 30
    with pytest.raises(ValueError):
        generate_linked(DgpSpec("shock_demo"))
    with pytest.raises(ValueError):
        DgpSpec(rho=1.5)


def test_rho_zero_fails_variance_test():
    s = generate(DgpSpec(rho=0.0, n=20_000, seed=5))
    assert variance_test(s).p_value < 0.01


def test_power_curve_table(tmp_path):
    curve = power_curve(DgpSpec(n=200, seed=1), [0.3, 1.0], reps=6, cfg=TestConfig(n_boot=40))
    assert curve.rejection_rate.shape == (2,)
    assert np.allclose(curve.se, [mc_se(r, 6) for r in curve.rejection_rate])
    path = tmp_path / "pc.csv"
    curve.to_csv(path)
    rows = list(csv.DictReader(path.open()))
    assert [float(r["rho"]) for r in rows] == [0.3, 1.0]


def test_replications_independent_of_workers():
    spec, cfg = DgpSpec(rho=0.5, n=150, seed=2), TestConfig(n_boot=30)
    assert rejection_rate(spec, 8, cfg, workers=1) == rejection_rate(spec, 8, cfg, workers=3)


def test_power_monotone_in_rho():
    curve = power_curve(DgpSpec(n=800, seed=8), [0.3, 0.45, 0.6, 0.8, 1.0], reps=40,
                        cfg=TestConfig(n_boot=100))
    r, se = curve.rejection_rate, np.maximum(curve.se, mc_se(0.05, 40))
    for i in range(len(r) - 1):
        assert r[i + 1] <= r[i] + 2 * math.hypot(se[i], se[i + 1])


def test_tuning_sweep_cells():
    null, alt = DgpSpec(rho=1.0, n=800, seed=4), DgpSpec(rho=0.45, n=800, seed=4)
    one = tuning_sweep([0.3], [0.001], null, alt, reps=20, cfg=TestConfig(n_boot=100),
                       size_slack=2 * mc_se(0.05, 20))
    assert one.best is one.rows[0] and one.rows[0].admissible
    two = tuning_sweep([0.3], [0.001, 1e3], null, alt, reps=20, cfg=TestConfig(n_boot=100))
    small, large = two.rows
    assert large.alt_rate <= small.alt_rate + 2 * mc_se(0.5, 20)
