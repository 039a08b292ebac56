import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratexp.errors import DegenerateSampleError
from ratexp.instruments import InstrumentSet, enumerate_instruments, standardize_covariates
from ratexp.moments import MomentConfig, MomentKernel, moment_field, moment_row, signed_weight
from ratexp.sample_io import PooledSample


def naive_field(sample, inst, grid, x01=None, base=None, eps=0.05):
    """Plain loops over rows, cells and grid points."""
    n = sample.n
    g = np.ones((n, 1), int) if x01 is None else inst.membership(x01)
    om = np.ones(n) if base is None else np.asarray(base, float)
    w = np.empty(n)
    for arm, sign in ((1, 1.0), (0, -1.0)):
        idx = sample.d == arm
        w[idx] = sign * n * om[idx] / om[idx].sum()
    var_y = np.var(sample.y)
    C, G = g.shape[1], len(grid)
    m1, s11 = np.zeros((C, G)), np.zeros((C, G))
    m2, s22 = np.zeros(C), np.zeros(C)
    for c in range(C):
        rows2 = np.array([moment_row(sample.d[i], sample.y[i], w[i], g[i, c], 0.0)[1] for i in range(n)])
        m2[c] = rows2.mean()
        s22[c] = np.mean((rows2 - m2[c]) ** 2) + eps * var_y
        for k, y in enumerate(grid):
            rows1 = np.array([moment_row(sample.d[i], sample.y[i], w[i], g[i, c], y)[0] for i in range(n)])
            m1[c, k] = rows1.mean()
            s11[c, k] = np.mean((rows1 - m1[c, k]) ** 2) + eps * var_y
    return m1, m2, s11, s22


def test_signed_weight_and_row():
    assert signed_weight(1, 2, 2, 4) == 2
    assert signed_weight(0, 2, 2, 4) == -2
    assert signed_weight(1, 2, 8, 10) == 5
    with pytest.raises(DegenerateSampleError):
        signed_weight(1, 0, 4, 4)
    assert moment_row(1, 0.0, 2.0, 1, 1.0) == (2.0, 0.0)
    assert moment_row(1, 3.0, 2.0, 0, 5.0) == (0.0, 0.0)
    assert moment_row(0, 3.0, -7.0, 1, 1.0)[0] == 0.0


def test_canonical_moments(canonical):
    f = moment_field(canonical, InstrumentSet.constant(), np.array([0.0, 1.0]))
    assert f.m1[0, 1] == pytest.approx(0.5)
    assert f.m1[0, 0] == 0.0
    assert f.m2[0] == 0.0


def test_constant_values_degenerate():
    s = PooledSample.from_arrays([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(DegenerateSampleError):
        moment_field(s, InstrumentSet.constant(), np.array([0.0, 1.0]))


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fast_path_matches_loops(seed, weighted):
    rng = np.random.default_rng(seed)
    n1, n0 = rng.integers(20, 90, 2)
    s = PooledSample.from_arrays(rng.normal(size=n1), rng.normal(size=n0) * 0.7,
                                 rng.normal(size=(n1, 1)), rng.normal(size=(n0, 1)))
    inst = enumerate_instruments(2, 1)
    x01 = standardize_covariates(s.x).x
    grid = np.linspace(s.y.min(), s.y.max(), 9)
    base = rng.uniform(0.2, 3.0, s.n) if weighted else None
    fast = moment_field(s, inst, grid, x01=x01, base_weight=base)
    slow = naive_field(s, inst, grid, x01, base)
    for a, b in zip((fast.m1, fast.m2, fast.s11, fast.s22), slow):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_counts_equal_expanded_sample(rng):
    s = PooledSample.from_arrays(rng.normal(size=30), rng.normal(size=25))
    grid = np.linspace(s.y.min(), s.y.max(), 7)
    kern = MomentKernel.for_sample(s, InstrumentSet.constant(), grid, MomentConfig())
    counts = np.bincount(rng.integers(0, s.n, s.n), minlength=s.n)
    batch = kern.evaluate(counts[None, :])
    idx = np.repeat(np.arange(s.n), counts)
    expanded = s.subset(idx)
    direct = naive_field(expanded, None, grid)
    assert np.allclose(batch.m1[0], direct[0], atol=1e-12)
    assert np.allclose(batch.s11[0], direct[2], atol=1e-12)
    assert np.allclose(batch.m2[0], direct[1], atol=1e-12)


def test_shifted_outcomes_match_transformed_values(rng):
    s = PooledSample.from_arrays(rng.normal(2, 1, 40), rng.normal(2, 1, 35))
    grid = np.linspace(-1, 5, 11)
    kern = MomentKernel.for_sample(s, InstrumentSet.constant(), grid, MomentConfig())
    counts = np.vstack([np.ones(s.n), np.bincount(rng.integers(0, s.n, s.n), minlength=s.n)])
    shift, scale = np.array([0.3, -0.2]), np.array([1.1, 0.9])
    got = kern.evaluate(counts, shift, scale)
    for b in range(2):
        y = np.where(s.d == 1, (s.y - shift[b]) / scale[b], s.y)
        ref = kern.with_values(y).evaluate(counts[b:b + 1])
        assert np.allclose(got.m1[b], ref.m1[0], atol=1e-12)
        assert np.allclose(got.s22[b], ref.s22[0], atol=1e-12)


finite = st.floats(-100, 100, allow_nan=False)


@given(st.lists(finite, min_size=2, max_size=25), st.lists(finite, min_size=2, max_size=25))
def test_field_invariants(y, psi):
    s = PooledSample.from_arrays(y, psi)
    if np.ptp(s.y) == 0:
        return
    f = moment_field(s, InstrumentSet.constant(), np.linspace(s.y.min(), s.y.max(), 6))
    floor = 0.05 * np.var(s.y)
    assert np.all(f.s11 >= floor * (1 - 1e-12)) and np.all(f.s22 >= floor * (1 - 1e-12))
    # constant instrument: m2 is the difference of subsample means
    gap = np.mean(y) - np.mean(psi)
    assert f.m2[0] == pytest.approx(gap, rel=1e-9, abs=1e-9 * (1 + np.abs(s.y).max()))
